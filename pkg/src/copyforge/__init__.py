"""Copy detection for diffusion-generated images, and the prompt-side fix.

Two halves share one toolbox. The detection half embeds an image into three
feature streams, fuses them with a seeded attention encoder, and applies a
two-threshold rule: a fused-similarity gate decides copy vs not, then a
weighted per-stream score splits retrieve-type from style-type copies. The
augmentation half diversifies training prompts from detector regions so the
model being trained has less reason to memorize. Calibration, perturbation
robustness, gallery retrieval, and an SSIM baseline round out the kit.
"""

from .augment import (AugmentConfig, AugmentationTrace, DetectorBackend,
                      GridPosition, PromptVariant, RegionProposal,
                      StaticDetector, augment_prompt, build_variant_pool,
                      diffusion_loss, filter_and_rank, grid_position, iou,
                      load_proposals, load_templates, nms, parse_template,
                      sampling_distribution, score_and_sample)
from .cache import CachingBackend, EmbeddingCache, content_digest
from .calibration import (LabeledScoreSet, ScoreEntry, SweepResult,
                          ThresholdRule, TypeThreshold, WeightGridResult,
                          default_tau_grid, emit_curves, grid_search_weights,
                          load_score_set, select_type_threshold,
                          simplex_cells, sweep_threshold)
from .config import (RunConfig, build_backend, build_run_fuser, build_suite,
                     load_run_config)
from .decision import (NOT_COPY, RETRIEVE, STYLE, CopyVerdict, DecisionConfig,
                       StreamSimilarities, decide, decide_scores,
                       validate_config, verdict_record_line, weighted_score)
from .errors import (ConfigurationError, CopyforgeError, DataError,
                     DegenerateDataError, IntegrityError, NumericError,
                     ShapeMismatchError, StaleIndexError, TemplateError,
                     UndefinedSimilarityError)
from .features import (EmbedderBackend, FeatureTriple, ImageBuffer,
                       SyntheticEmbedder, TextEmbedding, cosine)
from .fusion import (FusedEmbedding, FusionConfig, Fuser, build_fuser, fuse,
                     fused_similarity, fuser_digest)
from .gallery import (EvalReport, GalleryIndex, PairManifest, build_index,
                      copy_rate, evaluate_manifest, get_baseline, load_index,
                      load_manifest, register_baseline, save_index, ssim,
                      top_k)
from .images import checkerboard, inverted, load_image, random_image, save_image, solid
from .perturb import (KINDS, PerturbationSpec, RobustnessReport, apply,
                      paper_suite, report_to_csv, robustness_report)

__version__ = "1.0.0"
