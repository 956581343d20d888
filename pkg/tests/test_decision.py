import json

import numpy as np
import pytest

from copyforge import (ConfigurationError, CopyVerdict, DecisionConfig,
                       StreamSimilarities, decide, decide_scores,
                       validate_config, verdict_record_line, weighted_score)
from copyforge.decision import NOT_COPY, RETRIEVE, STYLE


def oracle_decide(s_fus, s_vis, s_clip, s_tex, tau1, tau2, omega):
    """Straight-line transcription of the two-threshold rule, kept naive."""
    if s_fus > tau1:
        s_bar = omega[0] * s_vis + omega[1] * s_clip + omega[2] * s_tex
        if s_bar > tau2:
            return RETRIEVE
        return STYLE
    return NOT_COPY


class TestValidateConfig:
    def test_default_config_valid(self, default_config):
        assert validate_config(default_config) == []

    def test_default_operating_point(self, default_config):
        assert default_config.tau1 == 0.938
        assert default_config.tau2 == 0.970
        assert abs(sum(default_config.omega) - 1.0) <= 1e-9

    @pytest.mark.parametrize("config", [
        DecisionConfig(tau1=0.0),
        DecisionConfig(tau1=1.0),
        DecisionConfig(tau2=-0.1),
        DecisionConfig(omega=(0.5, 0.5, 0.5)),
        DecisionConfig(omega=(-0.2, 0.6, 0.6)),
    ])
    def test_violations_reported(self, config):
        assert validate_config(config) != []

    def test_violations_do_not_raise(self):
        # reporting is the contract; raising happens at use sites
        assert isinstance(validate_config(DecisionConfig(tau1=2.0)), list)

    def test_use_site_raises(self):
        with pytest.raises(ConfigurationError):
            decide_scores(0.99, 0.9, 0.9, 0.9, DecisionConfig(tau1=2.0))


class TestWeightedScore:
    def test_worked_arithmetic(self, default_config):
        s_bar = weighted_score((0.90, 0.95, 0.95), default_config.omega)
        assert abs(s_bar - 0.938) <= 1e-9

    def test_rejects_bad_omega(self):
        with pytest.raises(ConfigurationError):
            weighted_score((0.9, 0.9, 0.9), (0.5, 0.5, 0.5))

    def test_unit_streams_give_unit_score(self, default_config):
        assert abs(weighted_score((1.0, 1.0, 1.0), default_config.omega) - 1.0) <= 1e-9


class TestDecideScores:
    def test_worked_example_is_style(self, default_config):
        v = decide_scores(0.95, 0.90, 0.95, 0.95, default_config)
        assert v.copy_type == STYLE
        assert abs(v.scores.s_bar - 0.938) <= 1e-9

    def test_perfect_match_is_retrieve(self, default_config):
        v = decide_scores(1.0, 1.0, 1.0, 1.0, default_config)
        assert v.copy_type == RETRIEVE and v.is_copy

    def test_gate_equality_fails(self, default_config):
        v = decide_scores(default_config.tau1, 1.0, 1.0, 1.0, default_config)
        assert v.copy_type == NOT_COPY
        assert v.scores.s_bar is None

    def test_type_equality_is_style(self, default_config):
        # s_bar exactly tau2 must not upgrade to retrieve
        v = decide_scores(0.99, default_config.tau2, default_config.tau2,
                          default_config.tau2, default_config)
        assert v.scores.s_bar == pytest.approx(default_config.tau2, abs=1e-12)
        assert v.copy_type == STYLE

    def test_below_gate_no_weighted_score(self, default_config):
        v = decide_scores(0.5, 0.99, 0.99, 0.99, default_config)
        assert not v.is_copy
        assert v.scores.s_bar is None

    def test_oracle_equivalence_sampled(self, default_config, rng):
        for _ in range(300):
            s = rng.uniform(-1.0, 1.0, size=4)
            v = decide_scores(*s, default_config)
            assert v.copy_type == oracle_decide(*s, default_config.tau1,
                                                default_config.tau2,
                                                default_config.omega)

    def test_oracle_equivalence_near_thresholds(self, default_config, rng):
        # stress ties and near-ties around both boundaries
        for _ in range(300):
            s_fus = default_config.tau1 + rng.choice([-1e-12, 0.0, 1e-12, 1e-3, -1e-3])
            base = default_config.tau2 + rng.choice([-1e-9, 0.0, 1e-9, 1e-3, -1e-3])
            v = decide_scores(s_fus, base, base, base, default_config)
            assert v.copy_type == oracle_decide(s_fus, base, base, base,
                                                default_config.tau1,
                                                default_config.tau2,
                                                default_config.omega)


class TestCopyVerdict:
    def test_inconsistent_flag_rejected(self):
        scores = StreamSimilarities(0.9, 0.9, 0.9, 0.99, 0.9)
        with pytest.raises(ConfigurationError):
            CopyVerdict(is_copy=False, copy_type=RETRIEVE, scores=scores)

    def test_record_fields(self, default_config):
        v = decide_scores(0.5, 0.9, 0.9, 0.9, default_config)
        record = v.to_record("q.npy", "r.npy")
        assert record["query"] == "q.npy"
        assert record["s_bar"] is None
        assert record["copy_type"] == NOT_COPY

    def test_record_line_sorted_and_compact(self, default_config):
        v = decide_scores(1.0, 1.0, 1.0, 1.0, default_config)
        line = verdict_record_line(v.to_record("a", "b"))
        keys = list(json.loads(line).keys())
        assert keys == sorted(keys)
        assert "\n" not in line and ": " not in line


class TestDecideOnImages:
    def test_identical_images_retrieve(self, backend16, fuser32, checker,
                                       default_config):
        v = decide(checker, checker, backend16, fuser32, default_config)
        assert v.copy_type == RETRIEVE
        assert abs(v.scores.s_fus - 1.0) <= 1e-9

    def test_streams_propagated(self, backend16, fuser32, checker, rng,
                                default_config):
        from copyforge import random_image
        other = random_image(rng, height=16, width=16)
        v = decide(checker, other, backend16, fuser32, default_config)
        for value in (v.scores.s_vis, v.scores.s_clip, v.scores.s_tex,
                      v.scores.s_fus):
            assert -1.0 <= value <= 1.0
