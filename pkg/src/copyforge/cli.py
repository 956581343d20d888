"""Command-line entry points for the detection and augmentation workflows.

Commands: detect, calibrate, retrieve, index, robustness, augment, perturb.
Every command is reproducible byte-for-byte given the same inputs, config,
and seed: no timestamps, sorted JSON keys, ordered file writes. Output
artifacts echo the effective configuration so a result can always be traced
back to the settings that produced it.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import calibration, perturb
from .augment import StaticDetector, augment_prompt, load_proposals, load_templates
from .config import (RunConfig, build_backend, build_run_fuser, build_suite,
                     config_echo, load_run_config)
from .decision import decide, verdict_record_line
from .errors import ConfigurationError, CopyforgeError, DataError
from .fusion import fuser_digest
from .gallery import build_index, load_index, load_manifest, save_index, top_k
from .images import load_image

_PROG = "copyforge"


class _CliParser(argparse.ArgumentParser):
    """argparse parser whose usage failures map to exit code 1, not 2."""

    def error(self, message):
        raise ConfigurationError(message)


def _json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def _summary(command: str, config: RunConfig, **extra) -> str:
    payload = {"command": command, "config": config_echo(config), **extra}
    return _json_text(payload)


def _write_artifacts(out_dir: str, files: list[tuple[str, str | bytes]]) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for name, content in files:
        path = os.path.join(out_dir, name)
        if isinstance(content, bytes):
            with open(path, "wb") as fh:
                fh.write(content)
        else:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(content)


def _emit(args, files: list[tuple[str, str | bytes]], stdout_text: str) -> None:
    """--out writes the artifact files; otherwise the text goes to stdout."""
    if args.out:
        _write_artifacts(args.out, files)
    else:
        sys.stdout.write(stdout_text)


def _require_out(args, command: str) -> str:
    if not args.out:
        raise ConfigurationError(f"{command} requires --out")
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _map_ordered(fn, items, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _load_config(args) -> RunConfig:
    overrides = dict(getattr(args, "_overrides", {}))
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    return load_run_config(args.config, overrides)


def cmd_detect(args) -> int:
    if args.tau1 is not None:
        args._overrides["decision.tau1"] = args.tau1
    if args.tau2 is not None:
        args._overrides["decision.tau2"] = args.tau2
    config = _load_config(args)
    backend = build_backend(config)
    fuser = build_run_fuser(config)
    if args.manifest:
        pairs = [(p.query, p.reference) for p in load_manifest(args.manifest).pairs]
    elif args.query and args.reference:
        pairs = [(args.query, args.reference)]
    else:
        raise ConfigurationError("detect needs --manifest or both --query and --reference")

    workers = config.workers if backend.parallel_safe else 1

    def judge(pair):
        query, reference = pair
        verdict = decide(load_image(query), load_image(reference),
                         backend, fuser, config.decision)
        return verdict.to_record(query, reference)

    records = _map_ordered(judge, pairs, workers)
    counts: dict[str, int] = {}
    for record in records:
        counts[record["copy_type"]] = counts.get(record["copy_type"], 0) + 1
    lines = "".join(verdict_record_line(r) + "\n" for r in records)
    summary = _summary("detect", config, pairs=len(records),
                       counts=dict(sorted(counts.items())))
    _emit(args, [("verdicts.jsonl", lines), ("summary.json", summary)],
          lines + summary)
    return 0


def cmd_calibrate(args) -> int:
    config = _load_config(args)
    out_dir = _require_out(args, "calibrate")
    scores = calibration.load_score_set(args.scores)
    gate = scores.as_gate_labels()
    grid = calibration.default_tau_grid(step=args.tau_step)
    sweep = calibration.sweep_threshold(gate, grid, objective=args.objective)
    rule = calibration.ThresholdRule(grid=grid, objective=args.objective)
    weights = calibration.grid_search_weights(gate, args.weight_step, tau_rule=rule)
    omega = weights.best[0]
    try:
        typed = scores.type_subset()
        type_threshold = calibration.select_type_threshold(typed, omega)
        tau2, tau2_source = type_threshold.tau, "calibrated"
        clean = type_threshold.clean
    except CopyforgeError:
        # No retrieve/style rows to separate; keep the configured boundary.
        tau2, tau2_source, clean = config.decision.tau2, "config", None
    fragment = {
        "decision": {"tau1": sweep.best_tau, "tau2": tau2, "omega": list(omega)},
        "details": {
            "best_accuracy": sweep.best_accuracy, "best_f1": sweep.best_f1,
            "objective": args.objective, "tau2_source": tau2_source,
            "tau2_clean_split": clean,
        },
    }
    sweep_files = calibration.emit_curves(sweep, os.path.join(out_dir, "sweep.csv"),
                                          render=args.render)
    weight_files = calibration.emit_curves(weights, os.path.join(out_dir, "weights.csv"),
                                           render=args.render)
    summary = _summary("calibrate", config, calibration=fragment,
                       curves=[os.path.basename(p) for p in sweep_files + weight_files])
    _write_artifacts(out_dir, [
        ("calibration.json", _json_text(fragment)),
        ("summary.json", summary),
    ])
    return 0


def cmd_index(args) -> int:
    config = _load_config(args)
    out_dir = _require_out(args, "index")
    backend = build_backend(config)
    fuser = build_run_fuser(config)
    gallery_dir = args.gallery
    if not os.path.isdir(gallery_dir):
        raise DataError(f"gallery directory not found: {gallery_dir}")
    names = sorted(
        n for n in os.listdir(gallery_dir)
        if os.path.splitext(n)[1].lower() in (".npy", ".png", ".jpg", ".jpeg", ".bmp"))
    if not names:
        raise DataError(f"no images in {gallery_dir}")
    items = [(os.path.splitext(n)[0], os.path.join(gallery_dir, n)) for n in names]
    index, errors = build_index(items, backend, fuser)
    save_index(index, out_dir)
    summary = _summary("index", config, count=len(index), errors=errors,
                       fuser_digest=index.fuser_digest)
    _write_artifacts(out_dir, [("summary.json", summary)])
    return 0


def cmd_retrieve(args) -> int:
    config = _load_config(args)
    backend = build_backend(config)
    fuser = build_run_fuser(config)
    expected = fuser_digest(config.fusion, config.feature_dim)
    index = load_index(args.index, expected_digest=expected)
    ranked = top_k(load_image(args.query), index, backend, fuser, k=args.k)
    rows = [[rank, entry_id, score]
            for rank, (entry_id, score) in enumerate(ranked, start=1)]
    table = _csv_text(["rank", "id", "s_fus"], rows)
    summary = _summary("retrieve", config, k=args.k, returned=len(rows),
                       query=args.query)
    _emit(args, [("results.csv", table), ("summary.json", summary)],
          table + summary)
    return 0


def cmd_robustness(args) -> int:
    config = _load_config(args)
    backend = build_backend(config)
    fuser = build_run_fuser(config)
    suite = build_suite(config)
    report = perturb.robustness_report(
        load_image(args.query), load_image(args.reference), suite,
        backend, fuser, config.decision, side=args.side)
    rows = [[r.attack, r.s_fus, r.s_vis, r.s_clip, r.s_tex,
             "" if r.s_bar is None else r.s_bar, r.verdict]
            for r in report.rows]
    table = _csv_text(["attack", "s_fus", "s_vis", "s_clip", "s_tex", "s_bar",
                       "verdict"], rows)
    summary = _summary("robustness", config, side=report.side, rows=len(rows))
    _emit(args, [("robustness.csv", table), ("summary.json", summary)],
          table + summary)
    return 0


def cmd_augment(args) -> int:
    config = _load_config(args)
    backend = build_backend(config)
    augment_config = config.augment
    if args.templates:
        augment_config = dataclasses.replace(
            augment_config, templates=load_templates(args.templates))
    detector = StaticDetector(tuple(load_proposals(args.boxes)) if args.boxes else ())
    trace = augment_prompt(load_image(args.image), args.prompt, detector,
                           backend, augment_config, seed=config.seed)
    line = _json_text(trace.to_record())
    summary = _summary("augment", config, pool_size=len(trace.pool),
                       sampled_text=trace.sampled.text)
    _emit(args, [("trace.jsonl", line), ("summary.json", summary)],
          line + summary)
    return 0


def cmd_perturb(args) -> int:
    config = _load_config(args)
    out_dir = _require_out(args, "perturb")
    image = load_image(args.image)
    suite = build_suite(config)
    if args.kind:
        suite = [spec for spec in suite if spec.kind == args.kind]
    files: list[tuple[str, str | bytes]] = []
    emitted = []
    for spec in suite:
        result = perturb.apply(image, spec)
        buf = io.BytesIO()
        np.save(buf, result.pixels)
        files.append((f"{spec.kind}.npy", buf.getvalue()))
        emitted.append({"kind": spec.kind, "seed": spec.seed,
                        "shape": list(result.pixels.shape)})
    files.append(("summary.json", _summary("perturb", config, outputs=emitted)))
    _write_artifacts(out_dir, files)
    return 0


def build_parser() -> _CliParser:
    common = _CliParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument("--workers", type=int, help="parallel workers for per-item work")
    common.add_argument("--out", help="output directory (stdout otherwise where supported)")

    parser = _CliParser(prog=_PROG, description=__doc__,
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_CliParser)

    p = sub.add_parser("detect", parents=[common],
                       help="copy verdicts for a pair or a manifest of pairs")
    p.add_argument("--query", help="query image")
    p.add_argument("--reference", help="reference image")
    p.add_argument("--manifest", help="JSONL manifest of {query, reference, label}")
    p.add_argument("--tau1", type=float, help="override the copy gate threshold")
    p.add_argument("--tau2", type=float, help="override the retrieve/style boundary")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("calibrate", parents=[common],
                       help="threshold sweep, weight grid, and type boundary")
    p.add_argument("--scores", required=True, help="labeled score set (JSONL)")
    p.add_argument("--tau-step", type=float, default=0.001)
    p.add_argument("--weight-step", type=float, default=0.02)
    p.add_argument("--objective", choices=calibration.OBJECTIVES, default="accuracy")
    p.add_argument("--render", action="store_true",
                   help="also render plots when matplotlib is available")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("index", parents=[common],
                       help="build a gallery index directory")
    p.add_argument("--gallery", required=True, help="directory of reference images")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("retrieve", parents=[common],
                       help="rank gallery entries against a query image")
    p.add_argument("--query", required=True)
    p.add_argument("--index", required=True, help="index directory")
    p.add_argument("--k", type=int, default=5)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("robustness", parents=[common],
                       help="per-attack score table for one image pair")
    p.add_argument("--query", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--side", choices=perturb.SIDES, default="generated",
                   help="which side of the pair gets perturbed")
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("augment", parents=[common],
                       help="region-aware prompt augmentation trace")
    p.add_argument("--image", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--boxes", help="JSON file of detector proposals")
    p.add_argument("--templates", help="template file, one per line")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("perturb", parents=[common],
                       help="write corrupted copies of an image")
    p.add_argument("--image", required=True)
    p.add_argument("--kind", choices=perturb.KINDS,
                   help="one attack instead of the whole suite")
    p.set_defaults(func=cmd_perturb)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args._overrides = {}
        return args.func(args)
    except ConfigurationError as exc:
        print(f"{_PROG}: error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"{_PROG}: data error: {exc}", file=sys.stderr)
        return 2
    except CopyforgeError as exc:
        print(f"{_PROG}: internal error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - last-resort CLI boundary
        print(f"{_PROG}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
