#!/usr/bin/env python3
"""Run the ten-attack suite against a near-duplicate pair and print the table."""

import tempfile
from pathlib import Path

import numpy as np

from copyforge import (
    DecisionConfig,
    FusionConfig,
    PerturbationSpec,
    SyntheticEmbedder,
    apply,
    build_fuser,
    paper_suite,
    random_image,
    report_to_csv,
    robustness_report,
)

rng = np.random.default_rng(4)
backend = SyntheticEmbedder(d=64, seed=0)
fuser = build_fuser(FusionConfig(d_model=128, num_heads=4, seed=0), input_dim=backend.d)
config = DecisionConfig()

reference = random_image(rng, 48, 48)
generated = apply(reference, PerturbationSpec("gaussian_noise", {"sigma": 0.005}, seed=1))

suite = paper_suite(seed=100)
print("suite:", [s.kind for s in suite])

report = robustness_report(generated, reference, suite, backend, fuser, config, side="generated")

print(f"{'attack':16s} {'s_fus':>8s} {'s_bar':>8s}  verdict")
for row in report.rows:
    sbar = f"{row.s_bar:8.4f}" if row.s_bar is not None else "       -"
    print(f"{row.attack:16s} {row.s_fus:8.4f} {sbar}  {row.verdict}")

survived = sum(1 for r in report.rows[1:] if r.verdict != "not_copy")
print(f"attacks survived: {survived}/{len(report.rows) - 1}")

out = Path(tempfile.mkdtemp()) / "robustness.csv"
report_to_csv(report, out)
lines = out.read_text().splitlines()
print("csv:", lines[0])
print("     ", lines[1])
