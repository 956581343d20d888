#!/usr/bin/env python3
"""Calibrate the gate threshold, stream weights, and type threshold from labels."""

import tempfile
from pathlib import Path

import numpy as np

from copyforge import (
    LabeledScoreSet,
    ScoreEntry,
    default_tau_grid,
    emit_curves,
    grid_search_weights,
    select_type_threshold,
    simplex_cells,
    sweep_threshold,
)

rng = np.random.default_rng(2)


def entry(s_fus, label, s_clip=None):
    # streams default to the fused score so the demo stays one-dimensional
    v = s_fus if s_clip is None else s_clip
    return ScoreEntry(s_fus=s_fus, s_vis=v, s_clip=v, s_tex=v, label=label)


# plant a clean margin: noncopies below 0.86, copies above 0.92
entries = [entry(float(rng.uniform(0.40, 0.86)), "noncopy") for _ in range(80)]
entries += [entry(float(rng.uniform(0.92, 1.00)), "retrieve") for _ in range(40)]
entries += [entry(float(rng.uniform(0.92, 1.00)), "style") for _ in range(40)]
scores = LabeledScoreSet(tuple(entries))

# the gate sweep only cares about copy vs noncopy
gate_scores = scores.as_gate_labels()

grid = default_tau_grid()
print("grid:", len(grid), "points from", grid[0], "to", grid[-1])

sweep = sweep_threshold(gate_scores, grid)
print("best tau1:", round(sweep.best_tau, 4), " accuracy:", sweep.best_accuracy)

# ties break toward the smallest tau, so the pick hugs the noncopy edge
top_noncopy = max(e.s_fus for e in entries if e.label == "noncopy")
low_copy = min(e.s_fus for e in entries if e.label != "noncopy")
print("separates the classes:", top_noncopy <= sweep.best_tau < low_copy)

# weight search walks the 3-simplex; every cell sums to one
cells = simplex_cells(0.1)
print("simplex cells at step 0.1:", len(cells), " first:", cells[0], " last:", cells[-1])

wres = grid_search_weights(gate_scores, step=0.1)
best_weights, best_acc = wres.best
print("best weights:", best_weights, " accuracy:", best_acc, " tau:", round(wres.best_tau, 4))

# type threshold splits retrieve from style on the weighted score.
# plant separated weighted scores so the midpoint is unambiguous.
typed = [entry(0.99, "retrieve", s_clip=float(rng.uniform(0.96, 1.00))) for _ in range(30)]
typed += [entry(0.99, "style", s_clip=float(rng.uniform(0.80, 0.90))) for _ in range(30)]
tt = select_type_threshold(LabeledScoreSet(tuple(typed)), omega=(0.24, 0.38, 0.38))
print("tau2:", round(tt.tau, 4), " clean split:", tt.clean, " accuracy:", tt.accuracy)

outdir = Path(tempfile.mkdtemp())
written = emit_curves(sweep, outdir / "tau_sweep.csv")
written += emit_curves(wres, outdir / "weights.csv")
print("curve files:", [Path(p).name for p in written])
for p in written:
    print("  ", Path(p).read_text().splitlines()[0])
