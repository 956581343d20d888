"""Threshold sweeps and weight grid search over labeled score sets.

Given pairs scored by the fused and per-stream similarities, this module
finds the copy gate threshold (accuracy sweep on the fused score), the
stream weights (exhaustive simplex grid, each cell scored at its own best
threshold), and the retrieve-vs-style boundary on the weighted score.
Every search is exhaustive and deterministically tie-broken: smallest
threshold, lexicographically smallest weights.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError, DegenerateDataError

logger = logging.getLogger(__name__)

GATE_LABELS = ("copy", "noncopy")
TYPE_LABELS = ("retrieve", "style")
OBJECTIVES = ("accuracy", "f1")

DEFAULT_TAU_LO = 0.5
DEFAULT_TAU_HI = 1.0
DEFAULT_TAU_STEP = 0.001
DEFAULT_SIMPLEX_STEP = 0.02


def default_tau_grid(lo: float = DEFAULT_TAU_LO, hi: float = DEFAULT_TAU_HI,
                     step: float = DEFAULT_TAU_STEP) -> np.ndarray:
    n = int(round((hi - lo) / step))
    return lo + step * np.arange(n + 1)


@dataclass(frozen=True)
class ScoreEntry:
    s_fus: float
    s_vis: float
    s_clip: float
    s_tex: float
    label: str

    def __post_init__(self):
        for name in ("s_fus", "s_vis", "s_clip", "s_tex"):
            v = getattr(self, name)
            if not -1.0 <= v <= 1.0:
                raise DataError(f"{name}={v} outside [-1, 1]")


@dataclass(frozen=True)
class LabeledScoreSet:
    entries: tuple[ScoreEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if not self.entries:
            raise DataError("score set is empty")

    def labels(self) -> list[str]:
        return [e.label for e in self.entries]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(e, name) for e in self.entries])

    def streams(self) -> np.ndarray:
        """N x 3 array of (s_vis, s_clip, s_tex)."""
        return np.array([[e.s_vis, e.s_clip, e.s_tex] for e in self.entries])

    def as_gate_labels(self) -> "LabeledScoreSet":
        """Collapse retrieve/style labels into the binary copy vocabulary."""
        remap = {"retrieve": "copy", "style": "copy", "copy": "copy", "noncopy": "noncopy"}
        entries = []
        for e in self.entries:
            if e.label not in remap:
                raise DataError(f"unknown label {e.label!r}")
            entries.append(ScoreEntry(e.s_fus, e.s_vis, e.s_clip, e.s_tex, remap[e.label]))
        return LabeledScoreSet(entries=tuple(entries))

    def type_subset(self) -> "LabeledScoreSet":
        kept = tuple(e for e in self.entries if e.label in TYPE_LABELS)
        if not kept:
            raise DegenerateDataError("no retrieve/style entries in score set")
        return LabeledScoreSet(entries=kept)


def load_score_set(path: str | os.PathLike) -> LabeledScoreSet:
    """Read one entry per JSONL line: s_fus, s_vis, s_clip, s_tex, label."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise DataError(f"score file not found: {path}")
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                entries.append(ScoreEntry(
                    s_fus=float(row["s_fus"]), s_vis=float(row["s_vis"]),
                    s_clip=float(row["s_clip"]), s_tex=float(row["s_tex"]),
                    label=str(row["label"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad score entry ({exc})") from exc
    if not entries:
        raise DataError(f"{path}: no score entries")
    return LabeledScoreSet(entries=tuple(entries))


@dataclass(frozen=True)
class SweepResult:
    grid: tuple[tuple[float, float], ...]  # (tau, accuracy) per grid point
    f1: tuple[float, ...]                  # f1 at each grid point
    objective: str
    best_tau: float
    best_accuracy: float
    best_f1: float


@dataclass(frozen=True)
class ThresholdRule:
    """How the weight grid scores one cell: a tau grid plus an objective."""
    grid: np.ndarray = field(default_factory=default_tau_grid)
    objective: str = "accuracy"


@dataclass(frozen=True)
class WeightGridResult:
    cells: tuple[tuple[tuple[float, float, float], float], ...]
    best: tuple[tuple[float, float, float], float]
    best_tau: float


@dataclass(frozen=True)
class TypeThreshold:
    tau: float
    clean: bool
    accuracy: float


def _check_grid(grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 2:
        raise ConfigurationError("threshold grid needs at least two points")
    if not np.all(np.diff(grid) > 0):
        raise ConfigurationError("threshold grid must be sorted strictly ascending")
    return grid


def _confusion_curves(scores: np.ndarray, positive: np.ndarray,
                      grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Accuracy and F1 at each tau under the strict s > tau rule.

    Counting is done with sorted-score bisection; the naive per-tau recount
    is kept as the test oracle.
    """
    n = scores.size
    pos_sorted = np.sort(scores[positive])
    neg_sorted = np.sort(scores[~positive])
    n_pos = pos_sorted.size
    tp = n_pos - np.searchsorted(pos_sorted, grid, side="right")
    tn = np.searchsorted(neg_sorted, grid, side="right")
    fp = neg_sorted.size - tn
    fn = n_pos - tp
    accuracy = (tp + tn) / n
    denom = 2 * tp + fp + fn
    f1 = np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)
    return accuracy, f1


def _gate_mask(score_set: LabeledScoreSet) -> np.ndarray:
    labels = score_set.labels()
    unknown = set(labels) - set(GATE_LABELS)
    if unknown:
        raise DataError(f"sweep expects copy/noncopy labels, found {sorted(unknown)}")
    positive = np.array([lab == "copy" for lab in labels])
    if positive.all() or not positive.any():
        raise DegenerateDataError("score set must contain both copy and noncopy entries")
    return positive


def sweep_threshold(score_set: LabeledScoreSet, grid: np.ndarray,
                    score_field: str = "s_fus", objective: str = "accuracy") -> SweepResult:
    """Exhaustive threshold sweep; ties break toward the smallest tau."""
    if objective not in OBJECTIVES:
        raise ConfigurationError(f"objective must be one of {OBJECTIVES}, got {objective!r}")
    grid = _check_grid(grid)
    positive = _gate_mask(score_set)
    scores = score_set.column(score_field)
    accuracy, f1 = _confusion_curves(scores, positive, grid)
    target = accuracy if objective == "accuracy" else f1
    best_idx = int(np.argmax(target))  # first max = smallest tau
    return SweepResult(
        grid=tuple((float(t), float(a)) for t, a in zip(grid, accuracy)),
        f1=tuple(float(v) for v in f1),
        objective=objective,
        best_tau=float(grid[best_idx]),
        best_accuracy=float(accuracy[best_idx]),
        best_f1=float(f1[best_idx]),
    )


def simplex_cells(step: float) -> list[tuple[float, float, float]]:
    """All (w_vis, w_clip, w_tex) with the given step, each summing to 1."""
    if not 0.0 < step <= 1.0:
        raise ConfigurationError(f"simplex step must lie in (0, 1], got {step}")
    k = round(1.0 / step)
    if abs(k * step - 1.0) > 1e-9:
        raise ConfigurationError(f"simplex step {step} does not divide 1 evenly")
    cells = []
    for i in range(k + 1):
        for j in range(k + 1 - i):
            cells.append((i / k, j / k, (k - i - j) / k))
    return cells


def grid_search_weights(score_set: LabeledScoreSet, step: float,
                        tau_rule: ThresholdRule | None = None) -> WeightGridResult:
    """Score every simplex cell at its own best threshold on S_w.

    The argmax ties break toward the lexicographically smallest
    (w_vis, w_clip), which the ascending cell enumeration provides.
    """
    rule = tau_rule or ThresholdRule()
    grid = _check_grid(rule.grid)
    if rule.objective not in OBJECTIVES:
        raise ConfigurationError(f"objective must be one of {OBJECTIVES}, got {rule.objective!r}")
    positive = _gate_mask(score_set)
    streams = score_set.streams()
    cells = []
    best_cell = None
    best_value = -np.inf
    best_tau = None
    for w in simplex_cells(step):
        s_w = streams @ np.array(w)
        accuracy, f1 = _confusion_curves(s_w, positive, grid)
        target = accuracy if rule.objective == "accuracy" else f1
        idx = int(np.argmax(target))
        cells.append((w, float(accuracy[idx])))
        if float(target[idx]) > best_value:
            best_value = float(target[idx])
            best_cell = (w, float(accuracy[idx]))
            best_tau = float(grid[idx])
    return WeightGridResult(cells=tuple(cells), best=best_cell, best_tau=best_tau)


def select_type_threshold(score_set: LabeledScoreSet,
                          omega: tuple[float, float, float]) -> TypeThreshold:
    """Boundary between retrieve and style on the weighted score.

    Linearly separable inputs get the midpoint of the gap (clean=True);
    otherwise the accuracy-maximizing candidate threshold, smallest first.
    """
    labels = score_set.labels()
    unknown = set(labels) - set(TYPE_LABELS)
    if unknown:
        raise DataError(f"type threshold expects retrieve/style labels, found {sorted(unknown)}")
    is_retrieve = np.array([lab == "retrieve" for lab in labels])
    if is_retrieve.all() or not is_retrieve.any():
        raise DegenerateDataError("need both retrieve and style entries")
    s_w = score_set.streams() @ np.asarray(omega, dtype=np.float64)
    retrieve_scores = s_w[is_retrieve]
    style_scores = s_w[~is_retrieve]
    lo, hi = style_scores.max(), retrieve_scores.min()
    if hi > lo:
        tau = (lo + hi) / 2.0
        return TypeThreshold(tau=float(tau), clean=True, accuracy=1.0)
    # Overlapping: try every decision boundary the data can distinguish.
    uniq = np.unique(s_w)
    candidates = np.concatenate([[uniq[0] - 1.0], (uniq[:-1] + uniq[1:]) / 2.0, [uniq[-1]]])
    best_tau, best_acc = None, -1.0
    for tau in candidates:
        pred_retrieve = s_w > tau
        acc = float(np.mean(pred_retrieve == is_retrieve))
        if acc > best_acc:
            best_acc, best_tau = acc, float(tau)
    return TypeThreshold(tau=best_tau, clean=False, accuracy=best_acc)


def emit_curves(result, path: str | os.PathLike, render: bool = False) -> list[str]:
    """Write a result as CSV (the contract); optionally render a plot (best effort).

    Returns the list of files written.
    """
    path = os.fspath(path)
    if isinstance(result, SweepResult):
        if not result.grid:
            raise DataError("refusing to emit an empty sweep")
        header = ["tau", "accuracy", "f1"]
        rows = [[t, a, f] for (t, a), f in zip(result.grid, result.f1)]
    elif isinstance(result, WeightGridResult):
        if not result.cells:
            raise DataError("refusing to emit an empty weight grid")
        header = ["w_vis", "w_clip", "accuracy"]
        rows = [[w[0], w[1], acc] for w, acc in result.cells]
    else:
        raise ConfigurationError(f"cannot emit curves for {type(result).__name__}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    written = [path]
    if render:
        image_path = os.path.splitext(path)[0] + ".png"
        if _render_plot(result, image_path):
            written.append(image_path)
    return written


def _render_plot(result, image_path: str) -> bool:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except Exception as exc:  # rendering is best-effort; CSV is the contract
        logger.warning("plot rendering unavailable: %s", exc)
        return False
    fig, ax = plt.subplots(figsize=(5, 4))
    if isinstance(result, SweepResult):
        taus = [t for t, _ in result.grid]
        accs = [a for _, a in result.grid]
        ax.plot(taus, accs, lw=1.2)
        ax.axvline(result.best_tau, color="tab:red", ls="--", lw=0.8)
        ax.set_xlabel("threshold")
        ax.set_ylabel("accuracy")
    else:
        xs = [w[0] for w, _ in result.cells]
        ys = [w[1] for w, _ in result.cells]
        cs = [acc for _, acc in result.cells]
        sc = ax.scatter(xs, ys, c=cs, cmap="viridis", s=18, marker="s")
        fig.colorbar(sc, ax=ax, label="accuracy")
        ax.set_xlabel("w_vis")
        ax.set_ylabel("w_clip")
    fig.tight_layout()
    fig.savefig(image_path, dpi=120)
    plt.close(fig)
    return True
