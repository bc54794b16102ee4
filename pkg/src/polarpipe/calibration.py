"""Two-stage per-label decision-threshold tuning, plus a brute-force oracle.

Stage 1 scans a coarse global grid (0.20 to 0.80 in 0.05 steps) for the
single threshold maximizing macro-F1. Stage 2 visits labels once in schema
order and sweeps each label's threshold in 0.01 steps inside a clamped
window around the stage-1 value, keeping the best macro-F1; earlier labels'
refined values stay in effect. All ties break toward the smaller threshold,
and predictions are closed at the threshold (1 iff p >= theta).

Grid points are generated as integer counts of the step divided out at the
end, never by repeated addition, so thresholds survive a 6-decimal file
round-trip bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels as kernels
from .corpus import DataError
from .metrics import f1_from_counts
from .probs import ProbabilityMatrix

PROVENANCES = ("default", "coarse_only", "tuned", "oracle")

_ORACLE_MAX_INSTANCES = 200
_ORACLE_MAX_LABELS = 4


def _default_coarse_grid() -> tuple[float, ...]:
    return tuple(c / 100.0 for c in range(20, 81, 5))


@dataclass(frozen=True)
class GridSpec:
    coarse_grid: tuple[float, ...] = _default_coarse_grid()
    fine_step: float = 0.01
    window_halfwidth: float = 0.15
    window_clamp: tuple[float, float] = (0.1, 0.9)

    def __post_init__(self):
        grid = tuple(float(t) for t in self.coarse_grid)
        if not grid or any(not 0.0 <= t <= 1.0 for t in grid):
            raise DataError("coarse grid values must lie in [0, 1]")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise DataError("coarse grid must be strictly ascending")
        object.__setattr__(self, "coarse_grid", grid)
        if not 0.0 < self.fine_step < 1.0:
            raise DataError("fine_step must lie in (0, 1)")
        lo, hi = self.window_clamp
        if not 0.0 <= lo < hi <= 1.0:
            raise DataError("window_clamp must be an ordered pair inside [0, 1]")
        if self.window_halfwidth <= 0:
            raise DataError("window_halfwidth must be positive")

    def window(self, base: float) -> tuple[float, float]:
        """Fine-sweep bounds around a base threshold, clamped."""
        lo = max(self.window_clamp[0], base - self.window_halfwidth)
        hi = min(self.window_clamp[1], base + self.window_halfwidth)
        return lo, hi

    def fine_candidates(self, base: float) -> np.ndarray:
        """Ascending fine-grid candidates inside the clamped window."""
        lo, hi = self.window(base)
        per_unit = round(1.0 / self.fine_step)
        k_lo = int(np.ceil(lo * per_unit - 1e-9))
        k_hi = int(np.floor(hi * per_unit + 1e-9))
        return np.array([k / per_unit for k in range(k_lo, k_hi + 1)], dtype=np.float64)


@dataclass(frozen=True)
class ThresholdVector:
    label_names: tuple[str, ...]
    theta: np.ndarray  # float64, one per label
    base_theta: float | None
    provenance: str

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        if theta.shape != (len(self.label_names),):
            raise DataError(
                f"theta shape {theta.shape} does not match {len(self.label_names)} labels"
            )
        if theta.size and (theta.min() < 0.0 or theta.max() > 1.0):
            raise DataError("thresholds must lie in [0, 1]")
        if self.provenance not in PROVENANCES:
            raise DataError(f"provenance must be one of {PROVENANCES}, got {self.provenance!r}")
        if self.base_theta is not None and not 0.0 <= self.base_theta <= 1.0:
            raise DataError("base_theta must lie in [0, 1]")
        object.__setattr__(self, "theta", theta)


def default_thresholds(label_names: tuple[str, ...]) -> ThresholdVector:
    return ThresholdVector(
        label_names=tuple(label_names),
        theta=np.full(len(label_names), 0.5),
        base_theta=0.5,
        provenance="default",
    )


def _check_shapes(pm: ProbabilityMatrix, gold: np.ndarray) -> np.ndarray:
    gold = np.asarray(gold, dtype=np.int64)
    if gold.shape != pm.values.shape:
        raise DataError(f"gold shape {gold.shape} does not match probabilities {pm.values.shape}")
    if gold.size and not np.isin(gold, (0, 1)).all():
        raise DataError("gold matrix must be 0/1")
    if pm.n_instances == 0:
        raise DataError("need at least one instance")
    return gold


def apply_thresholds(pm: ProbabilityMatrix, tv: ThresholdVector) -> np.ndarray:
    """0/1 prediction matrix: entry is 1 iff probability >= its label's theta."""
    if tuple(tv.label_names) != tuple(pm.label_names):
        raise DataError(
            f"label mismatch: thresholds {tv.label_names} vs probabilities {pm.label_names}"
        )
    return (pm.values >= tv.theta[None, :]).astype(np.int64)


def _f1_per_candidate(probs_col: np.ndarray, gold_col: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    counts = kernels.sweep_confusion(probs_col, gold_col, thetas)
    denom = 2 * counts[:, 0] + counts[:, 1] + counts[:, 2]
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(denom > 0, 2 * counts[:, 0] / np.maximum(denom, 1), 0.0)
    return f1


def coarse_search(pm: ProbabilityMatrix, gold: np.ndarray, grid: GridSpec | None = None) -> float:
    """Best single global threshold on the coarse grid; ties go low."""
    if grid is None:
        grid = GridSpec()
    gold = _check_shapes(pm, gold)
    thetas = np.asarray(grid.coarse_grid, dtype=np.float64)
    per_label = np.stack(
        [
            _f1_per_candidate(pm.values[:, l], gold[:, l], thetas)
            for l in range(pm.n_labels)
        ],
        axis=1,
    )
    macro = per_label.mean(axis=1)
    return float(thetas[int(np.argmax(macro))])


def refine_per_label(
    pm: ProbabilityMatrix,
    gold: np.ndarray,
    base: float,
    grid: GridSpec | None = None,
    passes: int = 1,
) -> ThresholdVector:
    """Per-label fine sweep around a base threshold, one pass by default.

    Each label's threshold is replaced by the window argmax of macro-F1 with
    every other threshold held at its current value; because each label's F1
    depends only on its own threshold, this equals the independent per-label
    argmax. Extra passes re-sweep in the same window.
    """
    if grid is None:
        grid = GridSpec()
    if not 0.0 <= base <= 1.0:
        raise DataError(f"base threshold {base} outside [0, 1]")
    if passes < 1:
        raise DataError("passes must be >= 1")
    gold = _check_shapes(pm, gold)
    candidates = grid.fine_candidates(base)
    if candidates.size == 0:
        raise DataError(f"window around {base} contains no fine-grid points")
    theta = np.full(pm.n_labels, base, dtype=np.float64)
    for _ in range(passes):
        for l in range(pm.n_labels):
            f1 = _f1_per_candidate(pm.values[:, l], gold[:, l], candidates)
            theta[l] = candidates[int(np.argmax(f1))]
    return ThresholdVector(
        label_names=tuple(pm.label_names),
        theta=theta,
        base_theta=base,
        provenance="tuned",
    )


def tune(
    pm: ProbabilityMatrix,
    gold: np.ndarray,
    grid: GridSpec | None = None,
    refine_passes: int = 1,
) -> ThresholdVector:
    """Coarse global search followed by per-label refinement."""
    if grid is None:
        grid = GridSpec()
    base = coarse_search(pm, gold, grid)
    tv = refine_per_label(pm, gold, base, grid, passes=refine_passes)
    lo, hi = grid.window(base)
    # Edge candidates may sit one ulp past the float window bounds; allow the
    # same 1e-9 slack fine_candidates() uses when snapping to the lattice.
    if tv.theta.size and (tv.theta.min() < lo - 1e-9 or tv.theta.max() > hi + 1e-9):
        raise AssertionError("refined threshold escaped its window")
    return tv


def macro_f1_at(pm: ProbabilityMatrix, gold: np.ndarray, tv: ThresholdVector) -> float:
    """Macro-F1 of the thresholded predictions against a gold bit matrix."""
    gold = _check_shapes(pm, gold)
    pred = apply_thresholds(pm, tv)
    scores = []
    for l in range(pm.n_labels):
        tp = int(np.sum((pred[:, l] == 1) & (gold[:, l] == 1)))
        fp = int(np.sum((pred[:, l] == 1) & (gold[:, l] == 0)))
        fn = int(np.sum((pred[:, l] == 0) & (gold[:, l] == 1)))
        scores.append(f1_from_counts(tp, fp, fn))
    return sum(scores) / len(scores)


def oracle_best_thresholds(
    pm: ProbabilityMatrix, gold: np.ndarray
) -> tuple[ThresholdVector, float]:
    """Globally optimal per-label thresholds by exhaustive candidate search.

    Candidates per label are 0, 1, and the midpoints between consecutive
    distinct probability values; these realize every achievable prediction
    pattern. Macro-F1 splits into independent per-label terms, so the scan
    is per label. Guarded to small inputs; meant for verification, not use.
    """
    gold = _check_shapes(pm, gold)
    if pm.n_instances > _ORACLE_MAX_INSTANCES or pm.n_labels > _ORACLE_MAX_LABELS:
        raise DataError(
            f"oracle guard: at most {_ORACLE_MAX_INSTANCES} instances and "
            f"{_ORACLE_MAX_LABELS} labels, got {pm.n_instances} x {pm.n_labels}"
        )
    theta = np.empty(pm.n_labels, dtype=np.float64)
    best_scores = []
    for l in range(pm.n_labels):
        distinct = np.unique(pm.values[:, l])
        mids = (distinct[:-1] + distinct[1:]) / 2.0
        candidates = np.concatenate(([0.0], mids, [1.0]))
        f1 = _f1_per_candidate(pm.values[:, l], gold[:, l], candidates)
        k = int(np.argmax(f1))
        theta[l] = candidates[k]
        best_scores.append(float(f1[k]))
    tv = ThresholdVector(
        label_names=tuple(pm.label_names),
        theta=theta,
        base_theta=None,
        provenance="oracle",
    )
    return tv, sum(best_scores) / len(best_scores)


# ---------------------------------------------------------------------------
# Thresholds file


def save_thresholds(tv: ThresholdVector, path: str | Path) -> None:
    """Text form: provenance, base threshold, then one label per line."""
    lines = [f"__provenance__\t{tv.provenance}"]
    base = "none" if tv.base_theta is None else f"{tv.base_theta:.6f}"
    lines.append(f"__base__\t{base}")
    for name, t in zip(tv.label_names, tv.theta):
        lines.append(f"{name}\t{t:.6f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_thresholds(path: str | Path) -> ThresholdVector:
    path = Path(path)
    provenance: str | None = None
    base: float | None = None
    base_seen = False
    names: list[str] = []
    thetas: list[float] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}: malformed line {lineno}")
            key, value = parts
            if key == "__provenance__":
                provenance = value
            elif key == "__base__":
                base_seen = True
                base = None if value == "none" else float(value)
            else:
                names.append(key)
                try:
                    thetas.append(float(value))
                except ValueError:
                    raise DataError(f"{path}: bad threshold at line {lineno}") from None
    if provenance is None or not base_seen:
        raise DataError(f"{path}: missing __provenance__ or __base__ line")
    return ThresholdVector(
        label_names=tuple(names),
        theta=np.array(thetas, dtype=np.float64),
        base_theta=base,
        provenance=provenance,
    )
