"""Instance segmentation metrics.

Every function takes predicted masks ``S_1..S_N`` and ground-truth masks
``Ŝ_1..Ŝ_M`` on one frame. Pairwise precision is measured against the
prediction (``|S_i ∩ Ŝ_j| / |S_i|``) and recall against the ground truth.

Two families are reported:

* classical Overlap/Boundary P/R/F, pooled over pixels so large objects weigh
  more;
* object-size-normalised (OSN) P_n/R_n/F_n, averaged over instances, plus the
  F@.75 instance counts.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from segrefine.errors import FrameMismatch
from segrefine.geometry.masks import BinaryMask, LabelImage, boundary, dilate, extract_instances

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 2
F_THRESHOLD = 0.75
# Matching totals closer than this count as equal.
_TIE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Assignment:
    """One-to-one (pred index, gt index) pairs, 0-based into the input lists."""

    pairs: tuple[tuple[int, int], ...] = ()

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def pred_indices(self) -> list[int]:
        return [i for i, _ in self.pairs]

    @property
    def gt_indices(self) -> list[int]:
        return [j for _, j in self.pairs]


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f_measure: float


@dataclass(frozen=True)
class OsnScores:
    precision: float
    recall: float
    f_measure: float
    f_at_75: float


@dataclass(frozen=True)
class EvalReport:
    overlap_p: float
    overlap_r: float
    overlap_f: float
    boundary_p: float
    boundary_r: float
    boundary_f: float
    overlap_pn: float
    overlap_rn: float
    overlap_fn: float
    boundary_pn: float
    boundary_rn: float
    boundary_fn: float
    f_at_75: float
    fn_at_75: float
    num_pred: int
    num_gt: int

    def to_dict(self) -> dict[str, float | int]:
        return asdict(self)

    @classmethod
    def metric_names(cls) -> list[str]:
        return [name for name in cls.__dataclass_fields__ if not name.startswith("num_")]


def f_measure(p: float, r: float) -> float:
    return 0.0 if p + r <= 0.0 else 2.0 * p * r / (p + r)


def _check_frames(preds: Sequence[BinaryMask], gts: Sequence[BinaryMask]) -> tuple[int, int] | None:
    shapes = {mask.shape for mask in (*preds, *gts)}
    if len(shapes) > 1:
        raise FrameMismatch(f"masks span several frames: {sorted(shapes)}")
    return next(iter(shapes)) if shapes else None


def _stack(masks: Sequence[BinaryMask], size: int) -> np.ndarray:
    if not masks:
        return np.zeros((0, size), dtype=np.float64)
    return np.stack([mask.bits.ravel() for mask in masks]).astype(np.float64)


def _ratio(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    out = np.zeros_like(numerator, dtype=np.float64)
    np.divide(numerator, denominator, out=out, where=denominator > 0)
    return out


def _f_matrix(p: np.ndarray, r: np.ndarray) -> np.ndarray:
    return _ratio(2.0 * p * r, p + r)


def pairwise_prf(pred: BinaryMask, gt: BinaryMask) -> tuple[float, float, float]:
    if pred.shape != gt.shape:
        raise FrameMismatch(f"mask frames differ: {pred.shape} vs {gt.shape}")
    hits = float(np.count_nonzero(pred.bits & gt.bits))
    p = hits / pred.area if pred.area else 0.0
    r = hits / gt.area if gt.area else 0.0
    return p, r, f_measure(p, r)


def prf_matrices(
    preds: Sequence[BinaryMask], gts: Sequence[BinaryMask]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """N×M precision, recall and F matrices of pixel overlap."""
    frame = _check_frames(preds, gts)
    size = frame[0] * frame[1] if frame else 0
    pred_stack, gt_stack = _stack(preds, size), _stack(gts, size)
    hits = pred_stack @ gt_stack.T
    p = _ratio(hits, pred_stack.sum(axis=1)[:, None])
    r = _ratio(hits, gt_stack.sum(axis=1)[None, :])
    return p, r, _f_matrix(p, r)


@dataclass(frozen=True)
class BoundaryCounts:
    """Boundary pixel counts behind the boundary P/R/F matrices.

    ``pred_hits[i, j]`` counts boundary pixels of prediction ``i`` within the
    tolerance of ground truth ``j``'s boundary; ``gt_hits`` the converse.
    """

    pred_hits: np.ndarray
    gt_hits: np.ndarray
    pred_sizes: np.ndarray
    gt_sizes: np.ndarray

    @property
    def precision(self) -> np.ndarray:
        return _ratio(self.pred_hits, self.pred_sizes[:, None])

    @property
    def recall(self) -> np.ndarray:
        return _ratio(self.gt_hits, self.gt_sizes[None, :])

    @property
    def f_measure(self) -> np.ndarray:
        return _f_matrix(self.precision, self.recall)


def boundary_counts(
    preds: Sequence[BinaryMask], gts: Sequence[BinaryMask], tol: float = DEFAULT_TOLERANCE
) -> BoundaryCounts:
    frame = _check_frames(preds, gts)
    size = frame[0] * frame[1] if frame else 0
    pred_edges = [boundary(mask) for mask in preds]
    gt_edges = [boundary(mask) for mask in gts]
    pred_stack, gt_stack = _stack(pred_edges, size), _stack(gt_edges, size)
    pred_zone = _stack([dilate(edge, tol) for edge in pred_edges], size)
    gt_zone = _stack([dilate(edge, tol) for edge in gt_edges], size)
    return BoundaryCounts(
        pred_hits=pred_stack @ gt_zone.T,
        gt_hits=pred_zone @ gt_stack.T,
        pred_sizes=pred_stack.sum(axis=1),
        gt_sizes=gt_stack.sum(axis=1),
    )


def _best_total(f: np.ndarray) -> float:
    if f.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(f, maximize=True)
    return float(f[rows, cols].sum())


def match_f_matrix(f: np.ndarray) -> Assignment:
    """Maximum-total-F one-to-one matching; pairs with F = 0 are dropped.

    Among optimal matchings the one whose sorted pair tuple is lexicographically
    smallest wins: pairs are fixed greedily in (row, col) order whenever the
    remaining rows and columns can still complete an optimal total.
    """
    if f.size == 0:
        return Assignment()
    target = _best_total(f)
    pairs: list[tuple[int, int]] = []
    used_rows: list[int] = []
    used_cols: list[int] = []
    value = 0.0
    for i, j in zip(*np.nonzero(f > 0.0)):
        if value >= target - _TIE_TOLERANCE:
            break
        if i in used_rows or j in used_cols:
            continue
        rest = np.delete(np.delete(f, used_rows + [i], axis=0), used_cols + [j], axis=1)
        if value + f[i, j] + _best_total(rest) >= target - _TIE_TOLERANCE:
            pairs.append((int(i), int(j)))
            used_rows.append(int(i))
            used_cols.append(int(j))
            value += float(f[i, j])
    return Assignment(tuple(pairs))


def hungarian_match(preds: Sequence[BinaryMask], gts: Sequence[BinaryMask]) -> Assignment:
    return match_f_matrix(prf_matrices(preds, gts)[2])


def _degenerate(n: int, m: int) -> float | None:
    if n == 0 and m == 0:
        return 1.0
    if n == 0 or m == 0:
        return 0.0
    return None


def _osn(p: np.ndarray, r: np.ndarray, f: np.ndarray, assignment: Assignment) -> OsnScores:
    n, m = f.shape
    fixed = _degenerate(n, m)
    if fixed is not None:
        return OsnScores(fixed, fixed, fixed, fixed)
    rows, cols = assignment.pred_indices, assignment.gt_indices
    matched = f[rows, cols]
    return OsnScores(
        precision=float(p[rows, cols].sum()) / n,
        recall=float(r[rows, cols].sum()) / m,
        f_measure=float(matched.sum()) / max(n, m),
        f_at_75=float(np.count_nonzero(matched >= F_THRESHOLD)) / max(n, m),
    )


def osn_metrics(
    preds: Sequence[BinaryMask], gts: Sequence[BinaryMask], assignment: Assignment
) -> OsnScores:
    """Per-instance averages: P_n over predictions, R_n over ground truth, F_n over max(N, M)."""
    return _osn(*prf_matrices(preds, gts), assignment)


def _pooled(hits_p: float, total_p: float, hits_r: float, total_r: float, n: int, m: int) -> PRF:
    fixed = _degenerate(n, m)
    if fixed is not None:
        return PRF(fixed, fixed, fixed)
    p = hits_p / total_p if total_p > 0 else 0.0
    r = hits_r / total_r if total_r > 0 else 0.0
    return PRF(p, r, f_measure(p, r))


def overlap_prf(preds: Sequence[BinaryMask], gts: Sequence[BinaryMask], assignment: Assignment) -> PRF:
    """Pixel-pooled overlap: unmatched masks add their area to the denominators only."""
    _check_frames(preds, gts)
    hits = sum(float(np.count_nonzero(preds[i].bits & gts[j].bits)) for i, j in assignment)
    return _pooled(
        hits,
        float(sum(mask.area for mask in preds)),
        hits,
        float(sum(mask.area for mask in gts)),
        len(preds),
        len(gts),
    )


def boundary_prf(
    preds: Sequence[BinaryMask],
    gts: Sequence[BinaryMask],
    assignment: Assignment | None = None,
    *,
    tol: float = DEFAULT_TOLERANCE,
) -> PRF:
    counts = boundary_counts(preds, gts, tol)
    if assignment is None:
        assignment = match_f_matrix(counts.f_measure)
    rows, cols = assignment.pred_indices, assignment.gt_indices
    return _pooled(
        float(counts.pred_hits[rows, cols].sum()),
        float(counts.pred_sizes.sum()),
        float(counts.gt_hits[rows, cols].sum()),
        float(counts.gt_sizes.sum()),
        len(preds),
        len(gts),
    )


def classical_metrics(
    preds: Sequence[BinaryMask],
    gts: Sequence[BinaryMask],
    assignment: Assignment,
    *,
    tol: float = DEFAULT_TOLERANCE,
) -> tuple[PRF, PRF]:
    """Overlap P/R/F under ``assignment``, boundary P/R/F under its own boundary matching."""
    return overlap_prf(preds, gts, assignment), boundary_prf(preds, gts, tol=tol)


def f_at_75(preds: Sequence[BinaryMask], gts: Sequence[BinaryMask], assignment: Assignment) -> float:
    """Share of ground-truth instances matched with F >= 0.75; false positives cost nothing."""
    if not gts:
        return 1.0 if not preds else 0.0
    if not preds:
        return 0.0
    f = prf_matrices(preds, gts)[2]
    matched = f[assignment.pred_indices, assignment.gt_indices]
    return float(np.count_nonzero(matched >= F_THRESHOLD)) / len(gts)


def instance_masks(labels: LabelImage) -> list[BinaryMask]:
    return list(extract_instances(labels).values())


def evaluate_masks(
    preds: Sequence[BinaryMask], gts: Sequence[BinaryMask], *, tol: float = DEFAULT_TOLERANCE
) -> EvalReport:
    p, r, f = prf_matrices(preds, gts)
    assignment = match_f_matrix(f)
    overlap = overlap_prf(preds, gts, assignment)
    overlap_osn = _osn(p, r, f, assignment)

    counts = boundary_counts(preds, gts, tol)
    boundary_assignment = match_f_matrix(counts.f_measure)
    edges = boundary_prf(preds, gts, boundary_assignment, tol=tol)
    edges_osn = _osn(counts.precision, counts.recall, counts.f_measure, boundary_assignment)

    return EvalReport(
        overlap_p=overlap.precision,
        overlap_r=overlap.recall,
        overlap_f=overlap.f_measure,
        boundary_p=edges.precision,
        boundary_r=edges.recall,
        boundary_f=edges.f_measure,
        overlap_pn=overlap_osn.precision,
        overlap_rn=overlap_osn.recall,
        overlap_fn=overlap_osn.f_measure,
        boundary_pn=edges_osn.precision,
        boundary_rn=edges_osn.recall,
        boundary_fn=edges_osn.f_measure,
        f_at_75=f_at_75(preds, gts, assignment),
        fn_at_75=overlap_osn.f_at_75,
        num_pred=len(preds),
        num_gt=len(gts),
    )


def evaluate_labels(pred: LabelImage, gt: LabelImage, *, tol: float = DEFAULT_TOLERANCE) -> EvalReport:
    if pred.shape != gt.shape:
        raise FrameMismatch(f"prediction {pred.shape} and ground truth {gt.shape} differ in frame")
    return evaluate_masks(instance_masks(pred), instance_masks(gt), tol=tol)


def oracle_score(pred: LabelImage, gt: LabelImage) -> float:
    """0.8 · Overlap F + 0.2 · F@.75 against the ground truth."""
    if pred.shape != gt.shape:
        raise FrameMismatch(f"prediction {pred.shape} and ground truth {gt.shape} differ in frame")
    preds, gts = instance_masks(pred), instance_masks(gt)
    assignment = hungarian_match(preds, gts)
    overlap = overlap_prf(preds, gts, assignment)
    return float(np.clip(0.8 * overlap.f_measure + 0.2 * f_at_75(preds, gts, assignment), 0.0, 1.0))
