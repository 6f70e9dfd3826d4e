"""The four-metric scoring protocol: F-measure, MAE, S-measure, E-measure.

Binarization is explicit and reproducible everywhere: a fixed 256-level
threshold sweep {0, 1/255, ..., 1} with ties going to foreground, plus the
adaptive threshold min(1, 2*mean). Scores of a pair are deterministic and
independent of any evaluation batching.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import LabelMask, ShapeMismatchError, as_scalar_values

BETA_SQ = 0.3
THRESHOLDS = np.arange(_kernels.N_THRESHOLDS) / 255.0
THRESHOLDS.flags.writeable = False

E_MODES = ("max", "mean", "adaptive")


@dataclass(frozen=True)
class PRCurve:
    """Precision/recall at each of the 256 sweep thresholds."""

    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray


@dataclass(frozen=True)
class MetricScores:
    f_max: float
    f_adaptive: float
    mae: float
    s_measure: float
    e_max: float
    e_mean: float

    def as_dict(self) -> dict:
        return {
            "f_max": self.f_max,
            "f_adaptive": self.f_adaptive,
            "mae": self.mae,
            "s_measure": self.s_measure,
            "e_max": self.e_max,
            "e_mean": self.e_mean,
        }


def _pred_array(pred) -> np.ndarray:
    p = as_scalar_values(pred)
    if p.size == 0:
        raise ValueError("prediction map is empty")
    if p.min() < 0.0 or p.max() > 1.0:
        raise ValueError("prediction values must lie in [0, 1]")
    return np.ascontiguousarray(p)


def _gt_binary(gt) -> np.ndarray:
    if isinstance(gt, LabelMask):
        return gt.binary()
    a = np.asarray(gt)
    if a.ndim != 2:
        raise ValueError(f"gt must be a 2-d grid, got shape {a.shape}")
    if a.dtype == bool:
        return np.ascontiguousarray(a)
    if np.issubdtype(a.dtype, np.integer):
        return np.ascontiguousarray(a > 0)
    f = a.astype(np.float64)
    if not np.isin(f, (0.0, 1.0)).all():
        raise ValueError("a real-valued gt must contain only 0 and 1")
    return np.ascontiguousarray(f == 1.0)


def _aligned(pred, gt):
    p = _pred_array(pred)
    g = _gt_binary(gt)
    if p.shape != g.shape:
        raise ShapeMismatchError(
            f"prediction {p.shape} and gt {g.shape} differ; resample the prediction first"
        )
    return p, g


def mae(pred, gt) -> float:
    """Mean absolute difference. gt may be a mask (object collapse) or a map."""
    p = _pred_array(pred)
    if isinstance(gt, LabelMask):
        g = gt.binary().astype(np.float64)
    else:
        a = np.asarray(gt)
        if a.dtype == bool or np.issubdtype(a.dtype, np.integer):
            g = _gt_binary(gt).astype(np.float64)
        else:
            g = _pred_array(gt)
    if p.shape != g.shape:
        raise ShapeMismatchError(
            f"prediction {p.shape} and gt {g.shape} differ; resample the prediction first"
        )
    return float(np.abs(p - g).mean())


def pr_curve(pred, gt) -> PRCurve:
    """Precision/recall over the 256-threshold sweep.

    Conventions: with no predicted foreground, precision is 0 unless the gt is
    empty too, in which case precision = recall = 1; recall over an empty gt
    is vacuously 1, which keeps it non-increasing in the threshold.
    """
    p, g = _aligned(pred, gt)
    tp, fp = _kernels.threshold_counts(p.ravel(), g.ravel())
    nf = int(tp[0])
    P, R, _, _ = _kernels.pr_f_curves(tp, fp, nf, BETA_SQ)
    return PRCurve(THRESHOLDS, P, R)


def f_measure(p, r, beta_sq: float = BETA_SQ):
    """Weighted harmonic mean of precision and recall; 0 when both are 0.

    Accepts scalars or same-shape arrays (threshold curves).
    """
    if beta_sq <= 0:
        raise ValueError("beta_sq must be positive")
    p_arr = np.asarray(p, dtype=np.float64)
    r_arr = np.asarray(r, dtype=np.float64)
    if (p_arr < 0).any() or (p_arr > 1).any() or (r_arr < 0).any() or (r_arr > 1).any():
        raise ValueError("precision and recall must lie in [0, 1]")
    if p_arr.ndim == 0 and r_arr.ndim == 0:
        pv = float(p_arr)
        rv = float(r_arr)
        den = beta_sq * pv + rv
        return (1.0 + beta_sq) * pv * rv / den if den > 0 else 0.0
    pb, rb = np.broadcast_arrays(p_arr, r_arr)
    den = beta_sq * pb + rb
    safe = np.where(den > 0, den, 1.0)
    return np.where(den > 0, (1.0 + beta_sq) * pb * rb / safe, 0.0)


def f_max(pred, gt) -> float:
    """Best F over the 256-threshold sweep (beta^2 = 0.3)."""
    p, g = _aligned(pred, gt)
    tp, fp = _kernels.threshold_counts(p.ravel(), g.ravel())
    _, _, _, f_best = _kernels.pr_f_curves(tp, fp, int(tp[0]), BETA_SQ)
    return float(f_best)


def f_adaptive(pred, gt) -> float:
    """F at the adaptive threshold min(1, 2*mean(pred))."""
    p, g = _aligned(pred, gt)
    _, ctp, cfp, cfn, _ = _kernels.adaptive_confusion(p.ravel(), g.ravel())
    return _f_from_counts(ctp, cfp, ctp + cfn)


def _f_from_counts(tp: int, fp: int, nf: int) -> float:
    pos = tp + fp
    if pos > 0:
        p = tp / pos
    elif nf == 0:
        p = 1.0
    else:
        p = 0.0
    r = tp / nf if nf > 0 else 1.0
    den = BETA_SQ * p + r
    return (1.0 + BETA_SQ) * p * r / den if den > 0 else 0.0


def s_measure(pred, gt) -> float:
    """Structure similarity: equal mix of object-level statistics and
    centroid-split block SSIM. Degenerate gt: all-background scores
    1 - mean(pred), all-foreground mean(pred)."""
    p, g = _aligned(pred, gt)
    return float(_kernels.s_measure_value(p, g))


def e_measure(pred, gt, mode: str = "max") -> float:
    """Enhanced-alignment score; mode is the binarization policy for pred."""
    if mode not in E_MODES:
        raise ValueError(f"mode must be one of {E_MODES}, got {mode!r}")
    p, g = _aligned(pred, gt)
    pf = p.ravel()
    gf = g.ravel()
    if mode == "adaptive":
        _, ctp, cfp, cfn, ctn = _kernels.adaptive_confusion(pf, gf)
        return float(_kernels.e_from_confusion(ctp, cfp, cfn, ctn, pf.size))
    tp, fp = _kernels.threshold_counts(pf, gf)
    _, e_best, e_mean = _kernels.e_curve(tp, fp, int(tp[0]), pf.size)
    return float(e_best) if mode == "max" else float(e_mean)


def e_curve(pred, gt) -> np.ndarray:
    """Per-threshold enhanced-alignment values over the 256-level sweep."""
    p, g = _aligned(pred, gt)
    tp, fp = _kernels.threshold_counts(p.ravel(), g.ravel())
    E, _, _ = _kernels.e_curve(tp, fp, int(tp[0]), p.size)
    return E


def score_pair(pred, gt) -> MetricScores:
    """All metrics of one (prediction, gt) pair, sharing one threshold sweep."""
    p, g = _aligned(pred, gt)
    pf = p.ravel()
    gf = g.ravel()
    n = pf.size
    tp, fp = _kernels.threshold_counts(pf, gf)
    nf = int(tp[0])
    _, _, _, f_best = _kernels.pr_f_curves(tp, fp, nf, BETA_SQ)
    _, e_best, e_mean = _kernels.e_curve(tp, fp, nf, n)
    _, ctp, cfp, _, _ = _kernels.adaptive_confusion(pf, gf)
    return MetricScores(
        f_max=float(f_best),
        f_adaptive=_f_from_counts(ctp, cfp, nf),
        mae=float(_kernels.mae_value(pf, gf)),
        s_measure=float(_kernels.s_measure_value(p, g)),
        e_max=float(e_best),
        e_mean=float(e_mean),
    )


def scores_with_curve(pred, gt) -> tuple[MetricScores, PRCurve]:
    """score_pair plus the PR curve, computed from the same counts."""
    p, g = _aligned(pred, gt)
    pf = p.ravel()
    gf = g.ravel()
    n = pf.size
    tp, fp = _kernels.threshold_counts(pf, gf)
    nf = int(tp[0])
    P, R, _, f_best = _kernels.pr_f_curves(tp, fp, nf, BETA_SQ)
    _, e_best, e_mean = _kernels.e_curve(tp, fp, nf, n)
    _, ctp, cfp, _, _ = _kernels.adaptive_confusion(pf, gf)
    scores = MetricScores(
        f_max=float(f_best),
        f_adaptive=_f_from_counts(ctp, cfp, nf),
        mae=float(_kernels.mae_value(pf, gf)),
        s_measure=float(_kernels.s_measure_value(p, g)),
        e_max=float(e_best),
        e_mean=float(e_mean),
    )
    return scores, PRCurve(THRESHOLDS, P, R)
