"""Compiled per-pair scoring kernels.

These loops are the production scoring path: exact 256-level threshold sweeps
on images of any size without materializing threshold x pixel arrays. All
comparisons use the same ``value >= k/255`` doubles as a naive sweep, so counts
are exact integers.
"""

from __future__ import annotations

import numpy as np
from numba import njit

N_THRESHOLDS = 256


@njit(cache=True)
def _thr_index(x):
    # largest k in [0, 255] with k/255 <= x
    k = int(x * 255.0)
    if k > 255:
        k = 255
    if k < 0:
        k = 0
    while k < 255 and (k + 1) / 255.0 <= x:
        k += 1
    while k > 0 and k / 255.0 > x:
        k -= 1
    return k


@njit(cache=True)
def threshold_counts(pred, gt):
    """Suffix-sum histograms: tp[k], fp[k] = foreground/background pixels with
    value >= k/255, for every k in one pass."""
    hist_fg = np.zeros(N_THRESHOLDS, np.int64)
    hist_bg = np.zeros(N_THRESHOLDS, np.int64)
    for i in range(pred.size):
        k = _thr_index(pred[i])
        if gt[i]:
            hist_fg[k] += 1
        else:
            hist_bg[k] += 1
    tp = np.empty(N_THRESHOLDS, np.int64)
    fp = np.empty(N_THRESHOLDS, np.int64)
    acc_tp = 0
    acc_fp = 0
    for k in range(N_THRESHOLDS - 1, -1, -1):
        acc_tp += hist_fg[k]
        acc_fp += hist_bg[k]
        tp[k] = acc_tp
        fp[k] = acc_fp
    return tp, fp


@njit(cache=True)
def confusion_at(pred, gt, threshold):
    """(tp, fp, fn, tn) of ``pred >= threshold`` against a binary gt."""
    tp = 0
    fp = 0
    fn = 0
    tn = 0
    for i in range(pred.size):
        b = pred[i] >= threshold
        if gt[i]:
            if b:
                tp += 1
            else:
                fn += 1
        else:
            if b:
                fp += 1
            else:
                tn += 1
    return tp, fp, fn, tn


@njit(cache=True)
def pr_f_curves(tp, fp, nf, beta_sq):
    """Precision/recall/F per threshold from suffix counts, plus the F max.

    Empty-denominator convention: no predicted foreground gives precision 0
    unless the gt is also empty, in which case precision and recall are 1.
    Recall over an empty gt is vacuously 1 at every threshold.
    """
    P = np.empty(N_THRESHOLDS)
    R = np.empty(N_THRESHOLDS)
    F = np.empty(N_THRESHOLDS)
    f_best = 0.0
    for k in range(N_THRESHOLDS):
        pos = tp[k] + fp[k]
        if pos > 0:
            p = tp[k] / pos
        elif nf == 0:
            p = 1.0
        else:
            p = 0.0
        r = tp[k] / nf if nf > 0 else 1.0
        P[k] = p
        R[k] = r
        den = beta_sq * p + r
        f = (1.0 + beta_sq) * p * r / den if den > 0 else 0.0
        F[k] = f
        if f > f_best:
            f_best = f
    return P, R, F, f_best


@njit(cache=True, inline="always")
def _enhanced(phi_p, phi_g):
    d = phi_p * phi_p + phi_g * phi_g
    xi = 2.0 * phi_p * phi_g / d if d > 0 else 0.0
    v = xi + 1.0
    return v * v / 4.0


@njit(cache=True)
def e_from_confusion(tp, fp, fn, tn, n):
    """Enhanced-alignment value from a confusion quadruple.

    Binary inputs make the alignment matrix piecewise constant over the four
    confusion classes, so the pixel mean collapses to a weighted sum.
    Degenerate gt: all-background scores 1 - mean(bin), all-foreground mean(bin).
    """
    nf = tp + fn
    pos = tp + fp
    if nf == 0:
        return 1.0 - pos / n
    if nf == n:
        return pos / n
    mu_b = pos / n
    mu_g = nf / n
    s = (
        tp * _enhanced(1.0 - mu_b, 1.0 - mu_g)
        + fp * _enhanced(1.0 - mu_b, -mu_g)
        + fn * _enhanced(-mu_b, 1.0 - mu_g)
        + tn * _enhanced(-mu_b, -mu_g)
    )
    return s / n


@njit(cache=True)
def e_curve(tp, fp, nf, n):
    """Per-threshold enhanced values plus their max and mean."""
    E = np.empty(N_THRESHOLDS)
    e_best = -1.0
    e_sum = 0.0
    for k in range(N_THRESHOLDS):
        e = e_from_confusion(tp[k], fp[k], nf - tp[k], (n - nf) - fp[k], n)
        E[k] = e
        e_sum += e
        if e > e_best:
            e_best = e
    return E, e_best, e_sum / N_THRESHOLDS


@njit(cache=True)
def mae_value(pred, gt):
    s = 0.0
    for i in range(pred.size):
        g = 1.0 if gt[i] else 0.0
        d = pred[i] - g
        s += d if d >= 0.0 else -d
    return s / pred.size


@njit(cache=True)
def adaptive_confusion(pred, gt):
    """Confusion counts at the adaptive threshold min(1, 2*mean(pred))."""
    s = 0.0
    for i in range(pred.size):
        s += pred[i]
    t = 2.0 * (s / pred.size)
    if t > 1.0:
        t = 1.0
    tp, fp, fn, tn = confusion_at(pred, gt, t)
    return t, tp, fp, fn, tn


@njit(cache=True)
def s_measure_value(pred, gt):
    """Structure similarity: object-level mean/deviation statistics plus
    region-level block SSIM around the gt centroid, equally weighted.

    An exactly-constant block has zero spread by definition; the constancy
    guards keep the SSIM branch decisions exact instead of depending on
    rounding noise in the accumulated sums.
    """
    h, w = pred.shape
    n = h * w
    nf = 0
    total = 0.0
    for i in range(h):
        for j in range(w):
            total += pred[i, j]
            if gt[i, j]:
                nf += 1
    if nf == 0:
        return 1.0 - total / n
    if nf == n:
        return total / n

    # object term: foreground on pred, background on its complement
    sum_fg = 0.0
    sum_bg = 0.0
    sum_r = 0
    sum_c = 0
    for i in range(h):
        for j in range(w):
            if gt[i, j]:
                sum_fg += pred[i, j]
                sum_r += i
                sum_c += j
            else:
                sum_bg += 1.0 - pred[i, j]
    nb = n - nf
    x_fg = sum_fg / nf
    x_bg = sum_bg / nb
    var_fg = 0.0
    var_bg = 0.0
    for i in range(h):
        for j in range(w):
            if gt[i, j]:
                d = pred[i, j] - x_fg
                var_fg += d * d
            else:
                d = (1.0 - pred[i, j]) - x_bg
                var_bg += d * d
    sig_fg = np.sqrt(var_fg / (nf - 1)) if nf > 1 else 0.0
    sig_bg = np.sqrt(var_bg / (nb - 1)) if nb > 1 else 0.0
    o_fg = 2.0 * x_fg / (x_fg * x_fg + 1.0 + sig_fg)
    o_bg = 2.0 * x_bg / (x_bg * x_bg + 1.0 + sig_bg)
    s_object = (nf * o_fg + nb * o_bg) / n

    # region term: split both maps in the pixel gap at the gt centroid
    # (floor cut; symmetric under 180-degree rotation away from integer means)
    cut_c = sum_c // nf + 1
    cut_r = sum_r // nf + 1
    weighted = 0.0
    for quad in range(4):
        r0 = 0 if quad < 2 else cut_r
        r1 = cut_r if quad < 2 else h
        c0 = 0 if quad % 2 == 0 else cut_c
        c1 = cut_c if quad % 2 == 0 else w
        nq = (r1 - r0) * (c1 - c0)
        if nq == 0:
            continue
        sp = 0.0
        ng1 = 0
        pmin = pred[r0, c0]
        pmax = pred[r0, c0]
        for i in range(r0, r1):
            for j in range(c0, c1):
                pv = pred[i, j]
                sp += pv
                if pv < pmin:
                    pmin = pv
                if pv > pmax:
                    pmax = pv
                if gt[i, j]:
                    ng1 += 1
        const_p = pmax == pmin
        const_g = ng1 == 0 or ng1 == nq
        x = pmin if const_p else sp / nq
        y = ng1 / nq
        sx = 0.0
        sy = 0.0
        sxy = 0.0
        if nq > 1 and not (const_p and const_g):
            for i in range(r0, r1):
                for j in range(c0, c1):
                    dp = 0.0 if const_p else pred[i, j] - x
                    dg = 0.0 if const_g else (1.0 if gt[i, j] else 0.0) - y
                    sx += dp * dp
                    sy += dg * dg
                    sxy += dp * dg
            sx /= nq - 1
            sy /= nq - 1
            sxy /= nq - 1
        alpha = 4.0 * x * y * sxy
        beta = (x * x + y * y) * (sx + sy)
        if alpha != 0.0:
            q = alpha / beta
        elif beta == 0.0:
            q = 1.0
        else:
            q = 0.0
        weighted += nq * q
    s_region = weighted / n
    return 0.5 * s_object + 0.5 * s_region
