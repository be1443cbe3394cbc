"""Pool-adjacent-violators isotonic calibration and isotonic R^2."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ResponseMatrix, ValidationError


def pava(y, scores, weights=None):
    """Least-squares nondecreasing fit of ``y`` as a function of ``scores``.

    Entries with equal scores are pooled into one block before the
    pool-adjacent-violators pass, so the result is a function of the score.

    Returns
    -------
    fitted : ndarray, aligned with ``y``
    knots : ndarray of block upper score boundaries
    block_values : ndarray of fitted level per block
    """
    y = np.asarray(y, dtype=float).ravel()
    s = np.asarray(scores, dtype=float).ravel()
    if y.shape != s.shape:
        raise ValidationError("y and scores must have the same length")
    if y.size == 0:
        raise ValidationError("nothing to calibrate")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float).ravel()

    order = np.argsort(s, kind="mergesort")
    ss = s[order]
    starts = np.flatnonzero(np.r_[True, ss[1:] != ss[:-1]])
    wsum = np.add.reduceat(w[order], starts)
    ysum = np.add.reduceat((w * y)[order], starts)
    upper = ss[np.r_[starts[1:], ss.size] - 1]

    # stack of pooled blocks: (weighted sum, weight, index of last tie-group)
    stack_y = []
    stack_w = []
    stack_end = []
    for k in range(len(starts)):
        cy, cw = ysum[k], wsum[k]
        while stack_y and stack_y[-1] * cw >= cy * stack_w[-1]:
            cy += stack_y.pop()
            cw += stack_w.pop()
            stack_end.pop()
        stack_y.append(cy)
        stack_w.append(cw)
        stack_end.append(k)

    levels = np.array(stack_y) / np.array(stack_w)
    ends = np.array(stack_end)
    group_level = np.repeat(levels, np.diff(np.r_[-1, ends]))
    fitted_sorted = np.repeat(group_level, np.diff(np.r_[starts, ss.size]))
    fitted = np.empty_like(y)
    fitted[order] = fitted_sorted
    return fitted, upper[ends], levels


@dataclass(frozen=True)
class IsotonicFit:
    fitted: np.ndarray
    knots: np.ndarray
    levels: np.ndarray
    rss: float
    tss: float

    def predict(self, scores) -> np.ndarray:
        """Step-function evaluation of the calibration at new scores."""
        s = np.asarray(scores, dtype=float)
        idx = np.searchsorted(self.knots, s, side="left")
        return self.levels[np.clip(idx, 0, len(self.levels) - 1)]


def _observed(X, scores):
    if isinstance(X, ResponseMatrix):
        vals, mask = X.values.astype(float), X.mask
    else:
        vals = np.asarray(X, dtype=float)
        mask = ~np.isnan(vals)
    S = np.asarray(scores, dtype=float)
    if S.shape != vals.shape:
        raise ValidationError(f"score shape {S.shape} does not match data shape {vals.shape}")
    return vals, mask, S


def isotonic_calibrate(X, scores) -> IsotonicFit:
    """Best monotone calibration of ``scores`` toward the observed entries of ``X``.

    Masked entries are excluded from the fit and receive NaN in ``fitted``.
    """
    scores = getattr(scores, "scores", scores)
    vals, mask, S = _observed(X, scores)
    if not mask.any():
        raise ValidationError("all entries are masked")
    x = vals[mask]
    fit, knots, levels = pava(x, S[mask])
    fitted = np.full(vals.shape, np.nan)
    fitted[mask] = fit
    rss = float(np.sum((x - fit) ** 2))
    tss = float(np.sum((x - x.mean()) ** 2))
    return IsotonicFit(fitted, knots, levels, rss, tss)


def isotonic_r2(X, scores) -> Optional[float]:
    """1 - RSS(best monotone calibration) / TSS; None when ``X`` is constant."""
    fit = isotonic_calibrate(X, scores)
    if fit.tss == 0:
        return None
    return 1.0 - fit.rss / fit.tss
