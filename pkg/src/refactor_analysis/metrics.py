"""Reconstruction metrics comparing a binary matrix with a real-valued reconstruction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import rankdata

from .core import ResponseMatrix, ValidationError, as_response_matrix
from .isotonic import IsotonicFit, isotonic_calibrate

METRIC_KEYS = (
    "isotonic_r2",
    "auc",
    "kendall_tau_b",
    "cosine",
    "geometric_mean_likelihood",
    "cross_entropy",
    "dcor2",
    "partial_dcor",
)

PROB_CLAMP = 1e-6


class MetricUndefined(ValueError):
    """A metric has no value for these inputs (reason in the message)."""


@dataclass
class MetricPanel:
    """Named metric values plus reasons for the ones that are missing."""

    values: dict = field(default_factory=dict)
    missing: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v

    def __len__(self):
        return len(self.values)

    def to_dict(self) -> dict:
        return {
            "provenance": dict(sorted(self.provenance.items())),
            "values": dict(self.values),
            "missing": dict(sorted(self.missing.items())),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricPanel":
        return cls(dict(d["values"]), dict(d.get("missing", {})), dict(d.get("provenance", {})))


@dataclass(frozen=True)
class IndependenceBaseline:
    E: np.ndarray
    row_probs: np.ndarray
    col_probs: np.ndarray


def independence_baseline(X) -> IndependenceBaseline:
    """Outer product of row and column response rates."""
    X = as_response_matrix(X)
    pr = X.row_means()
    pc = X.col_means()
    return IndependenceBaseline(np.outer(pr, pc), pr, pc)


def _flat_observed(X, scores):
    if isinstance(X, ResponseMatrix):
        x = X.values[X.mask].astype(float)
        s = np.asarray(scores, dtype=float)[X.mask]
    else:
        xa = np.asarray(X, dtype=float)
        keep = ~np.isnan(xa)
        x = xa[keep]
        s = np.asarray(scores, dtype=float)[keep]
    return x, s


def auc(X, scores) -> float:
    """Probability that a random 1-cell outscores a random 0-cell (ties count 1/2)."""
    x, s = _flat_observed(X, scores)
    pos = x == 1
    n1 = int(pos.sum())
    n0 = x.size - n1
    if n1 == 0 or n0 == 0:
        raise MetricUndefined("only one class present")
    ranks = rankdata(s)
    return float((ranks[pos].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def _count_inversions(y: np.ndarray) -> int:
    """Pairs i < j with y[i] > y[j], by bottom-up merge sort done one level at a time."""
    y = np.asarray(y, dtype=np.int64)
    n = y.size
    if n < 2:
        return 0
    K = int(y.max()) + 1
    arr = y.copy()
    pos = np.arange(n)
    total = 0
    width = 1
    while width < n:
        block = pos // (2 * width)
        right = (pos % (2 * width)) >= width
        keys = block * K + arr
        left_keys = keys[~right]
        rk = keys[right]
        rb = block[right]
        left_upto_block = np.searchsorted(left_keys, (rb + 1) * K, side="left")
        left_le_value = np.searchsorted(left_keys, rk, side="right")
        total += int(np.sum(left_upto_block - left_le_value))
        arr = np.sort(keys) - block * K
        width *= 2
    return total


def _tie_pairs(*cols) -> int:
    if len(cols) == 1:
        _, counts = np.unique(cols[0], return_counts=True)
    else:
        _, counts = np.unique(np.stack(cols, axis=1), axis=0, return_counts=True)
    counts = counts.astype(np.int64)
    return int(np.sum(counts * (counts - 1) // 2))


def kendall_tau_b(x, y) -> float:
    """Kendall's tau-b with tie corrections in O(n log n)."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValidationError("x and y must have equal length")
    n = x.size
    if n < 2:
        raise MetricUndefined("need at least 2 observations")
    n0 = n * (n - 1) // 2
    n1 = _tie_pairs(x)
    n2 = _tie_pairs(y)
    if n1 == n0 or n2 == n0:
        raise MetricUndefined("zero variance")
    n3 = _tie_pairs(x, y)
    order = np.lexsort((y, x))
    y_rank = rankdata(y, method="dense").astype(np.int64) - 1
    discordant = _count_inversions(y_rank[order])
    num = (n0 - n1 - n2 + n3) - 2 * discordant
    return float(num / np.sqrt(float(n0 - n1) * float(n0 - n2)))


def matrix_cosine(X, Y) -> float:
    """Frobenius cosine between two equally shaped matrices."""
    A = X.as_float() if isinstance(X, ResponseMatrix) else np.asarray(X, dtype=float)
    B = np.asarray(Y, dtype=float)
    if A.shape != B.shape:
        raise ValidationError("matrices must have the same shape")
    keep = ~(np.isnan(A) | np.isnan(B))
    a, b = A[keep], B[keep]
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise MetricUndefined("zero matrix")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def _log_likelihood_cells(X, probs):
    x, p = _flat_observed(X, probs)
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return np.where(x == 1, np.log(p), np.log1p(-p))


def _probs(calibrated):
    return calibrated.fitted if isinstance(calibrated, IsotonicFit) else np.asarray(calibrated, dtype=float)


def geometric_mean_likelihood(X, calibrated) -> float:
    """exp of the mean per-cell log-likelihood under clamped probabilities."""
    return float(np.exp(_log_likelihood_cells(X, _probs(calibrated)).mean()))


def cross_entropy(X, calibrated) -> float:
    """Mean binary cross-entropy under clamped probabilities."""
    return float(-_log_likelihood_cells(X, _probs(calibrated)).mean())


# -- distance correlation


def _u_centered(D: np.ndarray) -> np.ndarray:
    n = D.shape[0]
    row = D.sum(axis=1)
    col = D.sum(axis=0)
    U = D - row[:, None] / (n - 2) - col[None, :] / (n - 2) + D.sum() / ((n - 1) * (n - 2))
    np.fill_diagonal(U, 0.0)
    return U


def _u_product(U: np.ndarray, V: np.ndarray) -> float:
    n = U.shape[0]
    return float(np.sum(U * V) / (n * (n - 3)))


def _dist(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    return cdist(M, M)


def _bc_dcor2_one(A: np.ndarray, B: np.ndarray) -> float:
    U, V = _u_centered(_dist(A)), _u_centered(_dist(B))
    uu, vv = _u_product(U, U), _u_product(V, V)
    if uu <= 0 or vv <= 0:
        return 0.0
    return _u_product(U, V) / np.sqrt(uu * vv)


def _project_out(U, W, ww):
    if ww <= 0:
        return U
    return U - (_u_product(U, W) / ww) * W


def _pdcor_one(A, B, C) -> float:
    U, V, W = (_u_centered(_dist(M)) for M in (A, B, C))
    ww = _u_product(W, W)
    PU = _project_out(U, W, ww)
    PV = _project_out(V, W, ww)
    pu, pv = _u_product(PU, PU), _u_product(PV, PV)
    scale = max(_u_product(U, U), _u_product(V, V), 1e-300)
    if pu <= 1e-12 * scale or pv <= 1e-12 * scale:
        return 0.0
    return _u_product(PU, PV) / np.sqrt(pu * pv)


def _complete(X) -> np.ndarray:
    """Dense float copy with masked cells filled by their column mean."""
    if isinstance(X, ResponseMatrix):
        M = X.values.astype(float)
        if not X.mask.all():
            means = X.col_means()
            M = np.where(X.mask, M, means[None, :])
        return M
    M = np.asarray(X, dtype=float)
    if np.isnan(M).any():
        means = np.nanmean(M, axis=0)
        M = np.where(np.isnan(M), means[None, :], M)
    return M


def _oriented(fn, mats):
    """Average ``fn`` over rows-as-observations and columns-as-observations."""
    vals = []
    skipped = []
    for name, ms in (("rows", mats), ("columns", [m.T for m in mats])):
        if ms[0].shape[0] < 4:
            skipped.append(name)
            continue
        vals.append(fn(*ms))
    if not vals:
        raise MetricUndefined("fewer than 4 observations in both orientations")
    return float(np.mean(vals)), tuple(skipped)


def dcor2_bias_corrected(X, Y, return_skipped: bool = False):
    """Bias-corrected squared distance correlation, averaged over both orientations."""
    A, B = _complete(X), _complete(Y)
    if A.shape != B.shape:
        raise ValidationError("matrices must have the same shape")
    val, skipped = _oriented(_bc_dcor2_one, [A, B])
    return (val, skipped) if return_skipped else val


def partial_dcor(X, Y, E, return_skipped: bool = False):
    """Partial bias-corrected distance correlation of X and Y given E, both orientations averaged."""
    E = E.E if isinstance(E, IndependenceBaseline) else E
    A, B, C = _complete(X), _complete(Y), _complete(E)
    if not (A.shape == B.shape == C.shape):
        raise ValidationError("matrices must have the same shape")
    val, skipped = _oriented(_pdcor_one, [A, B, C])
    return (val, skipped) if return_skipped else val


def full_panel(X, scores, traditional=None, metrics: Optional[Iterable[str]] = None,
               provenance: Optional[dict] = None) -> MetricPanel:
    """Evaluate the requested metrics of ``scores`` against ``X``.

    Probability-based and distance metrics use the isotonic calibration of
    the scores.  ``traditional`` (a TraditionalPanel) is merged in when given.
    """
    X = as_response_matrix(X)
    scores = getattr(scores, "scores", scores)
    wanted = METRIC_KEYS if metrics is None else tuple(metrics)
    unknown = [m for m in wanted if m not in METRIC_KEYS]
    if unknown:
        raise ValidationError(f"unknown metrics: {unknown}")

    panel = MetricPanel(provenance=dict(provenance or {}))
    fit = isotonic_calibrate(X, scores)
    calibrated = np.where(X.mask, fit.fitted, 0.0)

    def run(name, fn):
        if name not in wanted:
            return
        try:
            panel.values[name] = float(fn())
        except MetricUndefined as exc:
            panel.values[name] = None
            panel.missing[name] = str(exc)

    def iso_r2():
        if fit.tss == 0:
            raise MetricUndefined("constant data")
        return 1.0 - fit.rss / fit.tss

    def dcor():
        val, skipped = dcor2_bias_corrected(X, calibrated, return_skipped=True)
        if skipped:
            panel.missing["dcor2_orientation"] = "omitted: " + ",".join(skipped)
        return val

    def pdcor():
        val, skipped = partial_dcor(X, calibrated, independence_baseline(X), return_skipped=True)
        if skipped:
            panel.missing["partial_dcor_orientation"] = "omitted: " + ",".join(skipped)
        return val

    def tau():
        x, s = _flat_observed(X, scores)
        return kendall_tau_b(x, s)

    run("isotonic_r2", iso_r2)
    run("auc", lambda: auc(X, scores))
    run("kendall_tau_b", tau)
    run("cosine", lambda: matrix_cosine(X, scores))
    run("geometric_mean_likelihood", lambda: geometric_mean_likelihood(X, fit))
    run("cross_entropy", lambda: cross_entropy(X, fit))
    run("dcor2", dcor)
    run("partial_dcor", pdcor)

    if traditional is not None:
        for k, v in traditional.as_dict().items():
            panel.values[k] = v
            if v is None:
                panel.missing[k] = traditional.missing.get(k, "undefined")
    return panel
