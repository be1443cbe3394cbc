"""Pairwise association images of binary matrices.

Every binary association here is a function of the 2x2 table of a pair of
variables over their jointly observed entries, so images are built from four
count matrices obtained with masked matrix products.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import ndtr, ndtri

from .core import ResponseMatrix, ValidationError, as_response_matrix


class AssociationKind(str, enum.Enum):
    PHI = "phi"
    TETRACHORIC = "tetrachoric"
    QUADRANT = "quadrant"
    YULE_Q = "yule_q"
    LOEVINGER_H = "loevinger_h"
    AGREEMENT = "agreement"

    def __str__(self):
        return self.value


# kinds whose off-diagonal values live in [-1, 1]
BOUNDED_KINDS = frozenset(
    {AssociationKind.PHI, AssociationKind.TETRACHORIC, AssociationKind.QUADRANT,
     AssociationKind.YULE_Q, AssociationKind.AGREEMENT}
)


class DegenerateAssociation(ValueError):
    """The association is undefined for this table (constant variable, zero denominator)."""


@dataclass(frozen=True)
class ContingencyTable:
    n11: float
    n10: float
    n01: float
    n00: float

    def __post_init__(self):
        cells = (self.n11, self.n10, self.n01, self.n00)
        if min(cells) < 0:
            raise ValidationError("contingency counts must be nonnegative")
        if sum(cells) <= 0:
            raise ValidationError("contingency table is empty")

    @property
    def total(self) -> float:
        return self.n11 + self.n10 + self.n01 + self.n00

    def as_arrays(self):
        return tuple(np.array([c], dtype=float) for c in (self.n11, self.n10, self.n01, self.n00))


def contingency(x, y, x_mask=None, y_mask=None) -> ContingencyTable:
    """Count the 2x2 table of two binary vectors over jointly observed positions."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("x and y must be 1-D vectors of equal length")
    both = np.ones(x.shape, dtype=bool)
    if x_mask is not None:
        both &= np.asarray(x_mask, dtype=bool)
    if y_mask is not None:
        both &= np.asarray(y_mask, dtype=bool)
    if not both.any():
        raise DegenerateAssociation("no jointly observed entries")
    xs = x[both].astype(int)
    ys = y[both].astype(int)
    return ContingencyTable(
        float(np.sum((xs == 1) & (ys == 1))),
        float(np.sum((xs == 1) & (ys == 0))),
        float(np.sum((xs == 0) & (ys == 1))),
        float(np.sum((xs == 0) & (ys == 0))),
    )


# -- vectorised kernels: each returns (values, degenerate) over arrays of counts


def _margins(n11, n10, n01, n00):
    r1 = n11 + n10
    r0 = n01 + n00
    c1 = n11 + n01
    c0 = n10 + n00
    return r1, r0, c1, c0


def _constant_margin(n11, n10, n01, n00):
    r1, r0, c1, c0 = _margins(n11, n10, n01, n00)
    return (r1 <= 0) | (r0 <= 0) | (c1 <= 0) | (c0 <= 0)


def _phi(n11, n10, n01, n00):
    r1, r0, c1, c0 = _margins(n11, n10, n01, n00)
    denom = r1 * r0 * c1 * c0
    bad = denom <= 0
    with np.errstate(invalid="ignore", divide="ignore"):
        val = (n11 * n00 - n10 * n01) / np.sqrt(np.where(bad, 1.0, denom))
    return np.where(bad, 0.0, np.clip(val, -1.0, 1.0)), bad


def _quadrant(n11, n10, n01, n00):
    total = n11 + n10 + n01 + n00
    bad = total <= 0
    val = ((n11 + n00) - (n10 + n01)) / np.where(bad, 1.0, total)
    return np.where(bad, 0.0, val), bad


def _agreement(n11, n10, n01, n00):
    total = n11 + n10 + n01 + n00
    bad = total <= 0
    val = (n11 + n00) / np.where(bad, 1.0, total)
    return np.where(bad, 0.0, val), bad


def _yule_q(n11, n10, n01, n00):
    num = n11 * n00 - n10 * n01
    den = n11 * n00 + n10 * n01
    bad = den <= 0
    return np.where(bad, 0.0, num / np.where(bad, 1.0, den)), bad


def _loevinger_h(n11, n10, n01, n00):
    total = n11 + n10 + n01 + n00
    r1, r0, c1, c0 = _margins(n11, n10, n01, n00)
    safe_total = np.where(total > 0, total, 1.0)
    p_x = r1 / safe_total
    p_y = c1 / safe_total
    # Guttman error: failing the easier item while passing the harder one
    x_easier = p_x >= p_y
    observed = np.where(x_easier, n01, n10)
    expected = np.where(x_easier, total * (1 - p_x) * p_y, total * (1 - p_y) * p_x)
    bad = (expected <= 0) | (total <= 0)
    return np.where(bad, 0.0, 1.0 - observed / np.where(bad, 1.0, expected)), bad


# -- bivariate normal orthant probability


def _graded_nodes(panels=4, order=20, grade=2.0):
    x, w = leggauss(order)
    edges = 1.0 - (1.0 - np.linspace(0.0, 1.0, panels + 1)) ** grade
    t = np.concatenate([lo + (hi - lo) * (x + 1) / 2 for lo, hi in zip(edges[:-1], edges[1:])])
    wt = np.concatenate([w * (hi - lo) / 2 for lo, hi in zip(edges[:-1], edges[1:])])
    return t, wt


_BVN_T, _BVN_W = _graded_nodes()


def bvn_cdf(a, b, rho):
    """P(Z1 <= a, Z2 <= b) for a standard bivariate normal with correlation ``rho``.

    Uses Plackett's identity with the substitution r = sin(theta),
    integrated by composite Gauss-Legendre (4 panels of 20 nodes, graded
    toward |rho| = 1).  Absolute error is below 1e-12 for |rho| <= 0.999.
    """
    a, b, rho = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float), np.asarray(rho, float))
    if np.any(np.abs(rho) >= 1):
        raise ValueError("bvn_cdf requires |rho| < 1")
    top = np.arcsin(rho)
    theta = top[..., None] * _BVN_T
    s = np.sin(theta)
    c2 = np.cos(theta) ** 2
    aa = a[..., None]
    bb = b[..., None]
    f = np.exp(-(aa * aa + bb * bb - 2.0 * aa * bb * s) / (2.0 * c2))
    return ndtr(a) * ndtr(b) + top * (f @ _BVN_W) / (2.0 * np.pi)


def bvn_pdf(a, b, rho):
    one_m = 1.0 - rho * rho
    return np.exp(-(a * a - 2 * rho * a * b + b * b) / (2 * one_m)) / (2 * np.pi * np.sqrt(one_m))


RHO_BOUND = 0.999


def _corrected(n11, n10, n01, n00):
    return tuple(np.where(c == 0, 0.5, c).astype(float) for c in (n11, n10, n01, n00))


def tetrachoric_loglik_grad(rho, n11, n10, n01, n00):
    """Derivative of the 2x2 table log-likelihood in rho, thresholds fixed at the margins.

    Counts are used as given (apply any continuity correction beforehand).
    """
    n11, n10, n01, n00 = (np.asarray(c, float) for c in (n11, n10, n01, n00))
    total = n11 + n10 + n01 + n00
    p1 = (n11 + n10) / total
    p2 = (n11 + n01) / total
    a = ndtri(p1)
    b = ndtri(p2)
    P11 = bvn_cdf(a, b, rho)
    P10 = p1 - P11
    P01 = p2 - P11
    P00 = 1.0 - p1 - p2 + P11
    return bvn_pdf(a, b, np.asarray(rho, float)) * (n11 / P11 - n10 / P10 - n01 / P01 + n00 / P00)


def _tetrachoric_solve(n11, n10, n01, n00, xtol=1e-13, max_iter=100):
    total = n11 + n10 + n01 + n00
    p1 = (n11 + n10) / total
    p2 = (n11 + n01) / total
    target = n11 / total
    a = ndtri(p1)
    b = ndtri(p2)

    lo = np.full(a.shape, -RHO_BOUND)
    hi = np.full(a.shape, RHO_BOUND)
    g_lo = bvn_cdf(a, b, lo) - target
    g_hi = bvn_cdf(a, b, hi) - target
    rho = np.empty(a.shape)
    rho[g_lo >= 0] = -RHO_BOUND
    rho[g_hi <= 0] = RHO_BOUND
    active = (g_lo < 0) & (g_hi > 0)
    if not active.any():
        return rho

    # Edwards' odds-ratio approximation as the starting point
    odds = (n11 * n00) / (n10 * n01)
    start = np.cos(np.pi / (1.0 + np.sqrt(odds)))
    idx = np.flatnonzero(active)
    a_, b_, t_ = a[idx], b[idx], target[idx]
    lo_, hi_ = lo[idx], hi[idx]
    r = np.clip(start[idx], -RHO_BOUND + 1e-9, RHO_BOUND - 1e-9)
    for _ in range(max_iter):
        g = bvn_cdf(a_, b_, r) - t_
        lo_ = np.where(g < 0, r, lo_)
        hi_ = np.where(g > 0, r, hi_)
        step = g / bvn_pdf(a_, b_, r)
        nxt = r - step
        outside = ~((nxt > lo_) & (nxt < hi_)) | ~np.isfinite(nxt)
        nxt = np.where(outside, 0.5 * (lo_ + hi_), nxt)
        done = (np.abs(nxt - r) < xtol) | (g == 0) | ((hi_ - lo_) < xtol)
        r = nxt
        if done.all():
            break
    rho[idx] = r
    return rho


def _tetrachoric(n11, n10, n01, n00):
    bad = _constant_margin(n11, n10, n01, n00)
    out = np.zeros(np.shape(n11), dtype=float)
    ok = ~bad
    if ok.any():
        cells = np.stack([n11[ok], n10[ok], n01[ok], n00[ok]], axis=1).astype(float)
        uniq, inverse = np.unique(cells, axis=0, return_inverse=True)
        c = _corrected(*uniq.T)
        out[ok] = _tetrachoric_solve(*c)[inverse.ravel()]
    return out, bad


# kinds whose value needs no variance in either variable
MARGIN_FREE_KINDS = frozenset({AssociationKind.QUADRANT, AssociationKind.AGREEMENT})

_KERNELS = {
    AssociationKind.PHI: _phi,
    AssociationKind.TETRACHORIC: _tetrachoric,
    AssociationKind.QUADRANT: _quadrant,
    AssociationKind.YULE_Q: _yule_q,
    AssociationKind.LOEVINGER_H: _loevinger_h,
    AssociationKind.AGREEMENT: _agreement,
}


def _scalar(kind, t: ContingencyTable) -> float:
    val, bad = _KERNELS[kind](*t.as_arrays())
    if bad[0]:
        raise DegenerateAssociation(f"{kind.value} undefined for table {t}")
    return float(val[0])


def quadrant_q(t: ContingencyTable) -> float:
    """Probability of agreement minus probability of disagreement."""
    return _scalar(AssociationKind.QUADRANT, t)


def agreement(t: ContingencyTable) -> float:
    return _scalar(AssociationKind.AGREEMENT, t)


def phi(t: ContingencyTable) -> float:
    return _scalar(AssociationKind.PHI, t)


def yule_q(t: ContingencyTable) -> float:
    return _scalar(AssociationKind.YULE_Q, t)


def loevinger_h(t: ContingencyTable) -> float:
    return _scalar(AssociationKind.LOEVINGER_H, t)


def tetrachoric(t: ContingencyTable, tol: float = 1e-6) -> float:
    """Maximum-likelihood tetrachoric correlation of a 2x2 table.

    Thresholds are fixed at the inverse-normal of the (continuity-corrected)
    margins, and rho is searched on [-0.999, 0.999].  Zero cells get +0.5.

    Raises
    ------
    DegenerateAssociation
        If either variable is constant.
    """
    cells = t.as_arrays()
    if _constant_margin(*cells)[0]:
        raise DegenerateAssociation(f"tetrachoric undefined for table {t}")
    c = _corrected(*cells)
    rho = float(_tetrachoric_solve(*c)[0])
    if abs(rho) < RHO_BOUND:
        grad = float(tetrachoric_loglik_grad(rho, *c)[0])
        if abs(grad) >= tol:
            raise ArithmeticError(f"tetrachoric search did not converge (gradient {grad:.3g})")
    return rho


def association(t: ContingencyTable, kind) -> float:
    """Dispatch on ``kind`` for a single table."""
    kind = AssociationKind(kind)
    if kind is AssociationKind.TETRACHORIC:
        return tetrachoric(t)
    return _scalar(kind, t)


@dataclass(frozen=True)
class AssociationImage:
    kind: AssociationKind
    axis: str
    values: np.ndarray
    degenerate_flags: np.ndarray
    n_degenerate_pairs: int
    warning: Optional[str] = None
    constant_flags: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return self.values.shape[0]

    @property
    def degenerate_fraction(self) -> float:
        return float(self.degenerate_flags.mean())


def pair_counts(X: ResponseMatrix):
    """Column-pair count matrices (n11, n10, n01, n00) over jointly observed rows."""
    obs = X.mask.astype(float)
    ones = X.values.astype(float) * obs
    zeros = (1.0 - X.values) * obs
    return ones.T @ ones, ones.T @ zeros, zeros.T @ ones, zeros.T @ zeros


def image(X, kind="phi", axis: str = "columns") -> AssociationImage:
    """Symmetric association image among the columns (or rows) of ``X``.

    Pairs use pairwise-complete observations. For correlation-type kinds,
    constant variables are flagged and their off-diagonal entries set to 0;
    quadrant and agreement keep them, since their values remain defined.
    The diagonal is 1.
    """
    X = as_response_matrix(X)
    kind = AssociationKind(kind)
    if axis in ("rows", "row"):
        X = X.T
        axis = "rows"
    elif axis in ("columns", "cols", "column"):
        axis = "columns"
    else:
        raise ValueError(f"axis must be 'rows' or 'columns', got {axis!r}")

    counts = pair_counts(X)
    m = counts[0].shape[0]
    iu = np.triu_indices(m, k=1)
    cells = [c[iu] for c in counts]
    vals, bad = _KERNELS[kind](*cells)
    margin_free = kind in MARGIN_FREE_KINDS
    if not margin_free:
        bad = bad | _constant_margin(*cells)

    obs_vals = np.where(X.mask, X.values, 0)
    n_obs = X.mask.sum(axis=0)
    n_ones = obs_vals.sum(axis=0)
    constant = (n_ones == 0) | (n_ones == n_obs)
    # agreement-type kinds stay defined for a constant variable, so only
    # correlation-type kinds zero it out
    flags = np.zeros_like(constant) if margin_free else constant

    out = np.eye(m)
    upper = np.where(bad, 0.0, vals)
    out[iu] = upper
    out[(iu[1], iu[0])] = upper
    out[flags, :] = 0.0
    out[:, flags] = 0.0
    np.fill_diagonal(out, 1.0)
    out.setflags(write=False)

    n_bad = int(bad.sum())
    warning = None
    if len(bad) and n_bad / len(bad) > 0.5:
        warning = f"{n_bad} of {len(bad)} pairs degenerate"
    return AssociationImage(kind, axis, out, flags, n_bad, warning, constant)
