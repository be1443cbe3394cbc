"""Rank-1 loadings from association images, minres factoring and image-based indices."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .assoc import AssociationImage, AssociationKind, image
from .core import ResponseMatrix, ValidationError, as_response_matrix


class Estimator(str, enum.Enum):
    LEADING_EIGENVECTOR = "leading_eigenvector"
    MINRES1 = "minres1"

    def __str__(self):
        return self.value


def _as_square(A) -> np.ndarray:
    M = np.asarray(A.values if isinstance(A, AssociationImage) else A, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {M.shape}")
    if not np.isfinite(M).all():
        raise ValidationError("association image has non-finite entries")
    return M


def _sign_by_largest(w: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(w)))
    return -w if w[k] < 0 else w


def leading_loadings(A, rtol: float = 1e-12):
    """Unit eigenvector of the algebraically largest eigenvalue.

    When that eigenvalue is repeated, the vector is the projection of the
    lowest-index basis vector onto the eigenspace. The sign makes the
    largest-magnitude entry positive.

    Returns
    -------
    w : ndarray
    eigenvalue : float
    """
    M = _as_square(A)
    M = 0.5 * (M + M.T)
    evals, evecs = np.linalg.eigh(M)
    top = evals[-1]
    scale = max(1.0, float(np.abs(evals).max()))
    tied = np.abs(evals - top) <= rtol * scale
    if tied.sum() > 1:
        basis = evecs[:, tied]
        proj = basis @ basis.T
        norms = np.linalg.norm(proj, axis=0)
        k = int(np.flatnonzero(norms > 1e-8)[0])
        w = proj[:, k] / norms[k]
    else:
        w = evecs[:, -1]
    return _sign_by_largest(w), float(top)


def _align(w: np.ndarray, reference: np.ndarray):
    """Flip ``w`` if it correlates negatively with ``reference``; zero or undefined keeps it."""
    if np.std(w) == 0 or np.std(reference) == 0:
        return w, False
    r = np.corrcoef(w, reference)[0, 1]
    if np.isfinite(r) and r < 0:
        return -w, True
    return w, False


def _align_dot(w: np.ndarray, reference: np.ndarray):
    """Flip ``w`` if its inner product with ``reference`` is negative."""
    d = float(np.dot(w, reference))
    if np.isfinite(d) and d < 0:
        return -w, True
    return w, False


def column_centered(X) -> np.ndarray:
    """Observed entries minus their column mean; masked cells are 0."""
    if isinstance(X, ResponseMatrix):
        vals = X.values.astype(float)
        mask = X.mask
    else:
        vals = np.asarray(X, dtype=float)
        mask = ~np.isnan(vals)
        vals = np.where(mask, vals, 0.0)
    counts = mask.sum(axis=0)
    means = np.divide(vals.sum(axis=0), counts, out=np.zeros(vals.shape[1]), where=counts > 0)
    return np.where(mask, vals - means, 0.0)


@dataclass(frozen=True)
class RankOneModel:
    u_hat: np.ndarray
    v_hat: np.ndarray
    estimator: Estimator
    kind: AssociationKind
    sign_record: tuple = (False, False)
    row_eigenvalue: float = float("nan")
    col_eigenvalue: float = float("nan")
    warnings: tuple = ()


def _unit_loadings(A: AssociationImage, estimator: Estimator):
    if estimator is Estimator.LEADING_EIGENVECTOR:
        return leading_loadings(A)
    sol = minres(A, 1)
    lam = sol.loadings[:, 0]
    norm = np.linalg.norm(lam)
    if norm == 0:
        return leading_loadings(A)
    return _sign_by_largest(lam / norm), float(norm**2)


def fit_rank_one(X, kind="quadrant", estimator="leading_eigenvector") -> RankOneModel:
    """Row loadings from the row image and column loadings from the column image.

    Both vectors are unit norm. ``u_hat`` correlates nonnegatively with the
    row means of ``X``; ``v_hat`` is then oriented so that the reconstruction
    co-varies nonnegatively with ``X`` (``v . Xc' u >= 0`` with ``Xc``
    column-centered). Column means alone cannot fix the joint orientation
    when item means are all close to one half.
    """
    X = as_response_matrix(X)
    kind = AssociationKind(kind)
    estimator = Estimator(estimator)
    A_r = image(X, kind, "rows")
    A_c = image(X, kind, "columns")
    u, lam_r = _unit_loadings(A_r, estimator)
    v, lam_c = _unit_loadings(A_c, estimator)
    u, fu = _align(u, X.row_means())
    v, fv = _align_dot(v, column_centered(X).T @ u)
    warnings = tuple(f"{ax}: {im.warning}" for ax, im in (("rows", A_r), ("columns", A_c)) if im.warning)
    return RankOneModel(u, v, estimator, kind, (fu, fv), lam_r, lam_c, warnings)


@dataclass(frozen=True)
class FactorSolution:
    loadings: np.ndarray
    uniquenesses: np.ndarray
    fit_value: float
    m: int
    converged: bool = True
    n_iter: int = 0


def _offdiag_sse(A, L):
    R = A - L @ L.T
    np.fill_diagonal(R, 0.0)
    return 0.5 * float(np.sum(R * R)), R


def _initial_loadings(A, m):
    p = A.shape[0]
    try:
        with np.errstate(divide="ignore", invalid="ignore"):
            smc = 1.0 - 1.0 / np.diag(np.linalg.inv(A))
        if not np.all(np.isfinite(smc)) or np.any(smc < 0) or np.any(smc > 1):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        off = np.abs(A - np.diag(np.diag(A)))
        smc = off.max(axis=1) if p > 1 else np.zeros(p)
    R = A.copy()
    np.fill_diagonal(R, smc)
    evals, evecs = np.linalg.eigh(R)
    order = np.argsort(evals)[::-1][:m]
    return evecs[:, order] * np.sqrt(np.clip(evals[order], 0.0, None))


def _minres_from(A, L0, max_iter, tol):
    p, m = L0.shape

    def fun(flat):
        L = flat.reshape(p, m)
        f, R = _offdiag_sse(A, L)
        return f, (-2.0 * R @ L).ravel()

    res = minimize(fun, L0.ravel(), jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter, "ftol": tol * 1e-3, "gtol": tol})
    L = res.x.reshape(p, m)
    return L, bool(res.success), int(res.nit)


def minres(A, m: int = 1, max_iter: int = 1000, tol: float = 1e-10) -> FactorSolution:
    """Minimum-residual factoring: minimise the off-diagonal squared residuals.

    Solutions for m > 1 are started both from the eigen-decomposition of the
    SMC-reduced matrix and from the (m-1)-factor solution padded with a small
    column, so the fit value never increases with m.  Uniquenesses
    ``1 - diag(LL')`` are clamped to [0.001, 1].
    """
    M = _as_square(A)
    p = M.shape[0]
    if not (1 <= m < p):
        raise ValidationError(f"need 1 <= m < p, got m={m}, p={p}")
    best = None
    for k in range(1, m + 1):
        starts = [_initial_loadings(M, k)]
        if best is not None:
            pad = np.full((p, 1), 1e-3)
            pad[::2] *= -1
            starts.append(np.hstack([best[0], pad]))
        cands = []
        for L0 in starts:
            L, ok, nit = _minres_from(M, L0, max_iter, tol)
            cands.append((_offdiag_sse(M, L)[0], L, ok, nit))
        f, L, ok, nit = min(cands, key=lambda c: c[0])
        if best is not None and f > best[1]:
            # padded start with a zero column reproduces the smaller model exactly
            L = np.hstack([best[0], np.zeros((p, 1))])
            f, ok = best[1], True
        best = (L, f, ok, nit)
    L, f, ok, nit = best
    L = L * np.where(L.sum(axis=0) < 0, -1.0, 1.0)
    psi = np.clip(1.0 - np.sum(L * L, axis=1), 0.001, 1.0)
    return FactorSolution(L, psi, f, m, ok, nit)


def ecv(sol: FactorSolution) -> float:
    """Explained common variance: leading eigenvalue share of LL'."""
    sv = np.linalg.svd(np.asarray(sol.loadings, dtype=float), compute_uv=False)
    lam = sv**2
    total = lam.sum()
    if total <= 0:
        raise ValidationError("all-zero loadings have no common variance")
    return float(lam[0] / total)


def cronbach_alpha(X) -> Optional[float]:
    """Cronbach's alpha on raw 0/1 scores over fully observed rows."""
    X = as_response_matrix(X)
    rows = X.mask.all(axis=1)
    if rows.sum() < 2:
        return None
    V = X.values[rows].astype(float)
    p = V.shape[1]
    total_var = V.sum(axis=1).var(ddof=1)
    if total_var == 0:
        return None
    return float(p / (p - 1) * (1.0 - V.var(axis=0, ddof=1).sum() / total_var))


TRADITIONAL_KEYS = ("alpha", "av_r", "cfi", "tli", "rho_c", "tau_rc", "u_rc", "ecv")


@dataclass
class TraditionalPanel:
    alpha: Optional[float] = None
    av_r: Optional[float] = None
    cfi: Optional[float] = None
    tli: Optional[float] = None
    rho_c: Optional[float] = None
    tau_rc: Optional[float] = None
    u_rc: Optional[float] = None
    ecv: Optional[float] = None
    missing: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in TRADITIONAL_KEYS}


def _ml_discrepancy(A, Sigma):
    s_sig, ld_sig = np.linalg.slogdet(Sigma)
    s_a, ld_a = np.linalg.slogdet(A)
    if s_sig <= 0 or s_a <= 0:
        return None
    return float(ld_sig - ld_a + np.trace(A @ np.linalg.inv(Sigma)) - A.shape[0])


def fit_indices(A, sol: FactorSolution, n_obs: int):
    """CFI and TLI of a one-factor solution against the independence model.

    Returns ``(cfi, tli, reason)``; entries are None when undefined.
    """
    A = _as_square(A)
    p = A.shape[0]
    if p < 3:
        return None, None, "fewer than 3 items"
    Sigma = sol.loadings @ sol.loadings.T
    np.fill_diagonal(Sigma, np.diag(Sigma) + sol.uniquenesses)
    F_m = _ml_discrepancy(A, Sigma)
    F_0 = _ml_discrepancy(A, np.diag(np.diag(A)))
    if F_m is None or F_0 is None:
        return None, None, "image or model covariance not positive definite"
    chi_m = (n_obs - 1) * F_m
    chi_0 = (n_obs - 1) * F_0
    df_0 = p * (p - 1) / 2
    df_m = df_0 - p
    d_m = max(chi_m - df_m, 0.0)
    denom = max(chi_0 - df_0, chi_m - df_m, 0.0)
    cfi = 1.0 if denom == 0 else 1.0 - d_m / denom
    if df_m <= 0 or chi_0 / df_0 == 1.0:
        return cfi, None, "one-factor model has no degrees of freedom"
    tli = (chi_0 / df_0 - chi_m / df_m) / (chi_0 / df_0 - 1.0)
    return float(cfi), float(tli), None


def congeneric_indices(A, sol: Optional[FactorSolution] = None):
    """``(rho_c, tau_rc)`` of an image; None when every off-diagonal entry is 0.

    ``rho_c = (F_o - F_m) / F_o`` compares the one-factor residual with the
    raw off-diagonal energy; ``tau_rc = 1 - sum (a - mean a)^2 / sum a^2``
    measures how equal the correlations are.
    """
    A = _as_square(A)
    p = A.shape[0]
    a = A[~np.eye(p, dtype=bool)]
    f_o = 0.5 * float(np.sum(a * a))
    if f_o <= 0:
        return None, None
    sol = sol if sol is not None else minres(A, 1)
    rho_c = (f_o - sol.fit_value) / f_o
    tau_rc = 1.0 - float(np.sum((a - a.mean()) ** 2)) / (2 * f_o)
    return rho_c, tau_rc


def traditional_panel(X, kind="phi", ecv_factors: int = 3) -> TraditionalPanel:
    """Image-based unidimensionality indices for the item image of ``X``."""
    X = as_response_matrix(X)
    A = image(X, kind, "columns").values
    p = A.shape[0]
    panel = TraditionalPanel()
    panel.alpha = cronbach_alpha(X)
    if panel.alpha is None:
        panel.missing["alpha"] = "no score variance over complete rows"

    off = ~np.eye(p, dtype=bool)
    a = A[off]
    panel.av_r = float(a.mean())

    sol1 = minres(A, 1)
    rho_c, tau_rc = congeneric_indices(A, sol1)
    if rho_c is not None:
        panel.rho_c, panel.tau_rc = rho_c, tau_rc
        panel.u_rc = rho_c * tau_rc
    else:
        for k in ("rho_c", "tau_rc", "u_rc"):
            panel.missing[k] = "all off-diagonal associations are zero"

    cfi, tli, reason = fit_indices(A, sol1, X.n_rows)
    panel.cfi, panel.tli = cfi, tli
    if cfi is None:
        panel.missing["cfi"] = reason
    if tli is None:
        panel.missing["tli"] = reason

    m = min(ecv_factors, p - 1)
    try:
        panel.ecv = ecv(minres(A, m))
    except ValidationError as exc:
        panel.missing["ecv"] = str(exc)
    return panel
