"""Data-generating mechanisms for the two simulation studies and their replication driver.

``sim_threshold`` draws a rank-1 latent signal ``Z = theta lambda'`` and keeps
an entry when it clears both an item threshold and a person threshold.
``sim_hierarchical`` draws items from a higher-order structure in which a
general factor ``g`` explains three group factors, with small minor factors
on top, and dichotomizes the latent scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from .core import ResponseMatrix, RngSpec, ValidationError, parallel_map
from .metrics import METRIC_KEYS

SIM_KINDS = ("phi", "tetrachoric", "quadrant")
SIM_MODES = ("refactor", "verifactor")
ALL_MODES = ("refactor", "verifactor", "verifactor_assembled")


@dataclass(frozen=True)
class SimThresholdConfig:
    n: int = 200
    p: int = 36
    tau_sd: float = 0.5
    eta_sd: float = 1.0
    eta_mean: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 2 or self.p < 2:
            raise ValidationError("n and p must be at least 2")
        if self.tau_sd < 0 or self.eta_sd < 0:
            raise ValidationError("standard deviations must be nonnegative")


@dataclass(frozen=True)
class ThresholdTruth:
    theta: np.ndarray
    lam: np.ndarray
    tau: np.ndarray
    eta: np.ndarray
    constant_columns: tuple = ()


def sim_threshold(cfg: SimThresholdConfig = SimThresholdConfig(), rng=None):
    """``X_kj = 1{Z_kj > tau_j} * 1{Z_kj > eta_k}`` with ``Z = theta lambda'``.

    Returns
    -------
    X : ResponseMatrix
    truth : ThresholdTruth
        Latent person and item parameters; all-0 or all-1 columns are listed
        in ``constant_columns`` rather than rejected.
    """
    gen = rng if isinstance(rng, np.random.Generator) else (rng or RngSpec(cfg.seed)).generator()
    theta = gen.standard_normal(cfg.n)
    lam = gen.standard_normal(cfg.p)
    tau = gen.normal(0.0, cfg.tau_sd, cfg.p)
    eta = gen.normal(cfg.eta_mean, cfg.eta_sd, cfg.n)
    Z = np.outer(theta, lam)
    X = ((Z > tau[None, :]) & (Z > eta[:, None])).astype(np.int8)
    col_sum = X.sum(axis=0)
    constant = tuple(int(j) for j in np.flatnonzero((col_sum == 0) | (col_sum == cfg.n)))
    return ResponseMatrix(X, np.ones_like(X, dtype=bool)), ThresholdTruth(theta, lam, tau, eta, constant)


DEFAULT_GROUP_LOADINGS = (0.8, 0.7, 0.6)
MINOR_LEVELS = (-0.2, 0.0, 0.2)


@dataclass(frozen=True)
class SimHierConfig:
    n: int = 200
    items_per_factor: int = 3
    n_factor_blocks: int = 4
    g_loading: float = 0.5
    group_loadings: tuple = DEFAULT_GROUP_LOADINGS
    n_group_factors: int = 3
    n_minor: int = 4
    minor_levels: tuple = MINOR_LEVELS
    dichotomize_threshold: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "group_loadings", tuple(float(x) for x in self.group_loadings))
        object.__setattr__(self, "minor_levels", tuple(float(x) for x in self.minor_levels))
        if self.n < 2:
            raise ValidationError("n must be at least 2")
        if self.items_per_factor < 1 or self.n_factor_blocks < 1 or self.n_group_factors < 1:
            raise ValidationError("factor structure counts must be positive")
        if not 0.0 <= self.g_loading <= 1.0:
            raise ValidationError(f"g_loading must lie in [0, 1], got {self.g_loading}")
        if any(abs(x) > 1 for x in self.group_loadings + self.minor_levels):
            raise ValidationError("loadings must lie in [-1, 1]")
        if self.n_minor < 0:
            raise ValidationError("n_minor must be nonnegative")

    @property
    def p(self) -> int:
        return self.items_per_factor * self.n_group_factors * self.n_factor_blocks


@dataclass(frozen=True)
class SLDecomposition:
    """Schmid-Leiman style loadings of the generating model.

    ``r_tilde_sq`` is the largest per-factor sum of squared loadings divided
    by the number of items, i.e. the share of total item variance carried by
    the dominant dimension.
    """

    general: np.ndarray
    group: np.ndarray
    minor: np.ndarray
    r_tilde_sq: float

    @property
    def loadings(self) -> np.ndarray:
        return np.column_stack([self.general, self.group, self.minor])

    def correlation(self) -> np.ndarray:
        L = self.loadings
        R = L @ L.T
        np.fill_diagonal(R, 1.0)
        return R


def item_loadings(cfg: SimHierConfig) -> np.ndarray:
    """First-order loading of every item on its group factor.

    Items are dealt to the group factors in turn; within a factor the
    configured loadings are cycled.
    """
    p = cfg.p
    group_of = np.arange(p) % cfg.n_group_factors
    pos = np.arange(p) // cfg.n_group_factors
    ell = np.array(cfg.group_loadings)[pos % len(cfg.group_loadings)]
    return ell, group_of


def dominant_share(general: np.ndarray, group: np.ndarray, minor: Optional[np.ndarray] = None) -> float:
    """Largest column sum of squared loadings over the item count."""
    cols = [np.asarray(general)[:, None], np.asarray(group)]
    if minor is not None and np.size(minor):
        cols.append(np.asarray(minor))
    L = np.column_stack(cols)
    return float((L**2).sum(axis=0).max() / L.shape[0])


def sl_structure(cfg: SimHierConfig, rng=None) -> SLDecomposition:
    """Loadings implied by ``cfg``; minor loadings are drawn from ``rng``."""
    ell, group_of = item_loadings(cfg)
    gamma = cfg.g_loading
    general = gamma * ell
    group = np.zeros((cfg.p, cfg.n_group_factors))
    group[np.arange(cfg.p), group_of] = ell * math.sqrt(max(0.0, 1.0 - gamma**2))
    if cfg.n_minor:
        gen = rng if isinstance(rng, np.random.Generator) else (rng or RngSpec(cfg.seed)).generator()
        minor = gen.choice(np.array(cfg.minor_levels), size=(cfg.p, cfg.n_minor))
    else:
        minor = np.zeros((cfg.p, 0))
    communality = general**2 + (group**2).sum(axis=1) + (minor**2).sum(axis=1)
    bad = np.flatnonzero(communality > 1.0 + 1e-12)
    if bad.size:
        raise ValidationError(
            f"item {int(bad[0])} has communality {communality[bad[0]]:.3f} > 1 "
            f"(g_loading={gamma}, group_loadings={cfg.group_loadings}, minor_levels={cfg.minor_levels})"
        )
    return SLDecomposition(general, group, minor, dominant_share(general, group, minor))


def r_tilde_sq(g_loading: float, group_loadings: Sequence[float] = DEFAULT_GROUP_LOADINGS,
               n_group_factors: int = 3) -> float:
    """Dominant-dimension share without minor factors, in closed form.

    The general factor carries ``g^2 mean(l^2)``; each group factor carries
    ``(1 - g^2) mean(l^2) / n_group_factors`` when loadings are balanced
    across factors.
    """
    m2 = float(np.mean(np.square(group_loadings)))
    return max(g_loading**2 * m2, (1.0 - g_loading**2) * m2 / n_group_factors)


def sim_hierarchical(cfg: SimHierConfig = SimHierConfig(), rng=None):
    """Multivariate normal items from the SL structure, dichotomized at a threshold.

    Returns
    -------
    X : ResponseMatrix
    sl : SLDecomposition
    """
    gen = rng if isinstance(rng, np.random.Generator) else (rng or RngSpec(cfg.seed)).generator()
    sl = sl_structure(cfg, gen)
    R = sl.correlation()
    try:
        chol = np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        w = np.linalg.eigvalsh(R)
        if w[0] < -1e-10:
            raise ValidationError(
                f"implied correlation matrix is not PSD (min eigenvalue {w[0]:.3g}) for {cfg}"
            ) from None
        vals, vecs = np.linalg.eigh(R)
        chol = vecs * np.sqrt(np.clip(vals, 0.0, None))
    Y = gen.standard_normal((cfg.n, cfg.p)) @ chol.T
    X = (Y > cfg.dichotomize_threshold).astype(np.int8)
    return ResponseMatrix(X, np.ones_like(X, dtype=bool)), sl


# -- replication driver


RESULT_COLUMNS = ("study", "rep", "grid", "grid_value", "kind", "mode", "metric", "value", "r_tilde_sq", "error")


def parse_grid(grid) -> tuple:
    """``"0:1:0.1"`` -> (0.0, 0.1, ..., 1.0); a list passes through."""
    if grid is None:
        return (None,)
    if isinstance(grid, str):
        if ":" in grid:
            lo, hi, step = (float(x) for x in grid.split(":"))
            if step <= 0:
                raise ValidationError("grid step must be positive")
            k = int(math.floor((hi - lo) / step + 1e-9))
            return tuple(round(lo + i * step, 12) for i in range(k + 1))
        return tuple(float(x) for x in grid.split(","))
    return tuple(float(x) for x in grid)


def _stream(grid_index: int, rep: int) -> int:
    return grid_index * 1_000_003 + rep


def _one_rep(study, rep, gi, gval, kinds, modes, metrics, seed, sim_kwargs, f_rows, f_cols):
    from .refactor import TRADITIONAL_METRICS, refactor_functional
    from .verifactor import BcvConfig, verifactor_functional
    from .core import random_partition

    base = {"study": study, "rep": rep, "grid": gi, "grid_value": gval}
    rows = []
    data_rng = RngSpec(seed, 2 * _stream(gi, rep)).generator()
    try:
        if study == "sim1":
            X, _ = sim_threshold(SimThresholdConfig(seed=seed, **sim_kwargs), data_rng)
            rts = None
        else:
            kw = dict(sim_kwargs)
            if gval is not None:
                kw["g_loading"] = gval
            X, sl = sim_hierarchical(SimHierConfig(seed=seed, **kw), data_rng)
            rts = sl.r_tilde_sq
        part = random_partition(X.n_rows, X.n_cols, f_rows, f_cols, RngSpec(seed, 2 * _stream(gi, rep) + 1))
    except Exception as exc:  # noqa: BLE001 - recorded, run continues
        return [dict(base, kind=None, mode=None, metric=None, value=None, r_tilde_sq=None, error=repr(exc))]

    recon = [m for m in metrics if m not in TRADITIONAL_METRICS]
    run_modes = [m for m in modes if m != "verifactor_assembled"]
    if "verifactor_assembled" in modes and "verifactor" not in modes:
        run_modes.append("verifactor")
    for kind in kinds:
        for mode in run_modes:
            try:
                if mode == "refactor":
                    panels = [("refactor", refactor_functional(X, kind, metrics))]
                else:
                    res = verifactor_functional(X, BcvConfig(f_rows, f_cols, "loading_outer", kind, seed),
                                                recon, partition=part)
                    panels = [("verifactor", res.panel), ("verifactor_assembled", res.assembled_panel)]
                    panels = [(m, p) for m, p in panels if m in modes]
            except Exception as exc:  # noqa: BLE001
                rows.append(dict(base, kind=kind, mode=mode, metric=None, value=None, r_tilde_sq=rts,
                                 error=repr(exc)))
                continue
            for mname, panel in panels:
                for metric in (metrics if mname == "refactor" else recon):
                    rows.append(dict(base, kind=kind, mode=mname, metric=metric, value=panel.values.get(metric),
                                     r_tilde_sq=rts, error=panel.missing.get(metric)))
    return rows


def replicate(study: str = "sim1", reps: int = 10, grid=None, kinds: Iterable[str] = SIM_KINDS,
              modes: Iterable[str] = SIM_MODES, metrics: Optional[Iterable[str]] = None, seed: int = 0,
              n_jobs: int = 1, f_rows: int = 2, f_cols: int = 2, **sim_kwargs) -> list:
    """Run ``reps`` datasets per grid point and score every kind and mode.

    Each (grid point, rep) draws from its own random stream, so the table
    does not depend on ``n_jobs``. Returns one dict per
    (rep, grid point, kind, mode, metric) sorted by those keys; failures are
    recorded in the ``error`` column and the run continues.

    For ``sim2`` the grid values are general-factor loadings; ``sim1`` has
    no grid.
    """
    if study not in ("sim1", "sim2"):
        raise ValidationError(f"unknown study {study!r}")
    if reps < 1:
        raise ValidationError("reps must be positive")
    grid_vals = (None,) if study == "sim1" else parse_grid(grid if grid is not None else "0:1:0.1")
    kinds = tuple(kinds)
    modes = tuple(modes)
    for m in modes:
        if m not in ALL_MODES:
            raise ValidationError(f"unknown mode {m!r}")
    metrics = tuple(METRIC_KEYS if metrics is None else metrics)
    jobs = [(study, r, gi, gv, kinds, modes, metrics, seed, sim_kwargs, f_rows, f_cols)
            for gi, gv in enumerate(grid_vals) for r in range(reps)]
    chunks = parallel_map(_one_rep, jobs, n_jobs)
    rows = [row for chunk in chunks for row in chunk]
    order = {k: i for i, k in enumerate(kinds)}
    morder = {m: i for i, m in enumerate(ALL_MODES)}
    rows.sort(key=lambda r: (r["grid"], r["rep"], order.get(r["kind"], -1), morder.get(r["mode"], -1),
                             metrics.index(r["metric"]) if r["metric"] in metrics else -1))
    return rows

