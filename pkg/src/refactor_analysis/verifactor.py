"""Bi-cross-validated rank-1 block prediction.

For every (row fold, column fold) pair the held-out block ``A`` is predicted
only from the held-in blocks ``B`` (same rows, other columns), ``C`` (other
rows, same columns) and ``D`` (other rows, other columns).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .assoc import AssociationKind, image
from .core import (
    BlockPartition,
    ResponseMatrix,
    RngSpec,
    ValidationError,
    as_response_matrix,
    block_views,
    random_partition,
)
from .factor import _align, _align_dot, column_centered, leading_loadings
from .metrics import METRIC_KEYS, MetricPanel, full_panel


class Predictor(str, enum.Enum):
    LOADING_OUTER = "loading_outer"
    PSEUDOINVERSE = "pseudoinverse"

    def __str__(self):
        return self.value


PREDICTOR_ALIASES = {"loading": "loading_outer", "pinv": "pseudoinverse"}


class FoldSkipped(Exception):
    """A fold cannot be predicted from its held-in blocks."""


MAX_DEGENERATE_FRACTION = 0.3


@dataclass(frozen=True)
class BcvConfig:
    f_rows: int = 2
    f_cols: int = 2
    predictor: Predictor = Predictor.LOADING_OUTER
    kind: AssociationKind = AssociationKind.QUADRANT
    seed: int = 0

    def __post_init__(self):
        if self.f_rows < 2 or self.f_cols < 2:
            raise ValidationError("fold counts must be at least 2")
        pred = PREDICTOR_ALIASES.get(str(self.predictor), str(self.predictor))
        object.__setattr__(self, "predictor", Predictor(pred))
        object.__setattr__(self, "kind", AssociationKind(self.kind))


def _binary_data(M) -> np.ndarray:
    if isinstance(M, ResponseMatrix):
        vals = M.values.astype(float)
        if not M.mask.all():
            vals = np.where(M.mask, vals, np.nanmean(np.where(M.mask, vals, np.nan)))
        return vals
    return np.asarray(M, dtype=float)


def predict_block_loading(B, C, kind="quadrant", max_degenerate: float = MAX_DEGENERATE_FRACTION,
                          D=None) -> np.ndarray:
    """Outer product of B's row loadings and C's column loadings.

    ``u`` is aligned to the row means of ``B``. The orientation of ``v``
    relative to ``u`` is carried through held-in data only: column scores
    ``w = Bc' u`` over the other columns, row scores ``t = Dc w`` over the
    other rows, then ``v . Cc' t >= 0``. Without ``D`` the column means of
    ``C`` are used instead.

    Raises
    ------
    FoldSkipped
        When ``B`` or ``C`` is constant, or when more than ``max_degenerate``
        of the variables in either held-in image are degenerate.
    """
    B = as_response_matrix(B) if not isinstance(B, ResponseMatrix) else B
    C = as_response_matrix(C) if not isinstance(C, ResponseMatrix) else C
    for name, M in (("B", B), ("C", C)):
        obs = M.values[M.mask]
        if obs.min() == obs.max():
            raise FoldSkipped(f"held-in block {name} is constant")
    kind = AssociationKind(kind)
    row_img = image(B, kind, "rows")
    col_img = image(C, kind, "columns")
    for name, im in (("B rows", row_img), ("C columns", col_img)):
        if im.degenerate_fraction > max_degenerate:
            raise FoldSkipped(f"{name}: {im.degenerate_fraction:.0%} of variables degenerate")
    u, _ = leading_loadings(row_img)
    v, _ = leading_loadings(col_img)
    u, _ = _align(u, B.row_means())
    if D is None:
        v, _ = _align(v, C.col_means())
    else:
        D = as_response_matrix(D) if not isinstance(D, ResponseMatrix) else D
        w = column_centered(B).T @ u
        t = column_centered(D) @ w
        v, _ = _align_dot(v, column_centered(C).T @ t)
    return np.outer(u, v)


def predict_block_pinv(B, C, D) -> np.ndarray:
    """``B pinv(D1) C`` with ``D1`` the best rank-1 approximation of ``D``."""
    Bm, Cm, Dm = (_binary_data(M) for M in (B, C, D))
    U, s, Vt = np.linalg.svd(Dm, full_matrices=False)
    if s.size == 0 or s[0] <= 1e-12 * max(1.0, np.abs(Dm).max()):
        raise FoldSkipped("held-in block D has no rank-1 component")
    # pinv(s u v') = v u' / s
    return (Bm @ Vt[0])[:, None] * (U[:, 0] @ Cm)[None, :] / s[0]


@dataclass
class FoldResult:
    i: int
    j: int
    rows: np.ndarray
    cols: np.ndarray
    predicted: Optional[np.ndarray]
    panel: Optional[MetricPanel] = None
    skipped: Optional[str] = None


@dataclass
class VerifactorResult:
    panel: MetricPanel
    assembled_panel: Optional[MetricPanel]
    folds: list
    assembled: np.ndarray
    partition: BlockPartition
    config: BcvConfig

    @property
    def n_skipped(self) -> int:
        return sum(f.skipped is not None for f in self.folds)


def predict_fold(X, part: BlockPartition, i: int, j: int, cfg: BcvConfig) -> np.ndarray:
    """Prediction for held-out block (i, j); never reads cells of that block."""
    views = block_views(X, part, i, j)
    if cfg.predictor is Predictor.PSEUDOINVERSE:
        return predict_block_pinv(views.B, views.C, views.D)
    return predict_block_loading(views.B, views.C, cfg.kind, D=views.D)


def verifactor_functional(X, cfg: Optional[BcvConfig] = None, metrics: Optional[Iterable[str]] = None,
                          partition: Optional[BlockPartition] = None,
                          provenance: Optional[dict] = None) -> VerifactorResult:
    """Predict every held-out block, score each fold and the assembled matrix.

    The aggregate panel is the mean of the per-fold metric values over
    folds that were not skipped; the assembled panel scores the union of all
    block predictions against ``X``.
    """
    X = as_response_matrix(X)
    cfg = cfg or BcvConfig()
    wanted = METRIC_KEYS if metrics is None else tuple(metrics)
    part = partition or random_partition(X.n_rows, X.n_cols, cfg.f_rows, cfg.f_cols, RngSpec(cfg.seed))
    prov = {"association": cfg.kind.value, "predictor": cfg.predictor.value, "seed": cfg.seed,
            "folds": f"{cfg.f_rows}x{cfg.f_cols}"}
    prov.update(provenance or {})

    assembled = np.full(X.shape, np.nan)
    folds = []
    for i, j in part.pairs():
        rows, cols, _, _ = part.held_out(i, j)
        try:
            pred = predict_fold(X, part, i, j, cfg)
        except FoldSkipped as exc:
            folds.append(FoldResult(i, j, rows, cols, None, skipped=str(exc)))
            continue
        assembled[np.ix_(rows, cols)] = pred
        block = X.take(rows, cols)
        fold_panel = full_panel(block, pred, None, wanted, dict(prov, mode="verifactor_fold", fold=f"{i},{j}"))
        folds.append(FoldResult(i, j, rows, cols, pred, fold_panel))

    done = [f for f in folds if f.skipped is None]
    if not done:
        raise ValidationError("every fold was skipped: " + "; ".join(f.skipped for f in folds))

    agg = MetricPanel(provenance=dict(prov, mode="verifactor", n_folds=len(folds), n_skipped=len(folds) - len(done)))
    for key in wanted:
        vals = [f.panel.values.get(key) for f in done]
        vals = [v for v in vals if v is not None]
        if vals:
            agg.values[key] = float(np.mean(vals))
        else:
            agg.values[key] = None
            agg.missing[key] = "undefined in every fold"

    have = ~np.isnan(assembled)
    whole = ResponseMatrix(X.values, X.mask & have, X.row_labels, X.col_labels, strict=False)
    assembled_panel = full_panel(whole, np.where(have, assembled, 0.0), None, wanted,
                                 dict(prov, mode="verifactor_assembled"))
    return VerifactorResult(agg, assembled_panel, folds, assembled, part, cfg)
