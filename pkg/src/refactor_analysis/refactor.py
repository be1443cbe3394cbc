"""In-sample rank-1 reconstruction from dual association images."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Optional

import numpy as np

from .assoc import AssociationKind
from .core import ValidationError, as_response_matrix
from .factor import RankOneModel, fit_rank_one, traditional_panel
from .isotonic import IsotonicFit, isotonic_calibrate, isotonic_r2, pava
from .metrics import METRIC_KEYS, MetricPanel, full_panel

__all__ = [
    "Reconstruction",
    "IsotonicFit",
    "reconstruct",
    "isotonic_calibrate",
    "isotonic_r2",
    "pava",
    "refactor_functional",
]


@dataclass(frozen=True)
class Reconstruction:
    scores: np.ndarray
    mode: str = "refactor"
    source: Any = None

    @property
    def shape(self):
        return self.scores.shape


def reconstruct(model: RankOneModel) -> Reconstruction:
    """Outer product of row and column loadings."""
    u = np.asarray(model.u_hat, dtype=float)
    v = np.asarray(model.v_hat, dtype=float)
    if not (np.isfinite(u).all() and np.isfinite(v).all()):
        raise ValidationError("loadings must be finite")
    return Reconstruction(np.outer(u, v), "refactor", model)


TRADITIONAL_METRICS = frozenset({"alpha", "av_r", "cfi", "tli", "rho_c", "tau_rc", "u_rc", "ecv"})


def refactor_functional(X, kind="quadrant", metrics: Optional[Iterable[str]] = None,
                        estimator: str = "leading_eigenvector", traditional: bool = False,
                        provenance: Optional[dict] = None) -> MetricPanel:
    """Fit a rank-1 model, rebuild ``X`` from it and score the reconstruction.

    ``metrics`` may mix reconstruction keys and traditional index keys;
    traditional indices are computed when any is requested or when
    ``traditional`` is True.
    """
    X = as_response_matrix(X)
    kind = AssociationKind(kind)
    wanted = list(METRIC_KEYS) if metrics is None else list(metrics)
    recon_keys = [m for m in wanted if m not in TRADITIONAL_METRICS]
    trad_keys = [m for m in wanted if m in TRADITIONAL_METRICS]
    model = fit_rank_one(X, kind, estimator)
    recon = reconstruct(model)
    prov = {"association": kind.value, "mode": "refactor", "estimator": str(model.estimator)}
    prov.update(provenance or {})
    trad = traditional_panel(X, kind) if (traditional or trad_keys) else None
    panel = full_panel(X, recon, None, recon_keys, prov)
    if trad is not None:
        keep = trad_keys or sorted(TRADITIONAL_METRICS)
        for k in keep:
            panel.values[k] = getattr(trad, k)
            if panel.values[k] is None:
                panel.missing[k] = trad.missing.get(k, "undefined")
    if model.warnings:
        panel.provenance["warnings"] = "; ".join(model.warnings)
    return panel
