"""scikit-learn style wrappers around the Refactor and Verifactor functionals."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .assoc import image
from .core import ResponseMatrix, ValidationError, as_response_matrix
from .factor import _align, _align_dot, column_centered, fit_rank_one, leading_loadings
from .isotonic import isotonic_r2
from .refactor import reconstruct, refactor_functional
from .verifactor import BcvConfig, verifactor_functional


def _validate_binary(X) -> ResponseMatrix:
    if isinstance(X, ResponseMatrix):
        return X
    arr = check_array(X, dtype=float, ensure_all_finite="allow-nan", ensure_min_samples=2, ensure_min_features=2)
    return as_response_matrix(arr)


class RefactorAnalysis(TransformerMixin, BaseEstimator):
    """Rank-1 reconstruction of a binary response matrix.

    Parameters
    ----------
    kind : str, default="quadrant"
        Association operator used for both row and column images.
    estimator : {"leading_eigenvector", "minres1"}, default="leading_eigenvector"
        How loadings are extracted from each image.
    metrics : sequence of str, optional
        Metrics stored in ``panel_``; all reconstruction metrics by default.
    traditional : bool, default=False
        Also compute the traditional unidimensionality indices.

    Attributes
    ----------
    row_loadings_ : ndarray of shape (n_samples,)
    col_loadings_ : ndarray of shape (n_features,)
    reconstruction_ : ndarray of shape (n_samples, n_features)
    panel_ : MetricPanel
    n_features_in_ : int

    Examples
    --------
    >>> import numpy as np
    >>> rng = np.random.default_rng(0)
    >>> X = (np.outer(rng.normal(size=30), rng.normal(size=8)) > 0).astype(float)
    >>> RefactorAnalysis().fit(X).score(X)
    1.0
    """

    def __init__(self, kind="quadrant", estimator="leading_eigenvector", metrics=None, traditional=False):
        self.kind = kind
        self.estimator = estimator
        self.metrics = metrics
        self.traditional = traditional

    def fit(self, X, y=None):
        R = _validate_binary(X)
        model = fit_rank_one(R, self.kind, self.estimator)
        self.model_ = model
        self.row_loadings_ = model.u_hat
        self.col_loadings_ = model.v_hat
        self.reconstruction_ = reconstruct(model).scores
        self.panel_ = refactor_functional(R, self.kind, self.metrics, self.estimator, self.traditional)
        self.n_features_in_ = R.n_cols
        return self

    def transform(self, X):
        """Reconstruct ``X`` using the fitted column loadings.

        Row loadings come from the row image of ``X`` itself and are
        oriented so the reconstruction co-varies nonnegatively with ``X``.
        """
        check_is_fitted(self, "col_loadings_")
        R = _validate_binary(X)
        if R.n_cols != self.n_features_in_:
            raise ValidationError(f"X has {R.n_cols} features, expected {self.n_features_in_}")
        u, _ = leading_loadings(image(R, self.kind, "rows"))
        u, _ = _align(u, R.row_means())
        u, _ = _align_dot(u, column_centered(R) @ self.col_loadings_)
        return np.outer(u, self.col_loadings_)

    def fit_transform(self, X, y=None):
        return self.fit(X).reconstruction_

    def score(self, X, y=None):
        """Isotonic R^2 of the reconstruction of ``X``."""
        r2 = isotonic_r2(_validate_binary(X), self.transform(X))
        return float("nan") if r2 is None else r2


class VerifactorAnalysis(BaseEstimator):
    """Bi-cross-validated rank-1 prediction of held-out row x column blocks.

    Parameters
    ----------
    kind : str, default="quadrant"
    predictor : {"loading_outer", "pseudoinverse"}, default="loading_outer"
    f_rows, f_cols : int, default=2
        Fold counts along rows and columns.
    random_state : int, default=0
        Seed of the row and column partition.
    metrics : sequence of str, optional

    Attributes
    ----------
    panel_ : MetricPanel
        Per-fold metrics averaged over folds.
    assembled_panel_ : MetricPanel
        Metrics of the assembled out-of-sample matrix.
    assembled_ : ndarray of shape (n_samples, n_features)
        NaN in blocks whose fold was skipped.
    n_skipped_ : int
    """

    def __init__(self, kind="quadrant", predictor="loading_outer", f_rows=2, f_cols=2, random_state=0,
                 metrics=None):
        self.kind = kind
        self.predictor = predictor
        self.f_rows = f_rows
        self.f_cols = f_cols
        self.random_state = random_state
        self.metrics = metrics

    def fit(self, X, y=None):
        R = _validate_binary(X)
        cfg = BcvConfig(self.f_rows, self.f_cols, self.predictor, self.kind, int(self.random_state))
        res = verifactor_functional(R, cfg, self.metrics)
        self.result_ = res
        self.panel_ = res.panel
        self.assembled_panel_ = res.assembled_panel
        self.assembled_ = res.assembled
        self.n_skipped_ = res.n_skipped
        self.n_features_in_ = R.n_cols
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X).assembled_

    def score(self, X=None, y=None):
        """Fold-averaged isotonic R^2 from the last fit."""
        check_is_fitted(self, "panel_")
        v = self.panel_.values.get("isotonic_r2")
        return float("nan") if v is None else v
