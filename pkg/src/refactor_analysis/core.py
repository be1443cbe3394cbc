"""Matrix containers, missingness masks, block partitions and seeded randomness.

Random streams use numpy's PCG64 bit generator seeded through a
``SeedSequence(seed, spawn_key=(stream_id,))``; identical ``(seed, stream_id)``
pairs reproduce identical draws.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class ValidationError(ValueError):
    """Raised when an input violates a container invariant."""


@dataclass(frozen=True)
class ResponseMatrix:
    """Binary n x p response matrix with an explicit observation mask.

    ``values`` holds 0/1 entries (masked cells are stored as 0 and must be
    ignored); ``mask`` is True where a response was observed.
    """

    values: np.ndarray
    mask: np.ndarray
    row_labels: tuple = field(default=())
    col_labels: tuple = field(default=())
    strict: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values)
        mask = np.asarray(self.mask, dtype=bool)
        if values.ndim != 2:
            raise ValidationError(f"response matrix must be 2-D, got shape {values.shape}")
        if mask.shape != values.shape:
            raise ValidationError("mask shape does not match values shape")
        n, p = values.shape
        if n < 2 or p < 2:
            raise ValidationError(f"need at least 2 rows and 2 columns, got {n}x{p}")
        observed = values[mask]
        if not np.all((observed == 0) | (observed == 1)):
            raise ValidationError("observed entries must be exactly 0 or 1")
        if self.strict and not mask.any(axis=1).all():
            raise ValidationError(f"row {int(np.flatnonzero(~mask.any(axis=1))[0])} is entirely masked")
        if self.strict and not mask.any(axis=0).all():
            raise ValidationError(f"column {int(np.flatnonzero(~mask.any(axis=0))[0])} is entirely masked")
        clean = np.where(mask, values, 0).astype(np.int8)
        clean.setflags(write=False)
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "values", clean)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "row_labels", tuple(self.row_labels) or tuple(range(n)))
        object.__setattr__(self, "col_labels", tuple(self.col_labels) or tuple(range(p)))
        if len(self.row_labels) != n or len(self.col_labels) != p:
            raise ValidationError("label lengths must match matrix shape")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def missing_rate(self) -> float:
        return float(1.0 - self.mask.mean())

    @property
    def T(self) -> "ResponseMatrix":
        return ResponseMatrix(self.values.T, self.mask.T, self.col_labels, self.row_labels, self.strict)

    def take(self, rows: Sequence[int], cols: Sequence[int]) -> "ResponseMatrix":
        """Sub-matrix copy over the given indices; fully masked rows/columns are allowed."""
        rows = np.asarray(rows, dtype=int)
        cols = np.asarray(cols, dtype=int)
        return ResponseMatrix(
            self.values[np.ix_(rows, cols)],
            self.mask[np.ix_(rows, cols)],
            tuple(self.row_labels[i] for i in rows),
            tuple(self.col_labels[j] for j in cols),
            strict=False,
        )

    def as_float(self) -> np.ndarray:
        """Values as float with masked cells set to NaN."""
        out = self.values.astype(float)
        out[~self.mask] = np.nan
        return out

    def row_means(self) -> np.ndarray:
        return self.values.sum(axis=1) / self.mask.sum(axis=1)

    def col_means(self) -> np.ndarray:
        return self.values.sum(axis=0) / self.mask.sum(axis=0)


def as_response_matrix(X, mask=None) -> ResponseMatrix:
    """Coerce array-like input (NaN marks missing) to a :class:`ResponseMatrix`."""
    if isinstance(X, ResponseMatrix):
        if mask is not None:
            raise ValidationError("mask given together with a ResponseMatrix")
        return X
    arr = np.asarray(X, dtype=float)
    if arr.ndim != 2:
        raise ValidationError(f"expected a 2-D array, got {arr.ndim}-D")
    observed = ~np.isnan(arr)
    if mask is not None:
        observed &= np.asarray(mask, dtype=bool)
    if np.isinf(arr).any():
        raise ValidationError("infinite entries are not valid responses")
    return ResponseMatrix(np.where(observed, arr, 0.0), observed)


def check_real_matrix(M, name="matrix") -> np.ndarray:
    """Return ``M`` as a finite 2-D float array or raise."""
    arr = np.asarray(M, dtype=float)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name} has non-finite entries")
    return arr


@dataclass(frozen=True)
class RngSpec:
    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, stream_id: int) -> "RngSpec":
        return RngSpec(self.seed, stream_id)


def make_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngSpec):
        return rng.generator()
    if rng is None:
        return RngSpec(0).generator()
    return RngSpec(int(rng)).generator()


@dataclass(frozen=True)
class BlockPartition:
    row_folds: tuple
    col_folds: tuple
    seed: Optional[int] = None

    def __post_init__(self):
        rows = tuple(tuple(int(i) for i in f) for f in self.row_folds)
        cols = tuple(tuple(int(j) for j in f) for f in self.col_folds)
        for axis, folds in (("row", rows), ("column", cols)):
            flat = sorted(i for f in folds for i in f)
            if flat != list(range(len(flat))):
                raise ValidationError(f"{axis} folds must be disjoint and cover 0..{len(flat) - 1}")
            if any(len(f) < 2 for f in folds):
                raise ValidationError(f"every {axis} fold needs at least 2 indices")
        object.__setattr__(self, "row_folds", rows)
        object.__setattr__(self, "col_folds", cols)

    @property
    def n_rows(self) -> int:
        return sum(len(f) for f in self.row_folds)

    @property
    def n_cols(self) -> int:
        return sum(len(f) for f in self.col_folds)

    @property
    def shape(self) -> tuple:
        return len(self.row_folds), len(self.col_folds)

    def pairs(self):
        for i in range(len(self.row_folds)):
            for j in range(len(self.col_folds)):
                yield i, j

    def held_out(self, i: int, j: int):
        """Index arrays ``(rows_i, cols_j, rows_rest, cols_rest)`` for fold (i, j)."""
        if not (0 <= i < len(self.row_folds)) or not (0 <= j < len(self.col_folds)):
            raise IndexError(f"fold ({i}, {j}) out of range for a {self.shape} partition")
        rows = np.array(self.row_folds[i], dtype=int)
        cols = np.array(self.col_folds[j], dtype=int)
        rest_r = np.array([r for k, f in enumerate(self.row_folds) if k != i for r in f], dtype=int)
        rest_c = np.array([c for k, f in enumerate(self.col_folds) if k != j for c in f], dtype=int)
        if rest_r.size == 0 or rest_c.size == 0:
            raise ValidationError("fold complement is empty; need at least 2 folds per axis")
        return rows, cols, rest_r, rest_c


def _split(perm: np.ndarray, f: int) -> tuple:
    # np.array_split puts the remainder on the leading folds
    return tuple(tuple(int(i) for i in part) for part in np.array_split(perm, f))


def random_partition(n: int, p: int, f_rows: int = 2, f_cols: int = 2, rng=None) -> BlockPartition:
    """Shuffle rows and columns into near-equal folds."""
    if f_rows < 2 or f_cols < 2:
        raise ValidationError("fold counts must be at least 2 on each axis")
    if n < 2 * f_rows or p < 2 * f_cols:
        raise ValidationError(f"cannot split {n}x{p} into {f_rows}x{f_cols} folds of size >= 2")
    seed = rng.seed if isinstance(rng, RngSpec) else (rng if isinstance(rng, (int, np.integer)) else None)
    gen = make_rng(rng)
    row_perm = gen.permutation(n)
    col_perm = gen.permutation(p)
    return BlockPartition(_split(row_perm, f_rows), _split(col_perm, f_cols), seed)


@dataclass(frozen=True)
class BlockViews:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    rest_rows: np.ndarray
    rest_cols: np.ndarray


def block_views(X, part: BlockPartition, i: int, j: int) -> BlockViews:
    """Split ``X`` into held-out ``A`` and held-in ``B``, ``C``, ``D`` for fold (i, j).

    ``X`` may be a :class:`ResponseMatrix` (sub-matrices are ResponseMatrix)
    or a real array.
    """
    rows, cols, rr, rc = part.held_out(i, j)
    if isinstance(X, ResponseMatrix):
        if X.shape != (part.n_rows, part.n_cols):
            raise ValidationError("partition does not match matrix shape")
        return BlockViews(X.take(rows, cols), X.take(rows, rc), X.take(rr, cols), X.take(rr, rc), rows, cols, rr, rc)
    M = np.asarray(X)
    if M.shape != (part.n_rows, part.n_cols):
        raise ValidationError("partition does not match matrix shape")
    return BlockViews(
        M[np.ix_(rows, cols)], M[np.ix_(rows, rc)], M[np.ix_(rr, cols)], M[np.ix_(rr, rc)], rows, cols, rr, rc
    )


def _limited(fn, args):
    from threadpoolctl import threadpool_limits

    # a single BLAS thread keeps floating-point reductions identical for any n_jobs
    with threadpool_limits(1):
        return fn(*args)


def parallel_map(fn, arg_tuples, n_jobs: int = 1) -> list:
    """``[fn(*a) for a in arg_tuples]``, optionally across joblib workers.

    Results come back in input order and do not depend on ``n_jobs``.
    """
    arg_tuples = list(arg_tuples)
    if n_jobs == 1 or len(arg_tuples) <= 1:
        return [_limited(fn, a) for a in arg_tuples]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs)(delayed(_limited)(fn, a) for a in arg_tuples)
