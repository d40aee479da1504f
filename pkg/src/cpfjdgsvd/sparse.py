"""Immutable CSR storage, sparse products and the structured test operators.

Products are delegated to :mod:`scipy.sparse`; this module owns the canonical
representation (sorted, duplicate-free rows) and the input validation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InputError


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.flags.writeable = False
    return a


class SparseMatrix:
    """Real matrix in canonical compressed sparse-row form.

    Instances are immutable: the offset, index and value arrays are read-only
    and no method mutates them.
    """

    __slots__ = ("rows", "cols", "indptr", "indices", "data", "_csr")

    def __init__(self, rows, cols, indptr, indices, data):
        rows, cols = int(rows), int(cols)
        if rows < 0 or cols < 0:
            raise InputError(f"negative shape ({rows}, {cols})")
        indptr = np.asarray(indptr, dtype=np.int64)
        indices = np.asarray(indices, dtype=np.int64)
        data = np.asarray(data, dtype=np.float64)
        if indptr.shape != (rows + 1,):
            raise InputError("row offsets must have length rows + 1")
        if indptr[0] != 0 or np.any(np.diff(indptr) < 0):
            raise InputError("row offsets must start at 0 and be nondecreasing")
        if indptr[-1] != indices.size or indices.size != data.size:
            raise InputError("last row offset must equal the number of entries")
        if indices.size and (indices.min() < 0 or indices.max() >= cols):
            raise InputError("column index out of range")
        # strictly increasing columns inside each row
        if indices.size > 1:
            row_ids = np.repeat(np.arange(rows), np.diff(indptr))
            same_row = row_ids[1:] == row_ids[:-1]
            if np.any(same_row & (np.diff(indices) <= 0)):
                raise InputError("column indices must be strictly increasing within a row")
        if not np.all(np.isfinite(data)):
            raise InputError("matrix entries must be finite")
        self.rows = rows
        self.cols = cols
        self.indptr = _frozen(indptr, np.int64)
        self.indices = _frozen(indices, np.int64)
        self.data = _frozen(data, np.float64)
        self._csr = sp.csr_matrix((self.data, self.indices, self.indptr), shape=(rows, cols))

    @classmethod
    def from_coo(cls, rows, cols, row_idx, col_idx, values):
        """Build a canonical matrix from (possibly unsorted, duplicated) triplets.

        Duplicates are summed.
        """
        row_idx = np.asarray(row_idx, dtype=np.int64)
        col_idx = np.asarray(col_idx, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if not (row_idx.shape == col_idx.shape == values.shape):
            raise InputError("triplet arrays must have equal length")
        if row_idx.size:
            if row_idx.min() < 0 or row_idx.max() >= rows:
                raise InputError("row index out of range")
            if col_idx.min() < 0 or col_idx.max() >= cols:
                raise InputError("column index out of range")
        m = sp.coo_matrix((values, (row_idx, col_idx)), shape=(rows, cols)).tocsr()
        m.sum_duplicates()
        m.sort_indices()
        return cls(rows, cols, m.indptr, m.indices, m.data)

    @classmethod
    def from_dense(cls, a):
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        r, c = np.nonzero(a)
        return cls.from_coo(a.shape[0], a.shape[1], r, c, a[r, c])

    @classmethod
    def from_scipy(cls, m):
        m = sp.csr_matrix(m, dtype=np.float64, copy=True)
        m.sum_duplicates()
        m.sort_indices()
        return cls(m.shape[0], m.shape[1], m.indptr, m.indices, m.data)

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def nnz(self):
        return int(self.data.size)

    def toarray(self):
        return self._csr.toarray()

    def to_scipy(self):
        """A fresh scipy CSR copy (mutating it does not affect this matrix)."""
        return self._csr.copy()

    def transpose(self):
        return SparseMatrix.from_scipy(self._csr.T)

    def scaled(self, factor):
        return SparseMatrix(self.rows, self.cols, self.indptr, self.indices, self.data * factor)

    def __matmul__(self, x):
        return spmv(self, x)

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"


def spmv(m: SparseMatrix, x) -> np.ndarray:
    """Return ``m @ x`` for a dense vector ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != m.cols:
        raise InputError(f"vector of length {x.shape} does not match {m.cols} columns")
    return m._csr @ x


def spmv_transpose(m: SparseMatrix, y) -> np.ndarray:
    """Return ``m.T @ y`` without forming the transpose."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] != m.rows:
        raise InputError(f"vector of length {y.shape} does not match {m.rows} rows")
    return m._csr.T @ y


def one_norm(m: SparseMatrix) -> float:
    """Maximum absolute column sum."""
    if m.nnz == 0:
        return 0.0
    sums = np.bincount(m.indices, weights=np.abs(m.data), minlength=m.cols)
    return float(sums.max())


@dataclass(frozen=True)
class MatrixPair:
    """The problem instance (A, B) with its cached matrix 1-norms."""

    a: SparseMatrix
    b: SparseMatrix
    norm1_a: float = field(init=False)
    norm1_b: float = field(init=False)

    def __post_init__(self):
        if self.a.cols != self.b.cols:
            raise InputError(
                f"A has {self.a.cols} columns but B has {self.b.cols}"
            )
        if self.a.rows < 1 or self.b.rows < 1 or self.a.cols < 1:
            raise InputError("A and B must be nonempty")
        object.__setattr__(self, "norm1_a", one_norm(self.a))
        object.__setattr__(self, "norm1_b", one_norm(self.b))

    @property
    def m(self):
        return self.a.rows

    @property
    def p(self):
        return self.b.rows

    @property
    def n(self):
        return self.a.cols

    def scaled(self, gamma):
        return MatrixPair(self.a.scaled(gamma), self.b.scaled(gamma))


def _banded(rows, cols, offsets_values):
    r, c, v = [], [], []
    for off, val in offsets_values:
        i = np.arange(rows)
        j = i + off
        keep = (j >= 0) & (j < cols)
        r.append(i[keep])
        c.append(j[keep])
        v.append(np.full(keep.sum(), float(val)))
    return SparseMatrix.from_coo(rows, cols, np.concatenate(r), np.concatenate(c), np.concatenate(v))


def gen_b0(n: int) -> SparseMatrix:
    """n x n tridiagonal Toeplitz matrix with 3 on the diagonal and 1 off it."""
    if n < 1:
        raise InputError("gen_b0 needs n >= 1")
    return _banded(n, n, [(-1, 1.0), (0, 3.0), (1, 1.0)])


def gen_b1(n: int) -> SparseMatrix:
    """(n-1) x n first-difference matrix with rows (..., 1, -1, ...)."""
    if n < 2:
        raise InputError("gen_b1 needs n >= 2")
    return _banded(n - 1, n, [(0, 1.0), (1, -1.0)])


def gen_b2(n: int) -> SparseMatrix:
    """n x (n+2) second-difference matrix with rows (..., -1, 2, -1, ...)."""
    if n < 1:
        raise InputError("gen_b2 needs n >= 1")
    return _banded(n, n + 2, [(0, -1.0), (1, 2.0), (2, -1.0)])
