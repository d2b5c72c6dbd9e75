"""Compressed sparse row matrices, triplet assembly and direct LU solves.

Every assembled finite element operator in the package is a :class:`CsrMatrix`.
Factorizations are delegated to SuperLU (``scipy.sparse.linalg.splu``) with
partial pivoting; the pivot check below turns near-singular factors into a
:class:`SingularMatrixError` instead of silently returning garbage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

PIVOT_TOL = 1e-12


class SingularMatrixError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Triplets:
    """Coordinate-format entries; duplicate (row, col) pairs are summed by :func:`to_csr`."""

    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    nrows: int
    ncols: int

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        cols = np.asarray(self.cols, dtype=np.int64).ravel()
        vals = np.asarray(self.values, dtype=float).ravel()
        if not (rows.size == cols.size == vals.size):
            raise ValueError("rows, cols and values must have equal length")
        if rows.size and (rows.min() < 0 or rows.max() >= self.nrows):
            raise IndexError(f"row index out of bounds for {self.nrows} rows")
        if cols.size and (cols.min() < 0 or cols.max() >= self.ncols):
            raise IndexError(f"column index out of bounds for {self.ncols} columns")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_entries(cls, entries, nrows: int, ncols: int) -> Triplets:
        entries = list(entries)
        if not entries:
            return cls(np.empty(0), np.empty(0), np.empty(0), nrows, ncols)
        r, c, v = zip(*entries)
        return cls(np.array(r), np.array(c), np.array(v, dtype=float), nrows, ncols)


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    nrows: int
    ncols: int

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    def row_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.nrows), np.diff(self.row_ptr))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        np.add.at(out, (self.row_ids(), self.col_idx), self.values)
        return out

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, self.col_idx, self.row_ptr), shape=self.shape)

    @classmethod
    def from_scipy(cls, m) -> CsrMatrix:
        m = sp.csr_matrix(m)
        m.sum_duplicates()
        m.sort_indices()
        return cls(m.indptr.astype(np.int64), m.indices.astype(np.int64),
                   m.data.astype(float), m.shape[0], m.shape[1])

    def transpose(self) -> CsrMatrix:
        return to_csr(Triplets(self.col_idx, self.row_ids(), self.values, self.ncols, self.nrows))

    @property
    def T(self) -> CsrMatrix:
        return self.transpose()

    def __matmul__(self, x):
        return spmv(self, x)

    def __add__(self, other: CsrMatrix) -> CsrMatrix:
        return add(self, other)

    def __mul__(self, s: float) -> CsrMatrix:
        return CsrMatrix(self.row_ptr, self.col_idx, self.values * float(s), self.nrows, self.ncols)

    __rmul__ = __mul__


def to_csr(t: Triplets) -> CsrMatrix:
    """Sort triplets row-major and sum duplicates.

    Explicitly inserted zeros are kept as structural entries.
    """
    if t.rows.size == 0:
        return CsrMatrix(np.zeros(t.nrows + 1, dtype=np.int64), np.empty(0, dtype=np.int64),
                         np.empty(0), t.nrows, t.ncols)
    order = np.lexsort((t.cols, t.rows))
    r, c, v = t.rows[order], t.cols[order], t.values[order]
    new = np.ones(r.size, dtype=bool)
    new[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
    starts = np.flatnonzero(new)
    vals = np.add.reduceat(v, starts)
    rows_u, cols_u = r[starts], c[starts]
    counts = np.bincount(rows_u, minlength=t.nrows)
    row_ptr = np.zeros(t.nrows + 1, dtype=np.int64)
    np.cumsum(counts, out=row_ptr[1:])
    return CsrMatrix(row_ptr, cols_u, vals, t.nrows, t.ncols)


def spmv(A: CsrMatrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[0] != A.ncols:
        raise ValueError(f"dimension mismatch: matrix has {A.ncols} columns, vector has {x.shape[0]} entries")
    prod = A.values * x[A.col_idx] if x.ndim == 1 else A.values[:, None] * x[A.col_idx]
    if x.ndim == 1:
        return np.bincount(A.row_ids(), weights=prod, minlength=A.nrows)
    out = np.zeros((A.nrows, x.shape[1]))
    np.add.at(out, A.row_ids(), prod)
    return out


def add(A: CsrMatrix, B: CsrMatrix) -> CsrMatrix:
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    return to_csr(Triplets(np.concatenate([A.row_ids(), B.row_ids()]),
                           np.concatenate([A.col_idx, B.col_idx]),
                           np.concatenate([A.values, B.values]), A.nrows, A.ncols))


def submatrix(A: CsrMatrix, rows, cols) -> CsrMatrix:
    return CsrMatrix.from_scipy(A.to_scipy()[rows][:, cols])


class LUFactor:
    """Sparse LU factorization with partial pivoting, reusable for many right-hand sides.

    ``solve(b, transpose=True)`` solves with the transposed matrix using the same
    factors, which is what the backward (adjoint) sweep needs.
    """

    def __init__(self, A, ordering: str = "COLAMD"):
        if isinstance(A, CsrMatrix):
            A = A.to_scipy()
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        self.n = A.shape[0]
        if self.n == 0:
            self._lu = None
            return
        try:
            self._lu = spla.splu(A, permc_spec=ordering, diag_pivot_thresh=1.0,
                                 options={"SymmetricMode": False})
        except RuntimeError as exc:
            raise SingularMatrixError(str(exc)) from exc
        # pivots compared against the largest entry of the row they were taken from
        row_max = abs(A).max(axis=1).toarray().ravel()
        udiag = np.abs(self._lu.U.diagonal())
        scale = row_max[self._lu.perm_r.argsort()] if row_max.size else row_max
        bad = udiag <= PIVOT_TOL * np.maximum(scale, np.finfo(float).tiny)
        if np.any(bad) or not np.all(np.isfinite(udiag)):
            raise SingularMatrixError(
                f"zero pivot at {int(np.flatnonzero(bad)[0]) if np.any(bad) else '?'} "
                f"(tolerance {PIVOT_TOL:g} relative to row max)")

    def solve(self, b, transpose: bool = False) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise ValueError(f"right-hand side has {b.shape[0]} entries, expected {self.n}")
        if self.n == 0:
            return b.copy()
        return self._lu.solve(b, trans="T" if transpose else "N")


def lu_solve(A, b) -> np.ndarray:
    return LUFactor(A).solve(b)
