"""Sparse matrix helpers and the linear solvers used by all modules.

Storage is scipy CSR throughout.  The solver contract is the achieved
residual, not the algorithm: both entry points factorize with sparse LU
and verify ||Ax - b|| <= rtol * ||b||, applying one step of iterative
refinement before giving up.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = ["SolverError", "build_csr", "symmetry_gap", "solve_spd",
           "solve_general", "Factorized", "BlockMatrix"]


class SolverError(RuntimeError):
    """Linear solve failed to meet its residual contract."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


def build_csr(rows, cols, vals, shape):
    """CSR matrix from triplets; duplicate entries are summed."""
    mat = sp.coo_matrix((np.asarray(vals).ravel(),
                         (np.asarray(rows).ravel(), np.asarray(cols).ravel())),
                        shape=shape).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def symmetry_gap(a):
    """max |A - A^T|, zero for exactly symmetric assembly."""
    d = (a - a.T).tocoo()
    return float(np.abs(d.data).max()) if d.nnz else 0.0


class Factorized:
    """Reusable sparse LU factorization with per-solve residual checks.

    The matrix is symmetrically equilibrated by its row infinity norms
    before factorization, which keeps iterative refinement effective on
    the badly scaled fourth-order systems; residuals are verified on
    the original matrix.
    """

    def __init__(self, a, rtol=1e-10):
        self.a = a.tocsr()
        self.rtol = rtol
        row_max = np.maximum.reduceat(np.abs(self.a.data), self.a.indptr[:-1]) \
            if self.a.nnz and np.all(np.diff(self.a.indptr) > 0) else None
        if row_max is not None and np.all(row_max > 0.0):
            self._scale = 1.0 / np.sqrt(row_max)
        else:
            self._scale = np.ones(self.a.shape[0])
        d = sp.diags(self._scale)
        try:
            self._lu = spla.splu((d @ self.a @ d).tocsc())
        except RuntimeError as exc:  # singular factor
            raise SolverError(f"factorization failed: {exc}") from exc

    def _apply(self, b):
        return self._scale * self._lu.solve(self._scale * b)

    def __call__(self, b):
        b = np.asarray(b, dtype=float)
        norm_b = np.linalg.norm(b)
        if norm_b == 0.0:
            return np.zeros_like(b)
        x = self._apply(b)
        res = np.linalg.norm(self.a @ x - b)
        for _ in range(5):
            if res <= self.rtol * norm_b:
                return x
            x = x + self._apply(b - self.a @ x)
            res = np.linalg.norm(self.a @ x - b)
        if res > self.rtol * norm_b:
            raise SolverError(
                f"residual {res / norm_b:.3e} above rtol {self.rtol:.1e}",
                residual=res / norm_b)
        return x


def solve_spd(a, b, rtol=1e-10):
    """Solve A x = b for symmetric positive definite A."""
    return Factorized(a, rtol=rtol)(b)


def solve_general(a, b, rtol=1e-10):
    """Solve A x = b for general nonsingular A (sparse or BlockMatrix)."""
    if isinstance(a, BlockMatrix):
        a = a.to_csr()
    return Factorized(a, rtol=rtol)(b)


class BlockMatrix:
    """Structured block operator flattened to CSR on demand.

    Two layouts are supported: Kronecker sums ``sum_i kron(C_i, S_i)``
    of small dense coefficient matrices with sparse blocks (the dG
    interval systems), and explicit block grids (saddle-point systems).
    """

    def __init__(self, kron_terms=None, grid=None):
        if (kron_terms is None) == (grid is None):
            raise ValueError("give exactly one of kron_terms or grid")
        self.kron_terms = kron_terms
        self.grid = grid
        self._csr = None

    @classmethod
    def from_kron(cls, terms):
        terms = [(np.asarray(c, dtype=float), s) for c, s in terms]
        if len({c.shape for c, _ in terms}) != 1 or \
                len({s.shape for _, s in terms}) != 1:
            raise ValueError("kron terms must have conformable shapes")
        return cls(kron_terms=terms)

    @classmethod
    def from_grid(cls, grid):
        return cls(grid=grid)

    def to_csr(self):
        if self._csr is None:
            if self.kron_terms is not None:
                acc = None
                for c, s in self.kron_terms:
                    term = sp.kron(sp.csr_matrix(c), s, format="csr")
                    acc = term if acc is None else acc + term
                self._csr = acc.tocsr()
            else:
                self._csr = sp.bmat(self.grid, format="csr")
        return self._csr

    @property
    def shape(self):
        return self.to_csr().shape
