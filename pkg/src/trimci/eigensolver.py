"""Lowest eigenpair of the Hamiltonian projected onto a determinant set."""

from __future__ import annotations

import dataclasses
import os

import numpy as np
import scipy.sparse as sp

from .hamiltonian import tables_for
from .integrals import IntegralTable



def _default_cap():
    try:
        phys = os.sysconf("SC_PAGE_SIZE") * os.sysconf("SC_PHYS_PAGES")
    except (ValueError, OSError, AttributeError):
        return 8 * 1024 ** 3
    return min(8 * 1024 ** 3, phys // 2)


DEFAULT_MEMORY_CAP = _default_cap()


class DavidsonError(RuntimeError):
    """Raised on non-convergence; ``best`` holds the last Ritz pair."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclasses.dataclass
class EigenResult:
    energy: float
    coefficients: np.ndarray
    iterations: int
    residual_norm: float


class ProjectedHamiltonian:
    """H restricted to ``dets`` (rows in the given order).

    ``offdiag`` is a full symmetric CSR of the off-diagonal elements, or None
    when the set was built matrix-free; in that case products regenerate the
    connections on every call.
    """

    def __init__(self, dets, diagonal, offdiag=None, ints=None, slots=None):
        self.dets = dets
        self.diagonal = diagonal
        self.offdiag = offdiag
        self._ints = ints
        self._slots = slots

    @property
    def dim(self) -> int:
        return self.dets.shape[0]

    @property
    def explicit(self) -> bool:
        return self.offdiag is not None

    def matvec(self, x):
        if self.offdiag is not None:
            return self.diagonal * x + self.offdiag @ x
        return tables_for(self._ints).matvec(self.dets, self._slots, x, self.diagonal)

    def upper(self):
        """Upper-triangular nonzeros (diagonal included) as a CSR matrix."""
        full = self.to_sparse()
        return sp.triu(full, format="csr")

    def to_sparse(self):
        if self.offdiag is None:
            raise ValueError("matrix-free Hamiltonian has no stored elements")
        return (self.offdiag + sp.diags(self.diagonal)).tocsr()

    def to_dense(self):
        if self.offdiag is None:
            return np.column_stack([self.matvec(e) for e in np.eye(self.dim)])
        return self.offdiag.toarray() + np.diag(self.diagonal)

    def submatrix(self, idx):
        """Projection onto the subset ``idx`` of this set's rows (explicit only)."""
        idx = np.asarray(idx, dtype=np.int64)
        if self.offdiag is None:
            raise ValueError("submatrix needs an explicit Hamiltonian")
        sub = self.offdiag[idx][:, idx].tocsr()
        sub.sort_indices()
        return ProjectedHamiltonian(self.dets[idx], self.diagonal[idx], sub)


def build_projected(dets, ints: IntegralTable, memory_cap=DEFAULT_MEMORY_CAP,
                    method="auto") -> ProjectedHamiltonian:
    """Assemble H over ``dets`` (packed rows, distinct, one particle sector)."""
    kt = tables_for(ints)
    dets = np.ascontiguousarray(dets, dtype=np.uint64)
    kt.check_sector(dets)
    slots = kt.index(dets)
    diag = kt.diagonal(dets)
    estimate = 12 * dets.shape[0] * kt.mean_connections()
    if estimate > memory_cap and method != "pairs":
        # the generic bound counts every connection; most fall outside the set
        estimate = 12 * 1.2 * kt.estimated_nnz(dets, slots)
    if estimate > memory_cap and method != "pairs":
        return ProjectedHamiltonian(dets, diag, None, ints=ints, slots=slots)
    off = kt.offdiagonal_csr(dets, slots, method)
    return ProjectedHamiltonian(dets, diag, off, ints=ints, slots=slots)


def _fix_sign(c):
    k = int(np.argmax(np.abs(c)))
    return -c if c[k] < 0 else c


def _as_operator(H):
    if isinstance(H, ProjectedHamiltonian):
        return H.matvec, H.diagonal, H.dim, H
    if sp.issparse(H):
        H = H.tocsr()
        return (lambda x: H @ x), H.diagonal(), H.shape[0], H
    H = np.asarray(H, dtype=np.float64)
    return (lambda x: H @ x), np.diag(H).copy(), H.shape[0], H


def davidson_lowest(H, guess=None, tol=1e-8, max_iter=200, max_subspace=24,
                    dense_cutoff=512) -> EigenResult:
    """Lowest eigenpair by Davidson iteration with a diagonal preconditioner.

    ``H`` may be a :class:`ProjectedHamiltonian`, a scipy sparse matrix or a
    dense array. Problems no larger than ``dense_cutoff`` go to LAPACK. The
    eigenvector's largest component is made positive.
    """
    matvec, diag, n, raw = _as_operator(H)
    if n < 1:
        raise ValueError("empty Hamiltonian")
    if tol <= 0:
        raise ValueError("tol must be positive")

    if n <= dense_cutoff:
        if isinstance(raw, ProjectedHamiltonian):
            dense = raw.to_dense()
        elif sp.issparse(raw):
            dense = raw.toarray()
        else:
            dense = raw
        w, v = np.linalg.eigh(dense)
        c = _fix_sign(v[:, 0])
        res = float(np.linalg.norm(matvec(c) - w[0] * c))
        return EigenResult(float(w[0]), c, 0, res)

    if guess is not None:
        x = np.array(guess, dtype=np.float64)
        if x.shape != (n,) or not np.any(x):
            raise ValueError("guess must be a nonzero vector of matching length")
    else:
        x = np.zeros(n)
        x[int(np.argmin(diag))] = 1.0  # argmin returns the first (canonical) minimum
        # fixed-seed noise so the Krylov space is not confined to one symmetry block
        x += 1e-3 * np.random.default_rng(0).standard_normal(n)
    x /= np.linalg.norm(x)

    V = np.empty((max_subspace, n))
    AV = np.empty((max_subspace, n))
    V[0] = x
    AV[0] = matvec(x)
    k = 1
    theta = float(x @ AV[0])
    best = EigenResult(theta, x, 0, np.inf)
    for it in range(1, max_iter + 1):
        T = V[:k] @ AV[:k].T
        T = 0.5 * (T + T.T)
        w, s = np.linalg.eigh(T)
        theta = float(w[0])
        x = s[:, 0] @ V[:k]
        ax = s[:, 0] @ AV[:k]
        r = ax - theta * x
        rnorm = float(np.linalg.norm(r))
        best = EigenResult(theta, x, it, rnorm)
        if rnorm <= tol:
            nx = np.linalg.norm(x)
            c = _fix_sign(x / nx)
            return EigenResult(theta, c, it, rnorm)
        denom = diag - theta
        small = np.abs(denom) < 1e-8
        denom[small] = np.where(denom[small] < 0, -1e-8, 1e-8)
        t = r / denom
        if k >= max_subspace:
            # collapse onto the current Ritz vector
            nx = np.linalg.norm(x)
            V[0] = x / nx
            AV[0] = ax / nx
            k = 1
        for _ in range(2):
            t -= (V[:k] @ t) @ V[:k]
        tn = np.linalg.norm(t)
        if tn < 1e-14:
            t = r.copy()
            for _ in range(2):
                t -= (V[:k] @ t) @ V[:k]
            tn = np.linalg.norm(t)
            if tn < 1e-14:
                c = _fix_sign(x / np.linalg.norm(x))
                return EigenResult(theta, c, it, rnorm)
        V[k] = t / tn
        AV[k] = matvec(V[k])
        k += 1
    best.coefficients = _fix_sign(best.coefficients / np.linalg.norm(best.coefficients))
    raise DavidsonError(
        f"Davidson did not converge in {max_iter} iterations (residual {best.residual_norm:.3e})",
        best)


def variational_energy(dets, coeffs, ints: IntegralTable, H: ProjectedHamiltonian | None = None):
    """Rayleigh quotient c^T H c over ``dets``; ``coeffs`` must have unit norm."""
    c = np.asarray(coeffs, dtype=np.float64)
    norm = float(np.linalg.norm(c))
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"coefficients have norm {norm:.9f}, expected 1")
    if H is None:
        H = build_projected(dets, ints)
    return float(c @ H.matvec(c))
