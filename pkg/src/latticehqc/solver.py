"""Zero-mean constrained symmetric solves.

The periodic problems in this package are singular in the constant direction,
so every solve looks for ``x`` with ``A x = b`` and ``mean(x) = 0`` for a
right-hand side ``b`` that itself averages to zero.

Two independent routes are provided: a direct cyclic-banded factorization for
1D operators and a projected preconditioned conjugate gradient method for
matrix-free operators.  Tests check that they agree.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import warnings

import numpy as np
import scipy.linalg as sla

from .errors import NoConvergence, NonZeroMeanRHS, SingularSystem

__all__ = [
    "CyclicBandedMatrix",
    "LinearOperator",
    "solve_constrained_direct",
    "solve_constrained_cg",
    "solve_constrained_dense",
    "check_zero_mean_rhs",
]


@dataclass(frozen=True, eq=False)
class CyclicBandedMatrix:
    """Symmetric cyclic banded matrix in upper band storage.

    ``bands[d, i]`` is the coupling between ``i`` and ``(i + d) mod n``.  The
    matrix is ``D + sum_d (S_d + S_d^T)`` with ``D = diag(bands[0])`` and
    ``S_d[i, (i+d) mod n] = bands[d, i]``.  When ``n >= 2b + 1`` this means
    ``A[i, (i+d) mod n] == bands[d, i]``; for smaller ``n`` coinciding entries
    add up, which is what a sum over periodic bonds produces.
    """

    bands: np.ndarray

    def __post_init__(self):
        bands = np.array(self.bands, dtype=float)
        if bands.ndim != 2 or bands.shape[0] < 1:
            raise ValueError("bands must have shape (b + 1, n)")
        bands.setflags(write=False)
        object.__setattr__(self, "bands", bands)

    @property
    def n(self):
        return self.bands.shape[1]

    @property
    def bandwidth(self):
        return self.bands.shape[0] - 1

    @classmethod
    def from_dense(cls, A, bandwidth):
        A = np.asarray(A, dtype=float)
        n = A.shape[0]
        if n < 2 * bandwidth + 1:
            raise ValueError("from_dense needs n >= 2*bandwidth + 1")
        i = np.arange(n)
        return cls(np.stack([A[i, (i + d) % n] for d in range(bandwidth + 1)]))

    def to_dense(self):
        n = self.n
        A = np.zeros((n, n))
        i = np.arange(n)
        np.add.at(A, (i, i), self.bands[0])
        for d in range(1, self.bandwidth + 1):
            j = (i + d) % n
            np.add.at(A, (i, j), self.bands[d])
            np.add.at(A, (j, i), self.bands[d])
        return A

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        y = self.bands[0] * x
        for d in range(1, self.bandwidth + 1):
            y = y + self.bands[d] * np.roll(x, -d) + np.roll(self.bands[d] * x, d)
        return y

    def diagonal(self):
        n = self.n
        diag = self.bands[0].copy()
        for d in range(1, self.bandwidth + 1):
            if d % n == 0:
                diag = diag + 2.0 * self.bands[d]
        return diag


@dataclass(frozen=True)
class LinearOperator:
    """Matrix-free symmetric operator acting on arrays of a fixed shape."""

    shape: tuple
    apply: Callable[[np.ndarray], np.ndarray]
    diagonal: Optional[np.ndarray] = None

    @property
    def dimension(self):
        return int(np.prod(self.shape))

    @classmethod
    def from_banded(cls, A: CyclicBandedMatrix):
        return cls((A.n,), A.matvec, A.diagonal())

    @classmethod
    def from_dense(cls, A):
        A = np.asarray(A, dtype=float)
        return cls((A.shape[0],), lambda x: A @ x, np.diag(A).copy())


def check_zero_mean_rhs(b, rtol=1e-11):
    b = np.asarray(b, dtype=float)
    scale = float(np.max(np.abs(b))) if b.size else 0.0
    mean = float(np.mean(b)) if b.size else 0.0
    if abs(mean) > rtol * max(scale, 1e-300) and abs(mean) > 0.0:
        raise NonZeroMeanRHS(f"right-hand side has mean {mean:.3e} (max |b| = {scale:.3e})")


def _lu(M):
    # exact zero pivots are reported through SingularSystem below
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        return sla.lu_factor(M, check_finite=False)


def _bordered_dense(A, b):
    n = A.shape[0]
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = A
    M[:n, n] = 1.0
    M[n, :n] = 1.0
    rhs = np.concatenate([b, [0.0]])
    try:
        lu, piv = _lu(M)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SingularSystem(str(exc)) from exc
    pivots = np.abs(np.diag(lu))
    scale = max(float(np.max(np.abs(M))), 1.0)
    if pivots.min() <= 1e-13 * scale:
        raise SingularSystem("constrained matrix is singular", pivot=float(pivots.min()))
    return sla.lu_solve((lu, piv), rhs, check_finite=False)[:n]


def solve_constrained_dense(A, b):
    """Dense reference solve of ``A x = b``, ``mean(x) = 0`` via a bordered system."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    check_zero_mean_rhs(b)
    x = _bordered_dense(A, b)
    return x - x.mean()


def _factor_band(ab):
    """Factor a symmetric banded block; Cholesky first, banded LU as fallback."""
    try:
        c = sla.cholesky_banded(ab, lower=True, check_finite=False)
        return lambda rhs: sla.cho_solve_banded((c, True), rhs, check_finite=False)
    except np.linalg.LinAlgError:
        pass
    b = ab.shape[0] - 1
    m = ab.shape[1]
    full = np.zeros((2 * b + 1, m))
    full[b:] = ab
    for d in range(1, b + 1):
        full[b - d, d:] = ab[d, : m - d]

    def solve(rhs):
        try:
            return sla.solve_banded((b, b), full, rhs, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(f"banded block is singular: {exc}") from exc

    return solve


def _entries(A):
    """Yield (rows, cols, values) triplets covering every stored coupling."""
    n = A.n
    i = np.arange(n)
    yield i, i, A.bands[0]
    for d in range(1, A.bandwidth + 1):
        j = (i + d) % n
        yield i, j, A.bands[d]
        yield j, i, A.bands[d]


def solve_constrained_direct(A: CyclicBandedMatrix, b):
    """Direct zero-mean solve for a symmetric cyclic banded matrix.

    The bordered system ``[[A, 1], [1^T, 0]]`` is partitioned: the leading
    ``n - bw`` unknowns form a plain banded block (the cyclic corners only
    touch the trailing ``bw`` unknowns), which is factored; the trailing
    unknowns and the multiplier are found from a small dense Schur complement.
    """
    b = np.asarray(b, dtype=float)
    n, bw = A.n, A.bandwidth
    if b.shape != (n,):
        raise ValueError(f"rhs has shape {b.shape}, expected ({n},)")
    check_zero_mean_rhs(b)
    if n == 1:
        return np.zeros(1)
    if not np.any(b):
        return np.zeros(n)
    if n < 2 * bw + 1 or n <= bw + 1:
        return solve_constrained_dense(A.to_dense(), b)

    m = n - bw
    ab = np.zeros((bw + 1, m))
    for d in range(bw + 1):
        ab[d, : m - d] = A.bands[d, : m - d]
    # coupling of the leading block to [trailing unknowns, multiplier]
    C = np.zeros((m, bw + 1))
    C[:, bw] = 1.0
    D = np.zeros((bw + 1, bw + 1))
    for row, col, val in _entries(A):
        lead = (row < m) & (col >= m)
        np.add.at(C, (row[lead], col[lead] - m), val[lead])
        tail = (row >= m) & (col >= m)
        np.add.at(D, (row[tail] - m, col[tail] - m), val[tail])
    D[:bw, bw] = 1.0
    D[bw, :bw] = 1.0

    solve11 = _factor_band(ab)
    Y = solve11(np.column_stack([C, b[:m]]))
    S = D - C.T @ Y[:, :-1]
    rhs2 = np.concatenate([b[m:], [0.0]]) - C.T @ Y[:, -1]
    try:
        lu, piv = _lu(S)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SingularSystem(str(exc)) from exc
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= 1e-13 * max(float(np.max(np.abs(S))), 1.0):
        raise SingularSystem("Schur complement is singular", pivot=float(pivots.min()))
    y2 = sla.lu_solve((lu, piv), rhs2, check_finite=False)
    x1 = Y[:, -1] - Y[:, :-1] @ y2
    x = np.concatenate([x1, y2[:bw]])
    x = x - x.mean()

    # loose sanity bound; accuracy itself is checked by the tests
    res = np.linalg.norm(A.matvec(x) - b)
    scale = np.linalg.norm(b) + np.abs(A.bands).sum(axis=0).max() * np.linalg.norm(x)
    if res > 1e-8 * scale:
        raise SingularSystem(f"direct solve residual {res:.3e} exceeds bound for scale {scale:.3e}")
    return x


def _project(x):
    return x - x.mean()


def solve_constrained_cg(Aop: LinearOperator, b, tol=1e-12, max_iter=None, x0=None,
                         return_info=False):
    """Projected preconditioned conjugate gradients on the zero-mean subspace.

    Iterates are projected to zero mean after every update.  The Jacobi
    preconditioner from ``Aop.diagonal`` is used when available.  Stops once
    ``|r| <= tol * |b|`` in the Euclidean norm.
    """
    b = np.asarray(b, dtype=float)
    if b.shape != tuple(Aop.shape):
        raise ValueError(f"rhs has shape {b.shape}, expected {tuple(Aop.shape)}")
    check_zero_mean_rhs(b)
    b = _project(b)
    if max_iter is None:
        max_iter = 10 * Aop.dimension + 10
    bnorm = float(np.linalg.norm(b))
    x = np.zeros_like(b) if x0 is None else _project(np.asarray(x0, dtype=float))
    if bnorm == 0.0:
        return (np.zeros_like(b), 0) if return_info else np.zeros_like(b)

    if Aop.diagonal is not None:
        dinv = np.asarray(Aop.diagonal, dtype=float).reshape(b.shape)
        if np.any(dinv <= 0):
            raise SingularSystem("preconditioner diagonal is not positive",
                                 pivot=float(dinv.min()))
        dinv = 1.0 / dinv
    else:
        dinv = None

    def precond(r):
        return r if dinv is None else _project(dinv * r)

    r = _project(b - Aop.apply(x)) if x0 is not None else b.copy()
    z = precond(r)
    d = z.copy()
    rz = float(np.vdot(r, z))
    it = 0
    while float(np.linalg.norm(r)) > tol * bnorm:
        if it >= max_iter:
            raise NoConvergence(max_iter, float(np.linalg.norm(r)) / bnorm,
                                "conjugate gradients did not converge")
        Ad = _project(Aop.apply(d))
        dAd = float(np.vdot(d, Ad))
        if not dAd > 0:
            raise SingularSystem(f"CG breakdown: d^T A d = {dAd:.3e} at iteration {it}",
                                 pivot=dAd)
        alpha = rz / dAd
        x = _project(x + alpha * d)
        r = _project(r - alpha * Ad)
        z = precond(r)
        rz_new = float(np.vdot(r, z))
        d = _project(z + (rz_new / rz) * d)
        rz = rz_new
        it += 1
    x = _project(x)
    return (x, it) if return_info else x
