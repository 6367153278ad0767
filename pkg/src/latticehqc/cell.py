"""Cell problems, correctors and homogenized moduli for 1D chains.

Fast functions are ``p``-periodic sequences on the integer lattice (spacing
1), indexed ``j = 0..p-1``.  The finite-range difference is
``(D_{Y,r} x)_j = (x_{j+r} - x_j) / r`` and averages are ``(1/p) sum_j``.

Every solver accepts a single row of shape ``(p,)`` or a batch of rows of
shape ``(M, p)`` (``(M, R, p)`` for range-``R`` moduli); the output has the
matching leading shape.  Linear cell problems are solved directly on the
``(p-1)``-dimensional zero-mean subspace.
"""

from __future__ import annotations

import csv
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .errors import DomainViolation, NoConvergence, NonCoercive
from .grid import LatticeFn1D, PeriodicGrid1D, ZeroMeanFn1D, dr

__all__ = [
    "CellTensor1D",
    "ModelBounds",
    "CellResponse",
    "FluxCache",
    "fast_difference",
    "solve_cell_nn",
    "chi_closed_form",
    "homogenize_nn",
    "solve_cell_finite_range",
    "homogenize_finite_range",
    "cell_residual",
    "solve_cell_nonlinear",
    "cell_response",
    "homogenized_flux",
    "solve_homogenized",
    "corrector",
    "model_bounds",
    "write_two_scale_csv",
    "read_two_scale_csv",
]


# -- fast-scale operators -------------------------------------------------


@lru_cache(maxsize=None)
def fast_difference(p, r):
    """Matrix of ``D_{Y,r}`` on ``p``-periodic sequences."""
    D = (np.roll(np.eye(p), r, axis=1) - np.eye(p)) / r
    D.setflags(write=False)
    return D


@lru_cache(maxsize=None)
def _differences(p, R):
    D = np.stack([fast_difference(p, r) for r in range(1, R + 1)])
    D.setflags(write=False)
    return D


@lru_cache(maxsize=None)
def _zero_mean_basis(p):
    """Orthonormal basis (p, p-1) of the zero-mean p-periodic sequences."""
    Q = sla.null_space(np.ones((1, p)))
    Q.setflags(write=False)
    return Q


def _as_batch(psi_r, ndim):
    """Promote to a batch; returns (array, squeeze flag)."""
    a = np.asarray(psi_r, dtype=float)
    if a.ndim == ndim:
        return a[None], True
    if a.ndim == ndim + 1:
        return a, False
    raise ValueError(f"expected an array with {ndim} or {ndim + 1} dimensions, got {a.ndim}")


def _stiffness(psi, D):
    """``sum_r D_r^T diag(psi_r) D_r`` for psi of shape (M, R, p)."""
    return np.einsum("rkj,mrk,rkl->mjl", D, psi, D, optimize=True)


def _reduced_min_eig(A, Q):
    Ared = np.einsum("ja,mjk,kb->mab", Q, A, Q, optimize=True)
    return Ared, np.linalg.eigvalsh(Ared)[:, 0]


# -- linear cell problems -------------------------------------------------


def solve_cell_finite_range(psi_r, return_min_eig=False):
    """Corrector for range-``R`` moduli ``psi_r`` of shape (R, p) or (M, R, p).

    Solves ``sum_r <psi_r D_{Y,r} chi, D_{Y,r} s> = -sum_r <psi_r, D_{Y,r} s>``
    for all zero-mean ``s`` with ``<chi> = 0``.  Raises ``NonCoercive`` if the
    form is not positive definite on the zero-mean subspace.
    """
    psi, squeeze = _as_batch(psi_r, 2)
    M, R, p = psi.shape
    if p == 1:
        chi = np.zeros((M, 1))
        lam = np.full(M, np.inf)
    else:
        D = _differences(p, R)
        Q = _zero_mean_basis(p)
        A = _stiffness(psi, D)
        Ared, lam = _reduced_min_eig(A, Q)
        scale = np.maximum(np.abs(psi).max(axis=(1, 2)), 1e-300)
        bad = lam <= 1e-12 * scale
        if np.any(bad):
            m = int(np.flatnonzero(bad)[0])
            raise NonCoercive(
                f"cell form is not coercive: smallest eigenvalue {lam[m]:.3e} (row {m})",
                value=float(lam[m]),
            )
        b = -np.einsum("rkj,mrk->mj", D, psi)
        y = np.linalg.solve(Ared, (b @ Q)[..., None])[..., 0]
        chi = y @ Q.T
        chi -= chi.mean(axis=1, keepdims=True)
    chi = chi[0] if squeeze else chi
    if return_min_eig:
        return chi, (lam[0] if squeeze else lam)
    return chi


def cell_residual(psi_r, chi):
    """Max-norm residual of the linear cell equation projected to zero mean."""
    psi, _ = _as_batch(psi_r, 2)
    chi = np.atleast_2d(chi)
    M, R, p = psi.shape
    D = _differences(p, R)
    flux = psi * (1.0 + np.einsum("rjk,mk->mrj", D, chi))
    res = np.einsum("rkj,mrk->mj", D, flux)
    res -= res.mean(axis=1, keepdims=True)
    return float(np.max(np.abs(res)))


def homogenize_finite_range(psi_r, chi):
    """``psi0 = sum_r <psi_r (1 + D_{Y,r} chi)>``."""
    psi, squeeze = _as_batch(psi_r, 2)
    chi = np.atleast_2d(chi)
    M, R, p = psi.shape
    D = _differences(p, R)
    psi0 = np.sum(psi * (1.0 + np.einsum("rjk,mk->mrj", D, chi)), axis=(1, 2)) / p
    if np.any(psi0 <= 0):
        raise NonCoercive(f"homogenized modulus is not positive: {psi0.min():.3e}",
                          value=float(psi0.min()))
    return float(psi0[0]) if squeeze else psi0


def _check_positive(psi):
    m = float(np.min(psi))
    if not m > 0:
        raise NonCoercive(f"bond modulus must be positive, min is {m:.3e}", value=m)


def solve_cell_nn(psi_row):
    """Nearest-neighbour corrector; ``psi_row`` of shape (p,) or (M, p)."""
    psi = np.asarray(psi_row, dtype=float)
    _check_positive(psi)
    return solve_cell_finite_range(psi[..., None, :])


def chi_closed_form(psi_row):
    """Nearest-neighbour corrector from its explicit Green's function form.

    ``chi_j = psi0 <g(j - .) / psi(.)>`` with ``g(m) = (p+1)/2 - m`` for
    ``m = 1..p`` extended periodically, where ``j`` and ``m`` are 1-based.
    """
    psi, squeeze = _as_batch(psi_row, 1)
    _check_positive(psi)
    M, p = psi.shape
    m = np.arange(p)
    # g evaluated at (j - l) for 1-based j, l; the argument is reduced to 1..p
    diff = (m[:, None] - m[None, :] - 1) % p + 1
    g = (p + 1) / 2.0 - diff
    psi0 = 1.0 / np.mean(1.0 / psi, axis=1)
    chi = psi0[:, None] * ((1.0 / psi) @ g.T) / p
    return chi[0] if squeeze else chi


def homogenize_nn(psi, return_both=False):
    """Homogenized modulus of nearest-neighbour rows.

    The harmonic mean ``<1/psi>^{-1}`` is returned.  With ``return_both`` the
    corrector-based value ``<psi (1 + D_Y chi)>`` is returned as well.
    """
    a = np.asarray(psi, dtype=float)
    _check_positive(a)
    harmonic = 1.0 / np.mean(1.0 / a, axis=-1)
    if not return_both:
        return harmonic
    general = homogenize_finite_range(a[..., None, :], solve_cell_nn(a))
    return harmonic, general


# -- nonlinear cell problems ----------------------------------------------


@dataclass(frozen=True)
class CellResponse:
    """Relaxed cell state at macro strain ``z``.

    ``chi`` is the zero-mean micro shift (in strain units), ``flux`` the
    homogenized stress, ``modulus`` its derivative in ``z`` and ``dchi`` the
    derivative of ``chi`` with respect to ``z``.
    """

    z: np.ndarray
    chi: np.ndarray
    flux: np.ndarray
    modulus: np.ndarray
    dchi: np.ndarray
    min_eig: np.ndarray
    iterations: int
    energy: np.ndarray
    residual: np.ndarray


def _cell_terms(pots, z, chi, D):
    """Bond arguments and derivatives for shifted strains; shapes (M, R, p)."""
    R = len(pots)
    x = z[:, None, None] + np.einsum("rjk,mk->mrj", D, chi)
    energy = np.empty_like(x)
    a = np.empty_like(x)
    c = np.empty_like(x)
    for r in range(1, R + 1):
        arg = r + r * x[:, r - 1]
        bad = np.asarray(pots[r - 1].violations(arg))
        if np.any(bad):
            m, j = np.argwhere(np.broadcast_to(bad, arg.shape))[0]
            raise DomainViolation(int(j) + 1, r, float(arg[m, j]))
        energy[:, r - 1] = pots[r - 1].eval(arg)
        a[:, r - 1] = r * pots[r - 1].deriv(arg)
        c[:, r - 1] = r * r * pots[r - 1].deriv2(arg)
    return x, energy, a, c


def solve_cell_nonlinear(z, pots, chi0=None, tol=1e-12, max_iter=50, max_halvings=30,
                         check_stability=True):
    """Relax the micro shift ``chi`` at macro strain ``z``.

    ``pots[r-1]`` is a pair potential whose parameters broadcast to the fast
    grid, shape (p,) or (M, p); ``z`` is a scalar or an array of length M.
    The bond ``(j, j+r)`` energy is ``phi(r + r (z + D_{Y,r} chi)_j)``.
    Newton's method from ``chi0`` (default zero) with step halving when a bond
    leaves its domain or the cell energy increases.
    """
    return cell_response(z, pots, chi0, tol, max_iter, max_halvings, check_stability).chi


def cell_response(z, pots, chi0=None, tol=1e-12, max_iter=50, max_halvings=30,
                  check_stability=True, p=None, strict=True):
    """Relaxed cell state, homogenized stress and modulus at strain ``z``.

    Arguments as :func:`solve_cell_nonlinear`; ``p`` is inferred from the
    potential parameters when omitted.  With ``strict=False`` the state after
    ``max_iter`` Newton steps is returned instead of raising.
    """
    z_in = np.asarray(z, dtype=float)
    zz = np.atleast_1d(z_in).astype(float)
    if p is None:
        shapes = [np.shape(v) for pot in pots for v in _params(pot)]
        p = max((s[-1] for s in shapes if len(s)), default=None)
        if p is None:
            raise ValueError("cannot infer the fast period; pass p explicitly")
    M = zz.shape[0]
    R = len(pots)
    D = _differences(p, R)
    Q = _zero_mean_basis(p)
    chi = np.zeros((M, p)) if chi0 is None else np.broadcast_to(np.asarray(chi0, float), (M, p)).copy()
    chi -= chi.mean(axis=1, keepdims=True)

    x, energy, a, c = _cell_terms(pots, zz, chi, D)
    E = energy.sum(axis=(1, 2))
    iterations = 0
    while True:
        g = np.einsum("rkj,mrk->mj", D, a) @ Q if p > 1 else np.zeros((M, 0))
        scale = np.maximum(1.0, np.abs(a).max(axis=(1, 2)))
        gnorm = np.abs(g).max(axis=1) / scale if p > 1 else np.zeros(M)
        if np.all(gnorm <= tol) or p == 1:
            break
        if iterations >= max_iter:
            if not strict:
                break
            raise NoConvergence(max_iter, float(gnorm.max()), "cell Newton did not converge")
        J = np.einsum("ja,mjk,kb->mab", Q, _stiffness(c, D), Q, optimize=True)
        try:
            dy = np.linalg.solve(J, -g[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise NonCoercive(f"singular cell tangent: {exc}") from exc
        step = dy @ Q.T
        t = np.ones(M)
        active = gnorm > tol
        t[~active] = 0.0
        for _ in range(max_halvings + 1):
            trial = chi + t[:, None] * step
            try:
                xt, et, at, ct = _cell_terms(pots, zz, trial, D)
                Et = et.sum(axis=(1, 2))
                worse = Et > E + 1e-12 * np.maximum(1.0, np.abs(E))
            except DomainViolation:
                worse = np.ones(M, dtype=bool)
                xt = None
            worse &= active
            if not np.any(worse):
                break
            t[worse] *= 0.5
        else:
            raise NoConvergence(max_iter, float(gnorm.max()), "cell step halving failed")
        chi = trial - trial.mean(axis=1, keepdims=True)
        x, energy, a, c = xt, et, at, ct
        E = Et
        iterations += 1

    flux = a.sum(axis=(1, 2)) / p
    if p > 1:
        A = _stiffness(c, D)
        Ared, lam = _reduced_min_eig(A, Q)
        if check_stability and np.any(lam <= 0):
            m = int(np.argmin(lam))
            raise NonCoercive(
                f"relaxed cell state is not a stable equilibrium (eigenvalue {lam[m]:.3e})",
                value=float(lam[m]),
            )
        b = -np.einsum("rkj,mrk->mj", D, c)
        dchi = np.linalg.solve(Ared, (b @ Q)[..., None])[..., 0] @ Q.T
        dchi -= dchi.mean(axis=1, keepdims=True)
        modulus = np.sum(c * (1.0 + np.einsum("rjk,mk->mrj", D, dchi)), axis=(1, 2)) / p
    else:
        lam = np.full(M, np.inf)
        dchi = np.zeros((M, 1))
        modulus = c.sum(axis=(1, 2))
    wenergy = E / p
    if z_in.ndim == 0 and M == 1:
        return CellResponse(zz[0], chi[0], flux[0], modulus[0], dchi[0], lam[0], iterations,
                            wenergy[0], gnorm[0])
    return CellResponse(zz, chi, flux, modulus, dchi, lam, iterations, wenergy, gnorm)


def _params(pot):
    return [np.asarray(v) for v in vars(pot).values() if isinstance(v, np.ndarray)]


def homogenized_flux(z, pots, chi0=None, cache=None, key=None):
    """Homogenized stress ``sum_r <Phi_r'(z + D_{Y,r} chi(z))>``.

    With a :class:`FluxCache` and a hashable ``key`` identifying the material
    row, repeated evaluations at the same strain reuse the cell solution.
    """
    if cache is None:
        return cell_response(z, pots, chi0).flux
    return cache.get_or_compute(key, float(z), lambda: cell_response(z, pots, chi0)).flux


class FluxCache:
    """Memo of cell responses keyed by (material key, strain).

    Strains are quantized to multiples of ``quantum``.  Safe for concurrent
    use; intended to be cleared between macro Newton steps.
    """

    def __init__(self, quantum=1e-14):
        self.quantum = quantum
        self._data = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def _key(self, key, z):
        return key, int(np.round(z / self.quantum))

    def get_or_compute(self, key, z, compute):
        k = self._key(key, z)
        with self._lock:
            if k in self._data:
                self.hits += 1
                return self._data[k]
        value = compute()
        with self._lock:
            self.misses += 1
            return self._data.setdefault(k, value)

    def clear(self):
        with self._lock:
            self._data.clear()

    def __len__(self):
        return len(self._data)


# -- two-scale tensors and the homogenized problem ------------------------


@dataclass(frozen=True, eq=False)
class ModelBounds:
    c_psi: float
    C_psi: float
    Cprime_psi: float
    C2_psi0: float
    C_coll: float = 1.0


@dataclass(frozen=True, eq=False)
class CellTensor1D:
    """Two-scale nearest-neighbour modulus ``psi(X_i, Y_j)`` as an (N, p) table."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("two-scale modulus must be an (N, p) table")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def N(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    @property
    def epsilon(self):
        return 1.0 / self.N

    def diagonal(self):
        """One-scale modulus ``psi(X_i, X_i / eps)`` (fast index ``i mod p``)."""
        s = np.arange(self.N)
        return self.values[s, s % self.p]

    def psi0(self):
        return homogenize_nn(self.values)

    def chi(self):
        return solve_cell_nn(self.values)

    def bounds(self, C_coll=1.0):
        psi0 = self.psi0()
        eps = self.epsilon
        return ModelBounds(
            c_psi=float(self.values.min()),
            C_psi=float(self.values.max()),
            Cprime_psi=float(np.abs(dr(self.values, 1, eps)).max()),
            C2_psi0=float(np.abs(dr(dr(psi0, 1, eps), 1, eps)).max()),
            C_coll=C_coll,
        )


def model_bounds(psi):
    return CellTensor1D(psi).bounds()


def solve_homogenized(psi0, f, epsilon=None) -> ZeroMeanFn1D:
    """Zero-mean solution of ``<psi0 D u, D v> = <f, v>``."""
    from .model import solve_linear_nn

    return solve_linear_nn(psi0, f, epsilon)


def corrector(u0, chi, epsilon=None) -> LatticeFn1D:
    """``u^c_i = u0_i + eps chi(X_i, X_i/eps) D u0_i``.

    ``chi`` is an (N, p) table or a single p-periodic row shared by all
    slow sites.
    """
    u0v = u0.values if isinstance(u0, LatticeFn1D) else np.asarray(u0, dtype=float)
    N = u0v.shape[0]
    eps = 1.0 / N if epsilon is None else epsilon
    chi = np.asarray(chi, dtype=float)
    if chi.ndim == 1:
        chi = np.broadcast_to(chi, (N, chi.shape[0]))
    if chi.shape[0] != N:
        raise ValueError(f"corrector table has {chi.shape[0]} rows, expected {N}")
    p = chi.shape[1]
    if N % p:
        raise ValueError(f"fast period {p} does not divide N = {N}")
    s = np.arange(N)
    values = u0v + eps * chi[s, s % p] * dr(u0v, 1, eps)
    return LatticeFn1D(PeriodicGrid1D(N, eps), values)


def write_two_scale_csv(path, table):
    """Write an (N, p) table with 1-based columns ``i, j, value``."""
    table = np.atleast_2d(np.asarray(table, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "value"])
        for i in range(table.shape[0]):
            for j in range(table.shape[1]):
                w.writerow([i + 1, j + 1, repr(float(table[i, j]))])


def read_two_scale_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    N = max(int(r["i"]) for r in rows)
    p = max(int(r["j"]) for r in rows)
    table = np.zeros((N, p))
    for r in rows:
        table[int(r["i"]) - 1, int(r["j"]) - 1] = float(r["value"])
    return table
