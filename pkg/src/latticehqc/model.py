"""Atomistic chain: energy, residual, tangent, Newton solver and linearization.

Site ``s`` (0-based storage) interacts with ``s + r`` for ``r = 1..R`` through a
pair potential evaluated at the scaled bond length ``z = r + r * D_r u`` (the
deformed distance in units of the lattice spacing).  Bond potentials are
periodic in the site index with period ``p``: the potential for the bond
``(s, s + r)`` is ``potentials[r - 1]`` with its parameters taken from the
residue class ``s mod p``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
import numpy as np

from .errors import DomainViolation, NoConvergence, NonCoercive, SingularSystem, SingularTangent
from .grid import LatticeFn1D, PeriodicGrid1D, ZeroMeanFn1D, dr, shift
from .solver import CyclicBandedMatrix, solve_constrained_direct

__all__ = [
    "Harmonic",
    "LennardJones",
    "AtomisticModel",
    "LinearizedModel",
    "NewtonInfo",
    "energy",
    "residual",
    "tangent_matrix",
    "tangent_apply",
    "solve_full",
    "linearize",
    "linear_matrix",
    "solve_linear",
    "solve_linear_nn",
    "residual_floor",
]


def _param(x):
    a = np.asarray(x, dtype=float)
    if a.ndim:
        a = a.copy()
        a.setflags(write=False)
    return a


# -- pair potentials ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Harmonic:
    """``phi(z) = k/2 (z - z0)^2 + s (z - z0)``; parameters may be arrays."""

    k: np.ndarray
    z0: np.ndarray
    s: np.ndarray = 0.0

    def __post_init__(self):
        for name in ("k", "z0", "s"):
            object.__setattr__(self, name, _param(getattr(self, name)))

    valid_domain = (-np.inf, np.inf)

    def eval(self, z):
        d = z - self.z0
        return 0.5 * self.k * d * d + self.s * d

    def deriv(self, z):
        return self.k * (z - self.z0) + self.s

    def deriv2(self, z):
        return self.k * np.ones_like(z, dtype=float)

    def violations(self, z):
        return np.zeros(np.shape(z), dtype=bool)

    def take(self, idx):
        return Harmonic(*(v[idx] if v.ndim else v for v in (self.k, self.z0, self.s)))

    @property
    def is_quadratic(self):
        return True


@dataclass(frozen=True, eq=False)
class LennardJones:
    """``phi(z) = (z/l)^-12 - 2 (z/l)^-6``, minimum ``-1`` at ``z = l``.

    Arguments ``z <= floor * l`` are rejected to keep the powers finite.
    """

    l: np.ndarray
    floor: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "l", _param(self.l))
        if np.any(self.l <= 0):
            raise ValueError("equilibrium distance l must be positive")

    @property
    def valid_domain(self):
        return (self.floor * np.min(self.l), np.inf)

    def eval(self, z):
        x = (z / self.l) ** -6
        return x * x - 2.0 * x

    def deriv(self, z):
        x = z / self.l
        return 12.0 * (x**-7 - x**-13) / self.l

    def deriv2(self, z):
        x = z / self.l
        return (156.0 * x**-14 - 84.0 * x**-8) / self.l**2

    def violations(self, z):
        return ~(np.asarray(z) > self.floor * self.l)

    def take(self, idx):
        if self.l.ndim:
            return LennardJones(self.l[idx], self.floor)
        return self

    @property
    def is_quadratic(self):
        return False


# -- model ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AtomisticModel:
    """Periodic chain of ``N`` atoms with range-``R`` pair interactions.

    ``potentials[r-1]`` describes bonds of length ``r``; array-valued
    parameters of length ``p`` are indexed by the residue class of the left
    atom.  ``f`` is the external force per atom and must average to zero.
    """

    N: int
    potentials: tuple
    f: np.ndarray
    p: int = 1
    length: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "potentials", tuple(self.potentials))
        f = np.array(self.f, dtype=float)
        if f.shape == ():
            f = np.full(self.N, float(f))
        if f.shape != (self.N,):
            raise ValueError(f"force must have length {self.N}")
        f.setflags(write=False)
        object.__setattr__(self, "f", f)
        if not self.potentials:
            raise ValueError("at least one interaction range is required")
        if self.N % self.p:
            raise ValueError(f"period p={self.p} must divide N={self.N}")
        scale = max(float(np.max(np.abs(f))), 1.0)
        if abs(f.mean()) > 1e-12 * scale:
            raise ValueError(f"external force must average to zero, mean is {f.mean():.3e}")

    @property
    def R(self):
        return len(self.potentials)

    @property
    def epsilon(self):
        return self.length / self.N

    @property
    def grid(self):
        return PeriodicGrid1D(self.N, self.epsilon)

    @cached_property
    def site_potentials(self):
        """Per-site potentials, one entry per range, parameters of length N."""
        cls = np.arange(self.N) % self.p
        return tuple(pot.take(cls) for pot in self.potentials)

    @property
    def is_quadratic(self):
        return all(pot.is_quadratic for pot in self.potentials)

    def with_force(self, f):
        return replace(self, f=f)

    def bond_lengths(self, u):
        """Scaled bond lengths ``z_r = r + r D_r u`` as an (R, N) array."""
        u = _values(u)
        eps = self.epsilon
        return np.stack([r + r * dr(u, r, eps) for r in range(1, self.R + 1)])

    def _checked(self, u):
        z = self.bond_lengths(u)
        for r, pot in enumerate(self.site_potentials, start=1):
            bad = pot.violations(z[r - 1])
            if np.any(bad):
                s = int(np.flatnonzero(bad)[0])
                raise DomainViolation(s + 1, r, float(z[r - 1, s]))
        return z


def _values(u):
    if isinstance(u, LatticeFn1D):
        return u.values
    return np.asarray(u, dtype=float)


def energy(model: AtomisticModel, u) -> float:
    """Total energy per atom: bond energy average minus ``<f, u>``."""
    u = _values(u)
    z = model._checked(u)
    e_int = sum(np.mean(pot.eval(z[r])) for r, pot in enumerate(model.site_potentials))
    return float(e_int - np.mean(model.f * u))


def _stresses(model, z):
    """``a_r = r phi'(z_r)``, the derivative of each bond energy w.r.t. D_r u."""
    return [(r + 1) * pot.deriv(z[r]) for r, pot in enumerate(model.site_potentials)]


def residual(model: AtomisticModel, u) -> LatticeFn1D:
    """Gradient of the energy in the 1/N weighted pairing."""
    z = model._checked(u)
    eps = model.epsilon
    res = -model.f.copy()
    for r, a in enumerate(_stresses(model, z), start=1):
        res = res + (shift(a, -r) - a) / (r * eps)
    return LatticeFn1D(model.grid, res)


def _bands_from_moduli(c, eps):
    """Banded matrix of ``w -> sum_r -D_r^*(c_r D_r w)`` for moduli c[r-1]."""
    R, N = c.shape
    bands = np.zeros((R + 1, N))
    for r in range(1, R + 1):
        w = c[r - 1] / (r * eps) ** 2
        bands[0] += w + shift(w, -r)
        bands[r] -= w
    return CyclicBandedMatrix(bands)


def _moduli(model, z):
    return np.stack([(r + 1) ** 2 * pot.deriv2(z[r]) for r, pot in enumerate(model.site_potentials)])


def tangent_matrix(model: AtomisticModel, u) -> CyclicBandedMatrix:
    """Hessian of the energy (times N) as a cyclic banded matrix."""
    z = model._checked(u)
    return _bands_from_moduli(_moduli(model, z), model.epsilon)


def tangent_apply(model: AtomisticModel, u, w) -> LatticeFn1D:
    return LatticeFn1D(model.grid, tangent_matrix(model, u).matvec(_values(w)))


@dataclass(frozen=True)
class NewtonInfo:
    iterations: int
    residual: float
    step: float
    halvings: int = 0
    solves: int = 0


def residual_floor(A, u, f):
    """Roundoff level of an evaluated residual.

    Differencing twice amplifies the rounding of ``u`` by ``1/eps^2``, so at
    large ``N`` the residual of the exact solution is far above a fixed
    absolute tolerance; convergence is judged against this floor instead.
    """
    norm_A = float(np.max(np.abs(A.bands[0]) + 2.0 * np.abs(A.bands[1:]).sum(axis=0)))
    scale = norm_A * float(np.max(np.abs(u))) + float(np.max(np.abs(f)))
    return 64.0 * np.finfo(float).eps * scale


def _newton_direction(A, rhs):
    try:
        return solve_constrained_direct(A, rhs - rhs.mean())
    except SingularSystem as exc:
        raise SingularTangent(f"tangent is singular on the zero-mean subspace: {exc}",
                              pivot=exc.pivot) from exc


def solve_full(model: AtomisticModel, u0=None, newton_tol=1e-10, max_iter=50,
               max_halvings=30, return_info=False):
    """Newton iteration for the zero-mean equilibrium of ``model``.

    Each step solves the tangent system on the zero-mean subspace.  Steps are
    halved while the energy increases or a bond leaves its admissible range.
    The iteration stops once the latest Newton correction is below
    ``newton_tol`` and the residual is below ``newton_tol`` or, if larger,
    its roundoff floor (see :func:`residual_floor`), both in the max norm.
    The final correction is applied but not counted as an iteration.
    """
    N = model.N
    u = np.zeros(N) if u0 is None else _values(u0).copy()
    u = u - u.mean()
    E = energy(model, u)
    iterations = halvings = solves = 0
    last_step = np.inf
    while True:
        res = residual(model, u).values
        rnorm = float(np.max(np.abs(res)))
        A = tangent_matrix(model, u)
        delta = _newton_direction(A, -res)
        solves += 1
        snorm = float(np.max(np.abs(delta)))
        if rnorm <= max(newton_tol, residual_floor(A, u, model.f)) and snorm <= newton_tol:
            u = u + delta
            u = u - u.mean()
            rnorm = float(np.max(np.abs(residual(model, u).values)))
            break
        if iterations >= max_iter:
            raise NoConvergence(max_iter, rnorm, "full-lattice Newton did not converge")
        t = 1.0
        for _ in range(max_halvings + 1):
            trial = u + t * delta
            try:
                E_trial = energy(model, trial)
            except DomainViolation:
                E_trial = np.inf
            if E_trial <= E + 1e-12 * max(1.0, abs(E)):
                break
            t *= 0.5
            halvings += 1
        else:
            raise NoConvergence(max_iter, rnorm, "step halving failed to decrease the energy")
        u = trial - trial.mean()
        E = E_trial
        last_step = t * snorm
        iterations += 1
    out = ZeroMeanFn1D(model.grid, u, mean_tol=np.inf)
    if return_info:
        return out, NewtonInfo(iterations, rnorm, min(last_step, snorm), halvings, solves)
    return out


# -- linearization --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LinearizedModel:
    """Bond moduli ``psi_r``, prestress ``xi_r`` and effective force.

    The linear problem ``sum_r <psi_r D_r u, D_r v> = <f_eff, v>`` has the same
    solution as one Newton step of the nonlinear model from ``ubar``.
    """

    psi_r: np.ndarray
    xi_r: np.ndarray
    f_eff: np.ndarray
    epsilon: float

    @property
    def R(self):
        return self.psi_r.shape[0]

    @property
    def N(self):
        return self.psi_r.shape[1]


def linearize(model: AtomisticModel, ubar=None) -> LinearizedModel:
    ubar = np.zeros(model.N) if ubar is None else _values(ubar)
    z = model._checked(ubar)
    eps = model.epsilon
    psi = _moduli(model, z)
    a = np.stack(_stresses(model, z))
    xi = np.empty_like(a)
    f_eff = model.f.copy()
    for r in range(1, model.R + 1):
        xi[r - 1] = a[r - 1] - psi[r - 1] * dr(ubar, r, eps)
        # <xi, D_r v> = -<D_r T^{-r} xi, v>, so the prestress adds to the force
        f_eff = f_eff + dr(shift(xi[r - 1], -r), r, eps)
    return LinearizedModel(psi, xi, f_eff, eps)


def linear_matrix(psi_r, epsilon) -> CyclicBandedMatrix:
    """Stiffness matrix of ``sum_r <psi_r D_r u, D_r v>`` for moduli psi_r."""
    psi_r = np.atleast_2d(np.asarray(psi_r, dtype=float))
    return _bands_from_moduli(psi_r, epsilon)


def solve_linear(psi_r, f, epsilon=None) -> ZeroMeanFn1D:
    """Zero-mean solution of ``sum_r <psi_r D_r u, D_r v> = <f, v>``.

    Moduli need not all be positive; the solve fails with ``SingularSystem``
    if the assembled form is singular on zero-mean functions.
    """
    psi_r = np.atleast_2d(np.asarray(psi_r, dtype=float))
    f = _values(f)
    N = f.shape[0]
    eps = 1.0 / N if epsilon is None else epsilon
    x = solve_constrained_direct(linear_matrix(psi_r, eps), f)
    return ZeroMeanFn1D(PeriodicGrid1D(N, eps), x, mean_tol=np.inf)


def solve_linear_nn(psi, f, epsilon=None) -> ZeroMeanFn1D:
    """Nearest-neighbour linear chain ``<psi D u, D v> = <f, v>``, ``<u> = 0``."""
    psi = _values(psi)
    if np.min(psi) <= 0:
        raise NonCoercive(f"bond modulus must be positive, min is {np.min(psi):.3e}",
                          value=float(np.min(psi)))
    return solve_linear(psi[None, :], f, epsilon)
