"""Periodic lattice functions and discrete calculus.

A function on an ``n``-periodic lattice with spacing ``delta`` is stored as a
length-``n`` array whose entry ``k`` is the value at site ``X_{k+1}``.  Public
callables that take a *site index* use 1-based indices; translation offsets and
step lengths are index-base agnostic.

Averages and inner products are normalised by ``1/n`` so that norms of
resolved functions do not depend on the lattice size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PeriodicGrid1D",
    "LatticeFn1D",
    "ZeroMeanFn1D",
    "TwoScaleFn",
    "translate",
    "diff_r",
    "average",
    "inner",
    "norm",
    "project_zero_mean",
    "shift",
    "dr",
    "lq",
    "h1",
    "hm1",
]


@dataclass(frozen=True)
class PeriodicGrid1D:
    n: int
    delta: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta!r}")

    @property
    def sites(self):
        """Reference positions ``X_i = i*delta`` for ``i = 1..n``."""
        return self.delta * np.arange(1, self.n + 1)


def _frozen(values):
    a = np.array(values, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LatticeFn1D:
    """An n-periodic real function on a uniform 1D lattice."""

    grid: PeriodicGrid1D
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.shape != (self.grid.n,):
            raise ValueError(
                f"expected {self.grid.n} values, got array of shape {self.values.shape}"
            )

    @classmethod
    def from_values(cls, values, delta=1.0):
        values = np.asarray(values, dtype=float)
        return cls(PeriodicGrid1D(len(values), delta), values)

    def __call__(self, i):
        """Value at the 1-based site index ``i`` (any integer, wrapped)."""
        return self.values[(np.asarray(i) - 1) % self.grid.n]

    def __len__(self):
        return self.grid.n

    def _like(self, values):
        return LatticeFn1D(self.grid, values)

    def _check(self, other):
        if isinstance(other, LatticeFn1D):
            if other.grid != self.grid:
                raise ValueError("lattice functions live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return self._like(self.values + self._check(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._like(self.values - self._check(other))

    def __rsub__(self, other):
        return self._like(self._check(other) - self.values)

    def __mul__(self, other):
        return self._like(self.values * self._check(other))

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.values)

    def __repr__(self):
        return f"{type(self).__name__}(n={self.grid.n}, delta={self.grid.delta:g}, values={self.values!r})"


class ZeroMeanFn1D(LatticeFn1D):
    """A lattice function with zero average.

    Construction checks ``|mean| <= mean_tol``; the default tolerance is
    ``1e-12 * max|values|``.  Use :func:`project_zero_mean` to obtain one from
    an arbitrary function.
    """

    def __init__(self, grid, values, mean_tol=None):
        super().__init__(grid, values)
        scale = float(np.max(np.abs(self.values))) if self.values.size else 0.0
        tol = 1e-12 * scale if mean_tol is None else mean_tol
        mean = float(np.mean(self.values))
        if abs(mean) > tol:
            raise ValueError(f"average {mean:.3e} exceeds tolerance {tol:.3e}")


@dataclass(frozen=True, eq=False)
class TwoScaleFn:
    """Function of a slow index (period ``N``) and a fast index (period ``p``).

    ``values[i-1, j-1]`` holds ``v(X_i, Y_j)``.  The one-scale restriction
    ``v(X_i, X_i/eps)`` reads column ``(i-1) mod p`` of row ``i-1``.
    """

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.ndim != 2:
            raise ValueError("two-scale table must be two dimensional")

    @property
    def N(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    def __call__(self, i, j):
        return self.values[(np.asarray(i) - 1) % self.N, (np.asarray(j) - 1) % self.p]

    def diagonal(self):
        """Restriction ``v(X_i, X_i/eps)`` as a length-N array."""
        s = np.arange(self.N)
        return self.values[s, s % self.p]

    @classmethod
    def from_periodic(cls, row, N):
        """Slow-independent table with every row equal to ``row``."""
        row = np.asarray(row, dtype=float)
        return cls(np.tile(row, (N, 1)))


# -- array level helpers --------------------------------------------------


def shift(a, r):
    """``(T^r a)_i = a_{i+r}`` for a periodic array along its first axis."""
    return np.roll(a, -r, axis=0)


def dr(a, r, delta=1.0):
    """r-step forward difference quotient of a periodic array."""
    return (np.roll(a, -r, axis=0) - a) / (r * delta)


def lq(a, q=2.0):
    a = np.abs(np.asarray(a, dtype=float))
    if q == np.inf:
        return float(a.max()) if a.size else 0.0
    return float(np.mean(a**q) ** (1.0 / q))


def h1(a, delta=1.0):
    """Discrete H1 seminorm ``||D a||_{L2}``."""
    return lq(dr(np.asarray(a, dtype=float), 1, delta), 2.0)


def hm1(a, delta=1.0):
    """Discrete H^{-1} norm of a zero-mean periodic array.

    Computed as ``|z|_{H1}`` where ``z`` is the zero-mean solution of
    ``<Dz, Dw> = <a, w>`` for all zero-mean ``w``; diagonalised by the DFT.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    ahat = np.fft.fft(a)
    k = np.arange(1, n)
    symbol = 4.0 * np.sin(np.pi * k / n) ** 2 / delta**2
    return float(np.sqrt(np.sum(np.abs(ahat[1:]) ** 2 / symbol)) / n)


# -- operations on lattice functions ---------------------------------------


def translate(u, r):
    """Return ``T^r u``, i.e. ``u(X_{i+r})`` with periodic wrap-around."""
    return u._like(shift(u.values, int(r)))


def diff_r(u, r):
    """r-step discrete derivative ``(u(X_{i+r}) - u(X_i)) / (r delta)``."""
    if r == 0:
        raise ValueError("step r must be nonzero")
    return u._like(dr(u.values, int(r), u.grid.delta))


def average(u):
    return float(np.mean(u.values))


def inner(u, v):
    """Discrete L2 pairing ``(1/n) sum u_i v_i``."""
    if u.grid != v.grid:
        raise ValueError("lattice functions live on different grids")
    return float(np.mean(u.values * v.values))


_KINDS = ("L2", "Lq", "Linf", "W1q", "H1", "H2", "Hm1")


def norm(u, kind="L2", q=2.0):
    """Lattice norm or seminorm of ``u``.

    ``kind`` is one of ``L2``, ``Lq``, ``Linf``, ``W1q``, ``H1``, ``H2`` or
    ``Hm1``; ``q`` applies to ``Lq`` and ``W1q``.  ``Hm1`` requires a
    zero-mean argument.
    """
    if kind not in _KINDS:
        raise ValueError(f"unknown norm kind {kind!r}; expected one of {_KINDS}")
    if kind in ("Lq", "W1q") and q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    a, delta = u.values, u.grid.delta
    if kind == "L2":
        return lq(a, 2.0)
    if kind == "Lq":
        return lq(a, q)
    if kind == "Linf":
        return lq(a, np.inf)
    if kind == "W1q":
        return lq(dr(a, 1, delta), q)
    if kind == "H1":
        return h1(a, delta)
    if kind == "H2":
        return lq(dr(dr(a, 1, delta), 1, delta), 2.0)
    scale = max(float(np.max(np.abs(a))), 1.0)
    if abs(np.mean(a)) > 1e-12 * scale:
        raise ValueError("H^-1 norm is only defined for zero-mean functions")
    return hm1(a, delta)


def project_zero_mean(u):
    v = u.values - np.mean(u.values)
    return ZeroMeanFn1D(u.grid, v, mean_tol=np.inf)
