"""Convergence-order fits and small post-processing helpers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

__all__ = ["SlopeFit", "fit_slope", "plateau_start", "av"]

STALL = 0.95


@dataclass(frozen=True)
class SlopeFit:
    """Result of :func:`fit_slope`.

    ``slope`` and ``intercept`` describe ``log e = intercept + slope log H``
    for the power-law part; ``floor`` is the fitted constant floor of the
    window; ``plateau`` lists the ``(H, e)`` points cut off by the stall rule
    and ``plateau_level`` is the error at the finest of them (``floor`` when
    there are none).
    """

    slope: float
    intercept: float
    residual: float
    floor: float
    window: int
    plateau: list = field(default_factory=list)
    plateau_level: float = 0.0

    @property
    def has_plateau(self):
        return bool(self.plateau)


def plateau_start(errors, stall=STALL):
    """Index of the first point whose error is not below ``stall`` times its predecessor."""
    e = np.asarray(errors, dtype=float)
    for j in range(1, len(e)):
        if e[j] > stall * e[j - 1]:
            return j
    return len(e)


def fit_slope(H, errors, stall=STALL) -> SlopeFit:
    """Fit ``e(H) = C H^s + e_floor`` in log space on the pre-plateau window.

    Points are ordered from coarse to fine.  The window ends before the first
    point that fails to decrease the error by at least ``1 - stall`` (5% by
    default); those points are returned as the plateau.  Within the window the
    constant ``e_floor >= 0`` absorbs the approach to the plateau, so the
    exponent ``s`` is the pre-plateau convergence order.
    """
    H = np.asarray(H, dtype=float)
    e = np.asarray(errors, dtype=float)
    if H.shape != e.shape or H.ndim != 1:
        raise ValueError("H and errors must be 1D arrays of equal length")
    if len(H) < 3:
        raise ValueError("at least three points are needed for a slope fit")
    if np.any(H <= 0) or np.any(e <= 0):
        raise ValueError("mesh sizes and errors must be positive")
    order = np.argsort(-H, kind="stable")
    H, e = H[order], e[order]
    stop = plateau_start(e, stall)
    if stop < 3:
        raise ValueError(f"only {stop} points precede the plateau; need at least three")
    lh, le = np.log(H[:stop]), np.log(e[:stop])
    s0, c0 = np.polyfit(lh, le, 1)

    def res(x):
        return np.log(np.exp(x[0] + x[1] * lh) + x[2] ** 2) - le

    start = np.array([c0, s0, 0.1 * np.sqrt(e[:stop].min())])
    sol = least_squares(res, start, x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    intercept, slope, root = sol.x
    floor = float(root**2)
    rms = float(np.sqrt(np.mean(sol.fun**2)))
    plateau = [(float(h), float(v)) for h, v in zip(H[stop:], e[stop:])]
    level = plateau[-1][1] if plateau else floor
    return SlopeFit(float(slope), float(intercept), rms, floor, stop, plateau, float(level))


def av(u):
    """Pair average ``Av(u)_i = (u_i + u_{i+1}) / 2`` with periodic wrap-around."""
    u = np.asarray(u, dtype=float)
    return 0.5 * (u + np.roll(u, -1))
