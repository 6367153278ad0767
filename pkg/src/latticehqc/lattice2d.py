"""Square-lattice extension: vector equilibrium, 2D cell problems, triangle HQC.

Sites are stored 0-based, ``s = i - 1`` componentwise, so a table entry
``values[s1, s2]`` belongs to the atom with 1-based index ``(s1 + 1, s2 + 1)``.
Displacements have shape ``(N1, N2, 2)``.

Every bond stiffness ``psi_r`` is a scalar acting isotropically on the
displacement difference, so the two displacement components decouple and all
solves are carried out per component.

Two conventions exist for cell problems and homogenized tensors:

``"model"``
    the difference quotient ``(u_{j+r} - u_j) / |r|`` of the equilibrium
    equations, macro direction ``r / |r|`` and the fast average.  This is the
    tensor that governs the lattice model and the one used by the HQC solver.
``"bond"``
    the undivided difference ``u_{j+r} - u_j``, macro direction ``r`` and the
    fast sum over one period.  This is the scaling in which the checkerboard
    closed forms (``23/3``, ``-1/3``) are stated.

The ``"model"`` tensor of ``psi_r`` equals the ``"bond"`` tensor of
``psi_r / |r|^2`` divided by ``p1 * p2``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NonCoercive, SingularSystem
from .solver import LinearOperator, check_zero_mean_rhs, solve_constrained_cg

__all__ = [
    "Grid2D",
    "VectorFn2D",
    "NeighborSet",
    "BondTensors2D",
    "LatticeModel2D",
    "CellSolution2D",
    "HomogenizedTensor2D",
    "TriangleMesh2D",
    "SamplingRect",
    "HQC2DSolution",
    "residual_2d",
    "apply_2d",
    "energy_2d",
    "solve_full_2d",
    "solve_cell_2d",
    "homogenize_2d",
    "checkerboard_closed_form",
    "choose_sampling_2d",
    "hqc2d_solve",
    "reconstruct_2d",
    "fem_p1_solve",
    "interpolate_p1",
    "force_case2d",
    "checkerboard_bonds",
    "case2_bonds",
    "l2_2d",
    "h1_2d",
    "write_deformed_csv",
]


@dataclass(frozen=True)
class Grid2D:
    n1: int
    n2: int
    epsilon: float = 0.0

    def __post_init__(self):
        for n in (self.n1, self.n2):
            if int(n) != n or n < 1:
                raise ValueError(f"grid periods must be positive integers, got {n!r}")
        if self.epsilon == 0.0:
            object.__setattr__(self, "epsilon", 1.0 / self.n1)
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def shape(self):
        return (self.n1, self.n2)

    def sites(self):
        """Reference positions ``X_i = eps * i`` as an ``(n1, n2, 2)`` array."""
        i1, i2 = np.meshgrid(np.arange(1, self.n1 + 1), np.arange(1, self.n2 + 1), indexing="ij")
        return self.epsilon * np.stack([i1, i2], axis=-1).astype(float)


@dataclass(frozen=True, eq=False)
class VectorFn2D:
    """An ``(n1, n2)``-periodic field of 2-vectors."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (*self.grid.shape, 2):
            raise ValueError(f"expected shape {(*self.grid.shape, 2)}, got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __call__(self, i1, i2):
        """Vector at the 1-based site ``(i1, i2)``, indices wrapped."""
        return self.values[(np.asarray(i1) - 1) % self.grid.n1, (np.asarray(i2) - 1) % self.grid.n2]

    def mean(self):
        return self.values.mean(axis=(0, 1))

    def zero_mean(self):
        return VectorFn2D(self.grid, self.values - self.mean())


@dataclass(frozen=True)
class NeighborSet:
    """Bond offsets, one representative per pair ``{r, -r}``."""

    offsets: tuple

    def __post_init__(self):
        offs = tuple((int(a), int(b)) for a, b in self.offsets)
        if not offs:
            raise ValueError("neighbour set is empty")
        seen = set()
        for r in offs:
            if r == (0, 0):
                raise ValueError("zero offset is not a bond")
            if r in seen or (-r[0], -r[1]) in seen:
                raise ValueError(f"offset {r} duplicates another bond up to reflection")
            seen.add(r)
        object.__setattr__(self, "offsets", offs)

    def __len__(self):
        return len(self.offsets)

    def __iter__(self):
        return iter(self.offsets)

    @property
    def array(self):
        return np.array(self.offsets, dtype=float)

    @property
    def lengths(self):
        return np.hypot(*self.array.T)


SQUARE_NEIGHBORS = NeighborSet(((1, 0), (0, 1), (1, 1), (-1, 1)))


@dataclass(frozen=True, eq=False)
class BondTensors2D:
    """Fast-periodic scalar bond stiffness ``values[r, j1, j2]`` per offset."""

    neighbors: NeighborSet
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None, None]
        if v.ndim != 3 or v.shape[0] != len(self.neighbors):
            raise ValueError("values must have shape (len(neighbors), p1, p2)")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def p(self):
        return self.values.shape[1:]

    def tile(self, shape):
        """Stiffness on an ``(N1, N2)`` lattice; requires ``p | N``."""
        n1, n2 = shape
        p1, p2 = self.p
        if n1 % p1 or n2 % p2:
            raise ValueError(f"period {self.p} does not divide lattice {shape}")
        return np.tile(self.values, (1, n1 // p1, n2 // p2))

    def window(self, start):
        """Data seen by a ``p1 x p2`` window whose first site is ``start`` (0-based)."""
        p1, p2 = self.p
        j1 = (start[0] + np.arange(p1)) % p1
        j2 = (start[1] + np.arange(p2)) % p2
        return self.values[:, j1][:, :, j2]


def _parity_table(ee, eo, oe, oo):
    """2x2 table from values keyed by the parity of the 1-based indices (i1, i2)."""
    # storage s = i - 1, so an even 1-based index sits at odd storage index
    t = np.empty((2, 2))
    t[1, 1], t[1, 0], t[0, 1], t[0, 0] = ee, eo, oe, oo
    return t


def checkerboard_bonds(k1=1.0, k2=2.0, k3=0.25):
    """Axis bonds ``k1`` where ``i1 + i2`` is even and ``k2`` where odd; diagonals ``k3``."""
    axis = _parity_table(k1, k2, k2, k1)
    diag = np.full((2, 2), float(k3))
    return BondTensors2D(SQUARE_NEIGHBORS, np.stack([axis, axis, diag, diag]))


def case2_bonds():
    """The four fixed parity tables of the second 2D test material."""
    t10 = _parity_table(1.3, 1.6, 1.8, 1.2)
    t01 = _parity_table(1.5, 1.7, 1.5, 2.0)
    t11 = _parity_table(0.3, 0.8, 0.6, 0.4)
    tm11 = _parity_table(0.4, 0.9, 0.4, 0.1)
    return BondTensors2D(SQUARE_NEIGHBORS, np.stack([t10, t01, t11, tm11]))


@dataclass(frozen=True, eq=False)
class LatticeModel2D:
    grid: Grid2D
    bonds: BondTensors2D

    @cached_property
    def psi(self):
        psi = self.bonds.tile(self.grid.shape)
        psi.setflags(write=False)
        return psi


# -- full lattice ----------------------------------------------------------


def _roll(a, r, sign=-1):
    return np.roll(a, (sign * r[0], sign * r[1]), axis=(0, 1))


def apply_2d(model: LatticeModel2D, w):
    """``sum_r D_r^T (psi_r D_r w)`` for a scalar field or a field of 2-vectors."""
    w = np.asarray(w, dtype=float)
    psi = model.psi
    if w.ndim == 3:
        psi = psi[..., None]
    eps = model.grid.epsilon
    out = np.zeros_like(w)
    for k, (r, length) in enumerate(zip(model.bonds.neighbors, model.bonds.neighbors.lengths)):
        h = eps * length
        a = psi[k] * (_roll(w, r) - w) / h
        out += (_roll(a, r, +1) - a) / h
    return out


def _values(u):
    return u.values if isinstance(u, VectorFn2D) else np.asarray(u, dtype=float)


def residual_2d(model: LatticeModel2D, u, f) -> VectorFn2D:
    """Residual of the 2D equilibrium equations; zero at the solution."""
    return VectorFn2D(model.grid, apply_2d(model, _values(u)) - _values(f))


def energy_2d(model: LatticeModel2D, u, f):
    u = _values(u)
    eps = model.grid.epsilon
    psi = model.psi
    e = 0.0
    for k, (r, length) in enumerate(zip(model.bonds.neighbors, model.bonds.neighbors.lengths)):
        g = (_roll(u, r) - u) / (eps * length)
        e += 0.5 * float(np.mean(psi[k] * np.sum(g * g, axis=-1)))
    return e - float(np.mean(np.sum(_values(f) * u, axis=-1)))


def _jacobi(model):
    psi = model.psi
    eps = model.grid.epsilon
    d = np.zeros(model.grid.shape)
    for k, (r, length) in enumerate(zip(model.bonds.neighbors, model.bonds.neighbors.lengths)):
        d += (psi[k] + _roll(psi[k], r, +1)) / (eps * length) ** 2
    return d


def solve_full_2d(model: LatticeModel2D, f, tol=1e-12, max_iter=None, return_info=False):
    """Zero-mean solution of the 2D equilibrium equations by projected CG per component."""
    f = _values(f)
    shape = model.grid.shape
    if f.shape != (*shape, 2):
        raise ValueError(f"force must have shape {(*shape, 2)}")
    for c in range(2):
        check_zero_mean_rhs(f[..., c])
    op = LinearOperator(shape, lambda w: apply_2d(model, w), _jacobi(model))
    u = np.zeros_like(f)
    iters = []
    for c in range(2):
        try:
            u[..., c], it = solve_constrained_cg(op, f[..., c], tol=tol, max_iter=max_iter,
                                                 return_info=True)
        except SingularSystem as exc:
            raise NonCoercive(f"2D operator is not coercive: {exc}", value=exc.pivot) from exc
        iters.append(it)
    out = VectorFn2D(model.grid, u)
    return (out, iters) if return_info else out


def force_case2d(grid: Grid2D, amplitude=10.0):
    """Smooth periodic test force with its mean removed."""
    i1, i2 = np.meshgrid(np.arange(1, grid.n1 + 1), np.arange(1, grid.n2 + 1), indexing="ij")
    a1, a2 = np.pi * i1 / grid.n1, np.pi * i2 / grid.n2
    env = amplitude * np.exp(-np.cos(a1) ** 2 - np.cos(a2) ** 2)
    f = np.stack([env * np.sin(2 * a1), env * np.sin(2 * a2)], axis=-1)
    return VectorFn2D(grid, f - f.mean(axis=(0, 1)))


def l2_2d(v):
    v = _values(v)
    return float(np.sqrt(np.mean(np.sum(v * v, axis=-1))))


def h1_2d(v, epsilon):
    v = _values(v)
    total = 0.0
    for axis in (0, 1):
        d = (np.roll(v, -1, axis=axis) - v) / epsilon
        total += float(np.mean(np.sum(d * d, axis=-1)))
    return float(np.sqrt(total))


def write_deformed_csv(path, u: VectorFn2D):
    """Deformed positions ``x = X + u`` with columns i1, i2, x1, x2."""
    x = u.grid.sites() + u.values
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i1", "i2", "x1", "x2"])
        for s1 in range(u.grid.n1):
            for s2 in range(u.grid.n2):
                w.writerow([s1 + 1, s2 + 1, repr(float(x[s1, s2, 0])), repr(float(x[s1, s2, 1]))])


# -- cell problems ---------------------------------------------------------


@lru_cache(maxsize=None)
def _cell_shift(p, r):
    """Matrix of ``x -> x_{j+r}`` on the flattened ``p1 x p2`` periodic cell."""
    p1, p2 = p
    j1, j2 = np.meshgrid(np.arange(p1), np.arange(p2), indexing="ij")
    src = (((j1 + r[0]) % p1) * p2 + (j2 + r[1]) % p2).ravel()
    S = np.zeros((p1 * p2, p1 * p2))
    S[np.arange(p1 * p2), src] = 1.0
    S.setflags(write=False)
    return S


@lru_cache(maxsize=None)
def _cell_basis(P):
    Q = sla.null_space(np.ones((1, P)))
    Q.setflags(write=False)
    return Q


_CONVENTIONS = ("bond", "model")


def _weights(bonds, convention):
    if convention not in _CONVENTIONS:
        raise ValueError(f"convention must be one of {_CONVENTIONS}")
    w = bonds.values.reshape(len(bonds.neighbors), -1)
    if convention == "model":
        w = w / bonds.neighbors.lengths[:, None] ** 2
    return w


def _cell_system(bonds, convention):
    p = bonds.p
    P = p[0] * p[1]
    w = _weights(bonds, convention)
    eye = np.eye(P)
    A = np.zeros((P, P))
    rhs = np.zeros((2, P))
    diffs = []
    for k, r in enumerate(bonds.neighbors):
        D = _cell_shift(p, r) - eye
        diffs.append(D)
        A += D.T @ (w[k][:, None] * D)
        for a in range(2):
            rhs[a] -= D.T @ (w[k] * r[a])
    return A, rhs, diffs, w


@dataclass(frozen=True)
class CellSolution2D:
    """Correctors ``chi_alpha = chi[alpha] * I`` on one fast period."""

    chi: np.ndarray
    min_eig: float
    residual: float
    convention: str

    def matrix(self, alpha):
        """``chi_alpha`` as a ``(p1, p2, 2, 2)`` matrix field."""
        return self.chi[alpha][..., None, None] * np.eye(2)


def solve_cell_2d(bonds: BondTensors2D, convention="bond") -> CellSolution2D:
    """Solve both 2D cell problems on the zero-mean fast-periodic space."""
    p = bonds.p
    P = p[0] * p[1]
    if P == 1:
        return CellSolution2D(np.zeros((2, *p)), np.inf, 0.0, convention)
    A, rhs, _, _ = _cell_system(bonds, convention)
    Q = _cell_basis(P)
    Ar = Q.T @ A @ Q
    evals = np.linalg.eigvalsh(Ar)
    scale = max(float(np.abs(A).max()), 1e-300)
    if evals[0] <= 1e-12 * scale:
        raise NonCoercive(f"2D cell problem is not coercive (smallest eigenvalue {evals[0]:.3e})",
                          value=float(evals[0]))
    coef = np.linalg.solve(Ar, Q.T @ rhs.T)
    chi = (Q @ coef).T
    chi -= chi.mean(axis=1, keepdims=True)
    res = A @ chi.T - rhs.T
    res = float(np.abs(res - res.mean(axis=0)).max())
    return CellSolution2D(chi.reshape(2, *p), float(evals[0]), res, convention)


@dataclass(frozen=True)
class HomogenizedTensor2D:
    """``psi0[alpha, beta]`` is the scalar multiplying the 2x2 identity in psi0_{alpha beta}."""

    psi0: np.ndarray
    convention: str = "bond"

    def matrix(self, alpha, beta):
        return self.psi0[alpha, beta] * np.eye(2)

    def full(self):
        """Four-index array ``T[alpha, beta] = psi0_{alpha beta}`` (2x2 blocks)."""
        return self.psi0[:, :, None, None] * np.eye(2)

    def strain_form(self, G, H):
        """Bilinear form ``sum_{ab} G[:, a] . psi0_{ab} H[:, b]`` for 2x2 strains."""
        G, H = np.asarray(G, float), np.asarray(H, float)
        return float(np.einsum("ca,ab,cb->", G, self.psi0, H))

    @property
    def min_eig(self):
        return float(np.linalg.eigvalsh(0.5 * (self.psi0 + self.psi0.T))[0])


def homogenize_2d(bonds: BondTensors2D, cell: CellSolution2D | None = None,
                  convention="bond") -> HomogenizedTensor2D:
    """Homogenized tensors ``sum_r < w_r (r_alpha + D_r chi_alpha) r_beta >``.

    In the ``"bond"`` convention the fast reduction is the sum over one period,
    in the ``"model"`` convention it is the average.
    """
    if cell is None:
        cell = solve_cell_2d(bonds, convention)
    elif cell.convention != convention:
        raise ValueError(f"cell solution uses the {cell.convention!r} convention")
    A, rhs, diffs, w = _cell_system(bonds, convention)
    chi = cell.chi.reshape(2, -1)
    T = np.zeros((2, 2))
    for k, r in enumerate(bonds.neighbors):
        for a in range(2):
            flux = w[k] * (r[a] + diffs[k] @ chi[a])
            for b in range(2):
                T[a, b] += np.sum(flux) * r[b]
    if convention == "model":
        T /= chi.shape[1]
    return HomogenizedTensor2D(T, convention)


def checkerboard_closed_form(k1, k2, k3):
    """Closed forms for the checkerboard material: (chi amplitude, psi0_11, psi0_12)."""
    amp = (k1 - k2) / (4.0 * (k1 + k2))
    d = k1 + k2 + 4.0 * k1 * k2 / (k1 + k2) + 8.0 * k3
    o = -((k1 - k2) ** 2) / (k1 + k2)
    return amp, d, o


# -- triangulated HQC ------------------------------------------------------

# barycentric gradients (in units of 1/H) of the lower (x >= y) and upper
# triangle of a unit square, vertex order as in TriangleMesh2D.element_nodes
_GRADS = np.array([
    [[-1.0, 0.0], [1.0, -1.0], [0.0, 1.0]],
    [[0.0, -1.0], [1.0, 0.0], [-1.0, 1.0]],
])


@dataclass(frozen=True)
class TriangleMesh2D:
    """Uniform right-triangle mesh with ``t x t`` nodes on an ``N x N`` lattice.

    Node ``(a, b)`` sits at the atom with 0-based index ``(a M, b M)``,
    ``M = N / t``.  Each square is split along its main diagonal into a lower
    (``x >= y``) and an upper triangle; element ``2 (a t + b) + tri``.
    """

    N: int
    t: int

    def __post_init__(self):
        if self.t < 1 or self.N % self.t:
            raise ValueError(f"t={self.t} must divide N={self.N}")

    @property
    def M(self):
        return self.N // self.t

    @property
    def K(self):
        return 2 * self.t * self.t

    @property
    def epsilon(self):
        return 1.0 / self.N

    @property
    def H(self):
        return 1.0 / self.t

    @property
    def area(self):
        return 0.5 * self.H**2

    @property
    def n_nodes(self):
        return self.t * self.t

    def element_nodes(self):
        t = self.t
        a, b = np.meshgrid(np.arange(t), np.arange(t), indexing="ij")
        a, b = a.ravel(), b.ravel()

        def node(x, y):
            return (x % t) * t + (y % t)

        lower = np.stack([node(a, b), node(a + 1, b), node(a + 1, b + 1)], axis=1)
        upper = np.stack([node(a, b), node(a + 1, b + 1), node(a, b + 1)], axis=1)
        out = np.empty((self.K, 3), dtype=int)
        out[0::2], out[1::2] = lower, upper
        return out

    def gradients(self):
        """Basis gradients per element, shape ``(K, 3, 2)``."""
        return np.tile(_GRADS, (self.t * self.t, 1, 1)) / self.H

    def site_map(self):
        """Element index ``(N, N)`` and barycentric weights ``(N, N, 3)`` of every atom."""
        M = self.M
        s = np.arange(self.N)
        a, x = s // M, (s % M) / M
        A1, A2 = np.meshgrid(a, a, indexing="ij")
        X, Y = np.meshgrid(x, x, indexing="ij")
        upper = Y > X
        elem = 2 * (A1 * self.t + A2) + upper
        lam = np.where(upper[..., None],
                       np.stack([1 - Y, X, Y - X], axis=-1),
                       np.stack([1 - X, X - Y, Y], axis=-1))
        return elem, lam

    def interpolate(self, nodal):
        """Values of the P1 field with nodal values ``nodal`` (t*t, ...) at every atom."""
        nodal = np.asarray(nodal, dtype=float)
        elem, lam = self.site_map()
        nodes = self.element_nodes()[elem]
        return np.einsum("ijk,ijk...->ij...", lam, nodal[nodes])

    def basis_loads(self, g):
        """``(1/N^2) sum_i g_i phi_l(X_i)`` for every node ``l``; ``g`` scalar or vector."""
        g = np.asarray(g, dtype=float)
        elem, lam = self.site_map()
        nodes = self.element_nodes()[elem]
        out = np.zeros((self.n_nodes,) + g.shape[2:])
        contrib = lam[..., None] * g[:, :, None, ...] if g.ndim == 3 else lam * g[..., None]
        np.add.at(out, nodes.reshape(-1), contrib.reshape((-1,) + g.shape[2:]))
        return out / self.N**2


@dataclass(frozen=True)
class SamplingRect:
    element: int
    start: tuple
    p: tuple
    inside: bool

    def sites(self):
        """0-based ``(s1, s2)`` index arrays of the window atoms."""
        j1 = self.start[0] + np.arange(self.p[0])
        j2 = self.start[1] + np.arange(self.p[1])
        return np.meshgrid(j1, j2, indexing="ij")


def choose_sampling_2d(mesh: TriangleMesh2D, p=(2, 2)):
    """The ``p1 x p2`` block nearest each triangle centroid, kept inside its square.

    ``inside`` records whether every window atom lies in the triangle itself.
    """
    M = mesh.M
    if M < max(p):
        raise ValueError(f"element squares of {M} atoms cannot hold a {p} window")
    centroids = ((2 / 3, 1 / 3), (1 / 3, 2 / 3))
    out = []
    for k in range(mesh.K):
        sq, tri = divmod(k, 2)
        a, b = divmod(sq, mesh.t)
        start = []
        for d, base in enumerate((a * M, b * M)):
            off = int(np.floor(centroids[tri][d] * M - (p[d] - 1) / 2 + 0.5))
            start.append(base + min(max(off, 0), M - p[d]))
        x = start[0] - a * M + np.arange(p[0])
        y = start[1] - b * M + np.arange(p[1])
        X, Y = np.meshgrid(x, y, indexing="ij")
        inside = bool(np.all(X >= Y)) if tri == 0 else bool(np.all(Y > X))
        out.append(SamplingRect(k, tuple(start), tuple(p), inside))
    return out


def _assemble(mesh, tensors):
    """Global P1 stiffness (scalar, per displacement component)."""
    nodes = mesh.element_nodes()
    G = mesh.gradients()
    Ke = mesh.area * np.einsum("kia,kab,kjb->kij", G, tensors, G)
    rows = np.repeat(nodes, 3, axis=1).ravel()
    cols = np.tile(nodes, (1, 3)).ravel()
    return sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes))


def _solve_macro(mesh, Kmat, F):
    """Fix node 0, solve, and recenter so that the atom average vanishes."""
    U = np.zeros_like(F)
    if mesh.n_nodes > 1:
        lu = spla.splu(sp.csc_matrix(Kmat[1:, 1:]))
        U[1:] = lu.solve(np.ascontiguousarray(F[1:]))
    means = mesh.basis_loads(np.ones((mesh.N, mesh.N)))
    return U - means @ U


def fem_p1_solve(mesh: TriangleMesh2D, tensor, f):
    """Standard P1 solve with a constant coefficient tensor and exact load."""
    tensors = np.broadcast_to(np.asarray(tensor, float), (mesh.K, 2, 2))
    F = mesh.basis_loads(_values(f))
    return _solve_macro(mesh, _assemble(mesh, tensors), F)


@dataclass(frozen=True, eq=False)
class HQC2DSolution:
    mesh: TriangleMesh2D
    sampling: list
    nodal: np.ndarray
    tensors: np.ndarray
    chi: np.ndarray

    @property
    def values(self):
        return self.mesh.interpolate(self.nodal)

    def strains(self):
        """Element gradients ``G[k, c, alpha]``."""
        nodes = self.mesh.element_nodes()
        return np.einsum("kia,kic->kca", self.mesh.gradients(), self.nodal[nodes])


def hqc2d_solve(model: LatticeModel2D, f, mesh: TriangleMesh2D, sampling=None,
                load_mode="exact") -> HQC2DSolution:
    """Linear triangle HQC: relaxed window tensors, P1 macro solve, zero mean."""
    if model.grid.shape != (mesh.N, mesh.N):
        raise ValueError("mesh and lattice sizes differ")
    p = model.bonds.p
    sampling = choose_sampling_2d(mesh, p) if sampling is None else sampling
    tensors = np.empty((mesh.K, 2, 2))
    chis = np.empty((mesh.K, 2, *p))
    cache = {}
    for rect in sampling:
        phase = (rect.start[0] % p[0], rect.start[1] % p[1])
        if phase not in cache:
            local = BondTensors2D(model.bonds.neighbors, model.bonds.window(phase))
            cell = solve_cell_2d(local, "model")
            cache[phase] = (homogenize_2d(local, cell, "model").psi0, cell.chi)
        tensors[rect.element], chis[rect.element] = cache[phase]
    f = _values(f)
    if load_mode == "exact":
        F = mesh.basis_loads(f)
    elif load_mode == "sampled":
        F = _sampled_load(mesh, sampling, f)
    else:
        raise ValueError("load_mode must be 'exact' or 'sampled'")
    U = _solve_macro(mesh, _assemble(mesh, tensors), F)
    return HQC2DSolution(mesh, list(sampling), U, tensors, chis)


def _sampled_load(mesh, sampling, f):
    nodes = mesh.element_nodes()
    F = np.zeros((mesh.n_nodes, 2))
    for rect in sampling:
        s1, s2 = rect.sites()
        # barycentric weights of the element extended affinely to the window
        k = rect.element
        sq, tri = divmod(k, 2)
        a, b = divmod(sq, mesh.t)
        x = (s1 - a * mesh.M) / mesh.M
        y = (s2 - b * mesh.M) / mesh.M
        if tri == 0:
            lam_w = np.stack([1 - x, x - y, y], axis=-1)
        else:
            lam_w = np.stack([1 - y, x, y - x], axis=-1)
        fw = f[s1 % mesh.N, s2 % mesh.N]
        contrib = mesh.area * np.einsum("xyi,xyc->ic", lam_w, fw) / fw[..., 0].size
        np.add.at(F, nodes[k], contrib)
    means = mesh.basis_loads(np.ones((mesh.N, mesh.N)))
    return F - means[:, None] * F.sum(axis=0)


def reconstruct_2d(sol: HQC2DSolution) -> VectorFn2D:
    """``u^H`` plus the relaxed window pattern folded mod ``p`` over each triangle."""
    mesh = sol.mesh
    uH = sol.values
    elem, _ = mesh.site_map()
    p = sol.chi.shape[2:]
    G = sol.strains()
    starts = np.array([r.start for r in sol.sampling])
    s1, s2 = np.meshgrid(np.arange(mesh.N), np.arange(mesh.N), indexing="ij")
    j1 = (s1 - starts[elem, 0]) % p[0]
    j2 = (s2 - starts[elem, 1]) % p[1]
    chi = sol.chi[elem, :, j1, j2]
    fluct = mesh.epsilon * np.einsum("ija,ijca->ijc", chi, G[elem])
    grid = Grid2D(mesh.N, mesh.N)
    return VectorFn2D(grid, uH + fluct)


def interpolate_p1(u, mesh: TriangleMesh2D):
    """Nodal interpolant of an atom field, as values at every atom."""
    u = _values(u)
    M = mesh.M
    nodal = u[::M, ::M].reshape(mesh.n_nodes, *u.shape[2:])
    return mesh.interpolate(nodal)
