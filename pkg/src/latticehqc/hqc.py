"""Homogenized quasicontinuum method for periodic chains.

The chain is covered by ``K`` macro elements with nodes ``i_1 = 1 < i_2 < ...
< i_K`` (1-based atom indices, ``i_{K+1} = N + 1``).  Macro displacements are
piecewise affine in the atom index.  Every element carries one sampling window
of ``p`` consecutive atoms where the micro shift is relaxed at the element
strain; the element stress is the window-averaged bond stress of the relaxed
micro state.

Internally every quantity is stored 0-based; mesh and sampling objects expose
1-based atom indices.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np
import scipy.linalg as sla

from .cell import CellResponse, _differences, cell_response, homogenize_nn, solve_cell_finite_range
from .errors import DomainViolation, NoConvergence, NonCoercive, SingularSystem
from .grid import LatticeFn1D, PeriodicGrid1D, h1, lq
from .model import AtomisticModel, Harmonic

__all__ = [
    "MacroMesh",
    "SamplingDomain",
    "MacroFn",
    "MicroState",
    "HQCProblem",
    "HQCSolution",
    "build_mesh",
    "uniform_mesh",
    "choose_sampling",
    "solve_hqc",
    "solve_hqc_collocated",
    "naive_qc",
    "reconstruct",
    "micro_solve",
    "micro_tangent_solve",
    "hqc_energy",
    "hqc_gradient",
    "hqc_hessian",
    "qc_on_psi0",
    "modeling_error",
    "modeling_error_nn",
    "interpolate_nodal",
    "collocated_psi0",
    "ModelingError",
]


# -- mesh and sampling ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class MacroMesh:
    """Periodic P1 mesh over an ``N``-atom chain.

    ``nodes`` are 1-based atom indices, strictly increasing, starting at 1.
    """

    N: int
    nodes: np.ndarray
    length: float = 1.0

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=int)
        if nodes.ndim != 1 or nodes.size < 1:
            raise ValueError("mesh needs at least one node")
        if nodes[0] != 1:
            raise ValueError("the first node must be atom 1")
        if np.any(np.diff(nodes) <= 0) or nodes[-1] > self.N:
            raise ValueError("nodes must be strictly increasing atom indices in 1..N")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def K(self):
        return self.nodes.size

    @property
    def epsilon(self):
        return self.length / self.N

    @property
    def sizes(self):
        """Atoms per element, ``i_{k+1} - i_k``."""
        return np.diff(np.append(self.nodes, self.N + 1))

    @property
    def element_lengths(self):
        return self.epsilon * self.sizes

    @property
    def H(self):
        return float(self.element_lengths.max())

    def element_of_site(self):
        """Element index (0-based) of every atom (0-based storage order)."""
        return np.repeat(np.arange(self.K), self.sizes)

    def local_coordinate(self):
        """Fraction ``(i - i_k) / (i_{k+1} - i_k)`` of every atom in its element."""
        k = self.element_of_site()
        offset = np.arange(self.N) - (self.nodes[k] - 1)
        return offset / self.sizes[k]

    def interpolate(self, nodal):
        """Values on all atoms of the piecewise affine function with ``nodal`` values."""
        nodal = np.asarray(nodal, dtype=float)
        k = self.element_of_site()
        lam = self.local_coordinate()
        return (1.0 - lam) * nodal[k] + lam * np.roll(nodal, -1)[k]

    def strains(self, nodal):
        nodal = np.asarray(nodal, dtype=float)
        return (np.roll(nodal, -1) - nodal) / self.element_lengths

    def basis_means(self):
        """``<w_l>_X`` for every nodal hat function ``w_l``."""
        k = self.element_of_site()
        lam = self.local_coordinate()
        out = np.bincount(k, 1.0 - lam, self.K) + np.roll(np.bincount(k, lam, self.K), 1)
        return out / self.N

    def load_exact(self, f):
        """``F_l = <f, w_l>_X`` for every nodal hat function."""
        f = np.asarray(f, dtype=float)
        k = self.element_of_site()
        lam = self.local_coordinate()
        out = np.bincount(k, (1.0 - lam) * f, self.K) + np.roll(np.bincount(k, lam * f, self.K), 1)
        return out / self.N


def build_mesh(N, node_indices, length=1.0):
    return MacroMesh(int(N), np.asarray(node_indices, dtype=int), length)


def uniform_mesh(N, K, length=1.0):
    """Balanced mesh with ``K`` elements whose sizes differ by at most one atom."""
    if not 1 <= K <= N:
        raise ValueError(f"need 1 <= K <= N, got K={K}, N={N}")
    return MacroMesh(int(N), 1 + (np.arange(K) * N) // K, length)


@dataclass(frozen=True)
class SamplingDomain:
    """Sampling window ``rep_start .. rep_start + width - 1`` (1-based atoms)."""

    element: int
    rep_start: int
    width: int
    coll: int
    centered: bool = True

    @property
    def sites(self):
        return np.arange(self.rep_start, self.rep_start + self.width)


def choose_sampling(mesh: MacroMesh, p, placement="centered"):
    """One sampling window of ``p`` atoms per element.

    ``centered`` places the window centre as close to the element midpoint as
    possible (ties go left) and collocates at the window's central atom, the
    left one of the two central atoms for even ``p``.  ``left`` starts the
    window at the element's first atom.
    """
    if placement not in ("centered", "left"):
        raise ValueError(f"unknown placement {placement!r}")
    if mesh.N % p:
        raise ValueError(f"fast period p={p} must divide N={mesh.N}")
    sizes = mesh.sizes
    if np.any(sizes < p):
        k = int(np.argmin(sizes))
        raise ValueError(f"element {k + 1} has {sizes[k]} atoms, fewer than p={p}")
    out = []
    for k in range(mesh.K):
        first = int(mesh.nodes[k])
        last = first + int(sizes[k]) - 1
        if placement == "centered":
            mid = 0.5 * (first + last)
            start = int(np.ceil(mid - (p - 1) / 2.0 - 0.5))
            start = min(max(start, first), last - p + 1)
        else:
            start = first
        out.append(SamplingDomain(k, start, p, start + (p - 1) // 2, placement == "centered"))
    return tuple(out)


def _window_index(sampling):
    """(K, p) array of 0-based atom indices of every sampling window."""
    return np.stack([s.sites - 1 for s in sampling])


def _rep_offsets(sampling):
    return np.array([s.rep_start - 1 for s in sampling])


# -- macro functions ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MacroFn:
    """Piecewise affine function given by its nodal values."""

    mesh: MacroMesh
    nodal: np.ndarray

    def __post_init__(self):
        v = np.array(self.nodal, dtype=float)
        if v.shape != (self.mesh.K,):
            raise ValueError(f"expected {self.mesh.K} nodal values")
        v.setflags(write=False)
        object.__setattr__(self, "nodal", v)

    @property
    def values(self):
        return self.mesh.interpolate(self.nodal)

    def as_lattice(self):
        return LatticeFn1D(PeriodicGrid1D(self.mesh.N, self.mesh.epsilon), self.values)

    def strains(self):
        return self.mesh.strains(self.nodal)

    def recentered(self):
        return MacroFn(self.mesh, self.nodal - self.values.mean())


@dataclass(frozen=True, eq=False)
class MicroState:
    """Relaxed micro displacement on a sampling window (1-based atoms ``sites``).

    ``values = u^H + eps * chi`` on the window, where ``chi`` is the zero-mean
    periodic shift in strain units and ``strain`` the element strain.
    """

    element: int
    sites: np.ndarray
    values: np.ndarray
    strain: float
    chi: np.ndarray


def _macro_solve(mesh, moduli_over_H, load):
    """Solve the P1 system with node 1 eliminated.

    ``moduli_over_H[k]`` is the coefficient coupling the two nodes of element
    ``k``.  The returned increment has a zero first entry.
    """
    K = mesh.K
    if K == 1:
        return np.zeros(1)
    a = np.asarray(moduli_over_H, dtype=float)
    diag = a + np.roll(a, 1)
    ab = np.zeros((2, K - 1))
    ab[0] = diag[1:]
    ab[1, :-1] = -a[1:K - 1]
    rhs = np.asarray(load, dtype=float)[1:]
    if K == 2:
        if not diag[1] > 0:
            raise SingularSystem("macro stiffness is singular", pivot=float(diag[1]))
        return np.array([0.0, rhs[0] / diag[1]])
    try:
        x = sla.solveh_banded(ab, rhs, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        try:
            full = np.zeros((3, K - 1))
            full[1] = ab[0]
            full[0, 1:] = ab[1, :-1]
            full[2, :-1] = ab[1, :-1]
            x = sla.solve_banded((1, 1), full, rhs, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(f"macro stiffness is singular: {exc}") from exc
    return np.concatenate([[0.0], x])


# -- HQC problem ----------------------------------------------------------


@dataclass(frozen=True)
class HQCSolution:
    """Converged HQC state.

    ``chi`` holds the relaxed micro shift per element in strain units; the
    micro displacement on the window is ``u^H + eps * chi``.
    """

    problem: "HQCProblem"
    uH: MacroFn
    strain: np.ndarray
    stress: np.ndarray
    modulus: np.ndarray
    chi: np.ndarray
    dchi: np.ndarray
    iterations: int
    residual: float

    @property
    def mesh(self):
        return self.uH.mesh

    @property
    def sampling(self):
        return self.problem.sampling

    @property
    def values(self):
        return self.uH.values

    def micro_states(self):
        eps = self.mesh.epsilon
        u = self.values
        out = []
        for k, s in enumerate(self.sampling):
            idx = s.sites - 1
            out.append(MicroState(k, s.sites.copy(), u[idx] + eps * self.chi[k],
                                  float(self.strain[k]), self.chi[k].copy()))
        return out


@dataclass(frozen=True, eq=False)
class HQCProblem:
    """Everything needed to evaluate the HQC energy and its derivatives.

    ``pots[r-1]`` are the window pair potentials with parameters of shape
    ``(K, p)``: row ``k`` holds the bonds leaving the atoms of window ``k``.
    ``relax=False`` freezes the micro shift at zero, which gives the naive QC
    method.  ``micro`` selects full micro relaxation per macro iterate
    (``newton``) or a single linearized micro update per macro iterate
    (``linearized``).
    """

    mesh: MacroMesh
    sampling: tuple
    pots: tuple
    f: np.ndarray
    load_mode: str = "exact"
    relax: bool = True
    micro: str = "newton"
    micro_tol: float = 1e-12

    def __post_init__(self):
        if self.load_mode not in ("exact", "sampled"):
            raise ValueError(f"unknown load mode {self.load_mode!r}")
        if self.micro not in ("newton", "linearized"):
            raise ValueError(f"unknown micro mode {self.micro!r}")
        if len(self.sampling) != self.mesh.K:
            raise ValueError("need exactly one sampling window per element")
        f = np.array(self.f, dtype=float)
        f.setflags(write=False)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "pots", tuple(self.pots))

    @property
    def p(self):
        return self.sampling[0].width

    @classmethod
    def from_model(cls, model: AtomisticModel, mesh, sampling, **kw):
        idx = _window_index(sampling)
        pots = tuple(pot.take(idx) for pot in model.site_potentials)
        return cls(mesh, tuple(sampling), pots, model.f, **kw)

    @classmethod
    def collocated(cls, psi, f, mesh, sampling, **kw):
        """Linear nearest-neighbour problem with ``psi(X, Y)`` frozen at ``X_coll``.

        ``psi`` is an (N, p) two-scale table; window atom ``i`` uses
        ``psi(X_coll, i mod p)``.
        """
        psi = np.asarray(psi, dtype=float)
        p = psi.shape[1]
        idx = _window_index(sampling)
        coll = np.array([s.coll - 1 for s in sampling])
        k = psi[coll[:, None], idx % p]
        return cls(mesh, tuple(sampling), (Harmonic(k, 1.0),), f, **kw)

    def load(self):
        """Load vector; in sampled mode corrected so that it sums to zero."""
        mesh = self.mesh
        if self.load_mode == "exact":
            return mesh.load_exact(self.f)
        idx = _window_index(self.sampling)
        lam = mesh.local_coordinate()[idx]
        fw = self.f[idx]
        Hk = mesh.element_lengths
        down = Hk * np.mean((1.0 - lam) * fw, axis=1)
        up = Hk * np.mean(lam * fw, axis=1)
        F = down + np.roll(up, 1)
        return F - mesh.basis_means() * F.sum()

    def respond(self, nodal, chi0=None, max_iter=50) -> CellResponse:
        z = self.mesh.strains(nodal)
        if self.relax:
            return cell_response(z, self.pots, chi0, tol=self.micro_tol, p=self.p,
                                 max_iter=max_iter, strict=self.micro == "newton")
        return _frozen_response(z, self.pots, self.p)

    def energy(self, nodal, chi0=None):
        """``E^HQC(u^H)``: element lengths times window-averaged bond energies."""
        resp = self.respond(nodal, chi0)
        return float(np.sum(self.mesh.element_lengths * resp.energy))

    def total_energy(self, nodal, chi0=None):
        return self.energy(nodal, chi0) - float(np.dot(self.load(), nodal))

    def gradient(self, nodal, v, resp=None):
        """``(E^HQC)'(u^H; v^H)`` in the form with ``D v^H`` on the window."""
        resp = self.respond(nodal) if resp is None else resp
        Hk = self.mesh.element_lengths
        return float(np.sum(Hk * resp.flux * self.mesh.strains(v)))

    def hessian(self, nodal, w, v, resp=None):
        """Symmetric second variation built from the micro tangent solutions."""
        resp = self.respond(nodal) if resp is None else resp
        mesh = self.mesh
        Hk = mesh.element_lengths
        zw, zv = mesh.strains(w), mesh.strains(v)
        c = _window_moduli(self.pots, resp, self.p)
        D = _differences(self.p, len(self.pots))
        dchi = solve_cell_finite_range(c) if self.relax else np.zeros_like(resp.chi)
        grad = 1.0 + np.einsum("rjk,mk->mrj", D, dchi)
        per_element = np.sum(c * grad * grad, axis=(1, 2)) / self.p
        return float(np.sum(Hk * per_element * zw * zv))

    def stiffness(self, resp):
        """Dense macro stiffness (for tests; the solver uses band storage)."""
        K = self.mesh.K
        a = resp.modulus / self.mesh.element_lengths
        A = np.zeros((K, K))
        for k in range(K):
            l, m = k, (k + 1) % K
            A[l, l] += a[k]
            A[m, m] += a[k]
            A[l, m] -= a[k]
            A[m, l] -= a[k]
        return A

    def solve(self, tol=1e-10, max_iter=50, max_halvings=30, u0=None) -> HQCSolution:
        """Macro Newton iteration with node 1 eliminated, then recentered."""
        mesh = self.mesh
        F = self.load()
        U = np.zeros(mesh.K) if u0 is None else np.asarray(u0, dtype=float).copy()
        micro_iter = 1 if self.micro == "linearized" else 50
        resp = self.respond(U, max_iter=micro_iter)
        E = self._merit(U, resp, F)
        iterations = 0
        while True:
            sigma = resp.flux
            res = np.roll(sigma, 1) - sigma - F
            rnorm = float(np.max(np.abs(res)))
            a = resp.modulus / mesh.element_lengths
            if np.any(resp.modulus <= 0):
                raise NonCoercive("macro tangent is not positive", value=float(resp.modulus.min()))
            delta = _macro_solve(mesh, a, -res)
            snorm = float(np.max(np.abs(delta)))
            micro_ok = (not self.relax) or np.all(np.asarray(resp.residual) <= self.micro_tol)
            if rnorm <= tol and snorm <= tol and micro_ok:
                break
            if iterations >= max_iter:
                raise NoConvergence(max_iter, rnorm, "macro Newton did not converge")
            t = 1.0
            for _ in range(max_halvings + 1):
                trial = U + t * delta
                try:
                    tr = self.respond(trial, chi0=resp.chi, max_iter=micro_iter)
                    Et = self._merit(trial, tr, F)
                except (DomainViolation, NoConvergence, NonCoercive):
                    Et = np.inf
                if Et <= E + 1e-12 * max(1.0, abs(E)):
                    break
                t *= 0.5
            else:
                raise NoConvergence(max_iter, rnorm, "macro step halving failed")
            U, resp, E = trial, tr, Et
            iterations += 1
        U = U - mesh.interpolate(U).mean()
        return HQCSolution(self, MacroFn(mesh, U), resp.z, resp.flux, resp.modulus,
                           np.atleast_2d(resp.chi), np.atleast_2d(resp.dchi), iterations, rnorm)

    def _merit(self, U, resp, F):
        return float(np.sum(self.mesh.element_lengths * resp.energy) - np.dot(F, U))


def _frozen_response(z, pots, p):
    """Window response with the micro shift held at zero."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    M = z.shape[0]
    R = len(pots)
    energy = np.zeros(M)
    flux = np.zeros(M)
    modulus = np.zeros(M)
    for r in range(1, R + 1):
        arg = np.broadcast_to(r + r * z[:, None], (M, p))
        bad = np.broadcast_to(pots[r - 1].violations(arg), (M, p))
        if np.any(bad):
            m, j = np.argwhere(bad)[0]
            raise DomainViolation(int(j) + 1, r, float(arg[m, j]))
        energy += np.mean(pots[r - 1].eval(arg), axis=1)
        flux += np.mean(r * pots[r - 1].deriv(arg), axis=1)
        modulus += np.mean(r * r * pots[r - 1].deriv2(arg), axis=1)
    zero = np.zeros((M, p))
    return CellResponse(z, zero, flux, modulus, zero, np.full(M, np.inf), 0, energy, np.zeros(M))


def _window_moduli(pots, resp, p):
    """Bond moduli ``r^2 phi''`` at the relaxed window state, shape (K, R, p)."""
    chi = np.atleast_2d(resp.chi)
    z = np.atleast_1d(resp.z)
    R = len(pots)
    D = _differences(p, R)
    x = z[:, None, None] + np.einsum("rjk,mk->mrj", D, chi)
    return np.stack([r * r * np.broadcast_to(pots[r - 1].deriv2(r + r * x[:, r - 1]), x[:, 0].shape)
                     for r in range(1, R + 1)], axis=1)


# -- public entry points --------------------------------------------------


def solve_hqc(model: AtomisticModel, mesh: MacroMesh, sampling=None, tol=1e-10,
              load_mode="exact", micro="newton", max_iter=50) -> HQCSolution:
    """HQC solution of ``model`` on ``mesh`` with relaxed sampling windows."""
    sampling = choose_sampling(mesh, model.p) if sampling is None else sampling
    problem = HQCProblem.from_model(model, mesh, sampling, load_mode=load_mode, micro=micro)
    return problem.solve(tol, max_iter)


def solve_hqc_collocated(psi, f, mesh, sampling=None, tol=1e-10, load_mode="exact"):
    """Linear nearest-neighbour HQC with the two-scale modulus collocated per window."""
    psi = np.asarray(psi, dtype=float)
    sampling = choose_sampling(mesh, psi.shape[1]) if sampling is None else sampling
    return HQCProblem.collocated(psi, f, mesh, sampling, load_mode=load_mode).solve(tol)


def naive_qc(model: AtomisticModel, mesh: MacroMesh, sampling=None, tol=1e-10,
             load_mode="exact") -> HQCSolution:
    """QC with the identity reconstruction: bonds follow the macro strain exactly."""
    sampling = choose_sampling(mesh, model.p) if sampling is None else sampling
    problem = HQCProblem.from_model(model, mesh, sampling, load_mode=load_mode, relax=False)
    return problem.solve(tol)


def reconstruct(sol: HQCSolution) -> LatticeFn1D:
    """Periodically extend every relaxed window shift over its element."""
    mesh = sol.mesh
    p = sol.problem.p
    k = mesh.element_of_site()
    s = np.arange(mesh.N)
    fold = (s - _rep_offsets(sol.sampling)[k]) % p
    values = sol.values + mesh.epsilon * sol.chi[k, fold]
    return LatticeFn1D(PeriodicGrid1D(mesh.N, mesh.epsilon), values)


def micro_solve(problem: HQCProblem, k, nodal, chi0=None) -> MicroState:
    """Relax window ``k`` for the macro function with ``nodal`` values."""
    z = problem.mesh.strains(nodal)[k]
    pots = tuple(_row(pot, k) for pot in problem.pots)
    resp = cell_response(z, pots, chi0, tol=problem.micro_tol, p=problem.p)
    s = problem.sampling[k]
    u = problem.mesh.interpolate(nodal)[s.sites - 1]
    return MicroState(k, s.sites.copy(), u + problem.mesh.epsilon * resp.chi, float(z), resp.chi)


def micro_tangent_solve(problem: HQCProblem, k, state: MicroState, w_nodal):
    """Derivative of the window reconstruction in the direction ``w_nodal``.

    Solves the window problem linearized at ``state`` under the constraint
    that the result minus ``w^H`` is zero-mean and periodic on the window.
    Only the element strain of ``w^H`` enters the periodic part.
    """
    mesh = problem.mesh
    s = problem.sampling[k]
    wH = mesh.interpolate(w_nodal)[s.sites - 1]
    zw = float(mesh.strains(w_nodal)[k])
    if zw == 0.0:
        return wH
    pots = tuple(_row(pot, k) for pot in problem.pots)
    R = len(pots)
    D = _differences(problem.p, R)
    x = state.strain + D @ state.chi
    c = np.stack([r * r * np.broadcast_to(pots[r - 1].deriv2(r + r * x[r - 1]), (problem.p,))
                  for r in range(1, R + 1)])
    dchi = solve_cell_finite_range(c)
    return wH + mesh.epsilon * zw * dchi


def _row(pot, k):
    """Potential restricted to window ``k`` (parameters of shape (p,))."""
    params = {name: (v[k] if isinstance(v, np.ndarray) and v.ndim == 2 else v)
              for name, v in vars(pot).items()}
    return type(pot)(**params)


def hqc_energy(problem: HQCProblem, nodal):
    return problem.energy(nodal)


def hqc_gradient(problem: HQCProblem, nodal, v):
    return problem.gradient(nodal, v)


def hqc_hessian(problem: HQCProblem, nodal, w, v):
    return problem.hessian(nodal, w, v)


# -- QC for the homogenized equation --------------------------------------


def qc_on_psi0(psi0, f, mesh: MacroMesh) -> MacroFn:
    """P1 Galerkin solution of ``<psi0 D u, D v> = <f, v>`` on zero-mean macro functions.

    ``psi0`` is either a per-atom modulus of length ``N`` (exact pointwise
    coefficient) or a per-element modulus of length ``K`` (collocated).
    """
    psi0 = np.asarray(psi0, dtype=float)
    if np.min(psi0) <= 0:
        raise NonCoercive(f"homogenized modulus must be positive, min is {psi0.min():.3e}",
                          value=float(psi0.min()))
    Hk = mesh.element_lengths
    if psi0.shape == (mesh.N,):
        k = mesh.element_of_site()
        element_modulus = np.bincount(k, psi0, mesh.K) / mesh.sizes
    elif psi0.shape == (mesh.K,):
        element_modulus = psi0
    else:
        raise ValueError(f"psi0 must have length N={mesh.N} or K={mesh.K}")
    F = mesh.load_exact(f)
    U = _macro_solve(mesh, element_modulus / Hk, F)
    return MacroFn(mesh, U).recentered()


def collocated_psi0(psi, sampling):
    """Homogenized modulus at every collocation atom, one value per element."""
    psi = np.asarray(psi, dtype=float)
    coll = np.array([s.coll - 1 for s in sampling])
    return homogenize_nn(psi[coll])


@dataclass(frozen=True)
class ModelingError:
    e_mod: LatticeFn1D
    l2: float
    h1: float


def modeling_error(psi0, psi0_coll, f, mesh: MacroMesh) -> ModelingError:
    """Difference ``u^H - u~^H`` between QC with collocated and with pointwise ``psi0``.

    ``psi0`` has one value per atom, ``psi0_coll`` one value per element.
    """
    u_coll = qc_on_psi0(psi0_coll, f, mesh).values
    u_ref = qc_on_psi0(psi0, f, mesh).values
    e = u_coll - u_ref
    grid = PeriodicGrid1D(mesh.N, mesh.epsilon)
    return ModelingError(LatticeFn1D(grid, e), lq(e), h1(e, mesh.epsilon))


def modeling_error_nn(psi, f, mesh: MacroMesh, sampling=None) -> ModelingError:
    """Modeling error for a nearest-neighbour two-scale table ``psi`` of shape (N, p)."""
    psi = np.asarray(psi, dtype=float)
    sampling = choose_sampling(mesh, psi.shape[1]) if sampling is None else sampling
    return modeling_error(homogenize_nn(psi), collocated_psi0(psi, sampling), f, mesh)


def interpolate_nodal(u, mesh: MacroMesh, zero_mean=True) -> MacroFn:
    """Nodal interpolant of ``u``; recentered to zero mean unless disabled."""
    values = u.values if isinstance(u, LatticeFn1D) else np.asarray(u, dtype=float)
    out = MacroFn(mesh, values[mesh.nodes - 1])
    return out.recentered() if zero_mean else out
