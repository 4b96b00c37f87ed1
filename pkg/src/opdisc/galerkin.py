"""Finite elements on [0, 1]: a semilinear solver and singular operator paths.

Two computations live here.  The first discretizes the two-point boundary
value problem u'' - g(u) = x (homogeneous Dirichlet data, g the derivative
of a convex function) with piecewise-linear hat elements and solves the
resulting nonlinear system by a damped Newton iteration whose merit
function is the problem's own convex energy.

The second builds one-parameter families of Galerkin matrices whose
continuum counterparts are invertible multiplication-type operators for
every parameter value, yet whose finite sections must pass through a
singular matrix: the entries integrate a sign function that flips over the
whole interval as the parameter sweeps 0 -> 1, so the endpoint matrices
have opposite determinant signs and a zero crossing in between is
unavoidable.  All entries are integrated exactly, splitting at the jump —
the crossing location is a property of the matrices, not of a quadrature
choice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .spectral import gauss_legendre_panels

__all__ = [
    "FemMesh",
    "ConvexNonlinearity",
    "NewtonTrace",
    "assemble_stiffness",
    "solve_semilinear",
    "solve_semilinear_trace",
    "h1_seminorm_difference",
    "FemConvergence",
    "fem_convergence",
    "galerkin_path_matrix",
    "SingularityScan",
    "singularity_scan",
    "continuum_isometry_defect",
]

_BC_PAIRS = (("dirichlet", "dirichlet"), ("dirichlet", "neumann"))


@dataclass(frozen=True)
class FemMesh:
    """Uniform mesh on [0, 1] with hat elements and boundary-condition tags.

    ``bc`` fixes which endpoint values are constrained to zero: the
    Dirichlet-Dirichlet mesh keeps the interior nodes as unknowns, the
    Dirichlet-Neumann mesh also keeps the right endpoint (a half hat).
    """

    n_cells: int
    bc: tuple = ("dirichlet", "dirichlet")

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_cells", int(self.n_cells))
        bc = (str(self.bc[0]), str(self.bc[1]))
        if bc not in _BC_PAIRS:
            raise ValueError(
                f"unsupported boundary tags {bc!r}; expected one of {_BC_PAIRS}"
            )
        object.__setattr__(self, "bc", bc)
        min_cells = 2 if bc == ("dirichlet", "dirichlet") else 1
        if self.n_cells < min_cells:
            raise ValueError(
                f"degenerate mesh: {bc} needs at least {min_cells} cells to "
                "carry a basis function"
            )

    @property
    def h(self) -> float:
        return 1.0 / self.n_cells

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_cells + 1)

    @property
    def active_nodes(self) -> np.ndarray:
        """Indices of the nodes that carry unknowns."""
        last = self.n_cells if self.bc[1] == "neumann" else self.n_cells - 1
        return np.arange(1, last + 1)

    @property
    def n_active(self) -> int:
        return self.active_nodes.size

    def hat_values(self, points: np.ndarray) -> np.ndarray:
        """Active hat functions at arbitrary points, shape (n_active, n_pts)."""
        t = np.asarray(points, dtype=float).reshape(-1)
        centers = self.nodes[self.active_nodes][:, None]
        return np.clip(1.0 - np.abs(t[None, :] - centers) / self.h, 0.0, None)

    def full_nodal(self, coeffs: np.ndarray) -> np.ndarray:
        """Nodal values on all nodes, zeros filled in at constrained ones."""
        w = np.asarray(coeffs, dtype=float).reshape(-1)
        if w.size != self.n_active:
            raise ValueError(f"expected {self.n_active} coefficients, got {w.size}")
        full = np.zeros(self.n_cells + 1)
        full[self.active_nodes] = w
        return full


@dataclass(frozen=True)
class ConvexNonlinearity:
    """Scalar reaction term g = G' with a convex primitive and growth data.

    The growth constants bound the primitive, -c0 <= G(r) <= c1 (1 + r**p);
    both the bound and the monotonicity of g (= convexity of G) are checked
    on a sample grid at construction.
    """

    g: Callable
    primitive: Callable
    c0: float
    c1: float
    p: float
    gprime: Callable | None = None
    name: str = "custom"

    def __post_init__(self) -> None:
        if min(self.c0, self.c1, self.p) <= 0.0:
            raise ValueError("growth constants c0, c1, p must be positive")
        r = np.linspace(-8.0, 8.0, 321)
        gr = np.asarray(self.g(r), dtype=float)
        if gr.shape != r.shape or not np.all(np.isfinite(gr)):
            raise ValueError("g must map a sample grid to finite values")
        if np.any(np.diff(gr) < -1e-9):
            raise ValueError("g is not nondecreasing on the sample grid")
        big_g = np.asarray(self.primitive(r), dtype=float)
        if np.any(big_g < -self.c0 - 1e-9):
            raise ValueError("primitive drops below its stated lower bound -c0")
        if np.any(big_g > self.c1 * (1.0 + np.abs(r) ** self.p) + 1e-9):
            raise ValueError("primitive exceeds its stated growth bound")

    def derivative(self, values: np.ndarray) -> np.ndarray:
        if self.gprime is not None:
            return np.asarray(self.gprime(values), dtype=float)
        step = 1e-6
        return (
            np.asarray(self.g(values + step), dtype=float)
            - np.asarray(self.g(values - step), dtype=float)
        ) / (2.0 * step)

    @classmethod
    def zero(cls) -> "ConvexNonlinearity":
        return cls(
            g=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
            primitive=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
            c0=1.0,
            c1=1.0,
            p=1.0,
            gprime=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
            name="zero",
        )

    @classmethod
    def linear(cls) -> "ConvexNonlinearity":
        return cls(
            g=lambda r: np.asarray(r, dtype=float),
            primitive=lambda r: 0.5 * np.asarray(r, dtype=float) ** 2,
            c0=1.0,
            c1=1.0,
            p=2.0,
            gprime=lambda r: np.ones_like(np.asarray(r, dtype=float)),
            name="linear",
        )

    @classmethod
    def cubic(cls) -> "ConvexNonlinearity":
        return cls(
            g=lambda r: np.asarray(r, dtype=float) ** 3,
            primitive=lambda r: 0.25 * np.asarray(r, dtype=float) ** 4,
            c0=1.0,
            c1=1.0,
            p=4.0,
            gprime=lambda r: 3.0 * np.asarray(r, dtype=float) ** 2,
            name="cubic",
        )

    @classmethod
    def named(cls, name: str) -> "ConvexNonlinearity":
        table = {"zero": cls.zero, "linear": cls.linear, "cubic": cls.cubic}
        if name not in table:
            raise ValueError(f"unknown reaction term {name!r}; have {sorted(table)}")
        return table[name]()


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------


def assemble_stiffness(mesh: FemMesh) -> np.ndarray:
    """Hat-element stiffness matrix: tridiagonal 2/h with -1/h couplings.

    A right Neumann end carries a half hat, so its diagonal entry is 1/h.
    """
    n = mesh.n_active
    h = mesh.h
    mat = np.zeros((n, n))
    np.fill_diagonal(mat, 2.0 / h)
    if mesh.bc[1] == "neumann":
        mat[-1, -1] = 1.0 / h
    idx = np.arange(n - 1)
    mat[idx, idx + 1] = -1.0 / h
    mat[idx + 1, idx] = -1.0 / h
    return mat


def _quadrature(mesh: FemMesh) -> tuple:
    """Element-wise Gauss nodes/weights and active hat values there."""
    nodes, weights = gauss_legendre_panels(mesh.nodes, points_per_panel=5)
    return nodes, weights, mesh.hat_values(nodes)


# ---------------------------------------------------------------------------
# semilinear solve
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NewtonTrace:
    """Energies and residual norms across accepted Newton steps.

    The merit function is the problem's convex energy, so an accepted step
    can never raise it; that is validated here.
    """

    energies: tuple
    residual_norms: tuple
    step_scales: tuple
    tol: float

    def __post_init__(self) -> None:
        e = tuple(float(v) for v in self.energies)
        for a, b in zip(e, e[1:]):
            if b > a:
                raise ValueError(f"energy rose across an accepted step: {a} -> {b}")
        object.__setattr__(self, "energies", e)
        object.__setattr__(
            self, "residual_norms", tuple(float(v) for v in self.residual_norms)
        )
        object.__setattr__(
            self, "step_scales", tuple(float(v) for v in self.step_scales)
        )

    @property
    def iterations(self) -> int:
        return len(self.step_scales)

    def as_dict(self) -> dict:
        return {
            "energies": list(self.energies),
            "residual_norms": list(self.residual_norms),
            "step_scales": list(self.step_scales),
            "tol": self.tol,
        }


def solve_semilinear_trace(
    x_source: Callable,
    mesh: FemMesh,
    g: ConvexNonlinearity,
    tol: float = 1e-10,
    max_iter: int = 60,
) -> tuple:
    """Damped Newton for the hat-element system; returns (coeffs, trace).

    Solves ``B w + N(w) + L = 0`` where B is the stiffness matrix,
    ``N_j(w) = integral(phi_j g(u_h))`` and ``L_j = integral(x phi_j)``.
    Steps are damped by halving until the convex energy
    ``0.5 w B w + integral(G(u_h) + x u_h)`` does not increase; since the
    energy's gradient is exactly the residual, the Newton direction is a
    descent direction and the full step is accepted almost always.
    """
    if tol <= 0.0:
        raise ValueError("tolerance must be positive")
    pts, wts, hats = _quadrature(mesh)
    x_vals = np.asarray(x_source(pts), dtype=float)
    if x_vals.shape != pts.shape:
        raise ValueError("the source must map points to values elementwise")
    stiff = assemble_stiffness(mesh)
    load = hats @ (wts * x_vals)

    def residual(w: np.ndarray) -> np.ndarray:
        u_q = w @ hats
        return stiff @ w + hats @ (wts * g.g(u_q)) + load

    def energy(w: np.ndarray) -> float:
        u_q = w @ hats
        return float(
            0.5 * w @ stiff @ w + np.sum(wts * (g.primitive(u_q) + x_vals * u_q))
        )

    w = np.zeros(mesh.n_active)
    energies = [energy(w)]
    residual_norms = []
    step_scales = []
    for _ in range(max_iter):
        res = residual(w)
        rnorm = float(np.linalg.norm(res))
        residual_norms.append(rnorm)
        if rnorm <= tol:
            trace = NewtonTrace(
                tuple(energies), tuple(residual_norms), tuple(step_scales), tol
            )
            return w, trace
        u_q = w @ hats
        jac = stiff + (hats * (wts * g.derivative(u_q))[None, :]) @ hats.T
        direction = np.linalg.solve(jac, -res)
        current = energies[-1]
        lam = 1.0
        while energy(w + lam * direction) > current:
            lam *= 0.5
            if lam < 1e-10:
                raise RuntimeError(
                    "Newton stagnated: no energy decrease along the step "
                    f"(last residual {rnorm:.6g})"
                )
        w = w + lam * direction
        energies.append(energy(w))
        step_scales.append(lam)
    raise RuntimeError(
        f"Newton did not reach tol={tol:.3g} in {max_iter} iterations "
        f"(last residual {residual_norms[-1]:.6g})"
    )


def solve_semilinear(
    x_source: Callable,
    mesh: FemMesh,
    g: ConvexNonlinearity,
    tol: float = 1e-10,
    max_iter: int = 60,
) -> np.ndarray:
    """Coefficients (= nodal values at the unknown nodes) of the solution."""
    return solve_semilinear_trace(x_source, mesh, g, tol, max_iter)[0]


# ---------------------------------------------------------------------------
# mesh refinement study
# ---------------------------------------------------------------------------


def h1_seminorm_difference(
    coarse: FemMesh, w_coarse: np.ndarray, fine: FemMesh, w_fine: np.ndarray
) -> float:
    """Exact H1 seminorm of the difference of two nested hat interpolants."""
    if coarse.bc != fine.bc:
        raise ValueError("meshes carry different boundary conditions")
    if fine.n_cells % coarse.n_cells != 0:
        raise ValueError("fine mesh does not refine the coarse one")
    factor = fine.n_cells // coarse.n_cells
    slopes_c = np.diff(coarse.full_nodal(w_coarse)) / coarse.h
    slopes_f = np.diff(fine.full_nodal(w_fine)) / fine.h
    gap = np.repeat(slopes_c, factor) - slopes_f
    return float(math.sqrt(fine.h * np.sum(gap * gap)))


@dataclass(frozen=True)
class FemConvergence:
    """H1-seminorm errors against a common fine-mesh reference solution."""

    mesh_sizes: tuple
    errors: tuple
    ratios: tuple
    oracle_cells: int
    reaction: str

    def as_dict(self) -> dict:
        return {
            "mesh_sizes": list(self.mesh_sizes),
            "errors": list(self.errors),
            "ratios": list(self.ratios),
            "oracle_cells": self.oracle_cells,
            "reaction": self.reaction,
        }


def fem_convergence(
    x_source: Callable,
    g: ConvexNonlinearity,
    mesh_sizes: Sequence[int],
    *,
    oracle_factor: int = 8,
    tol: float = 1e-10,
) -> FemConvergence:
    """Solve on each mesh and measure H1 errors against an oracle solution
    on a mesh ``oracle_factor`` times finer than the finest one requested."""
    sizes = [int(m) for m in mesh_sizes]
    if len(sizes) < 2:
        raise ValueError("need at least two mesh sizes to report ratios")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("mesh sizes must be strictly increasing")
    if oracle_factor < 2:
        raise ValueError("the oracle mesh must be finer than the scan")
    oracle_cells = oracle_factor * sizes[-1]
    for m in sizes:
        if oracle_cells % m != 0:
            raise ValueError(
                f"mesh size {m} does not divide the oracle mesh ({oracle_cells})"
            )
    oracle_mesh = FemMesh(oracle_cells)
    w_oracle = solve_semilinear(x_source, oracle_mesh, g, tol)
    errors = []
    for m in sizes:
        mesh = FemMesh(m)
        w = solve_semilinear(x_source, mesh, g, tol)
        errors.append(h1_seminorm_difference(mesh, w, oracle_mesh, w_oracle))
    ratios = tuple(
        errors[i] / errors[i + 1] if errors[i + 1] > 0.0 else math.inf
        for i in range(len(errors) - 1)
    )
    return FemConvergence(
        mesh_sizes=tuple(sizes),
        errors=tuple(errors),
        ratios=ratios,
        oracle_cells=oracle_cells,
        reaction=g.name,
    )


# ---------------------------------------------------------------------------
# singular Galerkin paths
# ---------------------------------------------------------------------------


def _trig_rep(j: int) -> tuple:
    """j-th orthonormal trig basis function as amplitude * cos(omega t + phase).

    Ordering matches the coefficient space: constant first, then paired
    cosines and sines of increasing frequency.
    """
    if j == 0:
        return 1.0, 0.0, 0.0
    k = (j + 1) // 2
    omega = 2.0 * np.pi * k
    if j % 2 == 1:
        return math.sqrt(2.0), omega, 0.0
    return math.sqrt(2.0), omega, -0.5 * np.pi


def _cos_integral(omega: float, phase: float, s: float) -> float:
    """Exact integral of cos(omega t + phase) over [0, s]."""
    if omega == 0.0:
        return s * math.cos(phase)
    return (math.sin(omega * s + phase) - math.sin(phase)) / omega


def _trig_pair_integral(j: int, k: int, s: float) -> float:
    """Exact integral of psi_j * psi_k over [0, s] via product-to-sum."""
    cj, oj, pj = _trig_rep(j)
    ck, ok, pk = _trig_rep(k)
    return (
        0.5
        * cj
        * ck
        * (
            _cos_integral(oj - ok, pj - pk, s)
            + _cos_integral(oj + ok, pj + pk, s)
        )
    )


def _linear_weight_integral(a: float, b: float) -> float:
    """Integral of (1 + t) over [a, b]."""
    return (b - a) + 0.5 * (b * b - a * a)


def _split_weight_integral(a: float, b: float, s: float) -> float:
    """Integral of (1 + t) sign(t - s) over [a, b], split exactly at s."""
    if s <= a:
        return _linear_weight_integral(a, b)
    if s >= b:
        return -_linear_weight_integral(a, b)
    return _linear_weight_integral(s, b) - _linear_weight_integral(a, s)


def galerkin_path_matrix(
    kind: str,
    s: float,
    n: int,
    basis: str | None = None,
) -> np.ndarray:
    """Finite section of a sign-flip operator path at parameter ``s``.

    ``kind "a"`` integrates sign(t - s) against an orthonormal trig basis
    (the continuum operator is multiplication by the sign, a linear
    isometry); ``kind "b"`` integrates (1 + t) sign(t - s) against hat
    gradients on a Dirichlet/Neumann mesh (a weighted, indefinite
    stiffness).  All entries are exact, split at t = s, so the endpoint
    matrices are the (possibly weighted) Gram matrices with exact signs.
    """
    kind = str(kind).lower()
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"path parameter must lie in [0, 1], got {s}")
    n = int(n)
    if n < 1:
        raise ValueError("need at least one basis function")
    if kind == "a":
        if basis not in (None, "fourier"):
            raise ValueError(
                "the sign-multiplication path is implemented on the "
                f"orthonormal trig basis, not {basis!r}"
            )
        # gram - 2 * integral over [0, s]; the gram matrix is the identity
        # analytically, which keeps the endpoints exact (at s = 1 the sign
        # is -1 almost everywhere, so the limit is minus the gram matrix)
        if s == 1.0:
            return -np.eye(n)
        mat = np.eye(n)
        for j in range(n):
            for k in range(j, n):
                val = -2.0 * _trig_pair_integral(j, k, s)
                mat[j, k] += val
                if k != j:
                    mat[k, j] += val
        return mat
    if kind == "b":
        if basis not in (None, "hat"):
            raise ValueError(
                "the weighted-gradient path is implemented on the hat "
                f"basis, not {basis!r}"
            )
        mesh = FemMesh(n, bc=("dirichlet", "neumann"))
        h = mesh.h
        nodes = mesh.nodes
        mat = np.zeros((n, n))
        for cell in range(1, n + 1):
            weight = _split_weight_integral(nodes[cell - 1], nodes[cell], s)
            # hats at nodes cell-1 (slope -1/h) and cell (slope +1/h);
            # node 0 is constrained away
            touching = []
            if cell - 1 >= 1:
                touching.append((cell - 2, -1.0 / h))
            touching.append((cell - 1, 1.0 / h))
            for a_idx, a_slope in touching:
                for b_idx, b_slope in touching:
                    mat[a_idx, b_idx] += weight * a_slope * b_slope
        return mat
    raise ValueError(f"unknown path kind {kind!r}; expected 'a' or 'b'")


@dataclass(frozen=True)
class SingularityScan:
    """Determinant/singular-value sweep of a matrix path plus the crossing."""

    kind: str
    n: int
    s_grid: tuple
    dets: tuple
    min_svs: tuple
    det_endpoint_signs: tuple
    s_star: float
    det_at_star: float
    min_sv_at_star: float
    bisect_tol: float

    def rows(self):
        """(s, det, min singular value) triples for tabular output."""
        return list(zip(self.s_grid, self.dets, self.min_svs))

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n,
            "s_grid": list(self.s_grid),
            "dets": list(self.dets),
            "min_svs": list(self.min_svs),
            "det_endpoint_signs": list(self.det_endpoint_signs),
            "s_star": self.s_star,
            "det_at_star": self.det_at_star,
            "min_sv_at_star": self.min_sv_at_star,
            "bisect_tol": self.bisect_tol,
        }


def singularity_scan(
    kind: str,
    n: int,
    s_grid=101,
    bisect_tol: float = 1e-12,
) -> SingularityScan:
    """Locate a singular parameter of the matrix path by sign bisection.

    The endpoint determinants have opposite signs for odd ``n`` (the path
    connects a positive matrix to minus one of the same shape), so a
    determinant zero crossing always exists; it is bracketed on the grid
    and bisected to ``bisect_tol``.
    """
    n = int(n)
    if n % 2 == 0:
        raise ValueError(
            "need an odd number of basis functions so the endpoint "
            "determinants differ in sign"
        )
    if bisect_tol <= 0.0:
        raise ValueError("bisection tolerance must be positive")
    if isinstance(s_grid, (int, np.integer)):
        if s_grid < 2:
            raise ValueError("need at least two grid points")
        grid = np.linspace(0.0, 1.0, int(s_grid))
    else:
        grid = np.asarray(s_grid, dtype=float).reshape(-1)
        if grid.size < 2 or np.any(np.diff(grid) <= 0.0):
            raise ValueError("grid must be strictly increasing")
        if grid[0] != 0.0 or grid[-1] != 1.0:
            raise ValueError("grid must span [0, 1] so endpoint signs are seen")

    def det_at(s: float) -> float:
        return float(np.linalg.det(galerkin_path_matrix(kind, s, n)))

    dets = []
    min_svs = []
    for s in grid:
        mat = galerkin_path_matrix(kind, float(s), n)
        dets.append(float(np.linalg.det(mat)))
        min_svs.append(float(np.linalg.svd(mat, compute_uv=False)[-1]))
    signs = (int(np.sign(dets[0])), int(np.sign(dets[-1])))

    bracket = None
    for i in range(len(grid) - 1):
        if dets[i] == 0.0:
            bracket = (grid[i], grid[i])
            break
        if dets[i] * dets[i + 1] < 0.0:
            bracket = (grid[i], grid[i + 1])
            break
    if bracket is None:
        raise RuntimeError(
            "no determinant sign change on the grid; this cannot happen for "
            "an odd basis count unless the path is broken"
        )
    lo, hi = bracket
    f_lo = det_at(lo)
    while hi - lo > bisect_tol:
        mid = 0.5 * (lo + hi)
        f_mid = det_at(mid)
        if f_mid == 0.0:
            lo = hi = mid
            break
        if f_lo * f_mid < 0.0:
            hi = mid
        else:
            lo, f_lo = mid, f_mid
    s_star = 0.5 * (lo + hi)
    star_mat = galerkin_path_matrix(kind, s_star, n)
    return SingularityScan(
        kind=str(kind).lower(),
        n=n,
        s_grid=tuple(float(s) for s in grid),
        dets=tuple(dets),
        min_svs=tuple(min_svs),
        det_endpoint_signs=signs,
        s_star=float(s_star),
        det_at_star=float(np.linalg.det(star_mat)),
        min_sv_at_star=float(np.linalg.svd(star_mat, compute_uv=False)[-1]),
        bisect_tol=float(bisect_tol),
    )


def continuum_isometry_defect(
    s: float, n_grid: int = 2048, n_funcs: int = 8, seed: int = 0
) -> float:
    """Norm defect of the continuum sign multiplier on sampled grid functions.

    Multiplication by sign(t - s) has unit modulus almost everywhere, so it
    preserves every L2 norm; the defect measures how far the discrete
    realization strays (it does not: the matrices go singular, the operator
    never does).
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"path parameter must lie in [0, 1], got {s}")
    if n_grid < 2 or n_funcs < 1:
        raise ValueError("need a nontrivial grid and at least one function")
    # midpoint grid; the jump point carries no weight in the limit and the
    # convention sign(0) = -1 keeps the modulus 1 everywhere
    t = (np.arange(n_grid) + 0.5) / n_grid
    multiplier = np.where(t > s, 1.0, -1.0)
    rng = np.random.default_rng(seed)
    samples = rng.standard_normal((n_funcs, n_grid))
    worst = 0.0
    for u in samples:
        norm_u = float(np.linalg.norm(u) / math.sqrt(n_grid))
        norm_mu = float(np.linalg.norm(multiplier * u) / math.sqrt(n_grid))
        worst = max(worst, abs(norm_mu - norm_u))
    return worst
