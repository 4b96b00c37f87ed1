"""Linear and pointwise-nonlinear building blocks.

Finite-rank operators in singular-triple form, a small expression language
for structured linear maps (reflections, diagonals, dense-on-prefix blocks,
compositions, sums), scalar activations applied pointwise on the quadrature
grid, and coordinate activations for finite-dimensional networks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .spectral import Space, SpectralVector, as_coeffs

__all__ = [
    "FiniteRankOperator",
    "LinearExpr",
    "Identity",
    "Scalar",
    "Diagonal",
    "DenseOnPrefix",
    "Reflection",
    "Compose",
    "Sum",
    "PointwiseActivation",
    "CoordinateActivation",
    "apply",
    "nemytskii_apply",
    "operator_norm_estimate",
    "truncate_rank",
    "orthonormal_family",
]


def orthonormal_family(dim: int, rank: int, seed: int = 0, prefix: bool = False) -> np.ndarray:
    """Rows of shape (rank, dim) forming an orthonormal family.

    ``prefix=True`` returns the first ``rank`` coordinate vectors; otherwise a
    seeded Gaussian matrix is orthonormalized by QR (signs fixed so the result
    is canonical for the seed).
    """
    if not 0 <= rank <= dim:
        raise ValueError(f"rank must lie in 0..{dim}, got {rank}")
    if prefix:
        return np.eye(dim)[:rank].copy()
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((dim, rank))
    q, r = np.linalg.qr(a)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return (q * signs).T.copy()


@dataclass(frozen=True, eq=False)
class FiniteRankOperator:
    """x -> sum_p omegas[p] <x, psi[p]> phi[p], stored as singular triples.

    ``omegas`` are nonincreasing and nonnegative and the ``psi``/``phi`` row
    families are each orthonormal, so the operator norm is ``omegas[0]``.
    """

    omegas: np.ndarray
    psi: np.ndarray
    phi: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.omegas, dtype=float).reshape(-1)
        psi = np.atleast_2d(np.array(self.psi, dtype=float))
        phi = np.atleast_2d(np.array(self.phi, dtype=float))
        r = w.size
        if psi.shape[0] != r or phi.shape[0] != r:
            raise ValueError("omegas, psi, phi must agree on the rank")
        if psi.shape[1] != phi.shape[1]:
            raise ValueError("psi and phi must share the ambient dimension")
        if np.any(w < 0.0):
            raise ValueError("singular values must be nonnegative")
        if np.any(np.diff(w) > 0.0):
            raise ValueError("singular values must be nonincreasing")
        if r:
            for name, fam in (("psi", psi), ("phi", phi)):
                if np.abs(fam @ fam.T - np.eye(r)).max() > 1e-10:
                    raise ValueError(f"{name} rows are not orthonormal")
        for a in (w, psi, phi):
            a.flags.writeable = False
        object.__setattr__(self, "omegas", w)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "phi", phi)

    @property
    def rank(self) -> int:
        return self.omegas.size

    @property
    def dim(self) -> int:
        return self.psi.shape[1]

    @property
    def norm(self) -> float:
        return float(self.omegas[0]) if self.rank else 0.0

    @classmethod
    def zero(cls, dim: int) -> "FiniteRankOperator":
        return cls(np.zeros(0), np.zeros((0, dim)), np.zeros((0, dim)))

    @classmethod
    def seeded(
        cls,
        dim: int,
        rank: int,
        *,
        scale: float = 1.0,
        decay: float = 1.0,
        seed: int = 0,
        psi_prefix: bool = False,
        phi_prefix: bool = False,
    ) -> "FiniteRankOperator":
        """Deterministic operator with omegas[p] = scale * (p+1)^-decay."""
        w = scale * np.arange(1, rank + 1, dtype=float) ** (-float(decay))
        rng = np.random.default_rng(seed)
        def fam(use_prefix: bool) -> np.ndarray:
            a = rng.standard_normal((dim, rank))  # always consume the stream
            if use_prefix:
                return np.eye(dim)[:rank].copy()
            q, r = np.linalg.qr(a)
            signs = np.sign(np.diag(r))
            signs[signs == 0] = 1.0
            return (q * signs).T.copy()
        psi = fam(psi_prefix)
        phi = fam(phi_prefix)
        return cls(w, psi, phi)

    @classmethod
    def from_matrix(cls, a: np.ndarray, tol: float | None = None) -> "FiniteRankOperator":
        a = np.asarray(a, dtype=float)
        u, s, vt = np.linalg.svd(a, full_matrices=False)
        if tol is None:
            tol = (s[0] * 1e-14) if s.size and s[0] > 0 else 0.0
        r = int(np.count_nonzero(s > tol))
        return cls(s[:r], vt[:r], u[:, :r].T)

    def apply_array(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.dim:
            raise ValueError(f"dimension mismatch: operator dim {self.dim}, vector {x.shape[-1]}")
        if not self.rank:
            return np.zeros_like(x, dtype=float)
        return (x @ self.psi.T * self.omegas) @ self.phi

    def adjoint_apply_array(self, x: np.ndarray) -> np.ndarray:
        if not self.rank:
            return np.zeros_like(x, dtype=float)
        return (x @ self.phi.T * self.omegas) @ self.psi

    def as_matrix(self) -> np.ndarray:
        if not self.rank:
            return np.zeros((self.dim, self.dim))
        return (self.phi.T * self.omegas) @ self.psi

    def __repr__(self) -> str:
        return f"FiniteRankOperator(rank={self.rank}, dim={self.dim}, norm={self.norm:.6g})"


def truncate_rank(t: FiniteRankOperator, h: float) -> tuple[FiniteRankOperator, float]:
    """Split at singular threshold h: keep omegas >= h, report the tail norm.

    The tail norm is the largest discarded singular value (0 if nothing was
    discarded), which equals the operator norm of the difference.
    """
    if h <= 0.0:
        raise ValueError("threshold must be positive")
    r = int(np.count_nonzero(t.omegas >= h))
    head = FiniteRankOperator(t.omegas[:r], t.psi[:r], t.phi[:r])
    tail_norm = float(t.omegas[r]) if r < t.rank else 0.0
    return head, tail_norm


# ---------------------------------------------------------------------------
# structured linear maps
# ---------------------------------------------------------------------------


class LinearExpr:
    """Linear map described by an expression over a few primitives."""

    def apply_array(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint_apply_array(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def intrinsic_dim(self) -> int | None:
        return None

    def as_matrix(self, dim: int) -> np.ndarray:
        return np.column_stack([self.apply_array(e) for e in np.eye(dim)])


@dataclass(frozen=True)
class Identity(LinearExpr):
    def apply_array(self, x: np.ndarray) -> np.ndarray:
        return np.array(x, dtype=float, copy=True)

    adjoint_apply_array = apply_array


@dataclass(frozen=True)
class Scalar(LinearExpr):
    c: float

    def apply_array(self, x: np.ndarray) -> np.ndarray:
        return float(self.c) * np.asarray(x, dtype=float)

    adjoint_apply_array = apply_array


@dataclass(frozen=True, eq=False)
class Diagonal(LinearExpr):
    entries: np.ndarray

    def __post_init__(self) -> None:
        d = np.array(self.entries, dtype=float).reshape(-1)
        d.flags.writeable = False
        object.__setattr__(self, "entries", d)

    def apply_array(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.entries.size:
            raise ValueError("dimension mismatch for diagonal operator")
        return self.entries * x

    adjoint_apply_array = apply_array

    def intrinsic_dim(self) -> int | None:
        return self.entries.size


@dataclass(frozen=True, eq=False)
class DenseOnPrefix(LinearExpr):
    """A dense matrix on the first d coordinates, identity on the rest."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("prefix block must be a square matrix")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def block_dim(self) -> int:
        return self.matrix.shape[0]

    def _check(self, x: np.ndarray) -> None:
        if x.shape[-1] < self.block_dim:
            raise ValueError(
                f"vector dimension {x.shape[-1]} smaller than prefix block {self.block_dim}"
            )

    def apply_array(self, x: np.ndarray) -> np.ndarray:
        self._check(x)
        y = np.array(x, dtype=float, copy=True)
        d = self.block_dim
        y[..., :d] = x[..., :d] @ self.matrix.T
        return y

    def adjoint_apply_array(self, x: np.ndarray) -> np.ndarray:
        self._check(x)
        y = np.array(x, dtype=float, copy=True)
        d = self.block_dim
        y[..., :d] = x[..., :d] @ self.matrix
        return y


@dataclass(frozen=True, eq=False)
class Reflection(LinearExpr):
    """Householder reflection x -> x - 2 <x, e> e about a unit vector e."""

    e: np.ndarray

    def __post_init__(self) -> None:
        e = as_coeffs(self.e).copy()
        nrm = np.linalg.norm(e)
        if abs(nrm - 1.0) > 1e-8:
            raise ValueError(f"reflection vector must be unit length, got norm {nrm}")
        e /= nrm
        e.flags.writeable = False
        object.__setattr__(self, "e", e)

    @classmethod
    def first_axis(cls, dim: int) -> "Reflection":
        e = np.zeros(dim)
        e[0] = 1.0
        return cls(e)

    def apply_array(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.e.size:
            raise ValueError("dimension mismatch for reflection")
        proj = x @ self.e
        return x - 2.0 * np.multiply.outer(proj, self.e)

    adjoint_apply_array = apply_array

    def intrinsic_dim(self) -> int | None:
        return self.e.size


@dataclass(frozen=True)
class Compose(LinearExpr):
    """Compose([A, B, C]) acts as A(B(C(x))): rightmost factor first."""

    factors: tuple

    def __post_init__(self) -> None:
        fs = tuple(self.factors)
        if not fs:
            raise ValueError("composition needs at least one factor")
        object.__setattr__(self, "factors", fs)

    def apply_array(self, x: np.ndarray) -> np.ndarray:
        for f in reversed(self.factors):
            x = _apply_any(f, x)
        return x

    def adjoint_apply_array(self, x: np.ndarray) -> np.ndarray:
        for f in self.factors:
            x = _adjoint_any(f, x)
        return x

    def intrinsic_dim(self) -> int | None:
        for f in self.factors:
            d = _dim_of(f)
            if d is not None:
                return d
        return None


@dataclass(frozen=True)
class Sum(LinearExpr):
    terms: tuple

    def __post_init__(self) -> None:
        ts = tuple(self.terms)
        if not ts:
            raise ValueError("sum needs at least one term")
        object.__setattr__(self, "terms", ts)

    def apply_array(self, x: np.ndarray) -> np.ndarray:
        out = _apply_any(self.terms[0], x)
        for t in self.terms[1:]:
            out = out + _apply_any(t, x)
        return out

    def adjoint_apply_array(self, x: np.ndarray) -> np.ndarray:
        out = _adjoint_any(self.terms[0], x)
        for t in self.terms[1:]:
            out = out + _adjoint_any(t, x)
        return out

    def intrinsic_dim(self) -> int | None:
        for t in self.terms:
            d = _dim_of(t)
            if d is not None:
                return d
        return None


def _apply_any(op, x: np.ndarray) -> np.ndarray:
    if isinstance(op, (FiniteRankOperator, LinearExpr)):
        return op.apply_array(np.asarray(x, dtype=float))
    raise TypeError(f"not a linear operator: {type(op).__name__}")


def _adjoint_any(op, x: np.ndarray) -> np.ndarray:
    if isinstance(op, (FiniteRankOperator, LinearExpr)):
        return op.adjoint_apply_array(np.asarray(x, dtype=float))
    raise TypeError(f"not a linear operator: {type(op).__name__}")


def _dim_of(op) -> int | None:
    if isinstance(op, FiniteRankOperator):
        return op.dim
    if isinstance(op, LinearExpr):
        return op.intrinsic_dim()
    return None


def apply(op, x) -> SpectralVector:
    """Apply a linear operator to a coefficient vector."""
    return SpectralVector(_apply_any(op, as_coeffs(x)))


def operator_norm_estimate(op, dim: int | None = None, iters: int = 200, seed: int = 0) -> float:
    """Operator norm by power iteration on the normal map.

    ``dim`` may be omitted when the operator carries one (finite-rank,
    diagonal, reflection, or any expression containing such a factor).
    Returns exactly 0.0 for the zero operator.
    """
    if iters < 10:
        raise ValueError("power iteration needs at least 10 iterations")
    m = dim if dim is not None else _dim_of(op)
    if m is None:
        raise ValueError("operator has no intrinsic dimension; pass dim=")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(m)
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(iters):
        w = _apply_any(op, x)
        sigma = float(np.linalg.norm(w))
        if sigma == 0.0:
            # landed in the kernel: restart (stays 0 for the zero operator)
            x = rng.standard_normal(m)
            x /= np.linalg.norm(x)
            continue
        z = _adjoint_any(op, w)
        nz = np.linalg.norm(z)
        if nz == 0.0:
            break
        x = z / nz
    return sigma


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PointwiseActivation:
    """Scalar function with recorded derivative bounds and growth data.

    ``deriv_bounds = (lo, hi)`` bound the derivative globally (hi may be
    inf); ``growth = (g0, g1)`` records |f(s)| <= g0|s| + g1 when such a
    linear bound exists, else None.
    """

    name: str
    fun: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    deriv_bounds: tuple[float, float]
    growth: tuple[float, float] | None

    def __call__(self, s):
        return self.fun(np.asarray(s, dtype=float))

    def derivative(self, s):
        return self.deriv(np.asarray(s, dtype=float))

    @property
    def is_identity(self) -> bool:
        return self.name == "identity"

    @property
    def lipschitz(self) -> float:
        lo, hi = self.deriv_bounds
        return max(abs(lo), abs(hi))

    def local_lipschitz(self, radius: float) -> float:
        """Lipschitz bound valid on inputs of magnitude <= radius."""
        if self.name == "recu":
            return 3.0 * float(radius) ** 2
        if not np.isfinite(self.lipschitz):
            raise ValueError(f"no local Lipschitz rule for {self.name}")
        return self.lipschitz

    def range_radius(self, radius: float) -> float:
        """Bound on |f(s)| over |s| <= radius (requires f(0) = 0)."""
        if abs(float(self.fun(np.asarray(0.0)))) > 1e-15:
            raise ValueError("range propagation assumes f(0) = 0")
        if self.name == "recu":
            return float(radius) ** 3
        return self.local_lipschitz(radius) * float(radius)

    @classmethod
    def identity(cls) -> "PointwiseActivation":
        return cls("identity", lambda s: s, lambda s: np.ones_like(s), (1.0, 1.0), (1.0, 0.0))

    @classmethod
    def leaky_relu(cls, slope_neg: float = 0.2) -> "PointwiseActivation":
        a = float(slope_neg)
        lo, hi = sorted((a, 1.0))
        return cls(
            f"leaky_relu({a:g})",
            lambda s, a=a: np.where(s >= 0.0, s, a * s),
            lambda s, a=a: np.where(s >= 0.0, 1.0, a),
            (lo, hi),
            (max(1.0, abs(a)), 0.0),
        )

    @classmethod
    def recu(cls) -> "PointwiseActivation":
        # cubed rectifier: C^1, monotone, derivative unbounded above
        return cls(
            "recu",
            lambda s: np.maximum(s, 0.0) ** 3,
            lambda s: 3.0 * np.maximum(s, 0.0) ** 2,
            (0.0, np.inf),
            None,
        )

    @classmethod
    def tanh(cls) -> "PointwiseActivation":
        # smooth saturating activation: all derivatives bounded
        return cls(
            "tanh",
            np.tanh,
            lambda s: 1.0 / np.cosh(s) ** 2,
            (0.0, 1.0),
            (1.0, 0.0),
        )

    @classmethod
    def custom(
        cls,
        fun: Callable,
        deriv: Callable,
        deriv_bounds: tuple[float, float],
        growth: tuple[float, float] | None = None,
        name: str = "custom",
    ) -> "PointwiseActivation":
        lo, hi = float(deriv_bounds[0]), float(deriv_bounds[1])
        if lo > hi:
            raise ValueError("derivative bounds must satisfy lo <= hi")
        return cls(name, fun, deriv, (lo, hi), growth)

    def __repr__(self) -> str:
        return f"PointwiseActivation({self.name})"


def _groupsort2(v: np.ndarray) -> np.ndarray:
    out = np.array(v, dtype=float, copy=True)
    n = out.shape[-1] - out.shape[-1] % 2
    a = out[..., 0:n:2].copy()
    b = out[..., 1:n:2].copy()
    out[..., 0:n:2] = np.minimum(a, b)
    out[..., 1:n:2] = np.maximum(a, b)
    return out


@dataclass(frozen=True, eq=False)
class CoordinateActivation:
    """Activation on coordinate vectors: entrywise scalar, or groupsort2.

    groupsort2 sorts adjacent coordinate pairs ascending (a trailing odd
    coordinate is left fixed); it is 1-Lipschitz and idempotent.
    """

    name: str
    pointwise: PointwiseActivation | None

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        if self.pointwise is None:
            return _groupsort2(v)
        return self.pointwise(v)

    @property
    def lipschitz(self) -> float:
        return 1.0 if self.pointwise is None else self.pointwise.lipschitz

    def local_lipschitz(self, radius: float) -> float:
        return 1.0 if self.pointwise is None else self.pointwise.local_lipschitz(radius)

    def range_radius(self, radius: float) -> float:
        # groupsort2 permutes coordinates, so it preserves the Euclidean norm
        return float(radius) if self.pointwise is None else self.pointwise.range_radius(radius)

    @classmethod
    def groupsort2(cls) -> "CoordinateActivation":
        return cls("groupsort2", None)

    @classmethod
    def from_pointwise(cls, p: PointwiseActivation) -> "CoordinateActivation":
        return cls(p.name, p)

    @classmethod
    def identity(cls) -> "CoordinateActivation":
        return cls.from_pointwise(PointwiseActivation.identity())

    @classmethod
    def leaky_relu(cls, slope_neg: float = 0.2) -> "CoordinateActivation":
        return cls.from_pointwise(PointwiseActivation.leaky_relu(slope_neg))

    @classmethod
    def recu(cls) -> "CoordinateActivation":
        return cls.from_pointwise(PointwiseActivation.recu())

    @classmethod
    def tanh(cls) -> "CoordinateActivation":
        return cls.from_pointwise(PointwiseActivation.tanh())

    def __repr__(self) -> str:
        return f"CoordinateActivation({self.name})"


def nemytskii_apply(space: Space, sigma: PointwiseActivation, u) -> SpectralVector:
    """Compose with sigma pointwise: coefficients of sigma(u(t)).

    Evaluates on the quadrature grid and re-expands; the identity activation
    short-circuits and is exact.
    """
    if sigma.is_identity:
        return SpectralVector(as_coeffs(u))
    return space.from_grid(sigma(space.to_grid(u)))
