"""Prefix-subspace compression of operators and its approximation metrics.

The compression of a map F through a prefix subspace V is P_V∘F restricted
to V.  This module measures how faithful that compression is: the strong
(range-tail) error, the weak (tested-against-probes) error, continuity
under operator perturbations, monotonicity preservation, and orientation
of the compressed Jacobian along operator paths.

Sup-over-ball quantities use one seeded sample set shared across dims, so
the monotonicity of nested compressions is exact for the sampled set
rather than statistical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .layers import eval_map, jvp
from .monotone import ball_samples, map_dim, pairwise_alpha
from .operators import FiniteRankOperator
from .spectral import SpectralVector, Subspace, as_coeffs

__all__ = [
    "DiscretizedMap",
    "ConvergenceReport",
    "OrientationScan",
    "linearize",
    "functor_a_error",
    "epsilon_error",
    "weak_error",
    "convergence_scan",
    "continuity_probe",
    "orientation_scan",
    "trend_converged",
    "csv_float",
]


def csv_float(x: float) -> str:
    """Shortest decimal that reproduces the double exactly."""
    return format(float(x), ".17g")


def _resolve_dim(f, dim: int | None) -> int:
    m = dim if dim is not None else map_dim(f)
    if m is None:
        raise ValueError("map has no intrinsic dimension; pass dim=")
    return m


@dataclass(frozen=True, eq=False)
class DiscretizedMap:
    """P_V∘F on a prefix subspace V: inputs and outputs both live in V.

    Construction runs a short self-check that the compressed values agree
    with project(F(x), V) to machine precision on seeded ball samples.
    """

    source: object
    v: Subspace
    dim: int

    def __post_init__(self) -> None:
        if not self.v.is_prefix:
            raise ValueError("compression is defined over prefix subspaces")
        d = self.v.dim
        if d == 0 or d > self.dim:
            raise ValueError("subspace must be a nonempty prefix of the ambient space")
        worst = 0.0
        for x in ball_samples(self.dim, 1.0, 4, seed=0, indices=list(range(d))):
            direct = eval_map(self.source, x).copy()
            direct[d:] = 0.0
            worst = max(worst, float(np.linalg.norm(self.eval_array(x) - direct)))
        if worst > 1e-12:
            raise AssertionError(
                f"compressed map disagrees with projected source by {worst:g}"
            )

    @property
    def prefix_dim(self) -> int:
        return self.v.dim

    def eval_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = self.v.dim
        xin = x.copy()
        xin[..., d:] = 0.0
        y = eval_map(self.source, xin).copy()
        y[..., d:] = 0.0
        return y

    def __call__(self, x) -> SpectralVector:
        return SpectralVector(self.eval_array(as_coeffs(x)))


def linearize(f, v: Subspace, dim: int | None = None) -> DiscretizedMap:
    """Compress f through the prefix subspace v."""
    return DiscretizedMap(f, v, _resolve_dim(f, dim))


def _v_samples(
    m: int, v: Subspace, r: float, n: int, seed: int, samples: np.ndarray | None
) -> np.ndarray:
    if samples is not None:
        return np.asarray(samples, dtype=float)
    return ball_samples(m, r, n, seed=seed, indices=sorted(v.indices))


def functor_a_error(
    f,
    v: Subspace,
    r: float = 1.0,
    n: int = 256,
    seed: int = 0,
    dim: int | None = None,
    samples: np.ndarray | None = None,
) -> float:
    """Worst range tail over ball samples in V: max ‖(Id − P_V) f(x)‖."""
    m = _resolve_dim(f, dim)
    xs = _v_samples(m, v, r, n, seed, samples)
    d = v.dim
    worst = 0.0
    for x in xs:
        y = eval_map(f, x)
        worst = max(worst, float(np.linalg.norm(y[d:])))
    return worst


def epsilon_error(
    f,
    v: Subspace,
    r: float = 1.0,
    n: int = 256,
    seed: int = 0,
    dim: int | None = None,
    samples: np.ndarray | None = None,
) -> float:
    """Discrepancy between the compressed map and project∘f on V samples.

    Identically zero for this compression scheme; measured anyway so the
    report column is an observation, not an assumption.
    """
    m = _resolve_dim(f, dim)
    fv = linearize(f, v, dim=m)
    xs = _v_samples(m, v, r, n, seed, samples)
    d = v.dim
    worst = 0.0
    for x in xs:
        direct = eval_map(f, x).copy()
        direct[d:] = 0.0
        worst = max(worst, float(np.linalg.norm(fv.eval_array(x) - direct)))
    return worst


def weak_error(
    f,
    v: Subspace,
    probes: Sequence,
    r: float = 1.0,
    n: int = 256,
    seed: int = 0,
    dim: int | None = None,
    samples: np.ndarray | None = None,
) -> float:
    """Worst probe functional applied to the compression defect.

    max over samples x in the V-ball and probes y of |<f_V(x) − f(x), y>|;
    exactly zero for probes inside V.
    """
    m = _resolve_dim(f, dim)
    parr = [as_coeffs(p) for p in probes]
    if not parr:
        raise ValueError("need at least one probe")
    for p in parr:
        if np.linalg.norm(p) == 0.0:
            raise ValueError("probes must be nonzero")
    xs = _v_samples(m, v, r, n, seed, samples)
    d = v.dim
    worst = 0.0
    for x in xs:
        y = eval_map(f, x)
        defect = y.copy()
        defect[:d] = 0.0  # f_V(x) − f(x) = −(Id − P_V) f(x)
        for p in parr:
            worst = max(worst, abs(float(defect @ p)))
    return worst


@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    """Per-dimension compression metrics, CSV-emittable.

    Row fields: dim, functor_a_error, epsilon_error, weak_error, alpha_hat.
    The epsilon column must vanish to machine precision — enforced here.
    """

    rows: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for row in self.rows:
            if row["epsilon_error"] > 1e-12:
                raise AssertionError(
                    f"compression self-error {row['epsilon_error']:g} at dim "
                    f"{row['dim']} exceeds machine tolerance"
                )

    def column(self, name: str) -> list:
        return [row[name] for row in self.rows]

    def to_csv_text(self) -> str:
        lines = ["dim,functor_a_error,epsilon_error,weak_error,alpha_hat"]
        for row in self.rows:
            lines.append(
                ",".join(
                    [
                        str(row["dim"]),
                        csv_float(row["functor_a_error"]),
                        csv_float(row["epsilon_error"]),
                        csv_float(row["weak_error"]),
                        csv_float(row["alpha_hat"]),
                    ]
                )
            )
        return "\n".join(lines) + "\n"

    def as_dict(self) -> dict:
        return {"rows": [dict(r) for r in self.rows], "metadata": dict(self.metadata)}


def convergence_scan(
    f,
    dims: Sequence[int],
    r: float = 1.0,
    n: int = 256,
    seed: int = 0,
    dim: int | None = None,
    description: str = "",
) -> ConvergenceReport:
    """Compression metrics across an ascending chain of prefix dimensions.

    One sample set, drawn in the ball of the smallest prefix, feeds the
    error columns at every dim, so nested-projection monotonicity holds
    exactly for what is reported.  The alpha column is the sampled
    monotonicity constant of the compressed map over its own subspace.
    The weak column tests against the first basis direction outside V.
    """
    dims = [int(d) for d in dims]
    if not dims:
        raise ValueError("need at least one dim")
    if any(b <= a for a, b in zip(dims, dims[1:])):
        raise ValueError("dims must be strictly ascending")
    m = _resolve_dim(f, dim)
    if dims[0] < 1 or dims[-1] > m:
        raise ValueError(f"dims must lie in 1..{m}")
    common = ball_samples(m, r, n, seed=seed, indices=list(range(dims[0])))
    rows = []
    for d in dims:
        v = Subspace.prefix(d)
        fa = functor_a_error(f, v, dim=m, samples=common)
        eps = epsilon_error(f, v, dim=m, samples=common)
        if d < m:
            probe = np.zeros(m)
            probe[d] = 1.0
            weak = weak_error(f, v, [probe], dim=m, samples=common)
        else:
            weak = 0.0
        alpha = pairwise_alpha(
            linearize(f, v, dim=m), r=r, n=n, seed=seed, dim=m, subspace=v
        ).alpha
        rows.append(
            {
                "dim": d,
                "functor_a_error": fa,
                "epsilon_error": eps,
                "weak_error": weak,
                "alpha_hat": alpha,
            }
        )
    meta = {
        "description": description,
        "r": r,
        "samples": n,
        "seed": seed,
        "ambient_dim": m,
        "sample_prefix": dims[0],
        "weak_probe": "first basis direction outside each prefix",
    }
    return ConvergenceReport(rows=tuple(rows), metadata=meta)


def continuity_probe(
    f,
    k: FiniteRankOperator,
    js: Sequence[int],
    v: Subspace,
    r: float = 1.0,
    n: int = 256,
    seed: int = 0,
    dim: int | None = None,
) -> list[dict]:
    """Compression continuity under shrinking perturbations f + (1/j)·k.

    Rows (j, ambient_error, subspace_error) over one V-ball sample set:
    ambient_error = max ‖f(x) − f_j(x)‖ and subspace_error the same after
    compression.  Both columns scale exactly like 1/j, and the compressed
    column can never exceed the ambient one at the same sample.
    """
    js = [int(j) for j in js]
    if any(j < 1 for j in js):
        raise ValueError("perturbation indices must be positive integers")
    m = _resolve_dim(f, dim)
    d = v.dim
    if not v.is_prefix or d == 0:
        raise ValueError("need a nonempty prefix subspace")
    xs = ball_samples(m, r, n, seed=seed, indices=list(range(d)))
    # the perturbation direction k(x) is shared by every j: evaluate once
    defects = np.stack([k.apply_array(x) for x in xs])
    amb = np.linalg.norm(defects, axis=1)
    sub = np.linalg.norm(defects[:, :d], axis=1)
    rows = []
    for j in js:
        rows.append(
            {
                "j": j,
                "ambient_error": float(np.max(amb) / j),
                "subspace_error": float(np.max(sub) / j),
            }
        )
    return rows


@dataclass(frozen=True, eq=False)
class OrientationScan:
    """Determinant signs of the compressed Jacobian along an operator path."""

    rows: tuple  # (t, sign, |det|)
    crossings: tuple  # (t_lo, t_hi) brackets, each of width < refine_tol

    @property
    def sign_changed(self) -> bool:
        return len(self.crossings) > 0


def _compressed_jacobian(f, d: int, m: int, base: np.ndarray, h: float) -> np.ndarray:
    jac = np.empty((d, d))
    basis = np.eye(m)
    for col in range(d):
        jac[:, col] = jvp(f, base, basis[col], h=h).coeffs[:d]
    if not np.all(np.isfinite(jac)):
        raise ValueError("finite-difference failure: non-finite Jacobian entries")
    return jac


def orientation_scan(
    path: Callable[[float], object],
    t_grid: Sequence[float],
    v: Subspace,
    base_point=None,
    dim: int | None = None,
    h: float = 1e-5,
    refine_tol: float = 1e-6,
) -> OrientationScan:
    """Track the compressed Jacobian's orientation along t ↦ path(t).

    Reports (t, det sign, |det|) at every grid point and brackets each
    detected sign change by bisection to a t-window below ``refine_tol``.
    """
    ts = [float(t) for t in t_grid]
    if len(ts) < 1:
        raise ValueError("empty t grid")
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("t grid must be strictly ascending")
    if not v.is_prefix or v.dim == 0 or v.dim > 50:
        raise ValueError("need a nonempty prefix subspace of dimension at most 50")
    d = v.dim
    m = _resolve_dim(path(ts[0]), dim)
    base = np.zeros(m) if base_point is None else as_coeffs(base_point).copy()
    base[d:] = 0.0

    def det_at(t: float) -> float:
        return float(np.linalg.det(_compressed_jacobian(path(t), d, m, base, h)))

    dets = [det_at(t) for t in ts]
    rows = tuple((t, int(np.sign(dv)), abs(dv)) for t, dv in zip(ts, dets))
    crossings = []
    for (t0, d0), (t1, d1) in zip(zip(ts, dets), zip(ts[1:], dets[1:])):
        if np.sign(d0) == np.sign(d1) and d0 != 0.0 and d1 != 0.0:
            continue
        lo, hi, dlo = t0, t1, d0
        while hi - lo > refine_tol:
            mid = 0.5 * (lo + hi)
            dmid = det_at(mid)
            if dmid == 0.0:
                half = 0.25 * refine_tol
                lo, hi = mid - half, mid + half
                break
            if np.sign(dmid) == np.sign(dlo):
                lo, dlo = mid, dmid
            else:
                hi = mid
        crossings.append((lo, hi))
    return OrientationScan(rows=rows, crossings=tuple(crossings))


def trend_converged(values: Sequence[float], final_threshold: float = 1e-3) -> bool:
    """Operational reading of "tends to zero" for a finite scan: the last
    value clears the threshold and the sequence strictly decreases."""
    vals = [float(x) for x in values]
    if not vals:
        return False
    decreasing = all(b < a for a, b in zip(vals, vals[1:]))
    return decreasing and vals[-1] < final_threshold
