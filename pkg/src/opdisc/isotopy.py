"""A path of orthogonal maps that no finite truncation can follow.

On the sequence space there is a continuous path of linear isometries that
starts at the identity and ends at a single-coordinate reflection.  The path
sweeps an infinite cascade of 2x2 rotation blocks: block ``i`` turns from I to
-I while the sweep parameter ``u = 1/(1 - t)`` crosses the window ``[i, i+1]``,
so every finite stretch of coordinates has finished rotating long before
``t = 1``, yet at each fixed ``t`` the map is orthogonal.  Gluing a second,
reflected cascade onto the first connects the identity to ``diag(-1, I)``
through invertible maps — something the determinant forbids in any fixed
finite dimension.

This module builds the finite m-dimensional shadows of that path.  Truncating
to a prefix that cuts a rotation block in half leaves a lone cosine on the
diagonal, and the determinant of the truncated map must cross zero; truncating
on a block boundary keeps the determinant at +-1 but forces it to jump at the
gluing point.  Either way the finite picture breaks: continuous-but-singular,
or invertible-but-discontinuous.  ``truncated_det_scan`` records both columns
side by side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .decompose import quintic_smoothstep

__all__ = [
    "IsotopyConfig",
    "TruncationScan",
    "block_angle",
    "glued_truncation_matrix",
    "isotopy_map",
    "reflected_rotation_cascade",
    "rotation_cascade",
    "truncated_det_scan",
]


def block_angle(u, index):
    """Rotation angle of block ``index`` at sweep parameter ``u``.

    The angle ramps from 0 to pi while ``u`` crosses ``[index, index + 1]``,
    following the clamped quintic step, so each block flips to -I in turn.
    """
    return quintic_smoothstep(u - index) * math.pi


def _rotation(theta: float) -> np.ndarray:
    if theta == math.pi:
        # a finished block is exactly -I; sin(pi) in floats leaves a 1e-16 residue
        return -np.eye(2)
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]])


def rotation_cascade(t: float, m: int) -> np.ndarray:
    """The m-dim block of the rotation cascade at path parameter ``t``.

    ``m`` must be even so the prefix holds whole 2x2 blocks.  At ``t = 0``
    every block is still the identity; at ``t = 1`` the sweep has passed every
    block and the matrix is exactly -I.  Orthogonal for every ``t``, and its
    determinant is +1 throughout: rotations cannot change orientation.
    """
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"path parameter must lie in [0, 1], got {t}")
    if m < 2 or m % 2 != 0:
        raise ValueError(
            f"the rotation cascade needs an even dimension (whole 2x2 blocks), got m={m}"
        )
    if t == 1.0:
        return -np.eye(m)
    u = 1.0 / (1.0 - t)
    mat = np.zeros((m, m))
    for i in range(1, m // 2 + 1):
        block = _rotation(block_angle(u, i))
        mat[2 * i - 2 : 2 * i, 2 * i - 2 : 2 * i] = block
    return mat


def reflected_rotation_cascade(t: float, m: int) -> np.ndarray:
    """The cascade with one extra frozen -1 coordinate in front.

    ``m`` must be odd: coordinate one carries the reflection, the remaining
    even-dimensional tail carries the rotation cascade.  Ends at exactly -I
    when ``t = 1``, so it meets :func:`rotation_cascade` there; at ``t = 0``
    it is the single-coordinate reflection ``diag(-1, I)``.
    """
    if m < 3 or m % 2 != 1:
        raise ValueError(
            f"the reflected cascade needs an odd dimension (a -1 plus whole blocks), got m={m}"
        )
    mat = np.zeros((m, m))
    mat[0, 0] = -1.0
    mat[1:, 1:] = rotation_cascade(t, m - 1)
    return mat


def glued_truncation_matrix(t: float, m: int) -> np.ndarray:
    """Leading m-by-m corner of the glued path at parameter ``t``.

    The glued path runs the rotation cascade forward on ``t <= 1/2`` (at
    doubled speed) and the reflected cascade backward on ``t > 1/2``; both
    halves equal -I at the seam.  The corner is extracted from an ambient
    matrix large enough to hold every whole block, so a prefix that ends
    mid-block keeps only the ``cos`` entry of the block it cuts.
    """
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"path parameter must lie in [0, 1], got {t}")
    if m < 1:
        raise ValueError("need at least one coordinate")
    if t <= 0.5:
        ambient = m if m % 2 == 0 else m + 1
        full = rotation_cascade(2.0 * t, ambient)
    else:
        ambient = m if m % 2 == 1 else m + 1
        full = reflected_rotation_cascade(2.0 - 2.0 * t, ambient)
    return np.ascontiguousarray(full[:m, :m])


def isotopy_map(v: np.ndarray, t: float, m: int) -> np.ndarray:
    """Apply the m-truncated glued path at parameter ``t`` to ``v``.

    Accepts a single coefficient vector or a batch with trailing axis ``m``.
    At ``t = 0`` this is the identity, at ``t = 1/2`` it is -I, and at
    ``t = 1`` it negates exactly the first coordinate.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim == 0 or v.shape[-1] != m:
        raise ValueError(f"expected vectors with trailing axis {m}, got shape {v.shape}")
    return v @ glued_truncation_matrix(t, m).T


@dataclass(frozen=True)
class IsotopyConfig:
    """Grid and smoothing choices for scanning the glued path.

    The smooth step is the clamped quintic ramp; its boundary values and
    monotonicity are re-checked at construction.  ``faithful_t_max`` reports
    how far along the first half of the path the m-dimensional model still
    resolves the sweep: beyond it the transitioning block has left the model
    and the truncation sits frozen at -I.
    """

    m: int
    t_resolution: int = 65
    step_name: str = "quintic_smoothstep"

    def __post_init__(self) -> None:
        if self.m < 3:
            raise ValueError("need at least three coordinates to cut a block")
        if self.t_resolution < 3:
            raise ValueError("need at least three grid points")
        if self.step_name != "quintic_smoothstep":
            raise ValueError(
                f"only the quintic smoothstep ramp is shipped, got {self.step_name!r}"
            )
        probe = np.linspace(-0.5, 1.5, 81)
        vals = quintic_smoothstep(probe)
        if not (np.all(vals[probe <= 0.0] == 0.0) and np.all(vals[probe >= 1.0] == 1.0)):
            raise ValueError("smooth step must be 0 below 0 and 1 above 1")
        if np.any(np.diff(vals) < 0.0):
            raise ValueError("smooth step must be monotone")

    @property
    def faithful_t_max(self) -> float:
        """Largest first-half ``t`` whose transitioning block the model holds.

        The sweep sits inside block ``k`` while ``1/(1 - 2t)`` is in
        ``[k, k + 1]``; the model holds ``m // 2`` whole blocks, so it stays
        faithful for ``1/(1 - 2t) <= m // 2 + 1``.
        """
        return 0.5 * (1.0 - 1.0 / (self.m // 2 + 1))

    def t_grid(self) -> np.ndarray:
        """Uniform grid on [0, 1] plus dyadic refinements toward the seam.

        The extra points ``(1 - 2**-k) / 2`` approach ``t = 1/2`` the way the
        continuity proof does — each one doubles the index of the block in
        transit — and stop once that index would leave the model.
        """
        base = np.linspace(0.0, 1.0, self.t_resolution)
        dyadic = []
        k = 1
        while 2**k <= self.m // 2:
            dyadic.append(0.5 * (1.0 - 2.0**-k))
            k += 1
        return np.unique(np.concatenate([base, dyadic]))


@dataclass(frozen=True)
class TruncationScan:
    """Determinant record of one truncated sweep along the glued path.

    ``dets``/``min_svs`` follow the cut truncation (dimension ``m``, odd, so
    the first half slices a rotation block); ``aligned_dets`` follow the
    block-aligned truncation of the same operators, which stays at +-1 but
    jumps at the seam.  ``crossings`` lists every bisected zero of the cut
    determinant as ``(t, det, min_sv)`` triples.
    """

    m: int
    t_grid: np.ndarray
    dets: np.ndarray
    min_svs: np.ndarray
    aligned_dets: np.ndarray
    det_endpoint_signs: tuple[int, int]
    crossings: tuple[tuple[float, float, float], ...]
    bisect_tol: float
    config: IsotopyConfig | None = field(repr=False, default=None)

    @property
    def t_star(self) -> float:
        return self.crossings[0][0]

    @property
    def det_at_star(self) -> float:
        return self.crossings[0][1]

    @property
    def min_sv_at_star(self) -> float:
        return self.crossings[0][2]

    def rows(self) -> list[tuple[float, float, float]]:
        return [
            (float(t), float(d), float(sv))
            for t, d, sv in zip(self.t_grid, self.dets, self.min_svs)
        ]

    def as_dict(self) -> dict:
        return {
            "m": self.m,
            "t_grid": [float(t) for t in self.t_grid],
            "dets": [float(d) for d in self.dets],
            "min_svs": [float(s) for s in self.min_svs],
            "aligned_dets": [float(d) for d in self.aligned_dets],
            "det_endpoint_signs": list(self.det_endpoint_signs),
            "crossings": [[float(a), float(b), float(c)] for a, b, c in self.crossings],
            "t_star": float(self.t_star),
            "bisect_tol": float(self.bisect_tol),
        }


def _aligned_det(t: float, m: int) -> float:
    """Determinant of the block-aligned truncation at parameter ``t``.

    First half: one extra coordinate completes the cut block, so the prefix is
    a direct sum of rotations.  Second half: dimension m is already aligned
    (the -1 plus whole blocks).  Invertible throughout — and therefore forced
    to jump from +1 to -1 at the seam.
    """
    if t <= 0.5:
        return float(np.linalg.det(rotation_cascade(2.0 * t, m + 1)))
    return float(np.linalg.det(reflected_rotation_cascade(2.0 - 2.0 * t, m)))


def truncated_det_scan(m, t_grid=101, bisect_tol=1e-12, config=None):
    """Scan det and least singular value of the m-truncated glued path.

    ``m`` must be odd and at least 3 so that the first half of the path cuts a
    rotation block.  ``t_grid`` is an integer grid size, an explicit strictly
    increasing grid spanning [0, 1], or None to use ``config.t_grid()``.
    Every sign change of the determinant is bisected to ``bisect_tol``; the
    endpoints are the identity (det +1) and the single-coordinate reflection
    (det -1), so at least one crossing always exists.
    """
    if m < 3 or m % 2 != 1:
        raise ValueError(f"need an odd truncation of at least 3 to cut a block, got m={m}")
    if bisect_tol <= 0.0:
        raise ValueError("bisection tolerance must be positive")
    if config is None:
        config = IsotopyConfig(m)
    if t_grid is None:
        ts = config.t_grid()
    elif isinstance(t_grid, (int, np.integer)):
        if t_grid < 2:
            raise ValueError("need at least two grid points")
        ts = np.linspace(0.0, 1.0, int(t_grid))
    else:
        ts = np.asarray(t_grid, dtype=float)
        if ts.ndim != 1 or ts.size < 2:
            raise ValueError("need at least two grid points")
        if np.any(np.diff(ts) <= 0.0):
            raise ValueError("the grid must be strictly increasing")
        if ts[0] != 0.0 or ts[-1] != 1.0:
            raise ValueError("the grid must span [0, 1]")

    def det_and_sv(t: float) -> tuple[float, float]:
        mat = glued_truncation_matrix(t, m)
        svs = np.linalg.svd(mat, compute_uv=False)
        return float(np.linalg.det(mat)), float(svs[-1])

    dets = np.empty(ts.size)
    min_svs = np.empty(ts.size)
    aligned = np.empty(ts.size)
    for idx, t in enumerate(ts):
        dets[idx], min_svs[idx] = det_and_sv(float(t))
        aligned[idx] = _aligned_det(float(t), m)
    signs = (int(np.sign(dets[0])), int(np.sign(dets[-1])))

    crossings = []
    for idx in range(ts.size - 1):
        if dets[idx] == 0.0:
            crossings.append((float(ts[idx]), dets[idx], min_svs[idx]))
            continue
        if dets[idx] * dets[idx + 1] >= 0.0:
            continue
        lo, hi = float(ts[idx]), float(ts[idx + 1])
        det_lo = dets[idx]
        while hi - lo > bisect_tol:
            mid = 0.5 * (lo + hi)
            det_mid, _ = det_and_sv(mid)
            if det_mid == 0.0:
                lo = hi = mid
                break
            if det_lo * det_mid < 0.0:
                hi = mid
            else:
                lo, det_lo = mid, det_mid
        t_star = 0.5 * (lo + hi)
        det_star, sv_star = det_and_sv(t_star)
        crossings.append((t_star, det_star, sv_star))
    if not crossings:
        raise RuntimeError(
            "no determinant sign change on the grid; this cannot happen for an odd "
            "truncation unless the path is broken"
        )

    return TruncationScan(
        m=m,
        t_grid=ts,
        dets=dets,
        min_svs=min_svs,
        aligned_dets=aligned,
        det_endpoint_signs=signs,
        crossings=tuple(crossings),
        bisect_tol=float(bisect_tol),
        config=config,
    )
