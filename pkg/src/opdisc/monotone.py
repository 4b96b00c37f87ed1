"""Monotonicity and bilipschitz certification.

Sampled estimators (upper bounds by construction) live alongside
proof-grade certificates derived from structural hypotheses: a contraction
condition on a layer's middle map, eigenvalue bounds for linear maps, and
derivative bounds for pointwise maps.  Rejections are returned as
uncertified results carrying the violated quantity, not raised.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .layers import NeuralOperatorLayer, eval_map, jvp
from .operators import (
    DenseOnPrefix,
    Diagonal,
    Identity,
    LinearExpr,
    PointwiseActivation,
    Scalar,
)
from .spectral import Subspace

__all__ = [
    "MonotonicityCertificate",
    "BilipschitzEstimate",
    "pairwise_alpha",
    "layer_contraction_certificate",
    "linear_certificate",
    "nemytskii_certificate",
    "bilipschitz_estimate",
    "jacobian_pd_scan",
    "coercivity_margins",
    "ball_samples",
    "map_dim",
]

_METHODS = ("sampled", "layer_contraction", "linear_eig", "nemytskii")


@dataclass(frozen=True, eq=False)
class MonotonicityCertificate:
    """Strong-monotonicity constant with provenance.

    ``certified`` distinguishes proof-grade results (and sampled estimates
    that stayed positive) from rejections; a certificate can only be
    certified with alpha > 0.  Sampled results record their minimizing pair.
    """

    alpha: float
    method: str
    certified: bool
    ball_radius: float | str = "global"
    sample_count: int = 0
    seed: int | None = None
    minimizing_pair: tuple | None = None
    ratio: float | None = None
    note: str = ""

    def __post_init__(self) -> None:
        if self.method not in _METHODS:
            raise ValueError(f"unknown certificate method {self.method!r}")
        if self.certified and not self.alpha > 0.0:
            raise ValueError("certified status requires alpha > 0")

    def as_dict(self) -> dict:
        d = {
            "alpha": self.alpha,
            "method": self.method,
            "certified": self.certified,
            "ball_radius": self.ball_radius,
            "sample_count": self.sample_count,
            "seed": self.seed,
        }
        if self.ratio is not None:
            d["ratio"] = self.ratio
        if self.note:
            d["note"] = self.note
        if self.minimizing_pair is not None:
            d["minimizing_pair"] = [list(p) for p in self.minimizing_pair]
        return d


@dataclass(frozen=True, eq=False)
class BilipschitzEstimate:
    """Sampled two-sided Lipschitz bracket: quotient min and max."""

    c_lower: float
    c_upper: float
    ball_radius: float
    sample_count: int
    seed: int

    def __post_init__(self) -> None:
        if not 0.0 < self.c_lower <= self.c_upper:
            raise ValueError(
                f"need 0 < c_lower <= c_upper, got ({self.c_lower}, {self.c_upper})"
            )

    def as_dict(self) -> dict:
        return {
            "c_lower": self.c_lower,
            "c_upper": self.c_upper,
            "ball_radius": self.ball_radius,
            "sample_count": self.sample_count,
            "seed": self.seed,
        }


def map_dim(f) -> int | None:
    """Ambient dimension of a map, when it carries one."""
    d = getattr(f, "dim", None)
    if isinstance(d, (int, np.integer)):
        return int(d)
    if isinstance(f, LinearExpr):
        return f.intrinsic_dim()
    return None


def _resolve_dim(f, dim: int | None) -> int:
    m = dim if dim is not None else map_dim(f)
    if m is None:
        raise ValueError("map has no intrinsic dimension; pass dim=")
    return m


def ball_samples(
    dim: int,
    r: float,
    n: int,
    seed: int = 0,
    indices: Sequence[int] | None = None,
) -> np.ndarray:
    """(n, dim) rows in the closed ball of radius r, optionally confined to
    the coordinates in ``indices``."""
    if r <= 0.0:
        raise ValueError("ball radius must be positive")
    if n < 0:
        raise ValueError("sample count must be nonnegative")
    rng = np.random.default_rng(seed)
    active = sorted(indices) if indices is not None else list(range(dim))
    g = rng.standard_normal((n, len(active)))
    radii = r * rng.uniform(size=n) ** (1.0 / 3.0)
    norms = np.linalg.norm(g, axis=1)
    norms[norms == 0.0] = 1.0
    g *= (radii / norms)[:, None]
    out = np.zeros((n, dim))
    out[:, active] = g
    return out


def _pair_quotients(xs: np.ndarray, ys: np.ndarray):
    i, j = np.triu_indices(xs.shape[0], k=1)
    dx = xs[i] - xs[j]
    dy = ys[i] - ys[j]
    dist2 = np.einsum("ij,ij->i", dx, dx)
    ok = dist2 >= 1e-24  # degenerate pairs are skipped
    return i[ok], j[ok], dx[ok], dy[ok], dist2[ok]


def pairwise_alpha(
    f,
    r: float = 1.0,
    n: int = 256,
    seed: int = 0,
    dim: int | None = None,
    subspace: Subspace | None = None,
) -> MonotonicityCertificate:
    """Sampled strong-monotonicity estimate over pairs in the ball.

    The reported alpha is the minimum pair quotient
    <f(x1)-f(x2), x1-x2> / |x1-x2|^2, an upper bound for the true constant
    on that ball; the minimizing pair is recorded.
    """
    if n < 2:
        raise ValueError("need at least two samples")
    m = _resolve_dim(f, dim)
    idx = sorted(subspace.indices) if subspace is not None else None
    xs = ball_samples(m, r, n, seed=seed, indices=idx)
    ys = np.stack([eval_map(f, x) for x in xs])
    i, j, dx, dy, dist2 = _pair_quotients(xs, ys)
    if dx.shape[0] == 0:
        raise ValueError("all sampled pairs were degenerate")
    quo = np.einsum("ij,ij->i", dy, dx) / dist2
    k = int(np.argmin(quo))
    alpha = float(quo[k])
    return MonotonicityCertificate(
        alpha=alpha,
        method="sampled",
        certified=alpha > 0.0,
        ball_radius=r,
        sample_count=n,
        seed=seed,
        minimizing_pair=(xs[i[k]].copy(), xs[j[k]].copy()),
    )


def layer_contraction_certificate(layer: NeuralOperatorLayer) -> MonotonicityCertificate:
    """Certificate from the layer's contraction product.

    If the product of the two compact-map norms and the middle map's
    recorded Lipschitz bound is at most 1/2, the layer is strongly monotone
    with alpha = 1/2.  A zero product means the layer is the identity plus a
    constant (alpha = 1).  A larger product is a rejection carrying the
    ratio; an unbounded middle map is an error (missing certificate).
    """
    lip = layer.lip_nonlin
    if not np.isfinite(lip):
        raise ValueError("middle map carries no finite Lipschitz certificate")
    product = layer.in_op.norm * layer.out_op.norm * lip
    if product == 0.0:
        return MonotonicityCertificate(
            alpha=1.0, method="layer_contraction", certified=True, ratio=0.0,
            note="degenerate layer: identity plus a constant",
        )
    if product <= 0.5:
        return MonotonicityCertificate(
            alpha=0.5, method="layer_contraction", certified=True, ratio=float(product)
        )
    return MonotonicityCertificate(
        alpha=0.0,
        method="layer_contraction",
        certified=False,
        ratio=float(product),
        note=f"contraction product {product:.6g} exceeds 1/2",
    )


def linear_certificate(a, d: int | None = None) -> MonotonicityCertificate:
    """Smallest symmetric-part eigenvalue of a structured linear map.

    For a dense-on-prefix map the identity tail contributes 1 whenever the
    prefix size d exceeds the dense block.  Rejection (alpha <= 0) is a
    value, not an exception.
    """
    if isinstance(a, Identity):
        alpha = 1.0
    elif isinstance(a, Scalar):
        alpha = float(a.c)
    elif isinstance(a, Diagonal):
        take = a.entries if d is None else a.entries[:d]
        if take.size == 0:
            raise ValueError("empty diagonal restriction")
        alpha = float(np.min(take))
    elif isinstance(a, DenseOnPrefix):
        sym = (a.matrix + a.matrix.T) / 2.0
        alpha = float(np.linalg.eigvalsh(sym)[0])
        if d is not None and d > a.block_dim:
            alpha = min(alpha, 1.0)
    elif isinstance(a, LinearExpr):
        raise ValueError(
            "linear certificate needs identity/scalar/diagonal/dense-on-prefix form"
        )
    else:
        raise TypeError("linear certificate needs a linear operator expression")
    return MonotonicityCertificate(
        alpha=alpha, method="linear_eig", certified=alpha > 0.0,
        note="" if alpha > 0.0 else "symmetric part not positive definite",
    )


def nemytskii_certificate(sigma: PointwiseActivation) -> MonotonicityCertificate:
    """Monotonicity of pointwise composition from the derivative lower bound.

    Requires recorded growth bounds (the map must send the space into
    itself); a nonpositive derivative bound — plain ReLU, the cubed
    rectifier — is a rejection.
    """
    if sigma.growth is None:
        raise ValueError(
            f"activation {sigma.name} has no linear growth bound; "
            "pointwise certification needs one"
        )
    alpha = float(sigma.deriv_bounds[0])
    if alpha > 0.0:
        return MonotonicityCertificate(alpha=alpha, method="nemytskii", certified=True)
    return MonotonicityCertificate(
        alpha=alpha, method="nemytskii", certified=False,
        note="derivative lower bound is not positive",
    )


def bilipschitz_estimate(
    f,
    r: float = 1.0,
    n: int = 256,
    seed: int = 0,
    dim: int | None = None,
    subspace: Subspace | None = None,
) -> BilipschitzEstimate:
    """Sampled distortion bracket: min and max of |f(x1)-f(x2)|/|x1-x2|."""
    if n < 2:
        raise ValueError("need at least two samples")
    m = _resolve_dim(f, dim)
    idx = sorted(subspace.indices) if subspace is not None else None
    xs = ball_samples(m, r, n, seed=seed, indices=idx)
    ys = np.stack([eval_map(f, x) for x in xs])
    _, _, dx, dy, dist2 = _pair_quotients(xs, ys)
    if dx.shape[0] == 0:
        raise ValueError("all sampled pairs were degenerate")
    quo = np.sqrt(np.einsum("ij,ij->i", dy, dy) / dist2)
    return BilipschitzEstimate(
        c_lower=float(np.min(quo)),
        c_upper=float(np.max(quo)),
        ball_radius=r,
        sample_count=n,
        seed=seed,
    )


def jacobian_pd_scan(
    f,
    v: Subspace,
    r: float = 1.0,
    n: int = 32,
    seed: int = 0,
    h: float = 1e-5,
    dim: int | None = None,
) -> dict:
    """Positivity scan of the projected Jacobian on a prefix subspace.

    Assembles D(P_V f|_V) column by column with central differences at n
    sampled points of the V-ball and reports the worst symmetric-part
    eigenvalue and the worst determinant.
    """
    if not v.is_prefix:
        raise ValueError("scan is defined on prefix subspaces")
    d = v.dim
    if d == 0 or d > 50:
        raise ValueError("prefix dimension must lie in 1..50 for a dense eigensolve")
    m = _resolve_dim(f, dim)
    if d > m:
        raise ValueError("subspace exceeds ambient dimension")
    xs = ball_samples(m, r, n, seed=seed, indices=list(range(d)))
    min_sym = np.inf
    min_det = np.inf
    basis = np.eye(m)
    for x in xs:
        jac = np.empty((d, d))
        for col in range(d):
            deriv = jvp(f, x, basis[col], h=h).coeffs
            jac[:, col] = deriv[:d]
        if not np.all(np.isfinite(jac)):
            raise ValueError("finite-difference failure: non-finite Jacobian entries")
        sym_min = float(np.linalg.eigvalsh((jac + jac.T) / 2.0)[0])
        det = float(np.linalg.det(jac))
        min_sym = min(min_sym, sym_min)
        min_det = min(min_det, det)
    return {"min_sym_eig": min_sym, "min_det": min_det}


def coercivity_margins(
    f,
    alpha: float,
    radii: Sequence[float] = (1.0, 10.0, 100.0),
    n: int = 64,
    seed: int = 0,
    dim: int | None = None,
) -> dict:
    """Margins of the coercivity inequality along sampled directions.

    For each radius rho returns the minimum over sphere samples x of
    <f(x), x/|x|> - <f(0), x/|x|> - alpha*|x|; a strongly monotone map
    keeps every margin above a small negative tolerance.
    """
    m = _resolve_dim(f, dim)
    rng = np.random.default_rng(seed)
    f0 = eval_map(f, np.zeros(m))
    out = {}
    for rho in radii:
        dirs = rng.standard_normal((n, m))
        dirs /= np.linalg.norm(dirs, axis=1)[:, None]
        worst = np.inf
        for u in dirs:
            x = rho * u
            margin = float((eval_map(f, x) - f0) @ u) - alpha * rho
            worst = min(worst, margin)
        out[float(rho)] = worst
    return out
