"""Residual operator layers, stacked operators, and coordinate networks.

A layer is the residual map x + T_out(G(T_in(x))) built from two finite-rank
operators and a nonlinearity with a recorded Lipschitz bound.  On top of that
this module provides multi-stage stacks (linear mix after a pointwise
activation after a layer), residual chains acting through a coefficient
prefix, their invertible variant with a certified contraction bound, the
kernel-coefficient form of residual blocks, and a finite-difference
Jacobian-vector probe.

Networks are constructed from seeds and rescaled to target spectral bounds;
nothing here is trained.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .operators import (
    CoordinateActivation,
    FiniteRankOperator,
    LinearExpr,
    PointwiseActivation,
)
from .spectral import Space, SpectralVector, Subspace, as_coeffs

__all__ = [
    "Nonlinearity",
    "ZeroNonlinearity",
    "NemytskiiNonlinearity",
    "CoordinateNetNonlinearity",
    "AffineNonlinearity",
    "NeuralOperatorLayer",
    "Stage",
    "GeneralizedNeuralOperator",
    "CoordinateNetwork",
    "ResidualChain",
    "InvertibleResidualChain",
    "KernelStage",
    "ResidualNeuralOperatorBlock",
    "make_layer",
    "scaled_leaky_activation",
    "resnet_to_rno",
    "eval_map",
    "evaluate",
    "jvp",
]


# ---------------------------------------------------------------------------
# coordinate networks
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoordinateNetwork:
    """Plain MLP on coordinate vectors with a certified Lipschitz bound.

    ``spectral_bound`` is the product of per-stage spectral norms times the
    activation's global Lipschitz constant per hidden junction — an upper
    bound on the network's Lipschitz constant (infinite when the activation
    has no global constant; see :meth:`ball_bound` for the local version).
    """

    weights: tuple
    biases: tuple
    activation: CoordinateActivation
    spectral_bound: float = 0.0  # recomputed in __post_init__

    def __post_init__(self) -> None:
        ws = tuple(np.array(w, dtype=float) for w in self.weights)
        bs = tuple(np.array(b, dtype=float).reshape(-1) for b in self.biases)
        if not ws or len(ws) != len(bs):
            raise ValueError("need equally many weight matrices and bias vectors")
        for i, (w, b) in enumerate(zip(ws, bs)):
            if w.ndim != 2 or w.shape[0] != b.size:
                raise ValueError(f"stage {i}: bias length must match output rows")
            if i and w.shape[1] != ws[i - 1].shape[0]:
                raise ValueError(f"stage {i}: width mismatch with previous stage")
            w.flags.writeable = False
            b.flags.writeable = False
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)
        norms = [float(np.linalg.norm(w, 2)) for w in ws]
        act = self.activation.lipschitz
        bound = float(np.prod(norms)) * act ** (len(ws) - 1) if norms else 0.0
        object.__setattr__(self, "spectral_bound", float(bound))

    @property
    def n_in(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_out(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def widths(self) -> tuple:
        return (self.n_in,) + tuple(w.shape[0] for w in self.weights)

    def eval_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_in:
            raise ValueError(f"expected {self.n_in} input coordinates, got {x.shape[-1]}")
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = x @ w.T + b
            if i != last:
                x = self.activation(x)
        return x

    __call__ = eval_array

    def ball_bound(self, input_radius: float) -> float:
        """Lipschitz bound valid on the input ball of the given radius.

        Pre-activation range radii are propagated stage by stage; activations
        without a global constant (the cubed rectifier) contribute their
        local constant on that range.
        """
        r = float(input_radius)
        bound = 1.0
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            wn = float(np.linalg.norm(w, 2))
            r = wn * r + float(np.linalg.norm(b))
            bound *= wn
            if i != last:
                bound *= self.activation.local_lipschitz(r)
                r = self.activation.range_radius(r)
        return bound

    @classmethod
    def seeded(
        cls,
        n_in: int,
        n_out: int,
        *,
        hidden: Sequence[int] | None = None,
        activation: CoordinateActivation | None = None,
        target_bound: float = 1.0,
        bias_scale: float = 0.0,
        seed: int = 0,
    ) -> "CoordinateNetwork":
        """Gaussian weights rescaled so the certified bound equals the target.

        Defaults: two hidden stages of width ``4 * n_in``, leaky-ReLU(0.2).
        ``target_bound = 0`` gives the zero network.  When the activation has
        no global Lipschitz constant the per-junction factor is taken as 1
        for scaling purposes (the certified global bound is then infinite).
        """
        if target_bound < 0.0:
            raise ValueError("target Lipschitz bound must be nonnegative")
        act = activation if activation is not None else CoordinateActivation.leaky_relu(0.2)
        widths = [n_in] + list(hidden if hidden is not None else (4 * n_in, 4 * n_in)) + [n_out]
        rng = np.random.default_rng(seed)
        ws, bs = [], []
        n_stages = len(widths) - 1
        act_lip = act.lipschitz if np.isfinite(act.lipschitz) else 1.0
        stage_scale = (
            (target_bound / act_lip ** (n_stages - 1)) ** (1.0 / n_stages)
            if target_bound > 0.0
            else 0.0
        )
        for i in range(n_stages):
            w = rng.standard_normal((widths[i + 1], widths[i]))
            b = bias_scale * rng.standard_normal(widths[i + 1])
            if target_bound == 0.0:
                w = np.zeros_like(w)
                b = np.zeros_like(b)
            else:
                w *= stage_scale / np.linalg.norm(w, 2)
            ws.append(w)
            bs.append(b)
        return cls(tuple(ws), tuple(bs), act)

    def __repr__(self) -> str:
        return (
            f"CoordinateNetwork(widths={self.widths}, act={self.activation.name}, "
            f"bound={self.spectral_bound:.6g})"
        )


# ---------------------------------------------------------------------------
# layer nonlinearities
# ---------------------------------------------------------------------------


class Nonlinearity:
    """Middle map of a layer; carries a recorded Lipschitz upper bound."""

    lip: float
    name: str

    def apply_array(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroNonlinearity(Nonlinearity):
    name: str = "zero"
    lip: float = 0.0

    def apply_array(self, x: np.ndarray) -> np.ndarray:
        return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class NemytskiiNonlinearity(Nonlinearity):
    """Pointwise scalar function composed through the quadrature grid."""

    space: Space
    sigma: PointwiseActivation

    @property
    def lip(self) -> float:  # type: ignore[override]
        return self.sigma.lipschitz

    @property
    def name(self) -> str:  # type: ignore[override]
        return f"nemytskii[{self.sigma.name}]"

    def apply_array(self, x: np.ndarray) -> np.ndarray:
        if self.sigma.is_identity:
            return np.array(x, dtype=float, copy=True)
        return self.space.from_grid(self.sigma(self.space.to_grid(x))).coeffs


@dataclass(frozen=True, eq=False)
class CoordinateNetNonlinearity(Nonlinearity):
    """A coordinate network on the first ``net.n_in`` coefficients.

    With ``ambient_dim == net.n_in`` the map is the network itself; with a
    shorter prefix the remaining coefficients pass through unchanged, which
    forces the recorded bound up to at least 1.
    """

    net: CoordinateNetwork
    ambient_dim: int

    def __post_init__(self) -> None:
        if self.net.n_in != self.net.n_out:
            raise ValueError("layer nonlinearity needs a square network")
        if self.net.n_in > self.ambient_dim:
            raise ValueError("network width exceeds the ambient dimension")

    @property
    def lip(self) -> float:  # type: ignore[override]
        b = self.net.spectral_bound
        return b if self.net.n_in == self.ambient_dim else max(1.0, b)

    @property
    def name(self) -> str:  # type: ignore[override]
        return f"coordinate_net[{self.net.activation.name}]"

    def apply_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.ambient_dim:
            raise ValueError("dimension mismatch for coordinate-net nonlinearity")
        n = self.net.n_in
        if n == self.ambient_dim:
            return self.net.eval_array(x)
        y = np.array(x, dtype=float, copy=True)
        y[..., :n] = self.net.eval_array(x[..., :n])
        return y


@dataclass(frozen=True, eq=False)
class AffineNonlinearity(Nonlinearity):
    """x -> A x + b with the exact spectral norm of A recorded."""

    matrix: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=float)
        b = np.array(self.bias, dtype=float).reshape(-1)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] != b.size:
            raise ValueError("affine nonlinearity needs a square matrix and matching bias")
        m.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "bias", b)

    @property
    def lip(self) -> float:  # type: ignore[override]
        return float(np.linalg.norm(self.matrix, 2))

    @property
    def name(self) -> str:  # type: ignore[override]
        return "affine_contraction"

    def apply_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.bias.size:
            raise ValueError("dimension mismatch for affine nonlinearity")
        return x @ self.matrix.T + self.bias


# ---------------------------------------------------------------------------
# layers and stacks
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NeuralOperatorLayer:
    """Residual layer x + T_out(G(T_in(x))) on ambient coefficients."""

    in_op: FiniteRankOperator
    out_op: FiniteRankOperator
    nonlin: Nonlinearity

    def __post_init__(self) -> None:
        if self.in_op.dim != self.out_op.dim:
            raise ValueError("in/out operators must share the ambient dimension")

    @property
    def dim(self) -> int:
        return self.in_op.dim

    @property
    def lip_nonlin(self) -> float:
        """Recorded Lipschitz upper bound of the middle map."""
        return self.nonlin.lip

    @property
    def contraction(self) -> float:
        """Certified bound on Lip of the non-identity part T_out.G.T_in."""
        return self.in_op.norm * self.out_op.norm * self.nonlin.lip

    def eval_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected {self.dim} coefficients, got {x.shape[-1]}")
        return x + self.out_op.apply_array(
            self.nonlin.apply_array(self.in_op.apply_array(x))
        )


@dataclass(frozen=True, eq=False)
class Stage:
    """One stage of a stacked operator: layer, pointwise activation, mix."""

    linear: LinearExpr
    activation: PointwiseActivation
    layer: NeuralOperatorLayer


@dataclass(frozen=True, eq=False)
class GeneralizedNeuralOperator:
    """Composition mix_L . act_L . layer_L . ... . mix_1 . act_1 . layer_1."""

    stages: tuple
    space: Space | None = None

    def __post_init__(self) -> None:
        st = tuple(self.stages)
        if not st:
            raise ValueError("need at least one stage")
        if self.space is None and any(not s.activation.is_identity for s in st):
            raise ValueError("non-identity pointwise activations need a space")
        object.__setattr__(self, "stages", st)

    @property
    def dim(self) -> int:
        return self.stages[0].layer.dim

    def eval_array(self, x: np.ndarray) -> np.ndarray:
        for s in self.stages:
            x = s.layer.eval_array(x)
            if not s.activation.is_identity:
                assert self.space is not None
                x = self.space.from_grid(s.activation(self.space.to_grid(x))).coeffs
            x = s.linear.apply_array(x)
        return x


# ---------------------------------------------------------------------------
# residual chains on a coefficient prefix
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ResidualChain:
    """Blocks x + embed(net(first-N-coefficients)); the tail never moves."""

    ambient_dim: int
    prefix_n: int
    blocks: tuple

    def __post_init__(self) -> None:
        if not 1 <= self.prefix_n <= self.ambient_dim:
            raise ValueError("prefix dimension must lie in 1..ambient_dim")
        bl = tuple(self.blocks)
        if not bl:
            raise ValueError("need at least one block")
        for i, net in enumerate(bl):
            if net.n_in != self.prefix_n or net.n_out != self.prefix_n:
                raise ValueError(f"block {i} is not square on the prefix dimension")
        object.__setattr__(self, "blocks", bl)

    @property
    def dim(self) -> int:
        return self.ambient_dim

    def block_eval_array(self, i: int, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.ambient_dim:
            raise ValueError("dimension mismatch for residual chain")
        y = np.array(x, dtype=float, copy=True)
        y[..., : self.prefix_n] += self.blocks[i].eval_array(x[..., : self.prefix_n])
        return y

    def eval_array(self, x: np.ndarray) -> np.ndarray:
        for i in range(len(self.blocks)):
            x = self.block_eval_array(i, x)
        return x

    @classmethod
    def seeded(
        cls,
        ambient_dim: int,
        prefix_n: int,
        num_blocks: int,
        *,
        block_bound: float = 0.5,
        activation: CoordinateActivation | None = None,
        hidden: Sequence[int] | None = None,
        bias_scale: float = 0.3,
        seed: int = 0,
    ) -> "ResidualChain":
        rng = np.random.default_rng(seed)
        blocks = []
        for _ in range(num_blocks):
            sub = int(rng.integers(0, 2**63))
            blocks.append(
                CoordinateNetwork.seeded(
                    prefix_n,
                    prefix_n,
                    hidden=hidden,
                    activation=activation,
                    target_bound=block_bound,
                    bias_scale=bias_scale,
                    seed=sub,
                )
            )
        return cls(ambient_dim, prefix_n, tuple(blocks))


@dataclass(frozen=True, eq=False)
class InvertibleResidualChain:
    """Residual chain whose residual parts are certified contractions.

    Every block must carry a certified Lipschitz bound <= delta < 1.  For
    activations without a global constant, pass ``ball_radius`` so the
    certificate can use the ball-local bound; the certificate method is
    recorded either way.
    """

    chain: ResidualChain
    delta: float
    ball_radius: float | None = None
    cert_method: str = "spectral"  # filled in __post_init__

    def __post_init__(self) -> None:
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"contraction bound must lie in (0, 1), got {self.delta}")
        if self.ball_radius is not None and self.ball_radius <= 0.0:
            raise ValueError("ball radius must be positive")
        method = "spectral"
        for i, net in enumerate(self.chain.blocks):
            bound = net.spectral_bound
            if not np.isfinite(bound):
                if self.ball_radius is None:
                    raise ValueError(
                        f"block {i} has no global Lipschitz certificate "
                        "(activation unbounded); pass ball_radius= for a local one"
                    )
                bound = net.ball_bound(self.ball_radius)
                method = "ball_local"
            if bound > self.delta + 1e-12:
                raise ValueError(
                    f"block {i} certificate {bound:.6g} exceeds delta={self.delta}"
                )
        object.__setattr__(self, "cert_method", method)

    @property
    def dim(self) -> int:
        return self.chain.dim

    @property
    def prefix_n(self) -> int:
        return self.chain.prefix_n

    @property
    def blocks(self) -> tuple:
        return self.chain.blocks

    def eval_array(self, x: np.ndarray) -> np.ndarray:
        return self.chain.eval_array(x)

    @classmethod
    def seeded(
        cls,
        ambient_dim: int,
        prefix_n: int,
        num_blocks: int,
        delta: float,
        *,
        activation: CoordinateActivation | None = None,
        hidden: Sequence[int] | None = None,
        bias_scale: float = 0.3,
        seed: int = 0,
        margin: float = 1.0,
    ) -> "InvertibleResidualChain":
        """Chain with every block's certified bound equal to margin*delta."""
        if not 0.0 < delta < 1.0:
            raise ValueError(f"contraction bound must lie in (0, 1), got {delta}")
        chain = ResidualChain.seeded(
            ambient_dim,
            prefix_n,
            num_blocks,
            block_bound=margin * delta,
            activation=activation,
            hidden=hidden,
            bias_scale=bias_scale,
            seed=seed,
        )
        return cls(chain, delta)


# ---------------------------------------------------------------------------
# kernel-coefficient form of residual blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KernelStage:
    """One affine stage: kernel on coefficients, local channel mix, bias.

    ``kernel[p, q]`` is the (d_out, d_in) matrix sending the p-th input
    coefficient of each channel to the q-th output basis direction.  Biases
    are coefficient rows (a constant bias is a multiple of the constant
    basis element).  ``activated`` says whether the block activation follows.
    """

    kernel: np.ndarray | None
    local: np.ndarray | None
    bias: np.ndarray | None
    activated: bool
    d_in: int
    d_out: int

    def __post_init__(self) -> None:
        for name, arr, nd in (("kernel", self.kernel, 4), ("local", self.local, 2), ("bias", self.bias, 2)):
            if arr is not None:
                a = np.array(arr, dtype=float)
                if a.ndim != nd:
                    raise ValueError(f"{name} must be {nd}-dimensional")
                a.flags.writeable = False
                object.__setattr__(self, name, a)
        if self.kernel is None and self.local is None:
            raise ValueError("stage needs a kernel or local weights")


@dataclass(frozen=True, eq=False)
class ResidualNeuralOperatorBlock:
    """x + body(x), the body a stack of kernel/local/bias stages.

    Channels are coefficient rows; kernels touch only the first ``prefix_n``
    coefficients, local weights mix channels pointwise (exact on
    coefficients), and activations act pointwise on the quadrature grid,
    jointly across channels (so pair-sorting activations see the channel
    vector at each point).
    """

    space: Space
    prefix_n: int
    stages: tuple
    activation: CoordinateActivation

    def __post_init__(self) -> None:
        if not 1 <= self.prefix_n <= self.space.dim:
            raise ValueError("prefix dimension must lie in 1..ambient_dim")
        st = tuple(self.stages)
        if not st:
            raise ValueError("need at least one stage")
        if st[0].d_in != 1 or st[-1].d_out != 1:
            raise ValueError("block body must map one channel to one channel")
        for i in range(1, len(st)):
            if st[i].d_in != st[i - 1].d_out:
                raise ValueError(f"stage {i} channel mismatch")
        object.__setattr__(self, "stages", st)

    def _activate(self, u: np.ndarray) -> np.ndarray:
        # u: (channels, M) coefficient rows -> pointwise activation on grid
        vals = np.stack([self.space.to_grid(row) for row in u])
        vals = self.activation(vals.T).T  # joint across channels at each node
        return np.stack([self.space.from_grid(v).coeffs for v in vals])

    def body_array(self, x: np.ndarray) -> np.ndarray:
        n = self.prefix_n
        u = np.asarray(x, dtype=float).reshape(1, -1)
        for stage in self.stages:
            out = np.zeros((stage.d_out, u.shape[1]))
            if stage.local is not None:
                out += stage.local @ u
            if stage.kernel is not None:
                # out[:, q] += sum_p kernel[p, q] @ u[:, p]
                out[:, :n] += np.einsum("pqoi,ip->oq", stage.kernel, u[:, :n])
            if stage.bias is not None:
                out += stage.bias
            u = self._activate(out) if stage.activated else out
        return u[0]

    def eval_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.space.dim:
            raise ValueError("dimension mismatch for kernel block")
        return x + self.body_array(x)

    @property
    def dim(self) -> int:
        return self.space.dim


def _constant_first_basis(space: Space) -> None:
    if space.spec.kind != "fourier":
        raise ValueError(
            "kernel-coefficient form needs a realized basis whose first "
            "element is the constant function"
        )


def resnet_to_rno(chain: ResidualChain, space: Space) -> list[ResidualNeuralOperatorBlock]:
    """Rewrite each chain block in kernel-coefficient form.

    The first network stage becomes a kernel lifting coefficients into
    constant-function channels, middle stages become local channel mixes
    with constant biases, and the last stage becomes a kernel mapping the
    constant channels back onto the coefficient prefix (its bias decoded as
    a function).  Evaluation agrees with the chain to roundoff.
    """
    _constant_first_basis(space)
    if space.dim != chain.ambient_dim:
        raise ValueError("space and chain disagree on the ambient dimension")
    n = chain.prefix_n
    m = space.dim
    out = []
    for net in chain.blocks:
        ws, bs = net.weights, net.biases
        L = len(ws)
        stages: list[KernelStage] = []
        if L == 1:
            kernel = np.zeros((n, n, 1, 1))
            kernel[:, :, 0, 0] = ws[0].T  # coefficient p -> basis q weight W[q, p]
            bias = np.zeros((1, m))
            bias[0, :n] = bs[0]
            stages.append(KernelStage(kernel, None, bias, False, 1, 1))
        else:
            w1 = ws[0]
            d1 = w1.shape[0]
            lift = np.zeros((n, n, d1, 1))
            lift[:, 0, :, 0] = w1.T  # constant-channel lift: all mass on basis 0
            bias1 = np.zeros((d1, m))
            bias1[:, 0] = bs[0]
            stages.append(KernelStage(lift, None, bias1, True, 1, d1))
            for i in range(1, L - 1):
                bias_i = np.zeros((ws[i].shape[0], m))
                bias_i[:, 0] = bs[i]
                stages.append(
                    KernelStage(None, ws[i], bias_i, True, ws[i].shape[1], ws[i].shape[0])
                )
            wl = ws[-1]
            dl = wl.shape[1]
            proj = np.zeros((n, n, 1, dl))
            proj[0, :, 0, :] = wl  # constant channels (coefficient 0) -> prefix
            bias_l = np.zeros((1, m))
            bias_l[0, :n] = bs[-1]
            stages.append(KernelStage(proj, None, bias_l, False, dl, 1))
        out.append(ResidualNeuralOperatorBlock(space, n, tuple(stages), net.activation))
    return out


# ---------------------------------------------------------------------------
# evaluation protocol and derivative probe
# ---------------------------------------------------------------------------


def eval_map(f, x: np.ndarray) -> np.ndarray:
    """Evaluate any of the package's map types (or a callable) on an array."""
    x = np.asarray(x, dtype=float)
    if isinstance(f, (FiniteRankOperator, LinearExpr)):
        return f.apply_array(x)
    if hasattr(f, "eval_array"):
        return f.eval_array(x)
    if callable(f):
        return np.asarray(f(x), dtype=float)
    raise TypeError(f"cannot evaluate object of type {type(f).__name__}")


def evaluate(f, x) -> SpectralVector:
    return SpectralVector(eval_map(f, as_coeffs(x)))


def jvp(f, x, v, h: float = 1e-5) -> SpectralVector:
    """Directional derivative by central differences: O(h^2) for C^2 maps."""
    if h <= 0.0:
        raise ValueError("step size must be positive")
    xc, vc = as_coeffs(x), as_coeffs(v)
    plus = eval_map(f, xc + h * vc)
    minus = eval_map(f, xc - h * vc)
    return SpectralVector((plus - minus) / (2.0 * h))


# ---------------------------------------------------------------------------
# seeded layer generator
# ---------------------------------------------------------------------------

_LAYER_SPEC_KEYS = {
    "rank",
    "decay",
    "lip_g",
    "kind",
    "norm_in",
    "norm_out",
    "out_phi_prefix",
    "bias_scale",
    "hidden",
    "activation",
    "net_dim",
}

_ACTIVATIONS = {
    "leaky_relu": lambda: CoordinateActivation.leaky_relu(0.2),
    "groupsort2": CoordinateActivation.groupsort2,
    "recu": CoordinateActivation.recu,
    "tanh": CoordinateActivation.tanh,
    "identity": CoordinateActivation.identity,
}


def scaled_leaky_activation(scale: float) -> PointwiseActivation:
    """``scale * leaky_relu(0.2)``: slope bounds scale with it."""
    base = PointwiseActivation.leaky_relu(0.2)
    return PointwiseActivation.custom(
        lambda s, b=base, c=scale: c * b(s),
        lambda s, b=base, c=scale: c * b.derivative(s),
        (0.2 * scale, scale),
        growth=(scale, 0.0),
        name=f"scaled_leaky({scale:g})",
    )


def make_layer(space: Space, layer_spec: dict | None = None, seed: int = 0, **overrides):
    """Deterministic test layer from a seed and a small spec dict.

    Keys (all optional): rank (default min(M, 8)), decay (singular decay
    exponent, default 1), lip_g (target Lipschitz bound of the middle map,
    default 0.5; 0 gives an identity layer), kind ("coordinate_net",
    "nemytskii", or "affine_contraction"), norm_in/norm_out (top singular
    values of the two compact maps), out_phi_prefix (make the output
    operator's range directions the basis prefix), bias_scale, hidden,
    activation, net_dim (coordinate-net window, default the full dimension).
    """
    cfg = dict(layer_spec or {})
    cfg.update(overrides)
    unknown = set(cfg) - _LAYER_SPEC_KEYS
    if unknown:
        raise ValueError(f"unknown layer spec keys: {sorted(unknown)}")
    m = space.dim
    rank = int(cfg.get("rank", min(m, 8)))
    decay = float(cfg.get("decay", 1.0))
    lip_g = float(cfg.get("lip_g", 0.5))
    kind = cfg.get("kind", "coordinate_net")
    norm_in = float(cfg.get("norm_in", 1.0))
    norm_out = float(cfg.get("norm_out", 1.0))
    bias_scale = float(cfg.get("bias_scale", 0.0))
    if lip_g < 0.0:
        raise ValueError("lip_g target must be nonnegative")
    if not 1 <= rank <= m:
        raise ValueError(f"rank must lie in 1..{m}")

    rng = np.random.default_rng(seed)
    s_in, s_out, s_g = (int(s) for s in rng.integers(0, 2**63, size=3))
    t_in = FiniteRankOperator.seeded(m, rank, scale=norm_in, decay=decay, seed=s_in)
    t_out = FiniteRankOperator.seeded(
        m,
        rank,
        scale=norm_out,
        decay=decay,
        seed=s_out,
        phi_prefix=bool(cfg.get("out_phi_prefix", False)),
    )

    nonlin: Nonlinearity
    if lip_g == 0.0:
        nonlin = ZeroNonlinearity()
    elif kind == "coordinate_net":
        act = _ACTIVATIONS[cfg.get("activation", "leaky_relu")]()
        net_dim = int(cfg.get("net_dim", m))
        hidden = cfg.get("hidden")
        net = CoordinateNetwork.seeded(
            net_dim,
            net_dim,
            hidden=hidden,
            activation=act,
            target_bound=lip_g,
            bias_scale=bias_scale,
            seed=s_g,
        )
        nonlin = CoordinateNetNonlinearity(net, m)
    elif kind == "nemytskii":
        nonlin = NemytskiiNonlinearity(space, scaled_leaky_activation(lip_g))
    elif kind == "affine_contraction":
        a = rng.standard_normal((m, m))
        a *= lip_g / np.linalg.norm(a, 2)
        b = bias_scale * rng.standard_normal(m)
        nonlin = AffineNonlinearity(a, b)
    else:
        raise ValueError(f"unknown nonlinearity kind {kind!r}")

    return NeuralOperatorLayer(t_in, t_out, nonlin)
