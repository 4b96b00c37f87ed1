"""JSON round-trips for spaces, operators, layers, chains, and certificates.

Every artifact file carries ``"schema": 1`` and is validated strictly: an
unknown key is an error, never a silent default.  Floats pass through
``format(x, ".17g")`` on the way out so that artifacts are byte-reproducible
and re-parse to the identical value.  Seeded object specs (``seeded_layer``,
``seeded_chain``, ...) describe an object by its generator arguments instead
of its coefficients; both forms rebuild to the same evaluators.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .layers import (
    _ACTIVATIONS,
    AffineNonlinearity,
    CoordinateNetNonlinearity,
    CoordinateNetwork,
    FiniteRankOperator,
    InvertibleResidualChain,
    NemytskiiNonlinearity,
    NeuralOperatorLayer,
    ResidualChain,
    ZeroNonlinearity,
    make_layer,
    scaled_leaky_activation,
)
from .operators import CoordinateActivation, Identity, PointwiseActivation, Reflection
from .spectral import BasisSpec, Space

SCHEMA_VERSION = 1

__all__ = [
    "SCHEMA_VERSION",
    "SpecError",
    "canonical",
    "canonical_json",
    "blob_hash",
    "check_keys",
    "space_from_config",
    "space_to_config",
    "operator_from_spec",
    "operator_to_spec",
    "network_from_spec",
    "network_to_spec",
    "nonlinearity_from_spec",
    "nonlinearity_to_spec",
    "layer_from_spec",
    "layer_to_spec",
    "chain_from_spec",
    "chain_to_spec",
    "head_from_spec",
    "head_to_spec",
    "load_json",
    "read_envelope",
    "write_json",
    "write_csv",
]


class SpecError(ValueError):
    """A JSON object spec that does not match the schema."""


def check_keys(d: dict, where: str, required: set, optional: set = frozenset()):
    if not isinstance(d, dict):
        raise SpecError(f"{where}: expected an object, got {type(d).__name__}")
    missing = required - set(d)
    if missing:
        raise SpecError(f"{where}: missing required keys {sorted(missing)}")
    unknown = set(d) - required - set(optional)
    if unknown:
        raise SpecError(f"{where}: unknown keys {sorted(unknown)}")


def canonical(obj):
    """Recursively round floats to 17 significant digits (a no-op in value)."""
    if isinstance(obj, dict):
        return {str(k): canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return canonical(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(format(float(obj), ".17g"))
    return obj


def canonical_json(obj) -> str:
    return json.dumps(canonical(obj), sort_keys=True, separators=(",", ":"))


def blob_hash(obj) -> str:
    """Stable sha256 of the canonical JSON form; used to cite certificates."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


# ---------------------------------------------------------------------------
# spaces


def space_from_config(d: dict) -> Space:
    check_keys(d, "space", {"basis", "ambient_dim"}, {"quadrature"})
    spec = BasisSpec(
        kind=d["basis"],
        ambient_dim=int(d["ambient_dim"]),
        quadrature_panels=int(d.get("quadrature", 4 * int(d["ambient_dim"]))),
    )
    return Space(spec)


def space_to_config(space: Space) -> dict:
    return {
        "basis": space.spec.kind,
        "ambient_dim": space.spec.ambient_dim,
        "quadrature": space.spec.quadrature_panels,
    }


# ---------------------------------------------------------------------------
# activations


def _activation_from_name(name: str):
    """Coordinate activation from a table name like ``tanh`` or ``leaky_relu(0.3)``."""
    bare, _, arg = name.partition("(")
    if bare not in _ACTIVATIONS:
        raise SpecError(f"unknown activation {name!r}; know {sorted(_ACTIVATIONS)}")
    if arg:
        if bare != "leaky_relu":
            raise SpecError(f"activation {bare!r} takes no parameter, got {name!r}")
        return CoordinateActivation.leaky_relu(float(arg.rstrip(")")))
    return _ACTIVATIONS[bare]()


def _pointwise_from_name(name: str) -> PointwiseActivation:
    bare, _, arg = name.partition("(")
    table = {
        "tanh": PointwiseActivation.tanh,
        "leaky_relu": PointwiseActivation.leaky_relu,
        "recu": PointwiseActivation.recu,
        "identity": PointwiseActivation.identity,
        "scaled_leaky": scaled_leaky_activation,
    }
    if bare not in table:
        raise SpecError(f"unknown pointwise activation {name!r}; know {sorted(table)}")
    if arg:
        return table[bare](float(arg.rstrip(")")))
    return table[bare]()


# ---------------------------------------------------------------------------
# operators


def operator_to_spec(op: FiniteRankOperator) -> dict:
    return {
        "kind": "finite_rank",
        "omegas": canonical(op.omegas),
        "psi": canonical(op.psi),
        "phi": canonical(op.phi),
    }


def _seeded_frame(dim: int, rank: int, seed: int) -> np.ndarray:
    """Orthonormal rows from a seeded Gaussian draw (sign-fixed QR)."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((dim, rank))
    q, r = np.linalg.qr(a)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return (q * signs).T.copy()


def operator_from_spec(d: dict, ambient_dim: int | None = None) -> FiniteRankOperator:
    kind = d.get("kind")
    if kind == "finite_rank":
        check_keys(
            d, "operator", {"kind", "omegas"}, {"psi", "phi", "psi_seed", "phi_seed"}
        )
        omegas = np.asarray(d["omegas"], dtype=float)
        rank = omegas.size

        def frame(which: str) -> np.ndarray:
            if which in d:
                return np.asarray(d[which], dtype=float)
            seed_key = f"{which}_seed"
            if seed_key not in d:
                raise SpecError(f"operator: need either {which!r} or {seed_key!r}")
            if ambient_dim is None:
                raise SpecError(
                    f"operator: {seed_key!r} needs an ambient dimension from the space"
                )
            return _seeded_frame(ambient_dim, rank, int(d[seed_key]))

        return FiniteRankOperator(omegas, frame("psi"), frame("phi"))
    if kind == "seeded_finite_rank":
        check_keys(
            d,
            "operator",
            {"kind", "rank", "seed"},
            {"dim", "scale", "decay", "psi_prefix", "phi_prefix"},
        )
        dim = int(d.get("dim", ambient_dim or 0))
        if dim <= 0:
            raise SpecError("operator: seeded_finite_rank needs a dimension")
        return FiniteRankOperator.seeded(
            dim,
            int(d["rank"]),
            scale=float(d.get("scale", 1.0)),
            decay=float(d.get("decay", 1.0)),
            seed=int(d["seed"]),
            psi_prefix=bool(d.get("psi_prefix", False)),
            phi_prefix=bool(d.get("phi_prefix", False)),
        )
    raise SpecError(f"unknown operator kind {kind!r}")


# ---------------------------------------------------------------------------
# coordinate networks


def network_to_spec(net: CoordinateNetwork) -> dict:
    return {
        "kind": "coordinate_network",
        "weights": canonical(list(net.weights)),
        "biases": canonical(list(net.biases)),
        "activation": net.activation.name,
    }


def network_from_spec(d: dict) -> CoordinateNetwork:
    kind = d.get("kind")
    if kind == "coordinate_network":
        check_keys(d, "network", {"kind", "weights", "biases", "activation"})
        weights = tuple(np.asarray(w, dtype=float) for w in d["weights"])
        biases = tuple(np.asarray(b, dtype=float) for b in d["biases"])
        return CoordinateNetwork(weights, biases, _activation_from_name(d["activation"]))
    if kind == "seeded_coordinate_network":
        check_keys(
            d,
            "network",
            {"kind", "n_in", "n_out", "seed"},
            {"hidden", "activation", "target_bound", "bias_scale"},
        )
        act = d.get("activation")
        return CoordinateNetwork.seeded(
            int(d["n_in"]),
            int(d["n_out"]),
            hidden=d.get("hidden"),
            activation=None if act is None else _activation_from_name(act),
            target_bound=float(d.get("target_bound", 1.0)),
            bias_scale=float(d.get("bias_scale", 0.0)),
            seed=int(d["seed"]),
        )
    raise SpecError(f"unknown network kind {kind!r}")


# ---------------------------------------------------------------------------
# nonlinearities and layers


def nonlinearity_to_spec(nonlin) -> dict:
    if isinstance(nonlin, ZeroNonlinearity):
        return {"kind": "zero"}
    if isinstance(nonlin, AffineNonlinearity):
        return {
            "kind": "affine",
            "matrix": canonical(nonlin.matrix),
            "bias": canonical(nonlin.bias),
        }
    if isinstance(nonlin, CoordinateNetNonlinearity):
        return {
            "kind": "coordinate_net",
            "net": network_to_spec(nonlin.net),
            "ambient_dim": nonlin.ambient_dim,
        }
    if isinstance(nonlin, NemytskiiNonlinearity):
        return {"kind": "nemytskii", "activation": nonlin.sigma.name}
    raise SpecError(f"cannot serialize nonlinearity of type {type(nonlin).__name__}")


def nonlinearity_from_spec(d: dict, space: Space | None = None):
    kind = d.get("kind")
    if kind == "zero":
        check_keys(d, "nonlinearity", {"kind"})
        return ZeroNonlinearity()
    if kind == "affine":
        check_keys(d, "nonlinearity", {"kind", "matrix", "bias"})
        return AffineNonlinearity(
            np.asarray(d["matrix"], dtype=float), np.asarray(d["bias"], dtype=float)
        )
    if kind == "coordinate_net":
        check_keys(d, "nonlinearity", {"kind", "net", "ambient_dim"})
        return CoordinateNetNonlinearity(
            network_from_spec(d["net"]), int(d["ambient_dim"])
        )
    if kind == "nemytskii":
        check_keys(d, "nonlinearity", {"kind", "activation"})
        if space is None:
            raise SpecError("nonlinearity: a Nemytskii map needs the space")
        return NemytskiiNonlinearity(space, _pointwise_from_name(d["activation"]))
    raise SpecError(f"unknown nonlinearity kind {kind!r}")


def layer_to_spec(layer: NeuralOperatorLayer) -> dict:
    return {
        "kind": "layer",
        "in_op": operator_to_spec(layer.in_op),
        "out_op": operator_to_spec(layer.out_op),
        "nonlin": nonlinearity_to_spec(layer.nonlin),
    }


def layer_from_spec(d: dict, space: Space | None = None) -> NeuralOperatorLayer:
    kind = d.get("kind")
    if kind == "layer":
        check_keys(d, "layer", {"kind", "in_op", "out_op", "nonlin"})
        ambient = space.dim if space is not None else None
        return NeuralOperatorLayer(
            operator_from_spec(d["in_op"], ambient),
            operator_from_spec(d["out_op"], ambient),
            nonlinearity_from_spec(d["nonlin"], space),
        )
    if kind == "seeded_layer":
        if space is None:
            raise SpecError("layer: a seeded layer needs the space")
        body = {k: v for k, v in d.items() if k not in ("kind", "seed")}
        if "seed" not in d:
            raise SpecError("layer: a seeded layer needs an explicit seed")
        return make_layer(space, body, seed=int(d["seed"]))
    raise SpecError(f"unknown layer kind {kind!r}")


# ---------------------------------------------------------------------------
# residual chains and their linear heads


def chain_to_spec(chain) -> dict:
    if isinstance(chain, InvertibleResidualChain):
        out = {
            "kind": "invertible_residual_chain",
            "delta": canonical(chain.delta),
            "chain": chain_to_spec(chain.chain),
        }
        if chain.ball_radius is not None:
            out["ball_radius"] = canonical(chain.ball_radius)
        return out
    if isinstance(chain, ResidualChain):
        return {
            "kind": "residual_chain",
            "ambient_dim": chain.ambient_dim,
            "prefix_n": chain.prefix_n,
            "blocks": [network_to_spec(b) for b in chain.blocks],
        }
    raise SpecError(f"cannot serialize chain of type {type(chain).__name__}")


def chain_from_spec(d: dict):
    kind = d.get("kind")
    if kind == "residual_chain":
        check_keys(d, "chain", {"kind", "ambient_dim", "prefix_n", "blocks"})
        blocks = tuple(network_from_spec(b) for b in d["blocks"])
        return ResidualChain(int(d["ambient_dim"]), int(d["prefix_n"]), blocks)
    if kind == "invertible_residual_chain":
        check_keys(d, "chain", {"kind", "delta", "chain"}, {"ball_radius"})
        inner = chain_from_spec(d["chain"])
        ball = d.get("ball_radius")
        return InvertibleResidualChain(
            inner,
            float(d["delta"]),
            ball_radius=None if ball is None else float(ball),
            cert_method="spectral" if ball is None else "ball_local",
        )
    if kind == "seeded_chain":
        check_keys(
            d,
            "chain",
            {"kind", "ambient_dim", "num_blocks", "seed"},
            {"prefix_n", "delta", "block_bound", "activation", "hidden", "bias_scale", "ball_radius"},
        )
        act = d.get("activation")
        delta = d.get("delta")
        bound = float(d.get("block_bound", delta if delta is not None else 0.5))
        chain = ResidualChain.seeded(
            int(d["ambient_dim"]),
            int(d.get("prefix_n", d["ambient_dim"])),
            int(d["num_blocks"]),
            block_bound=bound,
            activation=None if act is None else _activation_from_name(act),
            hidden=d.get("hidden"),
            bias_scale=float(d.get("bias_scale", 0.3)),
            seed=int(d["seed"]),
        )
        if delta is None:
            return chain
        ball = d.get("ball_radius")
        return InvertibleResidualChain(
            chain,
            float(delta),
            ball_radius=None if ball is None else float(ball),
            cert_method="spectral" if ball is None else "ball_local",
        )
    raise SpecError(f"unknown chain kind {kind!r}")


def head_to_spec(head) -> dict:
    if head is None or isinstance(head, Identity):
        return {"kind": "identity"}
    if isinstance(head, Reflection):
        return {"kind": "reflection", "e": canonical(head.e)}
    raise SpecError(f"cannot serialize head of type {type(head).__name__}")


def head_from_spec(d: dict, dim: int | None = None):
    kind = d.get("kind")
    if kind == "identity":
        check_keys(d, "head", {"kind"})
        return None
    if kind == "reflection":
        check_keys(d, "head", {"kind"}, {"e", "axis_dim"})
        if "e" in d:
            return Reflection(np.asarray(d["e"], dtype=float))
        n = d.get("axis_dim", dim)
        if n is None:
            raise SpecError("head: a reflection needs 'e' or 'axis_dim'")
        return Reflection.first_axis(int(n))
    raise SpecError(f"unknown head kind {kind!r}")


# ---------------------------------------------------------------------------
# files


def load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def read_envelope(obj: dict, where: str, required: set, optional: set = frozenset()):
    """Validate a top-level artifact object: schema tag plus declared keys."""
    check_keys(obj, where, required | {"schema"}, optional)
    if obj["schema"] != SCHEMA_VERSION:
        raise SpecError(f"{where}: unsupported schema {obj['schema']!r}")
    return obj


def write_json(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(canonical(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_csv(path, header: str, rows) -> None:
    """Write rows of floats under a fixed header with 17 significant digits."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    lines = [header]
    for row in rows:
        lines.append(
            ",".join(
                format(float(x), ".17g") if isinstance(x, (float, np.floating)) else str(x)
                for x in row
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")
