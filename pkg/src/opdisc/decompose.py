"""Factor a bilipschitz residual layer into near-identity monotone blocks.

Given F = Id + T₂∘G∘T₁ bilipschitz on a ball, produce

    F = H_J ∘ … ∘ H₁ ∘ A₀        on B(0, r1),

where A₀ is the identity or a reflection and every H_k = Id + B_k has a
sampled Lipschitz constant Lip(B_k) below a requested epsilon.  The stages:

1. pick a frame W spanning all singular directions of T₁, T₂ above a
   threshold h, so the core map F^W = Id + P_W T₂ G T₁ P_W is close to F
   and acts inside a finite frame;
2. peel the tail factor Id + B̃ with F = (Id + B̃)∘F^W;
3. on W coordinates, connect the core f to its linearization Df|₀ by the
   scaling path f_t(x) = (1/t)(f(tx) − f(0)) + t·f(0) and cut the path
   into radially-cutoff transport blocks;
4. split Df|₀ by polar decomposition into a positive part (matrix-power
   path) and an orthogonal part (real-Schur rotation paths), leaving the
   identity or one residual reflection as A₀.

Inverses along the path are computed on demand: a damped fixed-point
iteration when a global monotonicity constant is available, a finite-
difference Newton solver otherwise.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .layers import NeuralOperatorLayer, eval_map
from .monotone import ball_samples, bilipschitz_estimate
from .operators import DenseOnPrefix, Identity, Reflection, operator_norm_estimate
from .spectral import as_coeffs

__all__ = [
    "Frame",
    "DecompositionError",
    "DecompositionResult",
    "quintic_smoothstep",
    "choose_w",
    "build_fw",
    "peel_tail",
    "invert_monotone",
    "path_blocks",
    "linear_path_blocks",
    "decompose",
]


class DecompositionError(RuntimeError):
    """Pipeline failure carrying the stage name it occurred in."""


@contextmanager
def _stage(name: str):
    try:
        yield
    except DecompositionError:
        raise
    except Exception as exc:
        raise DecompositionError(f"[{name}] {exc}") from exc


def quintic_smoothstep(s):
    """6s⁵ − 15s⁴ + 10s³ clamped to [0, 1]: C² ramp with slope ≤ 15/8."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    return s * s * s * (10.0 + s * (6.0 * s - 15.0))


@dataclass(frozen=True, eq=False)
class Frame:
    """Orthonormal rows spanning a subspace of the ambient coefficient space."""

    rows: np.ndarray  # (k, m)

    def __post_init__(self) -> None:
        r = np.array(self.rows, dtype=float)
        if r.ndim != 2:
            raise ValueError("frame rows must form a 2-D array")
        if r.shape[0] > 0:
            gram = r @ r.T
            if not np.allclose(gram, np.eye(r.shape[0]), atol=1e-9):
                raise ValueError("frame rows must be orthonormal")
        r.flags.writeable = False
        object.__setattr__(self, "rows", r)

    @property
    def dim(self) -> int:
        return self.rows.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.rows.shape[1]

    def coords(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.rows.T

    def lift(self, c: np.ndarray) -> np.ndarray:
        return np.asarray(c, dtype=float) @ self.rows

    def project_array(self, x: np.ndarray) -> np.ndarray:
        return self.coords(x) @ self.rows


def _rows(f, xs: np.ndarray) -> np.ndarray:
    return np.stack([eval_map(f, x) for x in xs])


def _pair_sup_quotient(xs: np.ndarray, ys: np.ndarray) -> float:
    """max over sample pairs of |Δy| / |Δx| — a sampled Lipschitz bound."""
    i, j = np.triu_indices(xs.shape[0], k=1)
    dx = xs[i] - xs[j]
    dy = ys[i] - ys[j]
    dist = np.linalg.norm(dx, axis=1)
    ok = dist >= 1e-12
    if not np.any(ok):
        return 0.0
    return float(np.max(np.linalg.norm(dy[ok], axis=1) / dist[ok]))


# ---------------------------------------------------------------------------
# stage 1: the frame W
# ---------------------------------------------------------------------------


def choose_w(layer: NeuralOperatorLayer, h: float) -> tuple[Frame, dict]:
    """Frame spanning every singular direction of T₁, T₂ with weight ≥ h.

    Both one-sided tails ‖T(Id−P_W)‖ and ‖(Id−P_W)T‖ are then below h;
    they are re-verified numerically by power iteration and reported.
    """
    if h <= 0.0:
        raise ValueError("singular threshold h must be positive")
    m = layer.dim
    pieces = []
    for t in (layer.in_op, layer.out_op):
        keep = t.omegas >= h
        if np.any(keep):
            pieces.append(t.psi[keep])
            pieces.append(t.phi[keep])
    if pieces:
        stacked = np.vstack(pieces)
        _, sv, vt = np.linalg.svd(stacked, full_matrices=False)
        basis = vt[sv > 1e-10]
    else:
        basis = np.zeros((0, m))
    if basis.shape[0] > m:
        raise ValueError("threshold h retains more directions than the ambient space")
    frame = Frame(basis)
    comp = np.eye(m) - frame.rows.T @ frame.rows
    report = {"w_dim": frame.dim, "h": h, "tails": {}}
    for name, t in (("in", layer.in_op), ("out", layer.out_op)):
        mat = t.as_matrix()
        right = operator_norm_estimate(DenseOnPrefix(mat @ comp), dim=m)
        left = operator_norm_estimate(DenseOnPrefix(comp @ mat), dim=m)
        if right >= h or left >= h:
            raise AssertionError(
                f"frame tails for the {name} operator are not below h={h:g}: "
                f"{right:g}, {left:g}"
            )
        report["tails"][name] = {"right": right, "left": left}
    return frame, report


# ---------------------------------------------------------------------------
# stage 2: the core map F^W and its tail factor
# ---------------------------------------------------------------------------


class CoreCompressedLayer:
    """F^W = Id + P_W∘T₂∘G∘T₁∘P_W: fixes the frame complement pointwise."""

    def __init__(self, layer: NeuralOperatorLayer, frame: Frame):
        if frame.ambient_dim != layer.dim:
            raise ValueError("frame and layer live in different ambient spaces")
        self.layer = layer
        self.frame = frame
        self.dim = layer.dim

    def eval_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        xw = self.frame.project_array(x)
        body = self.layer.out_op.apply_array(
            self.layer.nonlin.apply_array(self.layer.in_op.apply_array(xw))
        )
        return x + self.frame.project_array(body)

    def core_map(self) -> Callable[[np.ndarray], np.ndarray]:
        """The same map in W coordinates: ℝᵏ → ℝᵏ."""

        def f(c: np.ndarray) -> np.ndarray:
            x = self.frame.lift(c)
            return self.frame.coords(self.eval_array(x))

        return f


def build_fw(layer: NeuralOperatorLayer, frame: Frame) -> CoreCompressedLayer:
    return CoreCompressedLayer(layer, frame)


# ---------------------------------------------------------------------------
# on-demand inversion
# ---------------------------------------------------------------------------


def _damped_invert_rows(
    f, ys: np.ndarray, alpha: float, lip: float, tol: float, max_iter: int
) -> np.ndarray:
    tau = alpha / lip**2
    xs = ys.copy()
    for _ in range(max_iter):
        res = _rows(f, xs) - ys
        if float(np.max(np.linalg.norm(res, axis=1))) <= tol:
            return xs
        xs = xs - tau * res
    worst = float(np.max(np.linalg.norm(_rows(f, xs) - ys, axis=1)))
    raise DecompositionError(
        f"[invert] damped iteration did not reach tol={tol:g} in {max_iter} "
        f"steps (last residual {worst:g})"
    )


def _fd_jacobian(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    k = x.size
    jac = np.empty((k, k))
    for col in range(k):
        e = np.zeros(k)
        e[col] = h
        jac[:, col] = (eval_map(f, x + e) - eval_map(f, x - e)) / (2.0 * h)
    if not np.all(np.isfinite(jac)):
        raise ValueError("non-finite Jacobian entries in finite differences")
    return jac


def _newton_invert_rows(f, ys: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    xs = ys.copy()
    for row in range(xs.shape[0]):
        x, y = xs[row], ys[row]
        res = eval_map(f, x) - y
        rnorm = float(np.linalg.norm(res))
        for _ in range(max_iter):
            if rnorm <= tol:
                break
            step = np.linalg.solve(_fd_jacobian(f, x), res)
            lam = 1.0
            while lam > 1e-8:
                cand = x - lam * step
                cres = eval_map(f, cand) - y
                cnorm = float(np.linalg.norm(cres))
                if cnorm < rnorm:
                    x, res, rnorm = cand, cres, cnorm
                    break
                lam *= 0.5
            else:
                raise DecompositionError(
                    f"[invert] Newton line search stagnated at residual {rnorm:g}"
                )
        if rnorm > tol:
            raise DecompositionError(
                f"[invert] Newton did not reach tol={tol:g} in {max_iter} "
                f"steps (last residual {rnorm:g})"
            )
        xs[row] = x
    return xs


def invert_monotone(
    f,
    y,
    alpha: float,
    lip: float,
    tol: float = 1e-10,
    max_iter: int = 100000,
    x0=None,
    stats: dict | None = None,
):
    """Solve f(x) = y for strongly monotone Lipschitz f by damped iteration.

    The step x ← x − τ(f(x) − y) with τ = alpha/lip² contracts distances to
    the solution by q = √(1 − alpha²/lip²) per iteration; the loop stops as
    soon as ‖f(x) − y‖ ≤ tol.
    """
    if not alpha > 0.0:
        raise ValueError("monotonicity constant alpha must be positive")
    if lip < alpha:
        raise ValueError("Lipschitz bound cannot be smaller than alpha")
    y = as_coeffs(y)
    x = y.copy() if x0 is None else as_coeffs(x0).copy()
    tau = alpha / lip**2
    q = math.sqrt(max(0.0, 1.0 - (alpha / lip) ** 2))
    iterations = 0
    res = eval_map(f, x) - y
    rnorm = float(np.linalg.norm(res))
    while rnorm > tol:
        if iterations >= max_iter:
            raise DecompositionError(
                f"[invert] damped iteration did not reach tol={tol:g} in "
                f"{max_iter} steps (last residual {rnorm:g})"
            )
        x = x - tau * res
        iterations += 1
        res = eval_map(f, x) - y
        rnorm = float(np.linalg.norm(res))
    if stats is not None:
        stats.update({"iterations": iterations, "residual": rnorm, "contraction": q})
    return x


# ---------------------------------------------------------------------------
# stage 2b: peel the tail factor
# ---------------------------------------------------------------------------


class TailBlock:
    """H = Id + B̃ with B̃ = F∘(F^W)⁻¹ − Id, so that F = H∘F^W.

    Inversion exploits the frame split: F^W is the identity on W⊥, so only
    the W-coordinate core needs solving.
    """

    def __init__(
        self,
        source,
        fw: CoreCompressedLayer,
        alpha: float | None,
        lip: float | None,
        tol: float,
        max_iter: int = 100000,
    ):
        self.source = source
        self.fw = fw
        self.alpha = alpha
        self.lip = lip
        self.tol = tol
        self.max_iter = max_iter
        self.lip_sampled: float | None = None
        self.label = "tail"

    def _invert_fw_rows(self, ys: np.ndarray) -> np.ndarray:
        frame = self.fw.frame
        if frame.dim == 0:
            return ys.copy()
        f = self.fw.core_map()
        cw = frame.coords(ys)
        if self.alpha is not None:
            sol = _damped_invert_rows(f, cw, self.alpha, self.lip, self.tol, self.max_iter)
        else:
            sol = _newton_invert_rows(f, cw, self.tol, 100)
        return ys - frame.lift(cw) + frame.lift(sol)

    def eval_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        one = x.ndim == 1
        rows = x[None, :] if one else x
        pre = self._invert_fw_rows(rows)
        out = _rows(self.source, pre)
        return out[0] if one else out


def peel_tail(
    source,
    fw: CoreCompressedLayer,
    c0: float,
    epsilon: float,
    tol: float = 1e-9,
    alpha: float | None = None,
    lip: float | None = None,
    n: int = 100,
    seed: int = 0,
    sample_radius: float = 2.0,
) -> TailBlock:
    """Near-identity factor B̃ with F = (Id + B̃)∘F^W, verified by sampling.

    c0 is the certified lower bilipschitz constant of F (it controls how
    inversion error amplifies in the roundtrip check).
    """
    if c0 <= 0.0:
        raise ValueError("need a positive lower bilipschitz constant")
    block = TailBlock(source, fw, alpha, lip, tol)
    xs = ball_samples(fw.dim, sample_radius, n, seed=seed)
    through = _rows(fw, xs)
    recon = block.eval_array(through)
    direct = _rows(source, xs)
    roundtrip = float(np.max(np.linalg.norm(recon - direct, axis=1)))
    if roundtrip > 1e-8:
        raise DecompositionError(
            f"[peel_tail] factor roundtrip error {roundtrip:g} exceeds 1e-8"
        )
    ys = block.eval_array(xs)
    lip_hat = _pair_sup_quotient(xs, ys - xs)
    if lip_hat >= epsilon:
        raise DecompositionError(
            f"[peel_tail] sampled Lip of the tail factor is {lip_hat:g}, "
            f"not below epsilon={epsilon:g}"
        )
    block.lip_sampled = lip_hat
    block.deviation = float(np.max(np.linalg.norm(ys - xs, axis=1)))
    block.roundtrip_error = roundtrip
    return block


# ---------------------------------------------------------------------------
# stage 3: the nonlinear scaling path on W coordinates
# ---------------------------------------------------------------------------


class ScalingPath:
    """f_t(x) = (1/t)(f(tx) − f(0)) + t·f(0), with f₀ = Df|₀."""

    def __init__(self, f, k: int, alpha: float | None, lip: float | None):
        self.f = f
        self.k = k
        self.f0_val = eval_map(f, np.zeros(k))
        self.df0 = _fd_jacobian(f, np.zeros(k))
        self.alpha = alpha
        self.lip = lip

    def eval_t_rows(self, t: float, xs: np.ndarray) -> np.ndarray:
        if t == 0.0:
            return xs @ self.df0.T
        return (_rows(self.f, t * xs) - self.f0_val) / t + t * self.f0_val

    def invert_t_rows(
        self, t: float, ys: np.ndarray, tol: float, max_iter: int = 100000
    ) -> np.ndarray:
        if t == 0.0:
            return np.linalg.solve(self.df0, ys.T).T
        ft = lambda x: self.eval_t_rows(t, x[None, :])[0]
        if self.alpha is not None:
            return _damped_invert_rows(ft, ys, self.alpha, self.lip, tol, max_iter)
        return _newton_invert_rows(ft, ys, tol, 100)


class PathBlock:
    """x + φ(x)·(f_{t_hi}(f_{t_lo}⁻¹(x)) − x) with a radial quintic cutoff.

    φ is 1 on ‖x‖ ≤ R₂ and 0 outside 2R₂, so the block transports the
    region of interest and leaves far points untouched (no inversion there).
    """

    def __init__(self, path: ScalingPath, t_lo: float, t_hi: float, r2: float, tol: float):
        self.path = path
        self.t_lo = t_lo
        self.t_hi = t_hi
        self.r2 = r2
        self.tol = tol
        self.lip_sampled: float | None = None
        self.label = f"path[{t_lo:.6g},{t_hi:.6g}]"

    def cutoff(self, norms: np.ndarray) -> np.ndarray:
        return 1.0 - quintic_smoothstep((norms - self.r2) / self.r2)

    def eval_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        one = x.ndim == 1
        rows = x[None, :].copy() if one else x.copy()
        phi = self.cutoff(np.linalg.norm(rows, axis=1))
        act = phi > 0.0
        if np.any(act):
            pre = self.path.invert_t_rows(self.t_lo, rows[act], self.tol)
            post = self.path.eval_t_rows(self.t_hi, pre)
            rows[act] = rows[act] + phi[act, None] * (post - rows[act])
        return rows[0] if one else rows


def _c2_estimate(f, k: int, radius: float, seed: int, n: int = 16, h: float = 1e-3) -> float:
    """Finite-difference bound on second derivatives over a sampled ball.

    An estimate only: the t-grid it suggests is refined adaptively until the
    sampled block constants pass, so correctness never rests on it.
    """
    rng = np.random.default_rng(seed)
    xs = ball_samples(k, radius, n, seed=seed)
    worst = 0.0
    for x in xs:
        u = rng.standard_normal(k)
        u /= np.linalg.norm(u)
        v = rng.standard_normal(k)
        v /= np.linalg.norm(v)
        d2 = (
            eval_map(f, x + h * (u + v))
            - eval_map(f, x + h * u)
            - eval_map(f, x + h * v)
            + eval_map(f, x)
        ) / h**2
        val = float(np.linalg.norm(d2))
        if not np.isfinite(val):
            raise DecompositionError("[path_blocks] second-derivative estimate is not finite")
        worst = max(worst, val)
    return worst


def path_blocks(
    f,
    k: int,
    epsilon: float,
    r1: float,
    c0: float,
    c1: float,
    alpha: float | None = None,
    lip: float | None = None,
    tol: float = 1e-9,
    seed: int = 0,
    max_blocks: int = 2048,
    verify_points: int = 40,
) -> tuple[list, dict]:
    """Transport blocks along the scaling path from Df|₀ to f.

    The first grid point respects t₁ < 2c₀ε/(c₁ + ‖f‖_C²·R₁); the grid is
    then refined until every block's sampled Lip(block − Id) is below
    epsilon.  Blocks indistinguishable from the identity are dropped.
    """
    if epsilon <= 0.0 or r1 <= 0.0 or c0 <= 0.0 or c1 < c0:
        raise ValueError("need epsilon > 0, r1 > 0 and 0 < c0 <= c1")
    path = ScalingPath(f, k, alpha, lip)
    r0 = float(np.linalg.norm(path.f0_val))
    r1_img = c1 * r1 + r0
    r2 = r1_img
    c2 = _c2_estimate(f, k, 1.1 * r1_img, seed=seed + 1)
    t1_bound = 2.0 * c0 * epsilon / (c1 + c2 * r1_img)
    t1 = min(0.9 * t1_bound, 0.5)
    m_theory = int(math.ceil(1.0 / max(t1, 1e-12)))

    diag = {
        "r0": r0,
        "r1_image": r1_img,
        "r2": r2,
        "c2_estimate": c2,
        "c2_is_estimate": True,
        "t1_bound": t1_bound,
        "m_theory": m_theory,
    }

    xs = ball_samples(k, 2.3 * r2, verify_points, seed=seed + 2)
    lin_dev = float(
        np.max(np.linalg.norm(_rows(f, xs) - xs @ path.df0.T - path.f0_val, axis=1))
    )
    if lin_dev <= 1e-12 and r0 <= 1e-12:
        diag["linear_shortcut"] = True
        diag["t_grid"] = [0.0, 1.0]
        return [], diag

    ts = [0.0, t1]
    while ts[-1] < 1.0 - 1e-12:
        ts.append(min(ts[-1] + t1, 1.0))
    ts[-1] = 1.0

    cache: dict[tuple[float, float], tuple[PathBlock, float, float]] = {}

    def measure(lo: float, hi: float):
        key = (lo, hi)
        if key not in cache:
            block = PathBlock(path, lo, hi, r2, tol)
            ys = block.eval_array(xs)
            lip_hat = _pair_sup_quotient(xs, ys - xs)
            dev = float(np.max(np.linalg.norm(ys - xs, axis=1)))
            cache[key] = (block, lip_hat, dev)
        return cache[key]

    while True:
        if len(ts) - 1 > max_blocks:
            raise DecompositionError(
                f"[path_blocks] refinement exceeded the block cap {max_blocks}"
            )
        bad = []
        for lo, hi in zip(ts, ts[1:]):
            _, lip_hat, _ = measure(lo, hi)
            if lip_hat >= 0.97 * epsilon:
                bad.append((lo, hi))
        if not bad:
            break
        for lo, hi in bad:
            ts.append(0.5 * (lo + hi))
        ts = sorted(set(ts))

    blocks = []
    drop_tol = max(1e-10, 4.0 * tol)
    for lo, hi in zip(ts, ts[1:]):
        block, lip_hat, dev = measure(lo, hi)
        if dev <= drop_tol:
            continue
        block.lip_sampled = lip_hat
        blocks.append(block)
    diag["t_grid"] = list(ts)
    diag["linear_shortcut"] = False
    return blocks, diag


# ---------------------------------------------------------------------------
# stage 4: the linear part
# ---------------------------------------------------------------------------


def _reflection_matrix(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v)
    return np.eye(v.size) - 2.0 * np.outer(v, v)


def _plane_rotation(k: int, p: int, q: int, theta: float) -> np.ndarray:
    m = np.eye(k)
    c, s = math.cos(theta), math.sin(theta)
    m[p, p] = c
    m[q, q] = c
    m[p, q] = -s
    m[q, p] = s
    return m


def linear_path_blocks(df0: np.ndarray, epsilon: float) -> tuple[str, list, dict]:
    """Split an invertible matrix into near-identity factors and A₀.

    Polar decomposition df0 = P·U; the positive part is cut into matrix
    powers P^(1/n) and the orthogonal part into small-angle steps of its
    real-Schur rotation blocks.  Trailing −1 eigenvalues are paired into
    π-rotations; one leftover −1 becomes A₀ = reflection, reached through a
    short axis-alignment path down to the first coordinate.

    Returns (a0_kind, factors in application order, diagnostics); the
    matrix product factors[last] @ … @ factors[first] @ A₀ equals df0.
    """
    df0 = np.asarray(df0, dtype=float)
    if df0.ndim != 2 or df0.shape[0] != df0.shape[1]:
        raise ValueError("need a square matrix")
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    k = df0.shape[0]
    diag: dict = {"dim": k, "repolar_period": 16}
    if k == 0:
        return "identity", [], diag
    if not np.all(np.isfinite(df0)):
        raise ValueError("matrix has non-finite entries")
    cond = np.linalg.cond(df0)
    if not np.isfinite(cond) or cond >= 1e8:
        raise ValueError(f"singular matrix: condition number {cond:g}")
    diag["cond"] = float(cond)

    usv, sv, vt = np.linalg.svd(df0)
    u_orth = usv @ vt
    diag["det_u"] = float(np.sign(np.linalg.det(u_orth)))

    # positive part P = usv·diag(sv)·usvᵀ cut into n equal matrix powers
    step_cap = 0.95 * epsilon
    factors_p: list[np.ndarray] = []
    dev = float(np.max(np.abs(sv - 1.0)))
    if dev > 1e-14:
        n_p = 1
        while np.max(np.abs(sv ** (1.0 / n_p) - 1.0)) >= step_cap:
            n_p += 1
            if n_p > 10**6:
                raise ValueError("positive-part path will not contract below epsilon")
        root = usv @ np.diag(sv ** (1.0 / n_p)) @ usv.T
        factors_p = [root] * n_p
        diag["positive_steps"] = n_p
    else:
        diag["positive_steps"] = 0

    # orthogonal part: real Schur → rotation blocks and ±1 entries
    smat, q = scipy.linalg.schur(u_orth, output="real")
    rotations: list[tuple[int, int, float]] = []
    minus: list[int] = []
    i = 0
    while i < k:
        if i + 1 < k and abs(smat[i + 1, i]) > 1e-10:
            theta = math.atan2(smat[i + 1, i], smat[i, i])
            rotations.append((i, i + 1, theta))
            i += 2
        else:
            val = smat[i, i]
            if abs(val - 1.0) < 1e-8:
                pass
            elif abs(val + 1.0) < 1e-8:
                minus.append(i)
            else:
                raise ValueError(f"orthogonal part has a non-unimodular entry {val:g}")
            i += 1
    while len(minus) >= 2:
        p_i = minus.pop()
        q_i = minus.pop()
        rotations.append((q_i, p_i, math.pi))
    residual = minus[0] if minus else None
    diag["rotation_angles"] = [th for _, _, th in rotations]

    max_step = 2.0 * math.asin(min(step_cap / 2.0, 1.0))
    factors_u: list[np.ndarray] = []
    if rotations:
        theta_max = max(abs(th) for _, _, th in rotations)
        n_u = max(1, int(math.ceil(theta_max / max_step)))
        step = np.eye(k)
        for p_i, q_i, th in rotations:
            step = step @ _plane_rotation(k, p_i, q_i, th / n_u)
        step = q @ step @ q.T
        factors_u = [step] * n_u
        diag["orthogonal_steps"] = n_u
    else:
        diag["orthogonal_steps"] = 0

    # residual −1: align its axis to the first coordinate by reflections
    factors_align: list[np.ndarray] = []
    if residual is not None:
        axis = q[:, residual].copy()
        e1 = np.zeros(k)
        e1[0] = 1.0
        if axis @ e1 < 0.0:
            axis = -axis
        beta = math.acos(min(1.0, max(-1.0, float(axis @ e1))))
        if beta > 1e-12:
            n_a = max(1, int(math.ceil(beta / math.asin(min(step_cap / 2.0, 1.0)))))
            perp = axis - (axis @ e1) * e1
            perp /= np.linalg.norm(perp)
            us = [
                math.cos(beta * (1.0 - s)) * e1 + math.sin(beta * (1.0 - s)) * perp
                for s in np.linspace(0.0, 1.0, n_a + 1)
            ]
            # us[0] = axis … us[-1] = e1; adjacent double reflections telescope
            pair_factors = [
                _reflection_matrix(us[i]) @ _reflection_matrix(us[i + 1])
                for i in range(n_a)
            ]
            factors_align = list(reversed(pair_factors))
            diag["alignment_steps"] = n_a
        else:
            diag["alignment_steps"] = 0
        a0_kind = "reflection"
    else:
        a0_kind = "identity"

    factors = factors_align + factors_u + factors_p
    for fmat in factors:
        gap = float(np.linalg.norm(fmat - np.eye(k), 2))
        if gap >= epsilon:
            raise AssertionError(f"linear factor deviates from identity by {gap:g}")

    # verify the product, re-polar-projecting the orthogonal run periodically
    acc = _reflection_matrix(np.eye(k)[0]) if a0_kind == "reflection" else np.eye(k)
    n_orth = len(factors_align) + len(factors_u)
    repolar = 0
    for idx, fmat in enumerate(factors):
        acc = fmat @ acc
        if idx < n_orth and (idx + 1) % 16 == 0:
            uu, _, vv = np.linalg.svd(acc)
            acc = uu @ vv
            repolar += 1
    diag["repolar_applied"] = repolar
    err = float(np.linalg.norm(acc - df0, 2))
    diag["product_error"] = err
    if err > 1e-8:
        raise AssertionError(f"linear factor product misses the matrix by {err:g}")
    return a0_kind, factors, diag


# ---------------------------------------------------------------------------
# lifting W-coordinate blocks to the ambient space
# ---------------------------------------------------------------------------


class LinearBlock:
    """A near-identity matrix factor acting on W coordinates."""

    def __init__(self, matrix: np.ndarray, label: str = "linear"):
        self.matrix = np.asarray(matrix, dtype=float)
        self.lip_sampled = float(np.linalg.norm(self.matrix - np.eye(self.matrix.shape[0]), 2))
        self.label = label

    def eval_array(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.matrix.T


class LiftedBlock:
    """Id_{W⊥} ⊕ core: a W-coordinate block extended to the ambient space."""

    def __init__(self, core, frame: Frame):
        self.core = core
        self.frame = frame
        self.label = getattr(core, "label", "block")

    @property
    def lip_sampled(self) -> float | None:
        return self.core.lip_sampled

    def eval_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        c = self.frame.coords(x)
        out = self.core.eval_array(c)
        return x + self.frame.lift(out - c)


# ---------------------------------------------------------------------------
# the assembled pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DecompositionResult:
    """F = blocks[-1]∘…∘blocks[0]∘A₀ on the validity ball, all blocks
    near-identity with recorded sampled Lipschitz constants below epsilon."""

    a0: object
    blocks: tuple
    j: int
    r1: float
    epsilon: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.j != len(self.blocks):
            raise ValueError("block count disagrees with the block list")
        for b in self.blocks:
            lip = b.lip_sampled
            if lip is None or not lip < self.epsilon:
                raise AssertionError(
                    f"block {getattr(b, 'label', '?')} has Lip {lip}, "
                    f"not below epsilon={self.epsilon}"
                )

    def eval_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        one = x.ndim == 1
        rows = x[None, :] if one else x
        rows = np.stack([eval_map(self.a0, r) for r in rows])
        for b in self.blocks:
            rows = b.eval_array(rows)
        return rows[0] if one else rows

    def __call__(self, x):
        return self.eval_array(as_coeffs(x))


def decompose(
    layer: NeuralOperatorLayer,
    epsilon: float,
    r1: float,
    composite_tol: float = 1e-6,
    seed: int = 0,
    n_verify: int = 200,
    max_blocks: int = 2048,
) -> DecompositionResult:
    """Run the full factorization pipeline on a residual layer."""
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    if r1 <= 0.0:
        raise ValueError("validity radius must be positive")
    diag: dict = {"epsilon": epsilon, "r1": r1, "seed": seed}

    with _stage("estimate"):
        est = bilipschitz_estimate(layer, r=r1, n=256, seed=seed)
        c0, c1 = est.c_lower, est.c_upper
        diag["bilipschitz"] = est.as_dict()
        lip_g = layer.lip_nonlin
        if not np.isfinite(lip_g):
            raise ValueError(
                "middle map carries no finite Lipschitz bound; "
                "ball-local certificates are not supported by this pipeline"
            )
        kappa = layer.contraction
        if kappa < 1.0:
            mono_alpha, mono_lip = 1.0 - kappa, 1.0 + kappa
        else:
            mono_alpha = mono_lip = None
        diag["contraction_product"] = kappa
        # a thin monotonicity margin makes the damped iteration crawl;
        # the Newton solver handles those instances (and the
        # orientation-reversing ones, where no margin exists at all)
        if mono_alpha is not None and mono_alpha / mono_lip < 0.2:
            mono_alpha = mono_lip = None
        diag["inverter"] = "damped" if mono_alpha is not None else "newton"

    with _stage("choose_w"):
        h = epsilon / (
            4.0 * (1.0 + lip_g) * (1.0 + layer.in_op.norm) * (1.0 + layer.out_op.norm)
        )
        frame, tail_report = choose_w(layer, h)
        diag["w"] = tail_report

    with _stage("build_fw"):
        fw = build_fw(layer, frame)
        xs = ball_samples(layer.dim, r1, 64, seed=seed + 3)
        fw_dev = float(np.max(np.linalg.norm(_rows(layer, xs) - _rows(fw, xs), axis=1)))
        fw_bound = 0.5 * (1.0 + r1) * epsilon
        diag["fw_deviation"] = fw_dev
        diag["fw_deviation_bound"] = fw_bound
        if fw_dev > fw_bound:
            raise AssertionError(
                f"core deviation {fw_dev:g} exceeds the bound {fw_bound:g}"
            )

    # two passes at most: the per-block tolerance depends on the block count
    block_tol = composite_tol / (4.0 * 16.0)
    for _pass in range(2):
        with _stage("peel_tail"):
            # the 1e-8 roundtrip guarantee needs slack over the inversion
            # residual after it is amplified by the layer's upper constant
            tail = peel_tail(
                layer,
                fw,
                c0,
                epsilon,
                tol=min(block_tol, 1e-9),
                alpha=mono_alpha,
                lip=mono_lip,
                seed=seed + 4,
                sample_radius=max(2.0 * r1, 1.0),
            )

        nl_blocks: list = []
        lin_factors: list = []
        a0_kind = "identity"
        if frame.dim > 0:
            f = fw.core_map()
            with _stage("path_blocks"):
                est_w = bilipschitz_estimate(
                    f, r=r1, n=128, seed=seed + 5, dim=frame.dim
                )
                nl_blocks, path_diag = path_blocks(
                    f,
                    frame.dim,
                    epsilon,
                    r1,
                    est_w.c_lower,
                    est_w.c_upper,
                    alpha=mono_alpha,
                    lip=mono_lip,
                    tol=block_tol,
                    seed=seed + 6,
                    max_blocks=max_blocks,
                )
                diag["path"] = path_diag
            with _stage("linear_path"):
                df0 = _fd_jacobian(f, np.zeros(frame.dim))
                a0_kind, lin_factors, lin_diag = linear_path_blocks(df0, epsilon)
                diag["linear"] = lin_diag

        blocks: list = [LiftedBlock(LinearBlock(mat), frame) for mat in lin_factors]
        blocks += [LiftedBlock(b, frame) for b in nl_blocks]
        if tail.deviation > max(1e-10, 4.0 * block_tol):
            blocks.append(tail)
        j = len(blocks)
        needed = composite_tol / (4.0 * max(j, 1))
        if needed >= block_tol or j == 0:
            break
        block_tol = needed
    diag["block_tol"] = block_tol

    a0 = Reflection(frame.rows[0]) if a0_kind == "reflection" else Identity()
    result = DecompositionResult(
        a0=a0, blocks=tuple(blocks), j=j, r1=r1, epsilon=epsilon, diagnostics=diag
    )

    with _stage("verify"):
        xs = ball_samples(layer.dim, r1, n_verify, seed=seed + 7)
        err = float(
            np.max(np.linalg.norm(result.eval_array(xs) - _rows(layer, xs), axis=1))
        )
        diag["composite_error"] = err
        if err > composite_tol:
            raise AssertionError(
                f"composite reproduces the layer only to {err:g} "
                f"(target {composite_tol:g})"
            )
    return result
