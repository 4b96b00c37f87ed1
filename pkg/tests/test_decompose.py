import math

import numpy as np
import pytest

from opdisc.decompose import (
    DecompositionError,
    DecompositionResult,
    Frame,
    build_fw,
    choose_w,
    decompose,
    invert_monotone,
    linear_path_blocks,
    path_blocks,
    peel_tail,
    quintic_smoothstep,
)
from opdisc.layers import (
    AffineNonlinearity,
    NeuralOperatorLayer,
    eval_map,
    make_layer,
)
from opdisc.monotone import ball_samples, pairwise_alpha
from opdisc.operators import FiniteRankOperator, Identity, Reflection


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@pytest.fixture(scope="module")
def smooth_layer(space16):
    # contraction product 0.2: certified monotone, smooth middle map
    return make_layer(space16, rank=4, lip_g=0.2, activation="tanh", seed=11)


@pytest.fixture(scope="module")
def decayed_layer(space64):
    return make_layer(
        space64, rank=12, decay=2.0, lip_g=0.3, activation="tanh", seed=7
    )


@pytest.fixture(scope="module")
def flip_layer(space16):
    """Orientation-reversing but bilipschitz: acts as diag(-1, 0.5) up front."""
    t = FiniteRankOperator(np.ones(2), np.eye(16)[:2].copy(), np.eye(16)[:2].copy())
    a = np.zeros((16, 16))
    a[0, 0] = -2.0
    a[1, 1] = -0.5
    return NeuralOperatorLayer(t, t, AffineNonlinearity(a, np.zeros(16)))


class TestFrame:
    def test_coords_lift_roundtrip(self):
        rows = np.linalg.qr(np.random.default_rng(0).standard_normal((6, 3)))[0].T
        fr = Frame(rows)
        assert fr.dim == 3 and fr.ambient_dim == 6
        c = np.array([1.0, -2.0, 0.5])
        assert np.allclose(fr.coords(fr.lift(c)), c, atol=1e-12)
        x = np.arange(6.0)
        assert np.allclose(
            fr.project_array(fr.project_array(x)), fr.project_array(x), atol=1e-12
        )

    def test_rejects_non_orthonormal_rows(self):
        with pytest.raises(ValueError, match="orthonormal"):
            Frame(np.array([[1.0, 1.0], [0.0, 1.0]]))

    def test_empty_frame(self):
        fr = Frame(np.zeros((0, 5)))
        assert fr.dim == 0
        assert np.allclose(fr.project_array(np.ones(5)), 0.0)


class TestQuinticSmoothstep:
    def test_boundary_and_clamping(self):
        assert quintic_smoothstep(0.0) == 0.0
        assert quintic_smoothstep(1.0) == 1.0
        assert quintic_smoothstep(-3.0) == 0.0
        assert quintic_smoothstep(7.0) == 1.0

    def test_monotone_with_bounded_slope(self):
        s = np.linspace(0.0, 1.0, 2001)
        v = quintic_smoothstep(s)
        assert np.all(np.diff(v) >= 0.0)
        slope = np.max(np.diff(v) / np.diff(s))
        assert slope <= 1.875 * (1.0 + 1e-4)


class TestChooseW:
    def test_quadratic_decay_keeps_first_ten_directions(self, decayed_layer):
        frame, report = choose_w(decayed_layer, 0.01)
        # omega_p = p^-2: p <= 10 stays, p >= 11 falls below the threshold
        assert report["w_dim"] == frame.dim <= 40
        for t in (decayed_layer.in_op, decayed_layer.out_op):
            for fam in (t.psi, t.phi):
                for p in range(10):
                    v = fam[p]
                    assert np.linalg.norm(v - frame.project_array(v)) <= 1e-9
                v11 = fam[10]
                assert np.linalg.norm(v11 - frame.project_array(v11)) > 1e-3
        for side in report["tails"].values():
            assert side["right"] < 0.01 and side["left"] < 0.01

    def test_rank_one_span_and_zero_tails(self, space16):
        layer = make_layer(space16, rank=1, lip_g=0.3, activation="tanh", seed=3)
        frame, report = choose_w(layer, 0.5)
        assert frame.dim <= 4
        for side in report["tails"].values():
            assert side["right"] <= 1e-12 and side["left"] <= 1e-12

    def test_threshold_above_norm_gives_empty_frame(self, smooth_layer):
        frame, report = choose_w(smooth_layer, 10.0)
        assert frame.dim == 0
        for side in report["tails"].values():
            assert side["right"] <= 1.0 + 1e-12 < 10.0

    def test_nonpositive_threshold_rejected(self, smooth_layer):
        with pytest.raises(ValueError, match="positive"):
            choose_w(smooth_layer, 0.0)


class TestBuildFW:
    def test_full_support_frame_reproduces_the_layer(self, smooth_layer):
        frame, _ = choose_w(smooth_layer, 1e-6)
        fw = build_fw(smooth_layer, frame)
        xs = ball_samples(16, 1.5, 32, seed=1)
        gap = np.max(
            np.linalg.norm(fw.eval_array(xs) - smooth_layer.eval_array(xs), axis=1)
        )
        assert gap <= 1e-12

    def test_fixes_frame_complement_pointwise(self, space16):
        t = FiniteRankOperator(
            np.array([1.0, 0.8]), np.eye(16)[:2].copy(), np.eye(16)[:2].copy()
        )
        layer = make_layer(space16, rank=2, lip_g=0.3, activation="tanh", seed=5)
        layer = NeuralOperatorLayer(t, t, layer.nonlin)
        frame, _ = choose_w(layer, 0.5)
        fw = build_fw(layer, frame)
        x = np.zeros(16)
        x[4:] = np.linspace(1.0, -1.0, 12)
        assert np.allclose(fw.eval_array(x), x, atol=1e-14)

    def test_threshold_choice_bounds_surrogate_deviation(self, decayed_layer):
        eps, r = 0.25, 1.0
        lip_g = decayed_layer.lip_nonlin
        h = eps / (
            4.0
            * (1.0 + lip_g)
            * (1.0 + decayed_layer.in_op.norm)
            * (1.0 + decayed_layer.out_op.norm)
        )
        frame, _ = choose_w(decayed_layer, h)
        assert 0 < frame.dim < 64
        fw = build_fw(decayed_layer, frame)
        xs = ball_samples(64, r, 64, seed=2)
        gap = np.max(
            np.linalg.norm(fw.eval_array(xs) - decayed_layer.eval_array(xs), axis=1)
        )
        assert gap <= 0.5 * (1.0 + r) * eps

    def test_core_map_matches_ambient_action(self, smooth_layer):
        frame, _ = choose_w(smooth_layer, 0.05)
        fw = build_fw(smooth_layer, frame)
        f = fw.core_map()
        c = ball_samples(frame.dim, 0.8, 1, seed=3)[0]
        assert np.allclose(
            f(c), frame.coords(fw.eval_array(frame.lift(c))), atol=1e-13
        )


class TestInvertMonotone:
    def test_identity_converges_immediately(self):
        stats = {}
        y = np.array([0.3, -1.2, 0.5])
        x = invert_monotone(lambda v: v, y, alpha=1.0, lip=1.0, stats=stats)
        assert np.array_equal(x, y)
        assert stats["iterations"] <= 1

    def test_doubling_map_halves_target(self):
        y = np.zeros(4)
        y[0] = 1.0
        x = invert_monotone(lambda v: 2.0 * v, y, alpha=2.0, lip=2.0)
        assert np.allclose(x, y / 2.0, atol=1e-12)

    def test_iteration_count_obeys_geometric_bound(self):
        d = np.array([1.0, 2.0])
        f = lambda v: d * v
        y = np.array([0.7, -1.1])
        tol = 1e-10
        stats = {}
        invert_monotone(f, y, alpha=1.0, lip=2.0, tol=tol, stats=stats)
        r0 = np.linalg.norm(f(y) - y)
        q = math.sqrt(1.0 - 0.25)
        bound = math.log(tol / r0) / math.log(q) + 1.0
        assert stats["iterations"] <= bound
        assert stats["residual"] <= tol

    def test_residual_guarantee_on_nonlinear_map(self):
        rng = np.random.default_rng(4)
        m = rng.standard_normal((5, 5))
        m *= 0.3 / np.linalg.norm(m, 2)
        f = lambda v: v + np.tanh(v @ m.T)
        y = rng.standard_normal(5)
        x = invert_monotone(f, y, alpha=0.7, lip=1.3, tol=1e-11)
        assert np.linalg.norm(f(x) - y) <= 1e-11

    def test_parameter_validation(self):
        y = np.ones(2)
        with pytest.raises(ValueError, match="alpha"):
            invert_monotone(lambda v: v, y, alpha=0.0, lip=1.0)
        with pytest.raises(ValueError, match="Lipschitz"):
            invert_monotone(lambda v: v, y, alpha=1.0, lip=0.5)

    def test_iteration_cap_raises_with_residual(self):
        f = lambda v: 0.5 * v
        with pytest.raises(DecompositionError, match="residual"):
            invert_monotone(f, np.ones(3), alpha=0.3, lip=1.0, tol=1e-14, max_iter=2)


class TestPeelTail:
    def test_exact_core_leaves_no_tail(self, smooth_layer):
        frame, _ = choose_w(smooth_layer, 1e-6)
        fw = build_fw(smooth_layer, frame)
        block = peel_tail(
            smooth_layer, fw, c0=0.8, epsilon=0.25, alpha=0.8, lip=1.2, seed=9
        )
        assert block.deviation <= 1e-7
        assert block.lip_sampled <= 1e-6

    def test_roundtrip_and_lipschitz_on_truncated_core(self, decayed_layer):
        eps = 0.25
        lip_g = decayed_layer.lip_nonlin
        h = eps / (
            4.0
            * (1.0 + lip_g)
            * (1.0 + decayed_layer.in_op.norm)
            * (1.0 + decayed_layer.out_op.norm)
        )
        frame, _ = choose_w(decayed_layer, h)
        fw = build_fw(decayed_layer, frame)
        kappa = decayed_layer.contraction
        block = peel_tail(
            decayed_layer,
            fw,
            c0=1.0 - kappa,
            epsilon=eps,
            alpha=1.0 - kappa,
            lip=1.0 + kappa,
            seed=10,
        )
        assert block.roundtrip_error < 1e-8
        assert block.lip_sampled < eps

    def test_requires_positive_lower_constant(self, smooth_layer):
        frame, _ = choose_w(smooth_layer, 0.05)
        fw = build_fw(smooth_layer, frame)
        with pytest.raises(ValueError, match="positive"):
            peel_tail(smooth_layer, fw, c0=0.0, epsilon=0.25)


def tanh_contraction(k: int, seed: int, scale: float = 0.3, bias: float = 0.0):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((k, k))
    m *= 1.0 / np.linalg.norm(m, 2)
    b = bias * rng.standard_normal(k)
    return lambda c: c + scale * np.tanh(c @ m.T) + b


class TestPathBlocks:
    def test_linear_map_needs_no_blocks(self):
        a = np.diag([1.3, 0.8])
        f = lambda c: c @ a.T
        blocks, diag = path_blocks(f, 2, epsilon=0.25, r1=1.0, c0=0.8, c1=1.3)
        assert blocks == []
        assert diag["linear_shortcut"]

    def test_transport_reaches_the_map(self):
        f = tanh_contraction(3, seed=21)
        blocks, diag = path_blocks(
            f, 3, epsilon=0.25, r1=1.0, c0=0.7, c1=1.3, alpha=0.7, lip=1.3, seed=1
        )
        assert len(blocks) >= 1
        assert not diag["linear_shortcut"]
        df0 = np.column_stack(
            [(f(1e-6 * e) - f(-1e-6 * e)) / 2e-6 for e in np.eye(3)]
        )
        xs = ball_samples(3, 1.0, 50, seed=2)
        ys = xs @ df0.T
        for b in blocks:
            ys = b.eval_array(ys)
        target = np.stack([f(x) for x in xs])
        assert np.max(np.linalg.norm(ys - target, axis=1)) <= 1e-6

    def test_blocks_are_near_identity_and_monotone(self):
        f = tanh_contraction(3, seed=22, bias=0.2)
        eps = 0.25
        blocks, _ = path_blocks(
            f, 3, epsilon=eps, r1=1.0, c0=0.7, c1=1.4, alpha=0.65, lip=1.35, seed=3
        )
        assert blocks
        for b in blocks:
            assert b.lip_sampled < eps
            cert = pairwise_alpha(b, r=2.0, n=64, seed=4, dim=3)
            assert cert.alpha >= 1.0 - eps - 1e-6

    def test_finer_epsilon_needs_more_blocks(self):
        f = tanh_contraction(3, seed=23)
        coarse, _ = path_blocks(
            f, 3, epsilon=0.4, r1=1.0, c0=0.7, c1=1.3, alpha=0.7, lip=1.3, seed=5
        )
        fine, _ = path_blocks(
            f, 3, epsilon=0.1, r1=1.0, c0=0.7, c1=1.3, alpha=0.7, lip=1.3, seed=5
        )
        assert len(fine) >= len(coarse)

    def test_validation(self):
        f = lambda c: c
        with pytest.raises(ValueError, match="epsilon"):
            path_blocks(f, 2, epsilon=0.0, r1=1.0, c0=0.5, c1=1.5)
        with pytest.raises(ValueError, match="c0"):
            path_blocks(f, 2, epsilon=0.2, r1=1.0, c0=1.5, c1=0.5)


class TestLinearPathBlocks:
    def test_identity_needs_nothing(self):
        kind, factors, _ = linear_path_blocks(np.eye(4), 0.25)
        assert kind == "identity"
        assert factors == []

    def test_axis_flip_is_pure_reflection(self):
        kind, factors, _ = linear_path_blocks(np.diag([-1.0, 1.0, 1.0]), 0.25)
        assert kind == "reflection"
        assert factors == []

    def test_scaled_rotation_factors_recompose(self):
        m = 2.0 * rotation(math.pi / 2.0)
        eps = 0.25
        kind, factors, diag = linear_path_blocks(m, eps)
        assert kind == "identity"
        acc = np.eye(2)
        for f in factors:
            assert np.linalg.norm(f - np.eye(2), 2) < eps
            acc = f @ acc
        assert np.linalg.norm(acc - m, 2) <= 1e-8
        assert diag["product_error"] <= 1e-8

    def test_paired_flips_become_a_half_turn(self):
        kind, factors, _ = linear_path_blocks(np.diag([-1.0, -1.0, 1.0]), 0.3)
        assert kind == "identity"
        acc = np.eye(3)
        for f in factors:
            acc = f @ acc
        assert np.allclose(acc, np.diag([-1.0, -1.0, 1.0]), atol=1e-8)

    def test_triple_flip_keeps_one_reflection(self):
        m = np.diag([-1.0, -1.0, -1.0])
        kind, factors, _ = linear_path_blocks(m, 0.3)
        assert kind == "reflection"
        acc = np.diag([-1.0, 1.0, 1.0])
        for f in factors:
            acc = f @ acc
        assert np.allclose(acc, m, atol=1e-8)

    def test_off_axis_reflection_aligns_to_first_coordinate(self):
        m = rotation(0.3) @ np.diag([-1.5, 0.75])
        eps = 0.2
        kind, factors, _ = linear_path_blocks(m, eps)
        assert kind == "reflection"
        acc = np.diag([-1.0, 1.0])
        for f in factors:
            assert np.linalg.norm(f - np.eye(2), 2) < eps
            acc = f @ acc
        assert np.allclose(acc, m, atol=1e-8)

    def test_general_positive_matrix(self):
        m = rotation(0.9) @ np.diag([1.6, 0.7])
        kind, factors, _ = linear_path_blocks(m, 0.25)
        assert kind == "identity"
        acc = np.eye(2)
        for f in factors:
            acc = f @ acc
        assert np.allclose(acc, m, atol=1e-8)

    def test_rejects_near_singular_and_bad_input(self):
        with pytest.raises(ValueError, match="singular"):
            linear_path_blocks(np.diag([1.0, 1e-9]), 0.25)
        with pytest.raises(ValueError, match="square"):
            linear_path_blocks(np.ones((2, 3)), 0.25)
        with pytest.raises(ValueError, match="epsilon"):
            linear_path_blocks(np.eye(2), 0.0)


class TestDecompose:
    def test_identity_layer_decomposes_to_nothing(self, space16):
        layer = make_layer(space16, lip_g=0.0, seed=1)
        result = decompose(layer, epsilon=0.25, r1=1.0)
        assert result.j == 0 and result.blocks == ()
        assert isinstance(result.a0, Identity)
        xs = ball_samples(16, 1.0, 8, seed=2)
        assert np.allclose(result.eval_array(xs), xs, atol=1e-12)

    def test_smooth_layer_blocks_and_composite(self, smooth_layer):
        eps = 0.25
        result = decompose(smooth_layer, epsilon=eps, r1=1.0, seed=3)
        assert result.j == len(result.blocks) >= 1
        assert result.diagnostics["composite_error"] <= 1e-6
        for b in result.blocks:
            assert b.lip_sampled < eps
        xs = ball_samples(16, 1.0, 40, seed=99)
        gap = np.max(
            np.linalg.norm(
                result.eval_array(xs) - smooth_layer.eval_array(xs), axis=1
            )
        )
        assert gap <= 5e-6

    def test_blocks_are_strongly_monotone(self, smooth_layer):
        eps = 0.25
        result = decompose(smooth_layer, epsilon=eps, r1=1.0, seed=3)
        for b in result.blocks:
            cert = pairwise_alpha(b, r=1.0, n=48, seed=5, dim=16)
            assert cert.alpha >= 1.0 - eps - 1e-6

    def test_block_jacobians_positively_oriented_at_origin(self, smooth_layer):
        result = decompose(smooth_layer, epsilon=0.25, r1=1.0, seed=3)
        for b in result.blocks:
            jac = np.column_stack(
                [
                    (eval_map(b, 1e-5 * e) - eval_map(b, -1e-5 * e)) / 2e-5
                    for e in np.eye(16)
                ]
            )
            assert np.linalg.det(jac) > 0.0

    def test_frame_blocks_fix_the_complement(self, smooth_layer):
        result = decompose(smooth_layer, epsilon=0.25, r1=1.0, seed=3)
        lifted = [b for b in result.blocks if hasattr(b, "frame")]
        assert lifted
        fr = lifted[0].frame
        rng = np.random.default_rng(8)
        for _ in range(4):
            x = rng.standard_normal(16)
            x -= fr.project_array(x)
            for b in lifted:
                assert np.allclose(b.eval_array(x), x, atol=1e-12)

    def test_orientation_reversing_layer_yields_reflection(self, flip_layer):
        result = decompose(flip_layer, epsilon=0.25, r1=1.0, seed=4)
        assert isinstance(result.a0, Reflection)
        assert result.diagnostics["composite_error"] <= 1e-6
        assert result.diagnostics["inverter"] == "newton"
        xs = ball_samples(16, 1.0, 30, seed=6)
        gap = np.max(
            np.linalg.norm(result.eval_array(xs) - flip_layer.eval_array(xs), axis=1)
        )
        assert gap <= 5e-6

    def test_finer_epsilon_uses_more_blocks(self, smooth_layer):
        coarse = decompose(smooth_layer, epsilon=0.4, r1=1.0, seed=3)
        fine = decompose(smooth_layer, epsilon=0.2, r1=1.0, seed=3)
        assert fine.j >= coarse.j

    def test_stage_tag_on_uncertified_middle_map(self, space16):
        layer = make_layer(space16, rank=4, lip_g=0.4, activation="recu", seed=5)
        with pytest.raises(DecompositionError, match=r"\[estimate\]"):
            decompose(layer, epsilon=0.25, r1=1.0)

    def test_parameter_validation(self, smooth_layer):
        with pytest.raises(ValueError, match="epsilon"):
            decompose(smooth_layer, epsilon=0.0, r1=1.0)
        with pytest.raises(ValueError, match="radius"):
            decompose(smooth_layer, epsilon=0.25, r1=0.0)

    def test_result_rejects_oversized_blocks(self):
        class FakeBlock:
            lip_sampled = 0.5
            label = "fake"

        with pytest.raises(AssertionError, match="not below epsilon"):
            DecompositionResult(
                a0=Identity(), blocks=(FakeBlock(),), j=1, r1=1.0, epsilon=0.25
            )
        with pytest.raises(ValueError, match="block count"):
            DecompositionResult(a0=Identity(), blocks=(), j=2, r1=1.0, epsilon=0.25)
