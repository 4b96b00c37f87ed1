"""Banach inversion of residual blocks and chains."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opdisc.invert import (
    ChainInverseResult,
    DomainError,
    GlobalInverseReport,
    InversionError,
    InversionTrace,
    block_fixed_point,
    chain_inverse,
    global_inverse_check,
    invert_chain,
)
from opdisc.layers import (
    CoordinateActivation,
    CoordinateNetwork,
    InvertibleResidualChain,
    ResidualChain,
)
from opdisc.monotone import ball_samples, bilipschitz_estimate
from opdisc.operators import Diagonal, Identity, Reflection


def zero_net(n: int) -> CoordinateNetwork:
    return CoordinateNetwork(
        (np.zeros((n, n)),), (np.zeros(n),), CoordinateActivation.identity()
    )


def first_coordinate_net(n: int, gain: float = 0.5) -> CoordinateNetwork:
    w = np.zeros((n, n))
    w[0, 0] = gain
    return CoordinateNetwork((w,), (np.zeros(n),), CoordinateActivation.identity())


def seeded_chain(
    dim=16, prefix=None, blocks=3, bound=0.5, seed=3, activation=None
) -> ResidualChain:
    return ResidualChain.seeded(
        dim,
        dim if prefix is None else prefix,
        blocks,
        block_bound=bound,
        activation=activation,
        bias_scale=0.1,
        seed=seed,
    )


class TestBlockFixedPoint:
    def test_zero_network_returns_y_immediately(self):
        y = np.linspace(-1.0, 1.0, 6)
        x, trace = block_fixed_point(zero_net(6), y)
        assert np.array_equal(x, y)
        assert trace.iteration_counts == (1,)
        assert trace.final_residuals == (0.0,)

    def test_first_coordinate_closed_form(self):
        y = np.array([3.0, -1.0, 2.0, 0.5])
        x, _ = block_fixed_point(first_coordinate_net(4), y, tol=1e-12)
        assert abs(x[0] - y[0] / 1.5) <= 1e-12
        np.testing.assert_allclose(x[1:], y[1:], rtol=0, atol=0)

    def test_unit_y_at_half_delta_needs_at_most_forty_iterations(self):
        net = CoordinateNetwork.seeded(8, 8, target_bound=0.5, seed=21)
        y = np.zeros(8)
        y[2] = 1.0
        assert np.linalg.norm(y) == 1.0
        x, trace = block_fixed_point(net, y, tol=1e-10)
        assert trace.iteration_counts[0] <= 40
        assert np.linalg.norm(x + net.eval_array(x) - y) <= 1e-10

    def test_iterations_stay_below_apriori_bound(self):
        net = CoordinateNetwork.seeded(8, 8, target_bound=0.7, bias_scale=0.2, seed=5)
        y = ball_samples(8, 2.0, 1, seed=9)[0]
        _, trace = block_fixed_point(net, y, tol=1e-11)
        assert trace.iteration_counts[0] <= trace.apriori_bounds[0]

    def test_residuals_strictly_decreasing_and_ratio_near_delta(self):
        net = CoordinateNetwork.seeded(6, 6, target_bound=0.6, seed=2)
        y = ball_samples(6, 1.5, 1, seed=4)[0]
        _, trace = block_fixed_point(net, y, tol=1e-10)
        hist = trace.residual_histories[0]
        assert len(hist) > 5
        for a, b in zip(hist[1:], hist[2:]):
            assert b < a
        assert trace.median_contraction_ratio(0) <= 0.6 + 0.05

    def test_tail_coordinates_pass_through_exactly(self):
        net = CoordinateNetwork.seeded(3, 3, target_bound=0.4, seed=7)
        y = np.arange(1.0, 9.0)
        x, _ = block_fixed_point(net, y)
        assert np.array_equal(x[3:], y[3:])

    def test_initial_guess_does_not_change_the_answer(self):
        net = CoordinateNetwork.seeded(5, 5, target_bound=0.8, bias_scale=0.3, seed=11)
        y = ball_samples(5, 1.0, 1, seed=1)[0]
        tol = 1e-11
        x_from_y, _ = block_fixed_point(net, y, tol=tol, initial="y")
        x_from_zero, _ = block_fixed_point(net, y, tol=tol, initial="zero")
        assert np.linalg.norm(x_from_y - x_from_zero) <= 2 * tol

    def test_refuses_uncertified_block(self):
        net = CoordinateNetwork.seeded(4, 4, target_bound=1.5, seed=0)
        with pytest.raises(ValueError, match="not below 1"):
            block_fixed_point(net, np.zeros(4))

    def test_refuses_unbounded_activation_without_ball_certificate(self):
        net = CoordinateNetwork.seeded(
            4, 4, target_bound=0.3, activation=CoordinateActivation.recu(), seed=0
        )
        with pytest.raises(ValueError, match="no global Lipschitz certificate"):
            block_fixed_point(net, np.zeros(4))

    def test_ball_certificate_admits_cubed_rectifier_blocks(self):
        w = 0.05 * np.eye(3)
        net = CoordinateNetwork(
            (w, w), (np.zeros(3), np.zeros(3)), CoordinateActivation.recu()
        )
        y = np.array([0.5, -0.25, 0.1])
        x, trace = block_fixed_point(net, y, ball_radius=2.0)
        assert trace.deltas[0] < 1e-3
        assert np.linalg.norm(x + net.eval_array(x) - y) <= 1e-10

    def test_max_iter_exceeded_raises(self):
        net = CoordinateNetwork.seeded(6, 6, target_bound=0.9, seed=3)
        y = ball_samples(6, 1.0, 1, seed=2)[0]
        with pytest.raises(InversionError, match="did not reach"):
            block_fixed_point(net, y, tol=1e-12, max_iter=3)

    def test_domain_violation_raises_unless_projected(self):
        # bias makes the first iterate overshoot the ball even though the
        # solution x1 = (0.1 - 2) / 1.5 lies well inside it
        w = np.zeros((4, 4))
        w[0, 0] = 0.5
        b = np.array([2.0, 0.0, 0.0, 0.0])
        net = CoordinateNetwork((w,), (b,), CoordinateActivation.identity())
        y = np.array([0.1, 0.0, 0.0, 0.0])
        with pytest.raises(DomainError, match="left the inversion domain"):
            block_fixed_point(net, y, domain_radius=1.0)
        x, _ = block_fixed_point(net, y, domain_radius=1.0, project_iterates=True)
        assert abs(x[0] - (0.1 - 2.0) / 1.5) <= 1e-9
        assert np.linalg.norm(x) <= 1.0 + 0.5 + 1e-9

    def test_argument_validation(self):
        net = zero_net(3)
        with pytest.raises(ValueError, match="tolerance"):
            block_fixed_point(net, np.zeros(3), tol=0.0)
        with pytest.raises(ValueError, match="at least one iteration"):
            block_fixed_point(net, np.zeros(3), max_iter=0)
        with pytest.raises(ValueError, match="initial iterate"):
            block_fixed_point(net, np.zeros(3), initial="guess")
        with pytest.raises(ValueError, match="single coefficient vector"):
            block_fixed_point(net, np.zeros((2, 3)))
        with pytest.raises(ValueError, match="needs 3"):
            block_fixed_point(net, np.zeros(2))
        rect = CoordinateNetwork(
            (np.zeros((2, 3)),), (np.zeros(2),), CoordinateActivation.identity()
        )
        with pytest.raises(ValueError, match="square"):
            block_fixed_point(rect, np.zeros(3))

    @settings(max_examples=25, deadline=None)
    @given(
        delta=st.floats(min_value=0.05, max_value=0.85),
        seed=st.integers(min_value=0, max_value=10_000),
    )
    def test_convergence_and_restart_consistency(self, delta, seed):
        net = CoordinateNetwork.seeded(
            4, 4, target_bound=delta, bias_scale=0.2, seed=seed
        )
        y = ball_samples(4, 1.0, 1, seed=seed + 1)[0]
        tol = 1e-10
        x, trace = block_fixed_point(net, y, tol=tol)
        assert np.linalg.norm(x + net.eval_array(x) - y) <= tol
        assert trace.iteration_counts[0] <= trace.apriori_bounds[0]
        x0, _ = block_fixed_point(net, y, tol=tol, initial="zero")
        assert np.linalg.norm(x - x0) <= 2 * tol


class TestInversionTrace:
    def test_field_lengths_must_agree(self):
        with pytest.raises(ValueError, match="one entry per block"):
            InversionTrace((3,), (1e-11, 1e-12), ((0.1, 0.01, 1e-3),), (5,), (0.5,), 1e-10, 100)

    def test_history_length_must_match_count(self):
        with pytest.raises(ValueError, match="disagrees with its count"):
            InversionTrace((2,), (1e-11,), ((0.1, 0.01, 1e-3),), (5,), (0.5,), 1e-10, 100)

    def test_rising_residual_rejected(self):
        with pytest.raises(ValueError, match="residual rose"):
            InversionTrace(
                (4,), (1e-11,), ((0.1, 0.01, 0.02, 1e-3),), (9,), (0.5,), 1e-10, 100
            )

    def test_median_ratio_above_delta_rejected(self):
        hist = (0.1, 0.09, 0.08, 0.07)
        with pytest.raises(ValueError, match="median contraction ratio"):
            InversionTrace((4,), (1e-11,), (hist,), (9,), (0.5,), 1e-10, 100)

    def test_count_beyond_apriori_bound_rejected(self):
        hist = (0.1, 0.01, 1e-3)
        with pytest.raises(ValueError, match="a priori bound"):
            InversionTrace((3,), (1e-4,), (hist,), (2,), (0.5,), 1e-10, 100)

    def test_as_dict_is_json_ready(self):
        trace = InversionTrace(
            (2,), (1e-12,), ((0.1, 0.04),), (40,), (0.5,), 1e-10, 100
        )
        blob = json.loads(json.dumps(trace.as_dict()))
        assert blob["iteration_counts"] == [2]
        assert blob["contraction_ratios"] == [[0.04 / 0.1]]
        assert blob["deltas"] == [0.5]


class TestChainInverse:
    def test_empty_chain_identity_head_returns_y(self):
        y = np.array([1.0, -2.0, 0.25])
        out = invert_chain(None, Identity(), y)
        assert np.array_equal(out.x, y)
        assert out.trace.n_blocks == 0
        assert out.roundtrip_target == 0.0

    def test_reflection_head_is_its_own_inverse(self):
        refl = Reflection.first_axis(5)
        y = np.arange(1.0, 6.0)
        x = chain_inverse(None, refl, y)
        np.testing.assert_array_equal(x, refl.apply_array(y))

    @pytest.mark.parametrize("head", [Identity(), Reflection.first_axis(16)])
    def test_three_block_half_delta_roundtrip(self, head):
        chain = seeded_chain(dim=16, blocks=3, bound=0.5, seed=17)
        xs = ball_samples(16, 1.0, 100, seed=23)
        ys = chain.eval_array(head.apply_array(xs))
        worst = 0.0
        for x_true, y in zip(xs, ys):
            x_rec = chain_inverse(chain, head, y)
            worst = max(worst, float(np.linalg.norm(x_rec - x_true)))
        assert worst <= 1e-8

    def test_roundtrip_stays_below_reported_target(self):
        chain = seeded_chain(dim=8, blocks=4, bound=0.6, seed=29)
        y = chain.eval_array(ball_samples(8, 1.0, 1, seed=31)[0])
        out = invert_chain(chain, None, y, tol=1e-9)
        fwd = chain.eval_array(out.x)
        assert np.linalg.norm(fwd - y) <= out.roundtrip_target

    def test_roundtrip_satisfies_bilipschitz_bound(self):
        chain = seeded_chain(dim=8, blocks=3, bound=0.5, seed=41)
        tol = 1e-10
        est = bilipschitz_estimate(chain.eval_array, r=1.5, n=128, seed=43, dim=8)
        xs = ball_samples(8, 1.0, 50, seed=47)
        chain_tol = 3 * tol
        cap = chain_tol / (1.0 - est.c_lower) if est.c_lower < 1.0 else np.inf
        for x_true in xs:
            y = chain.eval_array(x_true)
            x_rec = chain_inverse(chain, None, y, tol=tol)
            assert np.linalg.norm(x_rec - x_true) <= cap

    def test_trace_follows_forward_block_order(self):
        dim = 4
        nets = (
            CoordinateNetwork.seeded(dim, dim, target_bound=0.2, seed=1),
            CoordinateNetwork.seeded(dim, dim, target_bound=0.7, seed=2),
        )
        chain = ResidualChain(dim, dim, nets)
        y = chain.eval_array(ball_samples(dim, 1.0, 1, seed=3)[0])
        out = invert_chain(chain, None, y)
        np.testing.assert_allclose(out.trace.deltas, (0.2, 0.7), rtol=1e-12)
        # the low-contraction block converges in fewer iterations
        assert out.trace.iteration_counts[0] < out.trace.iteration_counts[1]

    def test_certified_wrapper_chains_are_accepted(self):
        chain = seeded_chain(dim=6, blocks=2, bound=0.4, seed=53)
        certified = InvertibleResidualChain(chain, delta=0.45)
        y = chain.eval_array(ball_samples(6, 1.0, 1, seed=59)[0])
        x_raw = chain_inverse(chain, None, y)
        x_cert = chain_inverse(certified, None, y)
        np.testing.assert_allclose(x_cert, x_raw, atol=1e-9)

    def test_uncertified_chain_refused(self):
        chain = seeded_chain(dim=4, blocks=2, bound=1.2, seed=61)
        with pytest.raises(ValueError, match="no contraction certificate"):
            chain_inverse(chain, None, np.zeros(4))

    def test_non_involutive_head_refused(self):
        with pytest.raises(ValueError, match="identity or a reflection"):
            chain_inverse(None, Diagonal(np.array([2.0, 1.0])), np.zeros(2))
        with pytest.raises(TypeError, match="not supported"):
            chain_inverse(None, "flip", np.zeros(2))
        with pytest.raises(TypeError, match="cannot invert"):
            chain_inverse(("not", "a", "chain"), None, np.zeros(2))

    def test_domain_bookkeeping_through_a_chain(self):
        chain = seeded_chain(dim=6, blocks=3, bound=0.5, seed=67)
        y = 50.0 * np.ones(6)
        with pytest.raises(DomainError):
            invert_chain(chain, None, y, domain_radius=1.0)
        out = invert_chain(chain, None, y, domain_radius=200.0)
        assert np.isfinite(out.x).all()

    def test_result_as_dict_is_json_ready(self):
        chain = seeded_chain(dim=4, blocks=1, bound=0.3, seed=71)
        out = invert_chain(chain, None, np.ones(4))
        blob = json.loads(json.dumps(out.as_dict()))
        assert len(blob["x"]) == 4
        assert blob["trace"]["iteration_counts"] == list(out.trace.iteration_counts)
        assert blob["roundtrip_target"] == out.roundtrip_target


class TestGlobalInverseCheck:
    def test_identity_chain_roundtrips_exactly(self):
        chain = ResidualChain(5, 5, (zero_net(5),))
        certified = InvertibleResidualChain(chain, delta=0.5)
        report = global_inverse_check(certified, r=1.0, n=16, seed=0)
        assert report.roundtrip_inverse_of_forward == 0.0
        assert report.roundtrip_forward_of_inverse == 0.0
        assert all(abs(a - 1.0) <= 1e-12 for a in report.block_alphas)

    def test_high_delta_groupsort_chain(self):
        chain = ResidualChain.seeded(
            12,
            12,
            3,
            block_bound=0.9,
            activation=CoordinateActivation.groupsort2(),
            bias_scale=0.1,
            seed=73,
        )
        certified = InvertibleResidualChain(chain, delta=0.9)
        report = global_inverse_check(certified, r=1.0, n=40, seed=5, tol=1e-9)
        assert report.roundtrip_inverse_of_forward <= 1e-6
        assert report.roundtrip_forward_of_inverse <= 1e-6
        assert all(a >= 1.0 - 0.9 - 1e-6 for a in report.block_alphas)
        assert report.alpha_floor == pytest.approx(0.1)

    def test_delta_at_or_above_one_refused_at_certification(self):
        chain = seeded_chain(dim=4, blocks=2, bound=0.4, seed=79)
        with pytest.raises(ValueError, match=r"must lie in \(0, 1\)"):
            InvertibleResidualChain(chain, delta=1.5)

    def test_unbounded_activation_needs_ball_certificate(self):
        chain = ResidualChain.seeded(
            4, 4, 2, block_bound=0.3, activation=CoordinateActivation.recu(), seed=83
        )
        with pytest.raises(ValueError, match="no global Lipschitz certificate"):
            InvertibleResidualChain(chain, delta=0.5)

    def test_ball_certificate_must_cover_the_test_ball(self):
        w = 0.05 * np.eye(4)
        net = CoordinateNetwork(
            (w, w), (np.zeros(4), np.zeros(4)), CoordinateActivation.recu()
        )
        chain = InvertibleResidualChain(
            ResidualChain(4, 4, (net,)), delta=0.5, ball_radius=2.0
        )
        assert chain.cert_method == "ball_local"
        with pytest.raises(ValueError, match="does not cover"):
            global_inverse_check(chain, r=3.0, n=8, seed=0)
        report = global_inverse_check(chain, r=1.0, n=8, seed=0)
        assert report.cert_method == "ball_local"
        assert report.roundtrip_inverse_of_forward <= 1e-9

    def test_argument_validation(self):
        chain = InvertibleResidualChain(seeded_chain(dim=4, blocks=1), delta=0.6)
        with pytest.raises(TypeError, match="certified chain"):
            global_inverse_check(seeded_chain(dim=4, blocks=1), r=1.0, n=8)
        with pytest.raises(ValueError, match="radius"):
            global_inverse_check(chain, r=0.0, n=8)
        with pytest.raises(ValueError, match="two samples"):
            global_inverse_check(chain, r=1.0, n=1)

    def test_report_as_dict_round_trips(self):
        chain = InvertibleResidualChain(seeded_chain(dim=4, blocks=1), delta=0.6)
        report = global_inverse_check(chain, r=0.5, n=8, seed=2)
        blob = json.loads(json.dumps(report.as_dict()))
        assert blob["n_samples"] == 8
        assert blob["delta"] == 0.6
        assert len(blob["block_alphas"]) == 1
