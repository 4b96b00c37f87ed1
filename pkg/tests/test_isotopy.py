"""Rotation-cascade path truncations and their forced determinant crossings."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opdisc.decompose import quintic_smoothstep
from opdisc.isotopy import (
    IsotopyConfig,
    block_angle,
    glued_truncation_matrix,
    isotopy_map,
    reflected_rotation_cascade,
    rotation_cascade,
    truncated_det_scan,
)


class TestSmoothStep:
    def test_boundary_plateaus(self):
        assert np.all(quintic_smoothstep(np.array([-2.0, -0.1, 0.0])) == 0.0)
        assert np.all(quintic_smoothstep(np.array([1.0, 1.3, 9.0])) == 1.0)

    def test_symmetric_midpoint(self):
        assert quintic_smoothstep(0.5) == pytest.approx(0.5, abs=1e-15)

    def test_monotone(self):
        vals = quintic_smoothstep(np.linspace(-0.5, 1.5, 401))
        assert np.all(np.diff(vals) >= 0.0)

    def test_block_angle_windows(self):
        assert block_angle(2.0, 2) == 0.0
        assert block_angle(3.0, 2) == pytest.approx(np.pi)
        assert block_angle(2.5, 2) == pytest.approx(np.pi / 2)


class TestRotationCascade:
    def test_starts_at_the_identity(self):
        assert np.array_equal(rotation_cascade(0.0, 8), np.eye(8))

    def test_ends_at_minus_identity(self):
        assert np.array_equal(rotation_cascade(1.0, 8), -np.eye(8))

    def test_orthogonal_along_the_whole_path(self):
        rng = np.random.default_rng(5)
        v = rng.standard_normal(10)
        for t in np.linspace(0.0, 1.0, 33):
            mat = rotation_cascade(t, 10)
            assert np.max(np.abs(mat.T @ mat - np.eye(10))) <= 1e-12
            assert abs(np.linalg.norm(mat @ v) - np.linalg.norm(v)) <= 1e-10

    def test_determinant_is_plus_one_everywhere(self):
        for t in np.linspace(0.0, 1.0, 33):
            assert np.linalg.det(rotation_cascade(t, 10)) == pytest.approx(1.0, abs=1e-12)

    def test_blocks_flip_in_order(self):
        # sweep parameter 2.5: block one done, block two mid-turn, rest untouched
        mat = rotation_cascade(0.6, 8)
        np.testing.assert_allclose(mat[:2, :2], -np.eye(2), atol=1e-12)
        np.testing.assert_allclose(mat[2:4, 2:4], [[0.0, 1.0], [-1.0, 0.0]], atol=1e-12)
        np.testing.assert_allclose(mat[4:, 4:], np.eye(4), atol=1e-15)

    def test_odd_or_tiny_dimension_rejected(self):
        with pytest.raises(ValueError, match="even dimension"):
            rotation_cascade(0.5, 7)
        with pytest.raises(ValueError, match="even dimension"):
            rotation_cascade(0.5, 0)

    def test_parameter_range(self):
        with pytest.raises(ValueError, match="lie in"):
            rotation_cascade(1.2, 4)


class TestReflectedCascade:
    def test_starts_at_the_coordinate_reflection(self):
        expected = np.diag([-1.0] + [1.0] * 6)
        assert np.array_equal(reflected_rotation_cascade(0.0, 7), expected)

    def test_meets_the_plain_cascade_at_the_end(self):
        assert np.array_equal(reflected_rotation_cascade(1.0, 7), -np.eye(7))

    def test_determinant_is_minus_one_everywhere(self):
        for t in np.linspace(0.0, 1.0, 33):
            mat = reflected_rotation_cascade(t, 9)
            assert np.linalg.det(mat) == pytest.approx(-1.0, abs=1e-12)
            assert np.max(np.abs(mat.T @ mat - np.eye(9))) <= 1e-12

    def test_even_dimension_rejected(self):
        with pytest.raises(ValueError, match="odd dimension"):
            reflected_rotation_cascade(0.5, 8)


class TestIsotopyMap:
    def test_path_endpoints_and_seam(self):
        v = np.arange(1.0, 8.0)
        assert np.array_equal(isotopy_map(v, 0.0, 7), v)
        assert np.array_equal(isotopy_map(v, 0.5, 7), -v)
        assert np.array_equal(isotopy_map(v, 1.0, 7), np.concatenate([[-1.0], v[1:]]))

    def test_batch_application(self):
        rng = np.random.default_rng(11)
        batch = rng.standard_normal((4, 7))
        out = isotopy_map(batch, 0.3, 7)
        assert out.shape == (4, 7)
        np.testing.assert_allclose(out[2], isotopy_map(batch[2], 0.3, 7))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="trailing axis"):
            isotopy_map(np.ones(5), 0.3, 7)

    def test_low_modes_finish_early(self):
        # a vector living in the first block stops moving once the sweep passes it
        v = np.array([0.7, -0.2] + [0.0] * 14)
        for t in (0.25, 0.3, 0.4, 0.5):
            assert np.array_equal(isotopy_map(v, t, 16), -v)

    def test_tail_estimate_at_dyadic_steps(self):
        # between t_k = (1 - 2^-k)/2 and t_{k+1} only blocks past 2^k move,
        # so the step is bounded by twice the coordinate tail from there on
        v = 2.0 ** -np.arange(1, 17)
        for k in (1, 2, 3):
            t0 = 0.5 * (1.0 - 2.0**-k)
            t1 = 0.5 * (1.0 - 2.0 ** -(k + 1))
            step = np.linalg.norm(isotopy_map(v, t1, 16) - isotopy_map(v, t0, 16))
            k_star = int(1.0 / (1.0 - 2.0 * t0))
            tail = 2.0 * np.sqrt(np.sum(v[2 * k_star - 2 :] ** 2))
            assert step <= tail + 1e-12


class TestIsotopyConfig:
    def test_faithful_range(self):
        assert IsotopyConfig(7).faithful_t_max == pytest.approx(0.375)
        assert IsotopyConfig(16).faithful_t_max == pytest.approx(4.0 / 9.0)

    def test_grid_contains_dyadic_refinements(self):
        grid = IsotopyConfig(16, t_resolution=33).t_grid()
        for point in (0.25, 0.375, 0.4375):
            assert np.min(np.abs(grid - point)) < 1e-15
        assert np.all(np.diff(grid) > 0.0)
        assert grid[0] == 0.0 and grid[-1] == 1.0

    def test_dyadic_points_stay_inside_the_model(self):
        cfg = IsotopyConfig(10)
        for t in cfg.t_grid():
            if 0.0 < t < 0.5 and not np.isclose(t * 64, round(t * 64)):
                sweep = 1.0 / (1.0 - 2.0 * t)
                assert int(sweep) <= cfg.m // 2

    def test_validation(self):
        with pytest.raises(ValueError, match="three coordinates"):
            IsotopyConfig(2)
        with pytest.raises(ValueError, match="three grid points"):
            IsotopyConfig(7, t_resolution=2)
        with pytest.raises(ValueError, match="quintic smoothstep"):
            IsotopyConfig(7, step_name="cubic")


class TestTruncatedDetScan:
    def test_seven_dim_crossing_matches_the_closed_form(self):
        scan = truncated_det_scan(7, 101, 1e-12)
        assert scan.det_endpoint_signs == (1, -1)
        assert len(scan.crossings) == 1
        assert abs(scan.t_star - 7.0 / 18.0) <= 1e-9
        assert abs(scan.det_at_star) <= 1e-8
        assert scan.min_sv_at_star <= 1e-8

    @pytest.mark.parametrize("m,t_expected", [(3, 3.0 / 10.0), (5, 5.0 / 14.0)])
    def test_small_truncations(self, m, t_expected):
        scan = truncated_det_scan(m, 51, 1e-12)
        assert abs(scan.t_star - t_expected) <= 1e-9

    def test_aligned_column_stays_unit_but_jumps(self):
        scan = truncated_det_scan(7, 101, 1e-10)
        assert np.all(np.abs(np.abs(scan.aligned_dets) - 1.0) <= 1e-12)
        first = scan.aligned_dets[scan.t_grid <= 0.5]
        second = scan.aligned_dets[scan.t_grid > 0.5]
        assert np.all(first > 0.0) and np.all(second < 0.0)

    def test_cut_determinant_moves_continuously(self):
        scan = truncated_det_scan(7, 201, 1e-10)
        dt = np.diff(scan.t_grid)
        assert np.max(np.abs(np.diff(scan.dets)) / dt) <= 300.0

    def test_second_half_stays_orthogonal(self):
        scan = truncated_det_scan(7, 101, 1e-10)
        late = scan.min_svs[scan.t_grid > 0.5]
        np.testing.assert_allclose(late, 1.0, atol=1e-12)

    def test_default_grid_comes_from_the_config(self):
        cfg = IsotopyConfig(7, t_resolution=17)
        scan = truncated_det_scan(7, None, 1e-10, config=cfg)
        assert np.array_equal(scan.t_grid, cfg.t_grid())

    def test_explicit_grid(self):
        scan = truncated_det_scan(7, [0.0, 0.25, 0.5, 0.75, 1.0], 1e-10)
        assert abs(scan.t_star - 7.0 / 18.0) <= 1e-9

    def test_validation(self):
        with pytest.raises(ValueError, match="odd truncation"):
            truncated_det_scan(8)
        with pytest.raises(ValueError, match="odd truncation"):
            truncated_det_scan(1)
        with pytest.raises(ValueError, match="bisection tolerance"):
            truncated_det_scan(7, 11, 0.0)
        with pytest.raises(ValueError, match="at least two"):
            truncated_det_scan(7, 1)
        with pytest.raises(ValueError, match="strictly increasing"):
            truncated_det_scan(7, [0.0, 0.5, 0.5, 1.0])
        with pytest.raises(ValueError, match="span"):
            truncated_det_scan(7, [0.1, 0.5, 1.0])

    def test_rows_and_dict_round_trip(self):
        import json

        scan = truncated_det_scan(5, 21, 1e-10)
        rows = scan.rows()
        assert len(rows) == 21
        assert rows[0][0] == 0.0 and rows[-1][0] == 1.0
        blob = json.loads(json.dumps(scan.as_dict()))
        assert blob["m"] == 5
        assert len(blob["dets"]) == 21
        assert blob["det_endpoint_signs"] == [1, -1]

    @settings(max_examples=40, deadline=None)
    @given(t=st.floats(min_value=0.0, max_value=1.0))
    def test_truncation_never_expands(self, t):
        mat = glued_truncation_matrix(t, 7)
        svs = np.linalg.svd(mat, compute_uv=False)
        assert svs[0] <= 1.0 + 1e-12
