import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gyrodeblur import (
    GyroSample,
    OrientationTrajectory,
    integrate_gyro,
    load_gyro_csv,
    save_gyro_csv,
    slerp,
)
from gyrodeblur.imu import (
    quat_from_rotvec,
    quat_multiply,
    quat_rotation_angle,
    quat_to_matrix,
)

from helpers import fine_step_reference, quat_angle_between


def _axis_quat(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    return np.concatenate([[math.cos(angle / 2)], math.sin(angle / 2) * axis])


def _trace(rate_fn, t0_ns=0, dt_ns=10_000_000, n=11):
    return [
        GyroSample(t0_ns + i * dt_ns, rate_fn((t0_ns + i * dt_ns) * 1e-9))
        for i in range(n)
    ]


class TestQuatPrimitives:
    def test_multiply_identity(self):
        q = _axis_quat([1, 2, 3], 0.7)
        ident = np.array([1.0, 0.0, 0.0, 0.0])
        np.testing.assert_allclose(quat_multiply(ident, q), q, atol=1e-15)
        np.testing.assert_allclose(quat_multiply(q, ident), q, atol=1e-15)

    def test_from_rotvec_matches_axis_angle(self):
        rv = np.array([0.0, 0.0, 0.5])
        np.testing.assert_allclose(
            quat_from_rotvec(rv), _axis_quat([0, 0, 1], 0.5), atol=1e-15
        )

    def test_from_rotvec_tiny_angle_unit_norm(self):
        q = quat_from_rotvec(np.array([1e-14, -2e-14, 5e-15]))
        assert abs(np.linalg.norm(q) - 1.0) < 1e-15

    def test_to_matrix_rotates_vector(self):
        q = _axis_quat([0, 0, 1], math.pi / 2)
        v = quat_to_matrix(q) @ np.array([1.0, 0.0, 0.0])
        np.testing.assert_allclose(v, [0.0, 1.0, 0.0], atol=1e-15)

    @given(
        st.lists(st.floats(-5, 5), min_size=3, max_size=3),
        st.lists(st.floats(-5, 5), min_size=3, max_size=3),
    )
    def test_multiply_preserves_unit_norm(self, rv_a, rv_b):
        q = quat_multiply(quat_from_rotvec(np.array(rv_a)), quat_from_rotvec(np.array(rv_b)))
        assert abs(np.linalg.norm(q) - 1.0) < 1e-12


class TestSlerp:
    def test_midpoint_of_quarter_turn(self):
        q0 = np.array([1.0, 0.0, 0.0, 0.0])
        q1 = _axis_quat([0, 0, 1], math.pi / 2)
        np.testing.assert_allclose(
            slerp(q0, q1, 0.5), _axis_quat([0, 0, 1], math.pi / 4), atol=1e-9
        )

    def test_quarter_fraction(self):
        q0 = np.array([1.0, 0.0, 0.0, 0.0])
        q1 = _axis_quat([0, 1, 0], 1.2)
        np.testing.assert_allclose(
            slerp(q0, q1, 0.25), _axis_quat([0, 1, 0], 0.3), atol=1e-9
        )

    def test_endpoints(self):
        q0 = _axis_quat([1, 1, 0], 0.4)
        q1 = _axis_quat([0, 1, 3], 1.1)
        np.testing.assert_allclose(slerp(q0, q1, 0.0), q0, atol=1e-12)
        np.testing.assert_allclose(slerp(q0, q1, 1.0), q1, atol=1e-12)

    def test_shorter_arc_across_sign_flip(self):
        # q1 and -q1 are the same rotation; both must interpolate along
        # the same (shorter) geodesic
        q0 = np.array([1.0, 0.0, 0.0, 0.0])
        q1 = _axis_quat([1, 0, 0], 0.8)
        a = slerp(q0, q1, 0.5)
        b = slerp(q0, -q1, 0.5)
        assert min(np.linalg.norm(a - b), np.linalg.norm(a + b)) < 1e-12

    def test_near_antipodal_stays_on_shorter_arc(self):
        q0 = np.array([1.0, 0.0, 0.0, 0.0])
        q1 = _axis_quat([1, 0, 0], math.pi - 1e-3)
        mid = slerp(q0, q1, 0.5)
        np.testing.assert_allclose(
            mid, _axis_quat([1, 0, 0], (math.pi - 1e-3) / 2), atol=1e-9
        )

    def test_nearly_identical_inputs(self):
        q0 = _axis_quat([0, 0, 1], 0.3)
        q1 = _axis_quat([0, 0, 1], 0.3 + 1e-9)
        out = slerp(q0, q1, 0.5)
        assert abs(np.linalg.norm(out) - 1.0) < 1e-12
        assert quat_angle_between(out, q0) < 1e-8

    def test_rejects_non_unit(self):
        with pytest.raises(ValueError):
            slerp(np.array([2.0, 0.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0, 0.0]), 0.5)

    def test_rejects_fraction_outside_range(self):
        q = np.array([1.0, 0.0, 0.0, 0.0])
        with pytest.raises(ValueError):
            slerp(q, q, 1.5)
        with pytest.raises(ValueError):
            slerp(q, q, -0.1)

    @settings(max_examples=200)
    @given(
        st.lists(st.floats(-3, 3), min_size=3, max_size=3),
        st.lists(st.floats(-3, 3), min_size=3, max_size=3),
        st.floats(0.0, 1.0),
    )
    def test_constant_angular_speed(self, rv_a, rv_b, u):
        q0 = quat_from_rotvec(np.array(rv_a))
        q1 = quat_from_rotvec(np.array(rv_b))
        s = slerp(q0, q1, u)
        total = quat_angle_between(q0, q1)
        # acos conditioning near aligned quats limits achievable precision
        assert abs(quat_angle_between(q0, s) - u * total) < 1e-6


class TestIntegration:
    def test_constant_rate_closed_form(self):
        w = 0.9
        samples = _trace(lambda t: np.array([0.0, 0.0, w]), n=11)
        traj = integrate_gyro(samples)
        np.testing.assert_allclose(
            traj.quats[-1], _axis_quat([0, 0, 1], w * 0.1), atol=1e-9
        )
        # interpolation between knots of a constant-rate spin is exact
        np.testing.assert_allclose(
            traj.orientation_at(35_000_000), _axis_quat([0, 0, 1], w * 0.035), atol=1e-9
        )

    def test_single_axis_linear_ramp_exact(self):
        # rate averaging is exact for a linear ramp on a fixed axis
        rate = lambda t: np.array([0.0, 0.8 + 3.0 * t, 0.0])
        traj = integrate_gyro(_trace(rate, n=11))
        np.testing.assert_allclose(
            traj.quats[-1], _axis_quat([0, 1, 0], 0.8 * 0.1 + 3.0 * 0.01 / 2), atol=1e-12
        )

    def test_single_axis_varying_rate_vs_fine_reference(self):
        # quadrature residual for A*sin(b*t): ~T*h^2/12 * A*b^2, second order in h
        rate = lambda t: np.array([0.0, 4.0 * math.sin(20.0 * t), 0.0])
        ref = fine_step_reference(rate, 0.0, 0.1, dt=1e-5)
        coarse = integrate_gyro(_trace(rate, dt_ns=10_000_000, n=11))
        dense = integrate_gyro(_trace(rate, dt_ns=1_000_000, n=101))
        err_c = np.linalg.norm(quat_to_matrix(coarse.quats[-1]) - ref)
        err_d = np.linalg.norm(quat_to_matrix(dense.quats[-1]) - ref)
        assert err_c < 2e-3
        assert err_d < 2e-5
        assert err_c / err_d > 50.0

    def test_three_axis_rate_vs_fine_reference(self):
        rate = lambda t: np.array(
            [2.0 * math.sin(15.0 * t), 1.5 * math.cos(11.0 * t), -1.0 + 6.0 * t]
        )
        ref = fine_step_reference(rate, 0.0, 0.1, dt=1e-5)
        coarse = integrate_gyro(_trace(rate, dt_ns=10_000_000, n=11))
        dense = integrate_gyro(_trace(rate, dt_ns=1_000_000, n=101))
        err_c = np.linalg.norm(quat_to_matrix(coarse.quats[-1]) - ref)
        err_d = np.linalg.norm(quat_to_matrix(dense.quats[-1]) - ref)
        # non-commuting axes add commutator terms, still O(h^2) overall
        assert err_c < 1e-3
        assert err_d < 1e-5
        assert err_c / err_d > 50.0

    def test_thousand_step_norm_hygiene(self):
        gen = np.random.Generator(np.random.Philox(42))
        omega = gen.normal(0.0, 2.0, (1001, 3))
        samples = [GyroSample(i * 5_000_000, omega[i]) for i in range(1001)]
        traj = integrate_gyro(samples)
        assert traj.quats.shape == (1001, 4)
        norms = np.linalg.norm(traj.quats, axis=1)
        assert np.max(np.abs(norms - 1.0)) < 1e-9

    def test_split_and_compose(self):
        rate = lambda t: np.array([math.sin(9 * t), math.cos(7 * t), 0.5 * t])
        samples = _trace(rate, n=21)
        full = integrate_gyro(samples)
        head = integrate_gyro(samples[:11])
        tail = integrate_gyro(samples[10:])
        composed = quat_multiply(head.quats[-1], tail.quats[-1])
        assert quat_angle_between(full.quats[-1], composed) < 1e-9

    def test_relative_rotation_ignores_reference_choice(self):
        rate = lambda t: np.array([1.3 * math.sin(8 * t), -0.7, 2.0 * math.cos(5 * t)])
        traj = integrate_gyro(_trace(rate, n=11))
        shift = _axis_quat([1, -2, 0.5], 1.234)
        moved = OrientationTrajectory(
            times=traj.times,
            quats=np.stack([quat_multiply(q, shift) for q in traj.quats]),
        )
        for t1, t2 in [(3_000_000, 47_000_000), (0, 100_000_000), (61_500_000, 61_700_000)]:
            rel_a = traj.rotation_at(t2) @ traj.rotation_at(t1).T
            rel_b = moved.rotation_at(t2) @ moved.rotation_at(t1).T
            assert np.max(np.abs(rel_a - rel_b)) < 1e-9

    def test_first_knot_is_identity(self):
        traj = integrate_gyro(_trace(lambda t: np.array([1.0, 2.0, 3.0]), n=3))
        np.testing.assert_array_equal(traj.quats[0], [1.0, 0.0, 0.0, 0.0])

    def test_rejects_short_and_unsorted_input(self):
        with pytest.raises(ValueError):
            integrate_gyro([GyroSample(0, np.zeros(3))])
        bad = [GyroSample(0, np.zeros(3)), GyroSample(10, np.zeros(3)), GyroSample(10, np.zeros(3))]
        with pytest.raises(ValueError):
            integrate_gyro(bad)

    def test_rejects_non_finite_rates(self):
        with pytest.raises(ValueError):
            integrate_gyro(
                [GyroSample(0, np.zeros(3)), GyroSample(10, np.array([np.nan, 0, 0]))]
            )


class TestTrajectoryQueries:
    def test_knot_times_exact(self):
        traj = integrate_gyro(_trace(lambda t: np.array([0.0, 1.0, 0.0]), n=5))
        for i, t in enumerate(traj.times):
            np.testing.assert_array_equal(traj.orientation_at(int(t)), traj.quats[i])

    def test_out_of_span_raises(self):
        traj = integrate_gyro(_trace(lambda t: np.array([0.0, 1.0, 0.0]), n=5))
        with pytest.raises(ValueError):
            traj.orientation_at(traj.t_start - 1)
        with pytest.raises(ValueError):
            traj.orientation_at(traj.t_end + 1)

    def test_covers(self):
        traj = integrate_gyro(_trace(lambda t: np.zeros(3), n=5))
        assert traj.covers(traj.t_start, traj.t_end)
        assert traj.covers(1_000_000, 2_000_000)
        assert not traj.covers(-1, 5)
        assert not traj.covers(0, traj.t_end + 1)

    def test_rotation_angle_helper(self):
        assert quat_rotation_angle(_axis_quat([0, 1, 0], 0.8)) == pytest.approx(0.8, abs=1e-12)
        assert quat_rotation_angle(np.array([-1.0, 0.0, 0.0, 0.0])) == pytest.approx(0.0, abs=1e-12)


class TestTraceCsv:
    def test_round_trip_exact(self, tmp_path):
        gen = np.random.Generator(np.random.Philox(3))
        samples = [GyroSample(1000 + 7 * i, gen.normal(size=3)) for i in range(20)]
        path = tmp_path / "trace.csv"
        save_gyro_csv(path, samples)
        loaded = load_gyro_csv(path)
        assert [s.t_ns for s in loaded] == [s.t_ns for s in samples]
        for a, b in zip(loaded, samples):
            np.testing.assert_array_equal(a.omega, b.omega)

    def test_rejects_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,wx,wy,wz\n0,0,0,0\n")
        with pytest.raises(ValueError):
            load_gyro_csv(path)

    def test_rejects_unsorted_rows(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t_ns,wx,wy,wz\n10,0,0,0\n5,0,0,0\n")
        with pytest.raises(ValueError):
            load_gyro_csv(path)

    def test_rejects_wrong_field_count(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t_ns,wx,wy,wz\n0,0,0\n")
        with pytest.raises(ValueError):
            load_gyro_csv(path)
