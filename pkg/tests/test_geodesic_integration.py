import math

import numpy as np
import pytest

from spinpair.geodesic import (
    GeodesicConstants,
    StepUnderflow,
    Trajectory,
    available_backends,
    classify_orbit,
    conserved_drift,
    constants_from_state,
    integrate,
    state_from_constants,
)
from spinpair.geodesic import _stepper_py

import sys

integrate_mod = sys.modules["spinpair.geodesic.integrate"]

FIGURE = GeodesicConstants(P=5.0, X=1.2, A=4.0, W=1.0)
CIRCULAR = GeodesicConstants(P=0.8, X=1.2, A=4.0, W=1.0)

BACKENDS = available_backends()


def infalling_figure_state():
    return state_from_constants(FIGURE, 1.0, math.pi / 2, sign_ur=-1, sign_utheta=1)


@pytest.fixture(scope="module")
def unbound_traj():
    return integrate(infalling_figure_state(), 40.0)


class TestUnboundRun:
    @pytest.fixture
    def traj(self, unbound_traj):
        return unbound_traj

    def test_completes(self, traj):
        assert traj.status == "done"
        assert traj.s[-1] == pytest.approx(40.0)

    def test_minimum_radius_matches_turning_root(self, traj):
        oc = classify_orbit(FIGURE)
        assert traj.min_r == pytest.approx(oc.r_min, abs=1e-9)
        assert traj.min_r == pytest.approx(0.161298, abs=1e-6)

    def test_exactly_one_radial_turning(self, traj):
        events = traj.events_of("radial-turning")
        assert len(events) == 1
        assert events[0].direction == "outward"

    def test_minimum_sine_matches_tilt(self, traj):
        assert traj.min_sin_theta == pytest.approx(0.6, abs=1e-6)

    def test_latitude_confinement(self, traj):
        assert np.sin(traj.states[:, 2]).min() >= 0.6 - 1e-9

    def test_drift_within_request(self, traj):
        assert max(conserved_drift(traj).values()) <= 1e-8

    def test_energy_identity_along_samples(self, traj):
        from spinpair.geodesic import energy_residual

        worst = max(
            energy_residual(traj.state_at(i)) for i in range(0, traj.n_samples, 7)
        )
        assert worst <= 1e-10


class TestBoundRun:
    def test_turnings_alternate_and_confine(self):
        constants = GeodesicConstants(P=0.9, X=1.2, A=4.0, W=1.0)
        oc = classify_orbit(constants)
        state0 = state_from_constants(constants, 2.0, math.pi / 2, -1, 1)
        traj = integrate(state0, 200.0)
        events = traj.events_of("radial-turning")
        assert len(events) >= 4
        dirs = [e.direction for e in events]
        assert all(a != b for a, b in zip(dirs, dirs[1:]))
        eps = 1e-6 * oc.r_min
        assert traj.states[:, 1].min() >= oc.r_min - eps
        assert traj.states[:, 1].max() <= oc.r_max + eps


class TestCircularRun:
    def test_radius_constant(self):
        state0 = state_from_constants(CIRCULAR, 8.0 / 3.0, math.pi / 2)
        traj = integrate(state0, 700.0)
        assert np.abs(traj.states[:, 1] - 8.0 / 3.0).max() <= 1e-6
        # covers at least 20 azimuthal revolutions
        assert traj.states[-1, 3] >= 20 * 2 * math.pi

    def test_equator_crossings_match_analytic_phase(self):
        # cos(theta) = -0.8 sin(omega s) with omega = sqrt(A)/r^2, so
        # crossings sit at s = k pi / omega
        state0 = state_from_constants(CIRCULAR, 8.0 / 3.0, math.pi / 2)
        traj = integrate(state0, 100.0)
        omega = 2.0 / (8.0 / 3.0) ** 2
        got = [e.s for e in traj.events_of("equator")]
        expected = [k * math.pi / omega for k in range(1, len(got) + 1)]
        assert got == pytest.approx(expected, abs=1e-6)


class TestToleranceBehavior:
    def test_drift_decreases_with_tolerance(self):
        drifts = []
        for rel in (1e-6, 1e-8, 1e-10):
            traj = integrate(infalling_figure_state(), 10.0, rel_tol=rel,
                             abs_tol=rel * 0.01)
            drifts.append(max(conserved_drift(traj).values()))
        assert drifts[0] > drifts[1] > drifts[2]

    def test_tolerance_domain(self):
        with pytest.raises(ValueError):
            integrate(infalling_figure_state(), 1.0, rel_tol=1e-2)
        with pytest.raises(ValueError):
            integrate(infalling_figure_state(), 1.0, abs_tol=1e-13)

    def test_span_positive(self):
        with pytest.raises(ValueError):
            integrate(infalling_figure_state(), -1.0)


class TestGuards:
    def test_polar_orbit_trips_latitude_guard(self):
        # X = 0 puts no floor under sin(theta); the orbit runs at a pole
        constants = GeodesicConstants(P=5.0, X=0.0, A=4.0, W=1.0)
        state0 = state_from_constants(constants, 1.0, math.pi / 2, -1, 1)
        traj = integrate(state0, 5.0)
        assert traj.status == "guard"
        assert math.sin(traj.states[-1, 2]) < 1e-6

    def test_underflow_reported_by_stepper(self):
        # with the latitude guard disabled the stepper grinds to a halt
        # against the coordinate singularity and reports underflow
        constants = GeodesicConstants(P=5.0, X=0.0, A=4.0, W=1.0)
        state0 = state_from_constants(constants, 1.0, math.pi / 2, -1, 1)
        y0 = np.array(state0.as_tuple())
        status, s, y, k = _stepper_py.integrate_raw(
            y0, 0.0, 5.0, 1e-12, 1e-14, 0.0, 0.0, 10**6
        )
        assert status == _stepper_py.STATUS_UNDERFLOW
        assert len(s) == len(y) == len(k) + 1

    def test_underflow_raises_with_partial(self, monkeypatch):
        def fake_raw(y0, s0, s_end, rtol, atol, r_floor, sin_floor, max_steps):
            y = np.array([list(y0), list(y0)])
            return 2, np.array([s0, s0 + 0.1]), y, np.zeros((1, 7, 8))

        monkeypatch.setattr(integrate_mod._py_backend, "integrate_raw", fake_raw)
        with pytest.raises(StepUnderflow) as info:
            integrate(infalling_figure_state(), 1.0, backend="python")
        assert isinstance(info.value.partial, Trajectory)
        assert info.value.partial.n_samples == 2


class TestSingleSample:
    def test_drift_zero(self):
        state0 = infalling_figure_state()
        y = np.array([state0.as_tuple()])
        traj = Trajectory(
            s=np.array([0.0]),
            states=y,
            events=[],
            status="done",
            constants0=constants_from_state(state0),
            rel_tol=1e-10,
            abs_tol=1e-12,
            backend="python",
            min_r=state0.r,
            min_sin_theta=math.sin(state0.theta),
            stage_k=np.zeros((0, 7, 8)),
        )
        assert max(conserved_drift(traj).values()) == 0.0


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled stepper not available")
class TestBackendParity:
    def test_unbound_bitwise_identical(self):
        tp = integrate(infalling_figure_state(), 40.0, backend="python")
        tc = integrate(infalling_figure_state(), 40.0, backend="compiled")
        assert np.array_equal(tp.s, tc.s)
        assert np.array_equal(tp.states, tc.states)
        assert np.array_equal(tp.stage_k, tc.stage_k)

    def test_circular_bitwise_identical(self):
        state0 = state_from_constants(CIRCULAR, 8.0 / 3.0, math.pi / 2)
        tp = integrate(state0, 150.0, backend="python")
        tc = integrate(state0, 150.0, backend="compiled")
        assert np.array_equal(tp.states, tc.states)

    def test_rhs_probe_matches_python(self):
        from spinpair.geodesic import _stepper_c

        rng = np.random.default_rng(1)
        for _ in range(5000):
            y = [float(v) for v in rng.uniform(-3, 3, 8)]
            y[1] = abs(y[1]) + 0.05
            y[2] = float(rng.uniform(0.05, math.pi - 0.05))
            f = [0.0] * 8
            _stepper_py._rhs(y, f)
            assert f == _stepper_c.rhs_probe(y)

    def test_env_var_selects_python(self, monkeypatch):
        from spinpair.geodesic.integrate import default_backend

        monkeypatch.setenv("SPINPAIR_PURE_PYTHON", "1")
        assert default_backend() == "python"
