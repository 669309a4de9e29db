import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gfc import (
    GeneralHamiltonian,
    RelaxationHamiltonian,
    StateField,
    ThermoPoint,
    TiltedHamiltonian,
    alt_z_flows,
    equivalence_check,
    flow_closed_form,
    flow_rk4,
    legendrian,
    tilted_contact_field,
    vector_field,
)
from gfc.contact import closed_form_trajectory, paired_differences, psi_field


def _const_psi(value, grad):
    return lambda q: (value, np.atleast_1d(grad))


class TestVectorField:
    def test_relaxation_has_no_q_motion(self):
        H = RelaxationHamiltonian(1.3, _const_psi(2.0, [0.5]))
        f = vector_field(H, ThermoPoint(p=[0.1], q=[0.4], z=3.0))
        assert f.qdot[0] == 0.0
        assert f.pdot[0] == pytest.approx(1.3 * (0.5 - 0.1))
        assert f.zdot == pytest.approx(1.3 * (2.0 - 3.0))

    def test_legendrian_is_fixed_point(self, gaussian):
        psi = psi_field(gaussian.B, gaussian.gibbs)
        leg = legendrian([0.7], gaussian.B, gaussian.gibbs)
        assert vector_field(RelaxationHamiltonian(1.0, psi), leg).norm() <= 1e-12
        tilted = TiltedHamiltonian(1.0, lambda q: (1.0, np.array([0.3])), psi)
        assert vector_field(tilted, leg).norm() <= 1e-12

    def test_general_momentum_hamiltonian(self):
        H = GeneralHamiltonian(lambda p, q, z: p[0])
        f = vector_field(H, ThermoPoint(p=[2.0], q=[1.0], z=0.5))
        assert f.qdot[0] == pytest.approx(-1.0, abs=1e-9)
        assert f.pdot[0] == pytest.approx(0.0, abs=1e-9)
        assert f.zdot == pytest.approx(0.0, abs=1e-9)

    def test_general_matches_relaxation(self):
        psi = lambda q: (math.exp(q[0] ** 2 / 2), np.array([q[0] * math.exp(q[0] ** 2 / 2)]))  # noqa: E731
        gen = GeneralHamiltonian(lambda p, q, z: 0.8 * (psi(q)[0] - z))
        rel = RelaxationHamiltonian(0.8, psi)
        pt = ThermoPoint(p=[0.3], q=[0.6], z=1.7)
        np.testing.assert_allclose(vector_field(gen, pt).to_vector(), vector_field(rel, pt).to_vector(), atol=1e-8)

    def test_nonfinite_partials(self):
        H = GeneralHamiltonian(lambda p, q, z: float("nan"))
        with pytest.raises(ArithmeticError):
            vector_field(H, ThermoPoint(p=[0.0], q=[0.0], z=0.0))

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            RelaxationHamiltonian(0.0, _const_psi(1.0, [0.0]))


class TestTiltedField:
    def test_flat_rate_reduces_to_relaxation(self):
        pt = ThermoPoint(p=[0.2], q=[0.5], z=1.4)
        tf = tilted_contact_field(2.0, 3.0, [0.0], 1.1, [0.6], pt)
        rf = vector_field(RelaxationHamiltonian(1.5, _const_psi(1.1, [0.6])), pt)
        np.testing.assert_allclose(tf.to_vector(), rf.to_vector(), rtol=1e-14)

    def test_matches_hamiltonian_form(self):
        pt = ThermoPoint(p=[0.2], q=[0.5], z=1.4)
        tf = tilted_contact_field(2.0, 3.0, [0.4], 1.1, [0.6], pt)
        H = TiltedHamiltonian(2.0, lambda q: (3.0, np.array([0.4])), _const_psi(1.1, [0.6]))
        np.testing.assert_allclose(tf.to_vector(), vector_field(H, pt).to_vector(), rtol=1e-14)

    def test_zero_on_legendrian(self):
        pt = ThermoPoint(p=[0.6], q=[0.5], z=1.1)
        assert tilted_contact_field(1.0, 2.0, [5.0], 1.1, [0.6], pt).norm() == 0.0

    def test_rejects_nonpositive_rate(self):
        with pytest.raises(ValueError):
            tilted_contact_field(1.0, 0.0, [0.0], 1.0, [0.0], ThermoPoint(p=[0.0], q=[0.0], z=0.0))


class TestClosedForm:
    def test_half_life(self):
        pt = flow_closed_form(ThermoPoint(p=[0.0], q=[0.0], z=2.0), 1.0, 1.0, [0.0], math.log(2))
        assert pt.z == pytest.approx(1.5, rel=1e-15)

    def test_identity_at_zero(self):
        pt0 = ThermoPoint(p=[0.3, -0.1], q=[1.0, 2.0], z=4.0)
        pt = flow_closed_form(pt0, 2.0, 1.0, [0.0, 0.5], 0.0)
        np.testing.assert_array_equal(pt.to_vector(), pt0.to_vector())

    def test_negative_time(self):
        with pytest.raises(ValueError):
            flow_closed_form(ThermoPoint(p=[0.0], q=[0.0], z=0.0), 1.0, 1.0, [0.0], -1.0)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.1, 5), st.floats(0, 3), st.floats(0, 3), st.floats(-2, 2), st.floats(-2, 2))
    def test_semigroup(self, gamma, s, t, z0, p0):
        pt0 = ThermoPoint(p=[p0], q=[0.2], z=z0)
        a = flow_closed_form(flow_closed_form(pt0, gamma, 1.3, [0.4], s), gamma, 1.3, [0.4], t)
        b = flow_closed_form(pt0, gamma, 1.3, [0.4], s + t)
        np.testing.assert_allclose(a.to_vector(), b.to_vector(), rtol=1e-12, atol=1e-14)

    def test_time_rescaling(self):
        gamma = 2.5
        pt0 = ThermoPoint(p=[0.9], q=[0.1], z=0.2)
        ts = np.linspace(0, 4, 9)
        fast = closed_form_trajectory(pt0, gamma, 1.2, [0.3], ts / gamma)
        unit = closed_form_trajectory(pt0, 1.0, 1.2, [0.3], ts)
        np.testing.assert_allclose(fast.z, unit.z, atol=1e-12)
        np.testing.assert_allclose(fast.p, unit.p, atol=1e-12)


class TestRK4:
    def test_matches_closed_form(self):
        pt0 = ThermoPoint(p=[0.0], q=[0.5], z=2.0)
        H = RelaxationHamiltonian(1.0, _const_psi(1.0, [0.3]))
        traj = flow_rk4(H, pt0, 1e-3, 1000)
        exact = flow_closed_form(pt0, 1.0, 1.0, [0.3], 1.0)
        assert abs(traj.z[-1] - exact.z) <= 1e-10
        assert abs(traj.p[-1, 0] - exact.p[0]) <= 1e-10

    def test_fourth_order(self):
        pt0 = ThermoPoint(p=[0.0], q=[0.5], z=2.0)
        H = RelaxationHamiltonian(3.0, _const_psi(1.0, [0.3]))
        exact = flow_closed_form(pt0, 3.0, 1.0, [0.3], 1.0).z
        errs = [abs(flow_rk4(H, pt0, 1.0 / n, n).z[-1] - exact) for n in (10, 20, 40)]
        assert math.log2(errs[0] / errs[1]) == pytest.approx(4.0, abs=0.2)
        assert math.log2(errs[1] / errs[2]) == pytest.approx(4.0, abs=0.2)

    def test_stays_on_legendrian(self, gaussian):
        psi = psi_field(gaussian.B, gaussian.gibbs)
        leg = legendrian([0.5], gaussian.B, gaussian.gibbs)
        traj = flow_rk4(RelaxationHamiltonian(1.0, psi), leg, 0.01, 1000)
        assert np.max(np.abs(traj.z - leg.z)) <= 1e-9
        assert np.max(np.abs(traj.p[:, 0] - leg.p[0])) <= 1e-9

    def test_contact_form_contract(self):
        H = RelaxationHamiltonian(1.0, _const_psi(1.0, [0.3]))
        traj = flow_rk4(H, ThermoPoint(p=[0.0], q=[0.5], z=2.0), 0.01, 200)
        for i in range(traj.t.size):
            f = vector_field(H, traj.point(i))
            assert abs(f.zdot - float(traj.p[i] @ f.qdot) - traj.H[i]) <= 1e-9

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_blow_up_reported(self):
        H = GeneralHamiltonian(lambda p, q, z: -z * z)
        with pytest.raises(ArithmeticError):
            flow_rk4(H, ThermoPoint(p=[0.0], q=[0.0], z=10.0), 0.5, 2000)

    def test_csv(self):
        H = RelaxationHamiltonian(1.0, _const_psi(1.0, [0.3]))
        text = flow_rk4(H, ThermoPoint(p=[0.0], q=[0.5], z=2.0), 0.5, 2).to_csv()
        lines = text.splitlines()
        assert lines[0] == "t,q_1,p_1,z,H"
        assert len(lines) == 4 and lines[1].startswith("0,0.5,0,2,")


class TestEquivalence:
    @pytest.mark.parametrize("q", [0.0, 0.5, 1.0])
    def test_slowest_mode_matches_contact_flow(self, gaussian, q):
        phi0 = StateField(1.0 + 0.2 * gaussian.spec.modes[1], gaussian.gibbs)
        rep = equivalence_check(gaussian.spec, gaussian.B, [q], phi0, np.linspace(0, 10, 101))
        assert rep.max_z_discrepancy <= 1e-10
        assert rep.max_p_discrepancy <= 1e-10
        assert rep.passed
        assert rep.gamma == pytest.approx(1.0, abs=1e-6)

    def test_equilibrium_start_is_constant(self, gaussian):
        phi0 = StateField(np.ones(gaussian.grid.n), gaussian.gibbs)
        rep = equivalence_check(gaussian.spec, gaussian.B, [0.5], phi0, np.linspace(0, 5, 11))
        leg = rep.legendrian_point
        np.testing.assert_allclose(rep.z_fp, leg.z, rtol=1e-12)
        np.testing.assert_allclose(rep.z_contact, leg.z, rtol=1e-12)

    def test_late_time_reaches_legendrian(self, gaussian):
        phi0 = StateField(1.0 + 0.2 * gaussian.spec.modes[1], gaussian.gibbs)
        rep = equivalence_check(gaussian.spec, gaussian.B, [0.5], phi0, [0.0, 25.0])
        assert abs(rep.z_fp[-1] - rep.legendrian_point.z) <= 1e-8
        assert rep.final_distance <= rep.legendrian_bound

    def test_report_json_ready(self, gaussian):
        import json

        phi0 = StateField(1.0 + 0.2 * gaussian.spec.modes[1], gaussian.gibbs)
        rep = equivalence_check(gaussian.spec, gaussian.B, [0.5], phi0, np.linspace(0, 1, 3))
        doc = json.loads(json.dumps(rep.to_dict()))
        assert doc["pass"] is True and doc["slow_group"] == [1]

    def test_mean_position_decay(self, gaussian):
        # at q = 0 the momentum readout is the mean position, decaying at rate lambda_1 / beta
        a = 0.2
        phi0 = StateField(1.0 + a * gaussian.spec.modes[1], gaussian.gibbs)
        ts = np.linspace(0, 5, 6)
        rep = equivalence_check(gaussian.spec, gaussian.B, [0.0], phi0, ts)
        lam1 = gaussian.spec.eigenvalues[1]
        np.testing.assert_allclose(rep.p_fp[:, 0], rep.p_fp[0, 0] * np.exp(-lam1 * ts), rtol=1e-12)
        assert rep.p_fp[0, 0] == pytest.approx(a, rel=1e-4)


class TestAlternativeZ:
    def test_energy_closure(self, gaussian):
        phi0 = StateField(1.0 + 0.3 * gaussian.spec.modes[1] / np.abs(gaussian.spec.modes[1]).max(), gaussian.gibbs)
        times = np.linspace(0, 5, 11)
        rep = alt_z_flows(gaussian.spec, phi0, times)
        assert rep.energy_discrepancy <= 1e-10
        assert rep.energy_equilibrium == pytest.approx(0.5, abs=1e-9)

    def test_equilibrium_energy_constant(self, gaussian):
        rep = alt_z_flows(gaussian.spec, StateField(np.ones(gaussian.grid.n), gaussian.gibbs), [0.0, 1.0, 2.0])
        np.testing.assert_allclose(rep.energy_ode, rep.energy_equilibrium, rtol=1e-12)

    def test_odd_mode_carries_no_energy(self, gaussian):
        # phi_1 is odd and h is even, so the energy readout sits at its equilibrium value
        eps = 0.3 / np.abs(gaussian.spec.modes[1]).max()
        phi0 = StateField(1.0 + eps * gaussian.spec.modes[1], gaussian.gibbs)
        rep = alt_z_flows(gaussian.spec, phi0, [0.0, 1.0, 2.0])
        np.testing.assert_allclose(rep.energy_quadrature, rep.energy_equilibrium, atol=1e-10)

    def test_free_energy_residual_shrinks(self, gaussian):
        phi0 = StateField(1.0 + 0.5 * gaussian.spec.modes[1] / np.abs(gaussian.spec.modes[1]).max(), gaussian.gibbs)
        rep = alt_z_flows(gaussian.spec, phi0, [1.0, 2.0, 4.0, 8.0])
        r = np.abs(rep.free_energy_residual)
        assert np.all(np.diff(r) < 0)

    def test_nonpositive_state_reported(self, gaussian):
        phi0 = StateField(1.0 + 2.0 * gaussian.spec.modes[1], gaussian.gibbs)
        with pytest.raises(ValueError, match="not positive at x ="):
            alt_z_flows(gaussian.spec, phi0, [0.0])

    def test_bad_times(self, gaussian):
        with pytest.raises(ValueError):
            alt_z_flows(gaussian.spec, StateField(np.ones(gaussian.grid.n), gaussian.gibbs), [1.0, 0.5])


class TestPairedDifferences:
    def test_vanish_with_time(self, gaussian):
        psi = psi_field(gaussian.B, gaussian.gibbs)
        tilted = TiltedHamiltonian(1.0, lambda q: (1.2, np.array([0.4])), psi)
        relaxed = RelaxationHamiltonian(1.0, psi)
        leg = legendrian([0.5], gaussian.B, gaussian.gibbs)
        pt0 = ThermoPoint(p=leg.p + 0.3, q=[0.5], z=leg.z + 0.5)
        t, dz, dp = paired_differences(tilted, relaxed, pt0, 0.05, 200)
        assert dz[-1] < 1e-3 * dz[1] and dp[-1] < 1e-3 * dp[1]
        # dp changes sign once early on; past that transient both decay monotonically
        late = t >= 2.5
        assert np.all(np.diff(dz[late]) <= 0) and np.all(np.diff(dp[late]) <= 0)
