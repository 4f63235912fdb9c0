import math
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction as Fr

import numpy as np
import pytest

from embedded_eigen import integrator as integ
from embedded_eigen.errors import BracketFailure, NonConvergence, StepFailure
from embedded_eigen.integrator import (
    integrate_callable,
    integrate_coupled_construction,
    integrate_direct,
    integrate_prufer,
    prufer_from_solution,
    psi_limit_check,
    shoot_psi_initial,
)
from embedded_eigen.model import PotentialModel
from embedded_eigen.potential import CosineTerm, PotentialSpec, plan_construction

WVN = PotentialModel.wigner_von_neumann()


@pytest.fixture(scope="module")
def p2_model():
    spec = PotentialSpec(2, Fr(3, 4), (CosineTerm.make(4, 2, "dynamic"),), Fr(1))
    plan = plan_construction(spec)
    return PotentialModel.from_spec(spec, plan), plan


class TestFreeEquation:
    @pytest.mark.parametrize("E,theta0", [(0.3, 0.0), (1.0, 1.2), (7.0, -4.0)])
    def test_prufer_constant(self, E, theta0):
        tr = integrate_prufer(PotentialModel.zero(), E, theta0, 0.25, np.linspace(0, 200, 11))
        assert np.all(tr.theta == theta0)
        assert np.all(tr.logR == 0.25)
        assert tr.sup_logR == 0.25

    def test_sine(self):
        xs = np.linspace(0, 30, 61)
        arr = integrate_direct(PotentialModel.zero(), 1.0, 0.0, 1.0, xs, tol=1e-12)
        assert np.max(np.abs(arr[:, 1] - np.sin(xs))) < 1e-9

    def test_cosine(self):
        xs = np.linspace(0, 30, 61)
        arr = integrate_direct(PotentialModel.zero(), 4.0, 1.0, 0.0, xs, tol=1e-12)
        assert np.max(np.abs(arr[:, 1] - np.cos(2 * xs))) < 1e-9

    def test_trivial_data_rejected(self):
        with pytest.raises(ValueError):
            integrate_direct(PotentialModel.zero(), 1.0, 0.0, 0.0, [0.0, 1.0])


class TestClassicalPotential:
    def test_wronskian_bounded_solutions(self):
        xs = np.linspace(1, 1000, 200)
        a = integrate_direct(WVN, 2.0, 1.0, 0.0, xs, tol=1e-12)
        b = integrate_direct(WVN, 2.0, 0.0, 1.0, xs, tol=1e-12)
        w = a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1]
        assert np.max(np.abs(w - 1.0)) < 1e-8

    def test_wronskian_at_resonance(self):
        # both solutions grow like x^2 here; measure W against its terms
        xs = np.linspace(1, 1000, 200)
        a = integrate_direct(WVN, 1.0, 1.0, 0.0, xs, tol=1e-12)
        b = integrate_direct(WVN, 1.0, 0.0, 1.0, xs, tol=1e-12)
        t1, t2 = a[:, 1] * b[:, 2], a[:, 2] * b[:, 1]
        assert np.max(np.abs(t1 - t2 - 1.0) / (np.abs(t1) + np.abs(t2))) < 1e-8

    def test_prufer_matches_direct(self):
        xs = np.linspace(1, 1000, 100)
        th0 = 0.4
        tr = integrate_prufer(WVN, 1.0, th0, 0.0, xs, tol=1e-11)
        arr = integrate_direct(WVN, 1.0, math.sin(1 + th0), math.cos(1 + th0), xs, tol=1e-11)
        amp_direct = np.hypot(arr[:, 1], arr[:, 2])
        assert np.max(np.abs(amp_direct / np.exp(tr.logR) - 1)) < 1e-6
        u, du = tr.to_solution()
        assert np.max(np.abs(u - arr[:, 1]) / amp_direct) < 1e-6

    def test_reconstruction_round_trip(self):
        xs = np.linspace(1, 50, 20)
        tr = integrate_prufer(WVN, 2.0, 0.3, 0.1, xs)
        u, du = tr.to_solution()
        theta, logR = prufer_from_solution(xs, u, du, tr.eta)
        assert np.allclose(logR, tr.logR, atol=1e-12)
        assert np.allclose(np.angle(np.exp(1j * (theta - tr.theta))), 0, atol=1e-9)

    def test_bounded_off_resonance(self):
        # E = 4 is not a first-order resonance of the +-2 phase set
        a = integrate_prufer(WVN, 4.0, 0.0, 0.0, np.array([1.0, 5e3]), tol=1e-9).sup_logR
        b = integrate_prufer(WVN, 4.0, 0.0, 0.0, np.array([1.0, 1e4]), tol=1e-9).sup_logR
        assert abs(b - a) < 0.05

    def test_backward_direction(self):
        xs = np.geomspace(1e3, 1, 50)
        tr = integrate_prufer(WVN, 1.0, 0.0, 0.0, xs)
        assert tr.x[0] == 1e3 and tr.x[-1] == 1.0
        assert tr.logR[-1] > 10  # decaying branch grows backward


class TestControls:
    def test_step_cap(self):
        tr = integrate_prufer(WVN, 1.0, 0.0, 0.0, np.array([1.0, 10.0]))
        assert tr.diagnostics["step_cap"] == pytest.approx(2 * math.pi / 6 / 20)

    def test_step_budget(self):
        with pytest.raises(StepFailure):
            integrate_prufer(WVN, 1.0, 0.0, 0.0, np.array([1.0, 100.0]), max_steps=10)

    def test_mesh_must_be_monotone(self):
        with pytest.raises(ValueError):
            integrate_prufer(WVN, 1.0, 0.0, 0.0, [1.0, 3.0, 2.0])

    def test_energy_positive(self):
        with pytest.raises(ValueError):
            integrate_prufer(WVN, 0.0, 0.0, 0.0, [1.0, 2.0])

    def test_segment_sup(self):
        mesh = np.array([1.0, 10.0, 100.0])
        tr = integrate_prufer(WVN, 1.0, 0.0, 0.0, mesh)
        assert tr.sup_between(1.0, 10.0) >= tr.logR[1]
        assert tr.sup_logR == pytest.approx(max(tr.seg_max.max(), 0.0))

    def test_fixed_step_order(self):
        # with a loose tolerance the frequency cap fixes the step: 5th order
        xs = np.array([1.0, 200.0])
        ref = integrate_prufer(WVN, 1.0, 0.2, 0.0, xs, tol=1e-13, cap_fraction=1 / 200).logR[-1]
        e1 = abs(integrate_prufer(WVN, 1.0, 0.2, 0.0, xs, tol=1.0, cap_fraction=1 / 10).logR[-1] - ref)
        e2 = abs(integrate_prufer(WVN, 1.0, 0.2, 0.0, xs, tol=1.0, cap_fraction=1 / 20).logR[-1] - ref)
        assert e1 / e2 > 16

    def test_callable_fallback(self):
        xs = np.linspace(1, 60, 12)
        a = integrate_prufer(WVN, 1.5, 0.1, 0.0, xs, tol=1e-11)
        b = integrate_callable(lambda x: -8 * math.sin(2 * x) / x, 1.5, 0.1, 0.0, xs, tol=1e-11)
        assert np.allclose(a.logR, b.logR, atol=1e-7)
        assert np.allclose(a.theta, b.theta, atol=1e-7)

    def test_thread_safety(self):
        xs = np.linspace(1, 300, 5)
        energies = [0.5, 1.0, 2.0, 3.0]
        serial = [integrate_prufer(WVN, E, 0.0, 0.0, xs).logR for E in energies]
        with ThreadPoolExecutor(max_workers=4) as pool:
            parallel = list(pool.map(lambda E: integrate_prufer(WVN, E, 0.0, 0.0, xs).logR,
                                     energies))
        for a, b in zip(serial, parallel):
            assert np.array_equal(a, b)


class TestCoupled:
    def test_zero_coupling_reduces(self):
        m = PotentialModel.cosines([3.0], [2.0], 0.75)
        xs = np.geomspace(1, 100, 20)
        a = integrate_coupled_construction(m, 1.0, 0.2, 0.5, xs)
        b = integrate_prufer(m, 1.0, 0.2, 0.0, xs)
        assert np.all(a.xi == 0.5)
        assert np.array_equal(a.logR, b.logR)

    def test_direct_coupled_agrees(self, p2_model):
        m, _ = p2_model
        xs = np.geomspace(1, 300, 30)
        tr = integrate_coupled_construction(m, 1.0, 0.3, 1.0, xs, tol=1e-11)
        arr = integ.integrate_direct_coupled(m, 1.0, math.sin(1.3), math.cos(1.3), 1.0, xs,
                                             tol=1e-11)
        assert np.allclose(arr[:, 3], tr.xi, atol=1e-6)

    def test_psi_settles(self, p2_model):
        m, _ = p2_model
        xs = np.geomspace(1, 1e4, 200)
        tr = integrate_coupled_construction(m, 1.0, 0.0, 1.0, xs)
        assert psi_limit_check(tr, 0.1) < 0.1
        with pytest.raises(NonConvergence):
            psi_limit_check(tr, 1e-6)


class TestShooting:
    def test_fixed_point(self, p2_model):
        m, _ = p2_model
        xs = np.geomspace(1, 1e3, 100)
        target = integrate_coupled_construction(m, 1.0, 0.0, 0.0, xs).psi[-1]
        res = shoot_psi_initial(m, 1.0, xs, target, tol=1e-8)
        assert abs(math.remainder(res.xi0, 2 * math.pi)) < 1e-6

    def test_hits_target_and_covers_circle(self, p2_model):
        m, plan = p2_model
        xs = np.geomspace(1, 1e3, 100)
        res = shoot_psi_initial(m, 1.0, xs, plan.target_psi)
        assert abs(res.residual) < 1e-4
        assert res.max_gap < math.pi
        assert res.trajectory.logR[-1] < 0

    def test_bracket_failure(self, p2_model, monkeypatch):
        m, plan = p2_model

        class Flat:
            psi = np.array([0.3])

        monkeypatch.setattr(integ, "integrate_coupled_construction", lambda *a, **k: Flat())
        with pytest.raises(BracketFailure):
            shoot_psi_initial(m, 1.0, [1.0, 10.0], plan.target_psi)
