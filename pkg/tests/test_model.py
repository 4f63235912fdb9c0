import math
from fractions import Fraction as Fr

import numpy as np
import pytest

from embedded_eigen.model import PotentialModel, beta0_cancellation, evaluate_potential, omega_residual
from embedded_eigen.integrator import integrate_prufer
from embedded_eigen.potential import (
    CosineTerm,
    PotentialSpec,
    classical_spec,
    omega_coefficient,
    plan_construction,
)


def off_constraint(beta0):
    spec = PotentialSpec(3, Fr(9, 20), (CosineTerm.make(1, 2), CosineTerm.make(1, 5)), Fr(9, 4),
                         beta0_mode=beta0)
    return spec, plan_construction(spec)


class TestEvaluation:
    def test_classical(self):
        m = PotentialModel.wigner_von_neumann()
        xs = np.linspace(1, 50, 97)
        assert np.allclose(m.values(xs), -8 * np.sin(2 * xs) / xs, rtol=0, atol=1e-13)

    def test_zero_below_x0(self):
        spec = classical_spec()
        assert evaluate_potential(spec, None, 0.5) == 0.0
        assert evaluate_potential(spec, None, 2.0) == pytest.approx(-4 * math.sin(4))

    def test_live_phase(self):
        spec = PotentialSpec(2, Fr(3, 4), (CosineTerm.make(4, 2, "dynamic"),), Fr(1))
        plan = plan_construction(spec)
        # c = -1: V(x; xi) = 4 x^-3/4 cos(2x - xi)
        assert evaluate_potential(spec, plan, 3.0, 0.7) == pytest.approx(
            4 * 3.0 ** -0.75 * math.cos(6.0 - 0.7))

    def test_max_frequency(self):
        m = PotentialModel.cosines([1, 1], [2, 5], 0.45)
        assert m.max_frequency(3.0) == 13.0


class TestBeta0:
    def test_empty_when_off(self):
        spec, plan = off_constraint("zero")
        assert PotentialModel.from_spec(spec, plan).beta0_at(10.0) == 0.0

    def test_leading_term(self):
        spec, plan = off_constraint("iterative")
        b = beta0_cancellation(spec, plan)
        om = float(omega_coefficient(spec))
        for x in (1e3, 1e5):
            assert b(x) == pytest.approx(3 * om * x ** -0.9, rel=0.02)

    def test_residual_decays_faster(self):
        spec, plan = off_constraint("iterative")
        r = omega_residual(spec, plan)
        xs = np.array([1e2, 1e4, 1e6])
        vals = np.abs([r(x) for x in xs])
        slope = np.polyfit(np.log(xs), np.log(vals), 1)[0]
        assert slope <= -3 * 0.45 + 1e-6

    def test_cancels_secular_drift(self):
        # averaged over initial phases the second-order drift is Omega * int x^-2 gamma
        X = 1e3
        drift = {}
        for mode in ("zero", "iterative"):
            spec, plan = off_constraint(mode)
            m = PotentialModel.from_spec(spec, plan)
            d = [integrate_prufer(m, 2.25, th, 0.0, np.array([1.0, X]), tol=1e-9).theta[-1] - th
                 for th in np.linspace(0, math.pi, 8, endpoint=False)]
            drift[mode] = float(np.mean(d))
        pred = float(omega_coefficient(spec)) * (X ** 0.1 - 1) / 0.1
        assert (drift["zero"] - drift["iterative"]) / pred == pytest.approx(1.0, abs=0.15)
