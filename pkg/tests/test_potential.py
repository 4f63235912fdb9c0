import cmath
import math
from fractions import Fraction as Fr

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from embedded_eigen.errors import Infeasible, NonGeneric, NotInSpSetminus
from embedded_eigen.potential import (
    ConstructionPlan,
    CosineTerm,
    PotentialSpec,
    classical_spec,
    lambda_constraint_residual,
    omega_coefficient,
    parse_lambda,
    plan_construction,
    solve_lambda_constraint,
    solve_lambda_squares,
    with_lambda_squares,
)


def p3_spec(l1_sq=Fr(9), mode="dynamic", beta0="zero"):
    return PotentialSpec(
        3, Fr(9, 20),
        (CosineTerm.make(f"sqrt({l1_sq})", 2, mode),
         CosineTerm.make(f"sqrt({l1_sq * Fr(16, 5)})", 5, mode)),
        Fr(9, 4), beta0_mode=beta0)


class TestLambdaParsing:
    def test_forms(self):
        assert parse_lambda(4) == (4.0, Fr(16))
        assert parse_lambda("sqrt(16/5)")[1] == Fr(16, 5)
        v, sq = parse_lambda("3/2")
        assert v == 1.5 and sq == Fr(9, 4)

    def test_float_has_no_exact_square(self):
        assert parse_lambda(0.3)[1] is None


class TestSpec:
    def test_json_round_trip(self):
        spec = p3_spec()
        assert PotentialSpec.from_json(spec.to_json()) == spec

    def test_gamma_range(self):
        with pytest.raises(ValueError):
            PotentialSpec(2, Fr(1, 2), (CosineTerm.make(1, 2),), Fr(1)).validate()
        with pytest.raises(ValueError):
            PotentialSpec(3, Fr(3, 5), (CosineTerm.make(1, 2),), Fr(1)).validate()

    def test_duplicate_frequency(self):
        with pytest.raises(ValueError):
            PotentialSpec(2, Fr(1), (CosineTerm.make(1, 2), CosineTerm.make(2, 2)), Fr(1)).validate()


class TestPlan:
    def test_p2(self):
        spec = PotentialSpec(2, Fr(3, 4), (CosineTerm.make(4, 2, "dynamic"),), Fr(1))
        plan = plan_construction(spec)
        assert plan.Lambda == 1
        assert plan.target_psi == pytest.approx(-math.pi / 2)
        assert plan.c == (-1.0,)
        assert plan.gamma_power == 0.75

    def test_p3(self):
        plan = plan_construction(p3_spec(Fr(1)))
        assert plan.representation == (Fr(-2), Fr(5))
        assert plan.C1 == 2 and plan.f_value == Fr(-1, 30)
        assert plan.amplitude_convention == Fr(1, 4)
        assert plan.Lambda.real == pytest.approx(-2 / 30 * 4 / math.sqrt(5) / 4)
        assert plan.target_psi == pytest.approx(-math.pi / 2 - cmath.phase(plan.Lambda))
        assert plan.c == (0.5, -0.5)

    def test_plan_json_round_trip(self):
        plan = plan_construction(p3_spec())
        assert ConstructionPlan.from_json(plan.to_json()) == plan

    def test_classical_amplitude(self):
        plan = plan_construction(classical_spec())
        assert plan.Lambda == 2

    def test_not_a_new_resonance(self):
        spec = PotentialSpec(3, Fr(9, 20), (CosineTerm.make(1, 2), CosineTerm.make(1, 5)), Fr(1))
        with pytest.raises(NotInSpSetminus):
            plan_construction(spec)

    def test_non_generic(self):
        # eta = 4 = 2 + 2 = -2 + 6: two representations
        spec = PotentialSpec(3, Fr(9, 20), (CosineTerm.make(1, 2), CosineTerm.make(1, 6)), Fr(4))
        with pytest.raises(NonGeneric):
            plan_construction(spec)

    def test_weights_must_sum(self):
        spec = PotentialSpec(2, Fr(3, 4), (CosineTerm.make(4, 2, "dynamic", c=0.5),), Fr(1))
        with pytest.raises(ValueError):
            plan_construction(spec)


class TestLambdaConstraint:
    def test_two_frequency_setup(self):
        assert solve_lambda_squares([2, 5], Fr(9, 4)) == [Fr(1), Fr(16, 5)]

    def test_omega_vanishes_exactly(self):
        assert omega_coefficient(p3_spec()) == 0

    def test_omega_nonzero_off_constraint(self):
        spec = PotentialSpec(3, Fr(9, 20), (CosineTerm.make(1, 2), CosineTerm.make(1, 5)), Fr(9, 4))
        assert omega_coefficient(spec) == Fr(-11, 480)

    def test_three_frequencies(self):
        sq = solve_lambda_squares([2, 4, 5], Fr(9, 4))
        assert sum(s / (Fr(9) - a * a) for s, a in zip(sq, [2, 4, 5])) == 0

    @pytest.mark.parametrize("E", [Fr(1), Fr(25, 4), Fr(8)])
    def test_infeasible(self, E):
        with pytest.raises(Infeasible):
            solve_lambda_squares([2, 5], E)

    @settings(max_examples=30, deadline=None)
    @given(st.fractions(min_value=Fr(51, 50), max_value=Fr(311, 50), max_denominator=50))
    def test_float_solution_satisfies_constraint(self, E):
        lams = solve_lambda_constraint([2, 5], E)
        assert all(v > 0 for v in lams)
        assert lambda_constraint_residual([2, 5], E, lams) == pytest.approx(0, abs=1e-12)

    def test_with_lambda_squares(self):
        spec = with_lambda_squares(p3_spec(), [Fr(4), Fr(64, 5)])
        assert spec.terms[0].lam == 2.0 and omega_coefficient(spec) == 0
