"""Potentials ``V(x) = sum_k lam_k x**-gamma cos(alpha_k x + delta_k(x)) + beta0(x)``
carrying a prescribed embedded eigenvalue.

Conventions fixed here and used everywhere downstream:

* each cosine is split as ``(lam/2) x**-gamma (e^{i(...)} + e^{-i(...)})``, so
  the resonant coefficient carries ``amplitude_convention = 2**-(p-1)``;
* the exponential with phase ``+alpha_k`` is ``e^{-i(alpha_k x + delta_k)}``, so
  the resonant term oscillates like ``e^{i(2 theta - sum_j s_j delta_{k_j})}``
  where ``s_j`` is the sign of the j-th phase of the representation.  The
  aggregate phase is ``xi_eff = -sum_j s_j delta_{k_j}`` and
  ``psi = xi_eff + 2 theta``;
* in dynamic mode ``delta_k(x) = phase_k + c_k xi(x)``; the weights satisfy
  ``-sum_j s_j c_{k_j} = 1`` so that ``xi_eff = xi + const``.
"""

from __future__ import annotations

import cmath
import math
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction
from itertools import combinations_with_replacement
from math import factorial, isqrt

import numpy as np

from .coeffs import CoeffEngine, CoeffKey, EvalPoint, default_engine
from .errors import Infeasible, NonGeneric, NotInSpSetminus
from .phase_sets import PhaseSet, is_new_at_order, represent
from .rational import format_rational, parse_rational

XI_MODES = ("frozen", "dynamic")
BETA0_MODES = ("zero", "iterative")


def rational_sqrt(q: Fraction) -> Fraction | None:
    """Exact square root of a nonnegative rational, or None if irrational."""
    q = Fraction(q)
    if q < 0:
        return None
    n, d = q.numerator, q.denominator
    rn, rd = isqrt(n), isqrt(d)
    if rn * rn == n and rd * rd == d:
        return Fraction(rn, rd)
    return None


_SQRT_RE = re.compile(r"^\s*sqrt\(\s*([^)]+)\s*\)\s*$")


def parse_lambda(value) -> tuple[float, Fraction | None]:
    """Accept a float, ``"num/den"`` or ``"sqrt(num/den)"``; return (value, exact square)."""
    if isinstance(value, str):
        m = _SQRT_RE.match(value)
        if m:
            sq = parse_rational(m.group(1))
            return math.sqrt(sq), sq
        q = parse_rational(value)
        return float(q), q * q
    if isinstance(value, Fraction):
        return float(value), value * value
    if isinstance(value, int) and not isinstance(value, bool):
        return float(value), Fraction(value) ** 2
    return float(value), None


def format_lambda(lam: float, lam_sq: Fraction | None):
    if lam_sq is None:
        return lam
    root = rational_sqrt(lam_sq)
    if root is not None:
        return format_rational(root)
    return f"sqrt({format_rational(lam_sq)})"


@dataclass(frozen=True)
class CosineTerm:
    """One ``lam x**-gamma cos(alpha x + phase + c xi(x))`` component."""

    lam: float
    alpha: Fraction
    xi_mode: str = "frozen"
    phase: float = 0.0
    c: float | None = None
    lam_sq: Fraction | None = None

    @classmethod
    def make(cls, lam, alpha, xi_mode="frozen", phase=0.0, c=None) -> "CosineTerm":
        value, sq = parse_lambda(lam)
        return cls(value, parse_rational(alpha), xi_mode, float(phase),
                   None if c is None else float(c), sq)

    def lam_exact(self) -> Fraction | None:
        return None if self.lam_sq is None else rational_sqrt(self.lam_sq)


@dataclass(frozen=True)
class PotentialSpec:
    p: int
    gamma: Fraction
    terms: tuple[CosineTerm, ...]
    E: Fraction
    beta0_mode: str = "zero"
    x0: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "gamma", Fraction(self.gamma))
        object.__setattr__(self, "E", Fraction(self.E))
        object.__setattr__(self, "terms", tuple(self.terms))

    @property
    def alphas(self) -> tuple[Fraction, ...]:
        return tuple(t.alpha for t in self.terms)

    @property
    def phase_set(self) -> PhaseSet:
        return PhaseSet.from_amplitudes(self.alphas)

    @property
    def critical(self) -> bool:
        return self.gamma * (self.p - 1) == 1

    @property
    def eta_float(self) -> float:
        return 2.0 * math.sqrt(self.E)

    def validate(self) -> "PotentialSpec":
        if self.p < 2:
            raise ValueError("p must be >= 2")
        lo, hi = Fraction(1, self.p), Fraction(1, self.p - 1)
        if not lo < self.gamma <= hi:
            raise ValueError(f"gamma={self.gamma} outside ({lo}, {hi}]")
        if self.E <= 0:
            raise ValueError("E must be positive")
        if self.x0 <= 0:
            raise ValueError("x0 must be positive")
        if self.beta0_mode not in BETA0_MODES:
            raise ValueError(f"beta0_mode must be one of {BETA0_MODES}")
        seen = set()
        for t in self.terms:
            if t.lam <= 0:
                raise ValueError("all amplitudes lambda_k must be > 0")
            if t.alpha <= 0:
                raise ValueError("all frequencies alpha_k must be > 0")
            if t.xi_mode not in XI_MODES:
                raise ValueError(f"xi_mode must be one of {XI_MODES}")
            if t.alpha in seen:
                raise ValueError(f"duplicate frequency {t.alpha}")
            seen.add(t.alpha)
        return self

    # -- JSON ---------------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "p": self.p,
            "gamma": format_rational(self.gamma),
            "terms": [
                {
                    "lambda": format_lambda(t.lam, t.lam_sq),
                    "alpha": format_rational(t.alpha),
                    "xi_mode": t.xi_mode,
                    "phase": t.phase,
                    "c": t.c,
                }
                for t in self.terms
            ],
            "beta0_mode": self.beta0_mode,
            "x0": self.x0,
            "E": format_rational(self.E),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PotentialSpec":
        terms = tuple(
            CosineTerm.make(
                t["lambda"], t["alpha"], t.get("xi_mode", "frozen"),
                t.get("phase", 0.0), t.get("c"),
            )
            for t in doc.get("terms", [])
        )
        return cls(
            p=int(doc["p"]),
            gamma=parse_rational(doc["gamma"]),
            terms=terms,
            E=parse_rational(doc["E"]),
            beta0_mode=doc.get("beta0_mode", "zero"),
            x0=float(doc.get("x0", 1.0)),
        )


@dataclass(frozen=True)
class ConstructionPlan:
    """Resonant data for a prescribed embedded energy."""

    eta: Fraction
    representation: tuple[Fraction, ...]
    term_index: tuple[int, ...]
    signs: tuple[int, ...]
    C1: int
    f_value: Fraction
    amplitude_convention: Fraction
    Lambda: complex
    target_psi: float
    c: tuple[float, ...]
    gamma_power: float = field(default=0.0)

    @property
    def Lambda_abs(self) -> float:
        return abs(self.Lambda)

    def to_json(self) -> dict:
        return {
            "eta": format_rational(self.eta),
            "representation": [format_rational(x) for x in self.representation],
            "term_index": list(self.term_index),
            "signs": list(self.signs),
            "C1": self.C1,
            "f_value": format_rational(self.f_value),
            "amplitude_convention": format_rational(self.amplitude_convention),
            "Lambda": [self.Lambda.real, self.Lambda.imag],
            "Lambda_abs": self.Lambda_abs,
            "target_psi": self.target_psi,
            "c": list(self.c),
            "gamma_power": self.gamma_power,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ConstructionPlan":
        return cls(
            eta=parse_rational(doc["eta"]),
            representation=tuple(parse_rational(x) for x in doc["representation"]),
            term_index=tuple(int(i) for i in doc["term_index"]),
            signs=tuple(int(s) for s in doc["signs"]),
            C1=int(doc["C1"]),
            f_value=parse_rational(doc["f_value"]),
            amplitude_convention=parse_rational(doc["amplitude_convention"]),
            Lambda=complex(*doc["Lambda"]),
            target_psi=float(doc["target_psi"]),
            c=tuple(float(x) for x in doc["c"]),
            gamma_power=float(doc.get("gamma_power", 0.0)),
        )


def distinct_permutations(multiset) -> int:
    counts = Counter(multiset)
    out = factorial(sum(counts.values()))
    for m in counts.values():
        out //= factorial(m)
    return out


def _term_lookup(spec: PotentialSpec) -> dict:
    return {t.alpha: i for i, t in enumerate(spec.terms)}


def resonant_representation(spec: PotentialSpec) -> tuple[Fraction, tuple]:
    """``(eta, rep)`` for ``E``; raises unless ``E`` is a generic new resonance."""
    a = spec.phase_set
    if not is_new_at_order(spec.E, a, spec.p):
        raise NotInSpSetminus(f"E={spec.E} is not in S_{spec.p} minus S_{spec.p - 1}")
    eta = rational_sqrt(4 * spec.E)
    if eta is None:
        raise NotInSpSetminus(f"2 sqrt(E) is irrational for E={spec.E}")
    reps = represent(eta, a, spec.p - 1)
    if len(reps) != 1:
        raise NonGeneric(f"eta={eta} has {len(reps)} representations: {reps}")
    rep = reps[0]
    if len(rep) != spec.p - 1:
        raise NotInSpSetminus(f"representation {rep} is shorter than p-1")
    return eta, rep


def check_pole_free(spec: PotentialSpec, eta: Fraction, rep: tuple, engine: CoeffEngine) -> None:
    """Every g used by the averaging, up to order p-1, is finite except the resonant one."""
    phases = spec.phase_set.phases
    for n in range(1, spec.p):
        for ms in combinations_with_replacement(phases, n):
            for K in range(1, n + 1):
                if ms == rep and K == 1:
                    continue
                v = engine.g(CoeffKey(n, K), EvalPoint(eta, ms))
                if not v.finite:
                    raise NonGeneric(f"g[{n},{K}] has a pole at eta={eta}, phases={ms}")


def plan_construction(spec: PotentialSpec, engine: CoeffEngine | None = None,
                      check_poles: bool = True) -> ConstructionPlan:
    spec.validate()
    eng = engine or default_engine
    eta, rep = resonant_representation(spec)
    I = spec.p - 1
    fv = eng.f(CoeffKey(I, 1), EvalPoint(eta, rep))
    if not fv.finite or fv.value == 0:
        raise NonGeneric(f"f[{I},1] vanishes or is singular at eta={eta}, phases={rep}")
    if check_poles:
        check_pole_free(spec, eta, rep, eng)

    lookup = _term_lookup(spec)
    term_index = tuple(lookup[abs(ph)] for ph in rep)
    signs = tuple(1 if ph > 0 else -1 for ph in rep)
    C1 = distinct_permutations(rep)
    amp = Fraction(1, 2 ** I)
    lam_prod = 1.0
    for k in term_index:
        lam_prod *= spec.terms[k].lam
    Lambda = complex(C1 * float(fv.value) * lam_prod * float(amp))
    target = -math.pi / 2 - cmath.phase(Lambda)

    c = _resolve_weights(spec, term_index, signs)
    return ConstructionPlan(
        eta=eta,
        representation=rep,
        term_index=term_index,
        signs=signs,
        C1=C1,
        f_value=fv.value,
        amplitude_convention=amp,
        Lambda=Lambda,
        target_psi=target,
        c=c,
        gamma_power=float(spec.gamma * I),
    )


def _resolve_weights(spec: PotentialSpec, term_index, signs) -> tuple[float, ...]:
    """Per-term weights ``c_k``; dynamic terms must satisfy ``-sum_j s_j c_{k_j} = 1``."""
    K = len(spec.terms)
    dynamic = [t.xi_mode == "dynamic" for t in spec.terms]
    if not any(dynamic):
        return tuple(0.0 for _ in range(K))
    sign_of = {}
    for k, s in zip(term_index, signs):
        sign_of[k] = s
    if all(spec.terms[k].c is None for k in sign_of if dynamic[k]):
        # default: each representation entry contributes equally
        n = len(term_index)
        counts = Counter(term_index)
        c = [0.0] * K
        usable = [k for k in counts if dynamic[k]]
        if not usable:
            raise ValueError("no dynamic term takes part in the resonance")
        share = n / sum(counts[k] for k in usable)
        for k in usable:
            c[k] = -sign_of[k] * share / n
        return tuple(c)
    c = [float(t.c) if (t.c is not None and dynamic[i]) else 0.0
         for i, t in enumerate(spec.terms)]
    total = -sum(s * c[k] for k, s in zip(term_index, signs))
    if abs(total - 1.0) > 1e-12:
        raise ValueError(f"signed weight sum over the representation is {total}, expected 1")
    return tuple(c)


def xi_effective_offset(spec: PotentialSpec, plan: ConstructionPlan) -> float:
    """Constant part of ``xi_eff = -sum_j s_j delta_{k_j}``."""
    return -sum(s * spec.terms[k].phase for k, s in zip(plan.term_index, plan.signs))


def xi_effective_weight(spec: PotentialSpec, plan: ConstructionPlan) -> float:
    """Coefficient of ``xi`` in ``xi_eff`` (1 in dynamic mode, 0 when frozen)."""
    return -sum(s * plan.c[k] for k, s in zip(plan.term_index, plan.signs))


# -- amplitude constraint for the beta0-free construction ----------------------

def solve_lambda_squares(alphas, E, scale=1, fixed=None, solve_for: int | None = None) -> list[Fraction]:
    """Exact squares ``lam_k**2`` with ``sum_k lam_k**2 / (4E - alpha_k**2) = 0``.

    ``fixed`` holds the amplitudes of every index except ``solve_for``
    (default: all equal to ``scale``, solving for the last index).  Raises
    :class:`Infeasible` when ``E`` is not strictly between the extreme
    ``alpha_k**2 / 4``.
    """
    alphas = [parse_rational(a) for a in alphas]
    E = parse_rational(E)
    K = len(alphas)
    if K < 2:
        raise Infeasible("need at least two terms")
    denoms = [4 * E - a * a for a in alphas]
    if any(d == 0 for d in denoms):
        raise Infeasible("E coincides with some alpha_k^2/4")
    lo = min(a * a for a in alphas) / 4
    hi = max(a * a for a in alphas) / 4
    if not lo < E < hi:
        raise Infeasible(f"E={E} outside ({lo}, {hi}); all terms share one sign")
    sq_scale = _square_of(scale)
    if solve_for is None:
        solve_for = K - 1
    if fixed is None:
        fixed_sq = [sq_scale] * K
    else:
        fixed_sq = [_square_of(v) for v in fixed]
        if len(fixed_sq) == K - 1:
            fixed_sq.insert(solve_for, Fraction(0))
    partial = sum(fixed_sq[i] / denoms[i] for i in range(K) if i != solve_for)
    target = -partial * denoms[solve_for]
    if target <= 0:
        # pick the last index whose denominator sign opposes the partial sum
        for j in reversed(range(K)):
            part_j = sum(fixed_sq[i] / denoms[i] for i in range(K) if i != j)
            cand = -part_j * denoms[j]
            if cand > 0:
                solve_for, target = j, cand
                break
        else:
            raise Infeasible("no positive solution for the given fixed amplitudes")
    out = list(fixed_sq)
    out[solve_for] = target
    return out


def _square_of(v) -> Fraction:
    if isinstance(v, float):
        return Fraction(v) ** 2
    value, sq = parse_lambda(v)
    return sq if sq is not None else Fraction(value) ** 2


def solve_lambda_constraint(alphas, E, scale=1.0, fixed=None, solve_for: int | None = None) -> list[float]:
    """Positive amplitudes making the quadratic zero-phase term vanish."""
    return [math.sqrt(q) for q in solve_lambda_squares(alphas, E, scale, fixed, solve_for)]


def lambda_constraint_residual(alphas, E, lambdas) -> float:
    E = parse_rational(E)
    return float(sum(l * l / float(4 * E - Fraction(a) ** 2) for a, l in zip(alphas, lambdas)))


def with_lambda_squares(spec: PotentialSpec, squares) -> PotentialSpec:
    """Copy of ``spec`` whose amplitudes are the given exact squares."""
    terms = []
    for t, sq in zip(spec.terms, squares):
        terms.append(replace(t, lam=math.sqrt(sq), lam_sq=Fraction(sq)))
    return replace(spec, terms=tuple(terms))


# -- zero-phase (Omega) terms -------------------------------------------------

@dataclass(frozen=True)
class OmegaTerm:
    """A zero-sum product of components with its averaged coefficient.

    ``phases`` uses 0 for the ``beta0`` component.  The contribution to
    ``Omega(x)`` is ``multiplicity * coefficient * prod(components)``.
    """

    phases: tuple[Fraction, ...]
    coefficient: Fraction
    order: int
    multiplicity: int

    @property
    def beta0_power(self) -> int:
        return sum(1 for ph in self.phases if ph == 0)


def omega_terms(spec: PotentialSpec, plan: ConstructionPlan | None = None,
                engine: CoeffEngine | None = None) -> list[OmegaTerm]:
    """All zero-sum multisets of at most ``p-1`` phases with ``f[I,0]`` attached."""
    eng = engine or default_engine
    eta = plan.eta if plan is not None else rational_sqrt(4 * spec.E)
    if eta is None:
        raise ValueError("2 sqrt(E) must be rational")
    phases = list(spec.phase_set.phases)
    if spec.beta0_mode == "iterative":
        phases = sorted(set(phases) | {Fraction(0)})
    out = []
    for I in range(1, spec.p):
        for ms in combinations_with_replacement(phases, I):
            if sum(ms, Fraction(0)) != 0:
                continue
            v = eng.f(CoeffKey(I, 0), EvalPoint(eta, ms))
            if not v.finite:
                raise NonGeneric(f"f[{I},0] singular at eta={eta}, phases={ms}")
            out.append(OmegaTerm(ms, v.value, I, distinct_permutations(ms)))
    return out


def _component_factors(spec: PotentialSpec, phases) -> tuple[Counter, Counter]:
    """(per-term counts, per-term signed counts) of the non-beta0 entries."""
    lookup = _term_lookup(spec)
    counts, signed = Counter(), Counter()
    for ph in phases:
        if ph == 0:
            continue
        k = lookup[abs(ph)]
        counts[k] += 1
        signed[k] += 1 if ph > 0 else -1
    return counts, signed


def _lambda_product(spec: PotentialSpec, counts: Counter):
    """Exact ``prod (lam_k / 2)**m_k`` when available, else a float."""
    exact = Fraction(1)
    for k, m in counts.items():
        t = spec.terms[k]
        root = t.lam_exact()
        if root is not None:
            exact *= (root / 2) ** m
        elif t.lam_sq is not None and m % 2 == 0:
            exact *= (t.lam_sq / 4) ** (m // 2)
        else:
            exact = None
            break
    if exact is not None:
        return exact
    out = 1.0
    for k, m in counts.items():
        out *= (spec.terms[k].lam / 2) ** m
    return out


def omega_coefficient(spec: PotentialSpec, order: int = 2, engine: CoeffEngine | None = None):
    """Coefficient of ``x**(-order*gamma)`` in the phase-free, beta0-free part of Omega.

    Exact (a Fraction) whenever the amplitude products are; a float otherwise.
    """
    parts = []
    for term in omega_terms(replace(spec, beta0_mode="zero"), engine=engine):
        if term.order != order:
            continue
        counts, signed = _component_factors(spec, term.phases)
        if any(v != 0 for v in signed.values()):
            continue
        lp = _lambda_product(spec, counts)
        if isinstance(lp, Fraction):
            parts.append(term.multiplicity * term.coefficient * lp)
        else:
            parts.append(term.multiplicity * float(term.coefficient) * lp)
    if all(isinstance(v, Fraction) for v in parts):
        return sum(parts, Fraction(0))
    return float(sum(float(v) for v in parts))


@dataclass(frozen=True)
class Beta0Table:
    """Numeric monomial table for ``Omega(x; beta0, delta)``.

    Row i contributes ``coef[i] * x**(-npow[i]*gamma) * beta0**mpow[i] *
    cos(S[i] . delta)``.
    """

    coef: np.ndarray
    mpow: np.ndarray
    npow: np.ndarray
    S: np.ndarray
    n_iter: int

    @classmethod
    def empty(cls, K: int) -> "Beta0Table":
        return cls(np.zeros(0), np.zeros(0, np.int64), np.zeros(0, np.int64),
                   np.zeros((0, max(K, 1)), np.int64), 0)


def omega_table(spec: PotentialSpec, plan: ConstructionPlan | None = None,
                engine: CoeffEngine | None = None) -> Beta0Table:
    K = len(spec.terms)
    if spec.beta0_mode != "iterative":
        return Beta0Table.empty(K)
    rows = []
    for term in omega_terms(spec, plan, engine):
        counts, signed = _component_factors(spec, term.phases)
        lp = _lambda_product(spec, counts)
        coef = term.multiplicity * float(term.coefficient) * float(lp)
        S = [signed.get(k, 0) for k in range(K)] or [0]
        rows.append((coef, term.beta0_power, term.order - term.beta0_power, S))
    if not rows:
        return Beta0Table.empty(K)
    return Beta0Table(
        coef=np.array([r[0] for r in rows], dtype=np.float64),
        mpow=np.array([r[1] for r in rows], dtype=np.int64),
        npow=np.array([r[2] for r in rows], dtype=np.int64),
        S=np.array([r[3] for r in rows], dtype=np.int64).reshape(len(rows), max(K, 1)),
        n_iter=spec.p - 1,
    )


def classical_spec(lam=8, alpha=2, E=1, gamma=1) -> PotentialSpec:
    """``-lam sin(alpha x) / x^gamma`` as a frozen single-cosine spec (``p = 2``)."""
    term = CosineTerm.make(lam, alpha, "frozen", math.pi / 2)
    return PotentialSpec(2, parse_rational(gamma), (term,), parse_rational(E))
