"""Exact evaluation of the averaging coefficients ``F, G, f, g``.

The rescaled coefficients obey

    F[I,K] = Xi[I,K] + sum_{a=-1,0,1} Omega_a (.) G[I-1,K+a]
    G[I,K] = K / (K*eta - sum(phis)) * F[I,K]

with ``Xi[1,K] = 1``, ``Xi[I,K] = 0`` for ``I >= 2``, ``Omega_0 = 2``,
``Omega_{+-1} = 1`` and ``(.)`` the symmetric product.  The original
coefficients are ``f = (-1)**(K-1) eta**-I F`` and ``g = 2 (-1)**K eta**-I G``.

Everything is evaluated pointwise over :class:`~fractions.Fraction`.  When a
denominator ``K*eta - sum(phis)`` vanishes, the point is re-evaluated along
``eta -> eta + t`` as a truncated Laurent series in ``t``; the value is
finite exactly when no negative power of ``t`` survives (a removable
singularity), and is then the constant term.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import combinations, permutations
from typing import Callable, Sequence

ZERO = Fraction(0)
ONE = Fraction(1)

DEFAULT_CAP = 6


@dataclass(frozen=True)
class CoeffKey:
    I: int
    K: int

    def __post_init__(self):
        if self.I < 0 or not 0 <= self.K <= max(self.I, 0):
            raise ValueError(f"invalid coefficient index (I={self.I}, K={self.K})")


@dataclass(frozen=True)
class EvalPoint:
    eta: Fraction
    phis: tuple[Fraction, ...]

    def __post_init__(self):
        object.__setattr__(self, "eta", Fraction(self.eta))
        object.__setattr__(self, "phis", tuple(Fraction(p) for p in self.phis))

    @property
    def canonical(self) -> tuple[Fraction, ...]:
        return tuple(sorted(self.phis))


@dataclass(frozen=True)
class CoeffValue:
    """An exact value, or a marker for a non-removable pole."""

    value: Fraction | None
    finite: bool = True
    hyperplanes: tuple = ()

    @classmethod
    def pole(cls, hyperplanes=()) -> "CoeffValue":
        return cls(None, False, tuple(hyperplanes))

    def __str__(self):
        return str(self.value) if self.finite else "non-finite"


class _Pole(Exception):
    pass


@lru_cache(maxsize=1 << 16)
def _removals(phis: tuple) -> tuple:
    """``(multiplicity, phis with one copy of that value removed)`` per distinct value."""
    out = []
    i, n = 0, len(phis)
    while i < n:
        j = i
        while j < n and phis[j] == phis[i]:
            j += 1
        out.append((j - i, phis[:i] + phis[i + 1:]))
        i = j
    return tuple(out)


class _Series:
    """Truncated Laurent series ``sum_n c[n - val] t**n`` for ``val <= n < prec``."""

    __slots__ = ("val", "c")

    def __init__(self, val: int, c: list):
        self.val = val
        self.c = c

    @property
    def prec(self) -> int:
        return self.val + len(self.c)

    @classmethod
    def const(cls, x, prec: int) -> "_Series":
        return cls(0, [Fraction(x)] + [ZERO] * (prec - 1))

    def coeff(self, n: int) -> Fraction:
        i = n - self.val
        return self.c[i] if 0 <= i < len(self.c) else ZERO

    def __add__(self, other: "_Series") -> "_Series":
        lo = min(self.val, other.val)
        hi = min(self.prec, other.prec)
        return _Series(lo, [self.coeff(n) + other.coeff(n) for n in range(lo, hi)])

    def scale(self, s) -> "_Series":
        return _Series(self.val, [s * x for x in self.c])

    def div_linear(self, d0: Fraction, k: int) -> "_Series":
        """Divide by ``d0 + k t``."""
        if d0 == 0:
            return _Series(self.val - 1, [x / k for x in self.c])
        out = []
        prev = ZERO
        for x in self.c:
            prev = (x - k * prev) / d0
            out.append(prev)
        return _Series(self.val, out)

    def limit(self):
        """Constant term if no negative power survives, else ``None``."""
        for i, x in enumerate(self.c):
            if x != 0:
                if self.val + i < 0:
                    return None
                break
        if self.prec < 1:
            raise ArithmeticError("series precision exhausted")
        return self.coeff(0)


class CoeffEngine:
    """Memoized exact evaluator for the coefficient families.

    Memo keys are ``(K, eta, sorted phases)``; the symmetric products are
    taken over distinct values with multiplicity weights rather than over all
    permutations.
    """

    def __init__(self, cap: int = DEFAULT_CAP, max_entries: int = 400_000):
        self.cap = cap
        self.max_entries = max_entries
        self._F: dict = {}
        self._G: dict = {}
        self._Fs: dict = {}
        self._Gs: dict = {}

    def clear(self):
        self._F.clear()
        self._G.clear()
        self._Fs.clear()
        self._Gs.clear()

    def _trim(self):
        if len(self._F) + len(self._G) > self.max_entries:
            self._F.clear()
            self._G.clear()
        if len(self._Fs) + len(self._Gs) > self.max_entries // 8:
            self._Fs.clear()
            self._Gs.clear()

    # -- plain rational path -------------------------------------------------

    def _F_fast(self, K: int, eta: Fraction, phis: tuple) -> Fraction:
        I = len(phis)
        if I == 0 or K < 0 or K > I:
            return ZERO
        key = (K, eta, phis)
        v = self._F.get(key)
        if v is not None:
            return v
        if I == 1:
            v = ONE
        else:
            acc = ZERO
            for mult, rest in _removals(phis):
                acc += mult * (
                    2 * self._G_fast(K, eta, rest)
                    + self._G_fast(K - 1, eta, rest)
                    + self._G_fast(K + 1, eta, rest)
                )
            v = acc / I
        self._F[key] = v
        return v

    def _G_fast(self, K: int, eta: Fraction, phis: tuple) -> Fraction:
        I = len(phis)
        if K <= 0 or K > I:
            return ZERO
        key = (K, eta, phis)
        v = self._G.get(key)
        if v is not None:
            return v
        d = K * eta - sum(phis, ZERO)
        if d == 0:
            raise _Pole
        v = K * self._F_fast(K, eta, phis) / d
        self._G[key] = v
        return v

    # -- Laurent series path (only after a vanishing denominator) ------------

    def _F_ser(self, K: int, eta: Fraction, phis: tuple, prec: int) -> _Series:
        I = len(phis)
        if I == 0 or K < 0 or K > I:
            return _Series.const(ZERO, prec)
        key = (K, eta, phis, prec)
        v = self._Fs.get(key)
        if v is not None:
            return v
        if I == 1:
            v = _Series.const(ONE, prec)
        else:
            acc = None
            for mult, rest in _removals(phis):
                term = (
                    self._G_ser(K, eta, rest, prec).scale(2)
                    + self._G_ser(K - 1, eta, rest, prec)
                    + self._G_ser(K + 1, eta, rest, prec)
                ).scale(mult)
                acc = term if acc is None else acc + term
            v = acc.scale(Fraction(1, I))
        self._Fs[key] = v
        return v

    def _G_ser(self, K: int, eta: Fraction, phis: tuple, prec: int) -> _Series:
        I = len(phis)
        if K <= 0 or K > I:
            return _Series.const(ZERO, prec)
        key = (K, eta, phis, prec)
        v = self._Gs.get(key)
        if v is not None:
            return v
        d0 = K * eta - sum(phis, ZERO)
        v = self._F_ser(K, eta, phis, prec).scale(K).div_linear(d0, K)
        self._Gs[key] = v
        return v

    # -- public evaluation ---------------------------------------------------

    def _check(self, key: CoeffKey, point: EvalPoint):
        if len(point.phis) != key.I:
            raise ValueError(f"point has {len(point.phis)} phases, key needs I={key.I}")
        if key.I > self.cap:
            raise ValueError(f"I={key.I} exceeds the configured cap {self.cap}")

    def _evaluate(self, which: str, key: CoeffKey, point: EvalPoint) -> CoeffValue:
        self._check(key, point)
        phis = point.canonical
        eta = point.eta
        fast = self._F_fast if which == "F" else self._G_fast
        try:
            return CoeffValue(fast(key.K, eta, phis))
        except _Pole:
            pass
        slow = self._F_ser if which == "F" else self._G_ser
        s = slow(key.K, eta, phis, key.I + 2)
        self._trim()
        lim = s.limit()
        if lim is None:
            return CoeffValue.pole(pole_hyperplanes(eta, phis, max(key.K, 1)))
        return CoeffValue(lim)

    def F(self, key: CoeffKey, point: EvalPoint) -> CoeffValue:
        if key.I == 0:
            return CoeffValue(ZERO)
        out = self._evaluate("F", key, point)
        self._trim()
        return out

    def G(self, key: CoeffKey, point: EvalPoint) -> CoeffValue:
        if key.I == 0 or key.K == 0:
            self._check(key, point)
            return CoeffValue(ZERO)
        out = self._evaluate("G", key, point)
        self._trim()
        return out

    def f(self, key: CoeffKey, point: EvalPoint) -> CoeffValue:
        if point.eta == 0:
            raise ValueError("f is undefined at eta = 0")
        v = self.F(key, point)
        if not v.finite:
            return v
        sign = 1 if (key.K - 1) % 2 == 0 else -1
        return CoeffValue(sign * v.value / point.eta ** key.I)

    def g(self, key: CoeffKey, point: EvalPoint) -> CoeffValue:
        if point.eta == 0:
            raise ValueError("g is undefined at eta = 0")
        v = self.G(key, point)
        if not v.finite:
            return v
        sign = 1 if key.K % 2 == 0 else -1
        return CoeffValue(2 * sign * v.value / point.eta ** key.I)

    def F_raw(self, K: int, eta: Fraction, phis: Sequence) -> Fraction:
        """Unwrapped plain-path ``F``; raises ``ZeroDivisionError`` on any hyperplane."""
        try:
            return self._F_fast(K, Fraction(eta), tuple(sorted(phis)))
        except _Pole:
            raise ZeroDivisionError("evaluation point lies on a pole hyperplane") from None

    def G_raw(self, K: int, eta: Fraction, phis: Sequence) -> Fraction:
        try:
            return self._G_fast(K, Fraction(eta), tuple(sorted(phis)))
        except _Pole:
            raise ZeroDivisionError("evaluation point lies on a pole hyperplane") from None


default_engine = CoeffEngine()


def eval_F(key: CoeffKey, point: EvalPoint, engine: CoeffEngine | None = None) -> CoeffValue:
    return (engine or default_engine).F(key, point)


def eval_G(key: CoeffKey, point: EvalPoint, engine: CoeffEngine | None = None) -> CoeffValue:
    return (engine or default_engine).G(key, point)


def eval_f(key: CoeffKey, point: EvalPoint, engine: CoeffEngine | None = None) -> CoeffValue:
    return (engine or default_engine).f(key, point)


def eval_g(key: CoeffKey, point: EvalPoint, engine: CoeffEngine | None = None) -> CoeffValue:
    return (engine or default_engine).g(key, point)


def pole_hyperplanes(eta: Fraction, phis: Sequence, k_max: int) -> list[tuple[int, tuple]]:
    """All ``(k, S)`` with ``k * eta == sum(S)`` for a nonempty index subset ``S``."""
    phis = tuple(phis)
    hits = set()
    for b in range(1, len(phis) + 1):
        for idx in combinations(range(len(phis)), b):
            sub = tuple(sorted(phis[i] for i in idx))
            s = sum(sub, ZERO)
            for k in range(1, k_max + 1):
                if k * eta == s:
                    hits.add((k, sub))
    return sorted(hits)


# -- symmetric product --------------------------------------------------------

def _unwrap(v) -> CoeffValue:
    return v if isinstance(v, CoeffValue) else CoeffValue(Fraction(v))


def symmetric_product(
    p: Callable, q: Callable, I: int, J: int, point: EvalPoint
) -> CoeffValue:
    """Permutation average of ``p(eta; first I phases) * q(eta; last J phases)``.

    ``p`` and ``q`` are called as ``p(eta, phis_tuple)`` and may return a
    number or a :class:`CoeffValue`.  Works for non-symmetric factors too.
    """
    phis = point.phis
    n = len(phis)
    if n != I + J:
        raise ValueError("point must carry I + J phases")
    total = ZERO
    for perm in permutations(range(n)):
        a = _unwrap(p(point.eta, tuple(phis[i] for i in perm[:I])))
        b = _unwrap(q(point.eta, tuple(phis[i] for i in perm[I:])))
        if not (a.finite and b.finite):
            return CoeffValue.pole()
        total += a.value * b.value
    return CoeffValue(total / math.factorial(n))


def _symmetric_product_of_symmetric(p: Callable, q: Callable, I: int, phis: tuple) -> Fraction:
    """Same average when both factors are symmetric: one term per index subset."""
    n = len(phis)
    total = ZERO
    for idx in combinations(range(n), I):
        rest = tuple(phis[i] for i in range(n) if i not in idx)
        a = p(tuple(phis[i] for i in idx))
        if a == 0:
            continue
        total += a * q(rest)
    return total / math.comb(n, I)


# -- path-sum oracle for F[I,0] ----------------------------------------------

def _paths(I: int):
    """Sequences k_0..k_I with k_0 = k_I = 0, k_i >= 1 inside, steps in {-1,0,1}."""
    if I == 1:
        yield (0, 0)
        return

    def rec(prefix):
        i = len(prefix)
        last = prefix[-1]
        if i == I:
            if last == 1:
                yield prefix + (0,)
            return
        # must be able to come back down to 1 by position I-1
        for nxt in (last - 1, last, last + 1):
            if nxt >= 1 and nxt - 1 <= (I - 1) - i:
                yield from rec(prefix + (nxt,))

    yield from rec((0, 1))


def h_expansion(I: int, point: EvalPoint, *, first_step_weight: str = "xi") -> CoeffValue:
    """Direct path/permutation sum for ``F[I,0]``, independent of the recursion.

    Each path ``k`` contributes the step weights ``2 - |k_{i+1} - k_i|`` times
    ``prod_i k_i / (k_i eta - partial sum of permuted phases)``.  The first
    step (out of ``k_0 = 0``) is the base case ``Xi = 1`` of the recursion, not
    an ``Omega`` factor, so with ``first_step_weight="xi"`` its weight is 1.
    For ``I >= 2`` every admissible path leaves 0 with a unit step and both
    conventions coincide; for ``I = 1`` the literal product gives 2 instead
    of ``F[1,0] = 1``.  ``first_step_weight="literal"`` keeps the literal
    product for comparison.
    """
    if I < 1:
        raise ValueError("I must be >= 1")
    if len(point.phis) != I:
        raise ValueError("point must carry I phases")
    eta = point.eta
    phis = point.phis
    paths = list(_paths(I))
    total = ZERO
    for sigma in permutations(range(I)):
        partial = [ZERO]
        for a in sigma[:-1]:
            partial.append(partial[-1] + phis[a])
        for ks in paths:
            w = ONE
            for i in range(I):
                if i == 0 and first_step_weight == "xi":
                    continue
                w *= 2 - abs(ks[i + 1] - ks[i])
            if w == 0:
                continue
            for i in range(1, I):
                d = ks[i] * eta - partial[i]
                if d == 0:
                    return CoeffValue.pole(pole_hyperplanes(eta, phis, I))
                w *= Fraction(ks[i]) / d
            total += w
    return CoeffValue(total / math.factorial(I))


def eval_H_expansion(I: int, point: EvalPoint) -> CoeffValue:
    return h_expansion(I, point)


# -- singularity locus --------------------------------------------------------

def singularity_support(kind: str, key: CoeffKey, point: EvalPoint) -> bool:
    """Whether ``eta`` lies on the predicted pole locus of ``kind`` in F, f, G, g.

    For F/f the locus is ``eta = sum of b < I phases``; for G/g ``b <= I``.
    """
    if point.eta <= 0:
        raise ValueError("singularity locus is stated for eta > 0")
    if kind not in ("F", "f", "G", "g"):
        raise ValueError(f"unknown coefficient family {kind!r}")
    b_max = key.I - 1 if kind in ("F", "f") else key.I
    phis = point.phis
    for b in range(1, b_max + 1):
        for idx in combinations(range(len(phis)), b):
            if sum((phis[i] for i in idx), ZERO) == point.eta:
                return True
    return False


# -- randomized identity checks ----------------------------------------------

def random_rational(rng: random.Random, num: int = 30, den: int = 9, positive: bool = False) -> Fraction:
    lo = 1 if positive else -num
    return Fraction(rng.randint(lo, num), rng.randint(1, den))


def random_point(rng: random.Random, I: int) -> EvalPoint:
    eta = random_rational(rng, 40, 9, positive=True)
    return EvalPoint(eta, tuple(random_rational(rng) for _ in range(I)))


@dataclass
class IdentityReport:
    name: str
    params: dict
    checked: int = 0
    skipped: int = 0
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations and self.checked > 0

    def summary(self) -> str:
        status = "OK" if self.ok else "FAIL"
        return f"{status} {self.checked - len(self.violations)}/{self.checked}"


def check_convolution_identities(
    I: int,
    K: int,
    k: int,
    trials: int,
    seed: int = 0,
    engine: CoeffEngine | None = None,
    max_attempts: int | None = None,
) -> tuple[IdentityReport, IdentityReport]:
    """Check the F- and G-convolution identities at ``trials`` pole-free points.

    Returns one report per identity; a violation records the witness point.
    Points where any participating term meets a pole hyperplane are skipped.
    """
    if not 0 < k < K <= I:
        raise ValueError("need 0 < k < K <= I")
    eng = engine or default_engine
    rng = random.Random(seed)
    rep_F = IdentityReport("F-convolution", {"I": I, "K": K, "k": k})
    rep_G = IdentityReport("G-convolution", {"I": I, "K": K, "k": k})
    attempts = 0
    limit = max_attempts or 50 * trials
    while rep_F.checked < trials and attempts < limit:
        attempts += 1
        pt = random_point(rng, I)
        phis = pt.canonical
        eta = pt.eta
        try:
            lhs_F = eng.F_raw(K, eta, phis)
            lhs_G = eng.G_raw(K, eta, phis)
            rhs_F = ZERO
            rhs_G = ZERO
            for i in range(1, I):
                rhs_F += _symmetric_product_of_symmetric(
                    lambda s, i=i: eng.F_raw(k, eta, s),
                    lambda s, i=i: eng.G_raw(K - k, eta, s),
                    i, phis)
                rhs_G += _symmetric_product_of_symmetric(
                    lambda s, i=i: eng.G_raw(k, eta, s),
                    lambda s, i=i: eng.G_raw(K - k, eta, s),
                    i, phis)
        except ZeroDivisionError:
            rep_F.skipped += 1
            rep_G.skipped += 1
            continue
        rep_F.checked += 1
        rep_G.checked += 1
        if lhs_F != rhs_F:
            rep_F.violations.append((pt, lhs_F, rhs_F))
        if lhs_G != rhs_G:
            rep_G.violations.append((pt, lhs_G, rhs_G))
    eng._trim()
    return rep_F, rep_G


def check_reflection(I: int, trials: int, seed: int = 0, engine: CoeffEngine | None = None) -> IdentityReport:
    """``F[I,0](eta; phis) == F[I,0](eta; -phis)`` whenever ``sum(phis) == 0``."""
    eng = engine or default_engine
    rng = random.Random(seed)
    rep = IdentityReport("reflection", {"I": I})
    attempts = 0
    while rep.checked < trials and attempts < 50 * trials:
        attempts += 1
        head = [random_rational(rng) for _ in range(I - 1)]
        phis = tuple(head + [-sum(head, ZERO)])
        eta = random_rational(rng, 40, 9, positive=True)
        try:
            a = eng.F_raw(0, eta, phis)
            b = eng.F_raw(0, eta, tuple(-x for x in phis))
        except ZeroDivisionError:
            rep.skipped += 1
            continue
        rep.checked += 1
        if a != b:
            rep.violations.append((EvalPoint(eta, phis), a, b))
    eng._trim()
    return rep


def check_h_expansion(I: int, trials: int, seed: int = 0, engine: CoeffEngine | None = None) -> IdentityReport:
    """Compare the path-sum oracle with the recursion for ``F[I,0]``."""
    eng = engine or default_engine
    rng = random.Random(seed)
    rep = IdentityReport("h-expansion", {"I": I})
    attempts = 0
    while rep.checked < trials and attempts < 50 * trials:
        attempts += 1
        pt = random_point(rng, I)
        oracle = h_expansion(I, pt)
        if not oracle.finite:
            rep.skipped += 1
            continue
        try:
            rec = eng.F_raw(0, pt.eta, pt.phis)
        except ZeroDivisionError:
            rep.skipped += 1
            continue
        rep.checked += 1
        if rec != oracle.value:
            rep.violations.append((pt, rec, oracle.value))
    return rep


@dataclass
class PoleProbeReport:
    probes: int = 0
    poles_found: int = 0
    removable_hits: int = 0
    violations: list = field(default_factory=list)


def probe_pole_containment(
    n_probes: int, seed: int = 0, max_I: int = 5, engine: CoeffEngine | None = None
) -> PoleProbeReport:
    """Evaluate F and G on random pole hyperplanes ``k eta = sum(S)``.

    Every non-finite value must sit on the predicted locus; finite values on
    a hyperplane are counted as removable hits.
    """
    eng = engine or default_engine
    rng = random.Random(seed)
    rep = PoleProbeReport()
    while rep.probes < n_probes:
        I = rng.randint(1, max_I)
        K = rng.randint(0, I)
        # small integers make coincident sub-sums common
        phis = [Fraction(rng.randint(-6, 6), rng.choice((1, 1, 2, 3))) for _ in range(I)]
        b = rng.randint(1, I)
        sub = rng.sample(range(I), b)
        k = rng.randint(1, max(K, 1))
        eta = sum((phis[i] for i in sub), ZERO) / k
        if eta == 0:
            continue
        if eta < 0:
            phis = [-x for x in phis]
            eta = -eta
        pt = EvalPoint(eta, tuple(phis))
        key = CoeffKey(I, K)
        rep.probes += 1
        for kind, fn in (("F", eng.F), ("G", eng.G)):
            v = fn(key, pt)
            if v.finite:
                rep.removable_hits += 1
                continue
            rep.poles_found += 1
            if not singularity_support(kind, key, pt):
                rep.violations.append((kind, key, pt))
    return rep
