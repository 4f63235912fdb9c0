"""Exact phase sumsets and the finite set of candidate embedded energies.

Phases are the angular frequencies of the oscillating pieces of a potential.
An energy ``E = eta**2 / 4`` can only carry an embedded eigenvalue when
``eta`` is a sum of at most ``p - 1`` phases; everything here is done over
:class:`fractions.Fraction` so that membership and uniqueness questions are
decided exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations_with_replacement
from typing import Iterable

logger = logging.getLogger(__name__)


def _as_fraction(value) -> Fraction:
    if isinstance(value, float):
        raise TypeError("phases must be exact rationals, got float %r" % value)
    return Fraction(value)


@dataclass(frozen=True)
class PhaseSet:
    """A finite, duplicate-free, sorted set of exact phases."""

    phases: tuple[Fraction, ...]
    symmetric_closure: bool = False

    def __post_init__(self):
        vals = {_as_fraction(v) for v in self.phases}
        if self.symmetric_closure:
            vals |= {-v for v in vals}
        object.__setattr__(self, "phases", tuple(sorted(vals)))

    @classmethod
    def of(cls, values: Iterable, symmetric: bool = False) -> "PhaseSet":
        return cls(tuple(values), symmetric_closure=symmetric)

    @classmethod
    def from_amplitudes(cls, alphas: Iterable) -> "PhaseSet":
        """Phase set ``{+-alpha_k}`` of a sum of cosines with frequencies ``alpha_k``."""
        return cls(tuple(alphas), symmetric_closure=True)

    def is_symmetric(self) -> bool:
        s = set(self.phases)
        return all(-v in s for v in s)

    def __iter__(self):
        return iter(self.phases)

    def __len__(self):
        return len(self.phases)

    def __contains__(self, item) -> bool:
        return Fraction(item) in set(self.phases)


def sumset(a: PhaseSet, b: PhaseSet) -> PhaseSet:
    """Minkowski sum ``{x + y : x in a, y in b}``."""
    sums = {x + y for x in a.phases for y in b.phases}
    return PhaseSet(tuple(sums), symmetric_closure=False)


def iterated_sumsets(a: PhaseSet, k_max: int) -> list[PhaseSet]:
    """``[A, A+A, ..., A+...+A (k_max times)]``."""
    out: list[PhaseSet] = []
    cur = a
    for k in range(1, k_max + 1):
        if k > 1:
            cur = sumset(cur, a)
        out.append(cur)
    return out


def represent(eta, a: PhaseSet, max_terms: int) -> list[tuple[Fraction, ...]]:
    """All multisets of at most ``max_terms`` phases of ``a`` summing to ``eta``.

    Each multiset is reported once, as a sorted tuple; shorter tuples come
    first.
    """
    if max_terms < 1:
        raise ValueError("max_terms must be >= 1")
    eta = _as_fraction(eta)
    found = []
    for k in range(1, max_terms + 1):
        for combo in combinations_with_replacement(a.phases, k):
            if sum(combo, Fraction(0)) == eta:
                found.append(tuple(combo))
    return found


@dataclass(frozen=True)
class ResonanceSet:
    """Candidate embedded energies ``S_p`` for a phase set and order ``p``.

    ``representations`` maps every energy to the sorted phase multisets (with
    positive sum ``eta = 2 sqrt(E)``) that produce it.  ``zero_representations``
    holds the multisets summing to zero; ``E = 0`` is never a candidate.
    """

    order: int
    energies: tuple[Fraction, ...]
    representations: dict = field(default_factory=dict)
    zero_representations: tuple = ()

    def __contains__(self, energy) -> bool:
        return Fraction(energy) in self.representations

    def etas(self) -> list[Fraction]:
        """Positive frequencies ``eta`` matching ``energies`` (same order)."""
        return [_eta_of(e, self) for e in self.energies]


def _eta_of(energy: Fraction, rs: ResonanceSet) -> Fraction:
    return sum(rs.representations[energy][0], Fraction(0))


def build_resonance_set(a: PhaseSet, p: int) -> ResonanceSet:
    """The set ``{eta**2/4 : eta in A + ... + A (k <= p-1 times), eta > 0}``."""
    if p < 1:
        raise ValueError("p must be a positive integer")
    if not a.is_symmetric():
        raise ValueError("phase set must be symmetric (A = -A)")
    reps: dict[Fraction, list] = {}
    zero = []
    # bucket every multiset of size <= p-1 by its (exact) sum
    for k in range(1, p):
        for combo in combinations_with_replacement(a.phases, k):
            eta = sum(combo, Fraction(0))
            if eta == 0:
                zero.append(tuple(combo))
            elif eta > 0:
                reps.setdefault(eta * eta / 4, []).append(tuple(combo))
    if zero:
        logger.info("eta = 0 reachable with %d multisets; E = 0 excluded", len(zero))
    energies = tuple(sorted(reps))
    return ResonanceSet(
        order=p,
        energies=energies,
        representations={e: reps[e] for e in energies},
        zero_representations=tuple(zero),
    )


def is_new_at_order(energy, a: PhaseSet, p: int) -> bool:
    """True iff ``energy`` lies in ``S_p`` but not in ``S_{p-1}``."""
    energy = Fraction(energy)
    if p < 2:
        return False
    if energy not in build_resonance_set(a, p):
        return False
    return energy not in build_resonance_set(a, p - 1)
