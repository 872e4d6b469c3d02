"""Stratum recipe: chains, S(T), lifts, delta sets, and the dimension count.

Given a datum and a subset T of unramified archimedean embeddings, this module
computes the new ramification set S(T) by decomposing ``S_infty union T`` into
maximal cyclic runs (chains), applying the per-chain parity correction, and
dispatching on the per-prime case.  It then assigns alternating lifts upstairs,
derives the delta sets on which the two auxiliary isogenies fail to be
isomorphisms, and verifies the signature bookkeeping identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping

from .places import (
    ArchPlace,
    EmbE,
    EvenPlaceSet,
    Level,
    PrimeType,
    ShimuraDatum,
    canonical_lift,
    classify_prime,
    conjugate,
    frobenius_shift,
    restrict,
)


class StratumError(ValueError):
    """Raised for inputs outside the domain of the stratum recipe."""


class FullCycleError(StratumError):
    """Chain decomposition is undefined when the whole cycle is covered."""


class CaseTag(Enum):
    A1 = "A1"
    A2 = "A2"
    B1 = "B1"
    B2 = "B2"
    A_SHARP_PASS = "ASharpPass"
    B_SHARP_PASS = "BSharpPass"


@dataclass(frozen=True)
class Chain:
    """A maximal cyclic run inside ``S_infty union T`` at one prime."""

    prime_id: str
    top: ArchPlace
    m: int

    def members(self, datum: ShimuraDatum) -> tuple[ArchPlace, ...]:
        return tuple(
            frobenius_shift(datum.places, self.top, -a) for a in range(self.m + 1)
        )


@dataclass(frozen=True)
class StratumDescriptor:
    t: frozenset[ArchPlace]
    t_prime_infty: tuple[tuple[str, frozenset[ArchPlace]], ...]
    t_prime_p: frozenset[str]
    s_of_t: EvenPlaceSet
    i_t: frozenset[ArchPlace]
    n_bundle: int
    case_tags: tuple[tuple[str, CaseTag], ...]
    level_t: tuple[tuple[str, Level], ...]

    def t_prime_at(self, prime_id: str) -> frozenset[ArchPlace]:
        for pid, block in self.t_prime_infty:
            if pid == prime_id:
                return block
        raise StratumError(f"unknown prime id {prime_id!r}")

    def case_at(self, prime_id: str) -> CaseTag:
        for pid, tag in self.case_tags:
            if pid == prime_id:
                return tag
        raise StratumError(f"unknown prime id {prime_id!r}")

    def level_at(self, prime_id: str) -> Level:
        for pid, level in self.level_t:
            if pid == prime_id:
                return level
        raise StratumError(f"unknown prime id {prime_id!r}")


@dataclass(frozen=True)
class PrimeLiftRecipe:
    """Per-prime lift bookkeeping: base lifts and sorted offset lists.

    For cases A1/B1 there is one entry per chain with a nonempty corrected
    intersection; each entry is the chosen lift of the chain top together with
    the sorted offsets ``0 <= a_1 < ... < a_r`` of the corrected set below the
    top.  For A2 the single entry is the anchor lift with the offsets of T
    below it; for B2 it is the anchor lift with the 2r preimage offsets in the
    double cycle.
    """

    prime_id: str
    case: CaseTag
    entries: tuple[tuple[EmbE, tuple[int, ...]], ...]


@dataclass(frozen=True)
class LiftChoice:
    s_tilde_of_t: frozenset[EmbE]
    i_tilde_t: frozenset[EmbE]
    recipes: tuple[PrimeLiftRecipe, ...]

    def recipe_at(self, prime_id: str) -> PrimeLiftRecipe:
        for recipe in self.recipes:
            if recipe.prime_id == prime_id:
                return recipe
        raise StratumError(f"unknown prime id {prime_id!r}")


@dataclass(frozen=True)
class DeltaSets:
    plus: frozenset[EmbE]
    minus: frozenset[EmbE]


@dataclass(frozen=True)
class SignatureProfile:
    s: tuple[tuple[EmbE, int], ...]

    def at(self, emb: EmbE) -> int:
        for key, value in self.s:
            if key == emb:
                return value
        raise StratumError(f"no signature recorded at {emb}")

    def as_dict(self) -> dict[EmbE, int]:
        return dict(self.s)


def _check_t(datum: ShimuraDatum, t: frozenset[ArchPlace]) -> None:
    for tau in t:
        datum.places.check_member(tau)
        if tau in datum.s.s_infty:
            raise StratumError(f"{tau} lies in S_infty; strata index only S-free embeddings")


def chain_decompose(
    datum: ShimuraDatum, prime_id: str, t: frozenset[ArchPlace]
) -> tuple[Chain, ...]:
    """Maximal cyclic runs of ``S_infty union T`` within one prime's cycle.

    Chains are ordered by the cycle index of their top element.
    """
    _check_t(datum, t)
    slot = datum.places.prime(prime_id)
    covered = {
        tau.i
        for tau in (datum.s.s_infty | t)
        if tau.prime_id == prime_id
    }
    if len(covered) >= slot.f:
        raise FullCycleError(
            f"S_infty union T covers the whole cycle at {prime_id!r}"
        )
    chains = []
    tops = sorted(i for i in covered if (i + 1) % slot.f not in covered)
    for top_i in tops:
        m = 0
        while (top_i - m - 1) % slot.f in covered:
            m += 1
        chains.append(Chain(prime_id, ArchPlace(prime_id, top_i), m))
    return tuple(chains)


def stratum_descriptor(datum: ShimuraDatum, t: frozenset[ArchPlace]) -> StratumDescriptor:
    """Compute T', S(T), I_T, N, per-prime case tags and level changes."""
    t = frozenset(t)
    _check_t(datum, t)
    system = datum.places
    t_prime_infty: list[tuple[str, frozenset[ArchPlace]]] = []
    t_prime_p: set[str] = set()
    case_tags: list[tuple[str, CaseTag]] = []
    level_t: list[tuple[str, Level]] = []
    for slot in system.primes:
        pid = slot.id
        cycle = set(system.arch_places(pid))
        t_here = {tau for tau in t if tau.prime_id == pid}
        s_here = datum.s.infty_at(system, pid)
        prime_type = classify_prime(datum, pid)
        if prime_type is PrimeType.BETA_SHARP:
            t_prime_infty.append((pid, frozenset()))
            case_tags.append((pid, CaseTag.B_SHARP_PASS))
            level_t.append((pid, datum.level(pid)))
            continue
        if s_here == cycle:
            t_prime_infty.append((pid, frozenset()))
            case_tags.append((pid, CaseTag.A_SHARP_PASS))
            level_t.append((pid, datum.level(pid)))
            continue
        if s_here | t_here == cycle:
            if prime_type is PrimeType.ALPHA:
                t_prime_infty.append((pid, frozenset(t_here)))
                case_tags.append((pid, CaseTag.A2))
                level_t.append((pid, Level.IWAHORI if t_here else datum.level(pid)))
            else:
                t_prime_infty.append((pid, frozenset(t_here)))
                t_prime_p.add(pid)
                case_tags.append((pid, CaseTag.B2))
                level_t.append((pid, Level.MAXIMAL_ORDER))
            continue
        block: set[ArchPlace] = set()
        for chain in chain_decompose(datum, pid, t):
            hit = {tau for tau in chain.members(datum) if tau in t_here}
            if len(hit) % 2 == 1:
                hit.add(frobenius_shift(system, chain.top, -(chain.m + 1)))
            block |= hit
        t_prime_infty.append((pid, frozenset(block)))
        tag = CaseTag.A1 if prime_type is PrimeType.ALPHA else CaseTag.B1
        case_tags.append((pid, tag))
        level_t.append((pid, datum.level(pid)))
    all_t_prime = frozenset().union(*(block for _, block in t_prime_infty))
    s_of_t = EvenPlaceSet(
        s_infty=datum.s.s_infty | all_t_prime,
        s_p=datum.s.s_p | t_prime_p,
        n_other=datum.s.n_other,
    )
    s_of_t.validate(system)
    i_t = frozenset(s_of_t.s_infty - (datum.s.s_infty | t))
    return StratumDescriptor(
        t=t,
        t_prime_infty=tuple(t_prime_infty),
        t_prime_p=frozenset(t_prime_p),
        s_of_t=s_of_t,
        i_t=i_t,
        n_bundle=len(i_t),
        case_tags=tuple(case_tags),
        level_t=tuple(level_t),
    )


def _offsets_below(system, base: ArchPlace, members: set[ArchPlace], span: int) -> tuple[int, ...]:
    """Sorted offsets a with sigma^{-a}(base) in ``members``, 0 <= a <= span."""
    return tuple(
        a
        for a in range(span + 1)
        if frobenius_shift(system, base, -a) in members
    )


def lift_assignment(
    datum: ShimuraDatum,
    descriptor: StratumDescriptor,
    beta_choices: Mapping[tuple[str, int], int] | None = None,
    a2_anchor: Mapping[str, ArchPlace] | None = None,
    s_lift: frozenset[EmbE] | None = None,
) -> LiftChoice:
    """Choose lifts for S(T): alternating over each corrected chain.

    ``beta_choices`` maps ``(prime_id, top_index)`` (or ``(prime_id, anchor
    index)`` in cases A2/B2) to a sheet selection: for split primes the sheet
    in {0, 1}, for inert primes 0 or 1 meaning the low or high preimage of the
    base embedding.  ``a2_anchor`` overrides the anchor element of T per A2/B2
    prime.  ``s_lift`` fixes the lifts of the untouched ramified embeddings
    (default: canonical lifts).
    """
    system = datum.places
    beta_choices = dict(beta_choices or {})
    a2_anchor = dict(a2_anchor or {})

    if s_lift is None:
        s_lift = frozenset(canonical_lift(system, tau) for tau in datum.s.s_infty)
    seen: dict[ArchPlace, EmbE] = {}
    for emb in s_lift:
        tau = restrict(system, emb)
        if tau not in datum.s.s_infty:
            raise StratumError(f"{emb} does not lift a ramified embedding")
        if tau in seen:
            raise StratumError(f"two lifts supplied for {tau}")
        seen[tau] = emb

    def base_lift(tau: ArchPlace, key_index: int) -> EmbE:
        slot = system.prime(tau.prime_id)
        choice = beta_choices.get((tau.prime_id, key_index), 0)
        if choice not in (0, 1):
            raise StratumError(f"sheet choice must be 0 or 1, got {choice}")
        if slot.e_split:
            return EmbE(tau.prime_id, choice, tau.i)
        return EmbE(tau.prime_id, 0, tau.i + choice * slot.f)

    lifts_out: set[EmbE] = set(s_lift)
    recipes: list[PrimeLiftRecipe] = []
    for slot in system.primes:
        pid = slot.id
        case = descriptor.case_at(pid)
        t_here = {tau for tau in descriptor.t if tau.prime_id == pid}
        entries: list[tuple[EmbE, tuple[int, ...]]] = []
        if case in (CaseTag.A_SHARP_PASS, CaseTag.B_SHARP_PASS):
            recipes.append(PrimeLiftRecipe(pid, case, ()))
            continue
        if case in (CaseTag.A1, CaseTag.B1):
            corrected = set(descriptor.t_prime_at(pid))
            for chain in chain_decompose(datum, pid, descriptor.t):
                a_list = _offsets_below(system, chain.top, corrected, chain.m + 1)
                if not a_list:
                    continue
                if len(a_list) % 2 != 0:
                    raise AssertionError("corrected chain sets always have even size")
                top_tilde = base_lift(chain.top, chain.top.i)
                for rank, a in enumerate(a_list):
                    emb = frobenius_shift(system, top_tilde, -a)
                    if rank % 2 == 1:
                        emb = conjugate(system, emb)
                    lifts_out.add(emb)
                entries.append((top_tilde, a_list))
            recipes.append(PrimeLiftRecipe(pid, case, tuple(entries)))
            continue
        if case is CaseTag.A2:
            anchor = a2_anchor.get(pid, min(t_here, key=lambda tau: tau.i))
            if anchor not in t_here:
                raise StratumError(f"anchor {anchor} is not in T at {pid!r}")
            anchor_tilde = base_lift(anchor, anchor.i)
            a_list = _offsets_below(system, anchor, t_here, slot.f - 1)
            if len(a_list) % 2 != 0:
                raise AssertionError("A2 requires an even number of elements of T")
            for rank, a in enumerate(a_list):
                emb = frobenius_shift(system, anchor_tilde, -a)
                if rank % 2 == 1:
                    emb = conjugate(system, emb)
                lifts_out.add(emb)
            recipes.append(PrimeLiftRecipe(pid, case, ((anchor_tilde, a_list),)))
            continue
        # Case B2: the sorted preimage of T in the double cycle, every other one.
        if slot.e_split:
            raise StratumError(
                f"case B2 at {pid!r} requires the prime to be inert upstairs"
            )
        anchor = a2_anchor.get(pid, min(t_here, key=lambda tau: tau.i))
        if anchor not in t_here:
            raise StratumError(f"anchor {anchor} is not in T at {pid!r}")
        anchor_tilde = base_lift(anchor, anchor.i)
        preimage = {
            emb
            for tau in t_here
            for emb in (EmbE(pid, 0, tau.i), EmbE(pid, 0, tau.i + slot.f))
        }
        a_list = tuple(
            a
            for a in range(2 * slot.f)
            if frobenius_shift(system, anchor_tilde, -a) in preimage
        )
        if len(a_list) % 2 != 0:
            raise AssertionError("B2 preimage offsets come in conjugate pairs")
        for rank, a in enumerate(a_list):
            if rank % 2 == 0:
                lifts_out.add(frobenius_shift(system, anchor_tilde, -a))
        recipes.append(PrimeLiftRecipe(pid, CaseTag.B2, ((anchor_tilde, a_list),)))

    covered = {restrict(system, emb) for emb in lifts_out}
    if covered != set(descriptor.s_of_t.s_infty) or len(lifts_out) != len(covered):
        raise AssertionError("lift assignment must pick exactly one lift per place")

    i_tilde: set[EmbE] = set()
    for tau in descriptor.i_t:
        for emb in (canonical_lift(system, tau), conjugate(system, canonical_lift(system, tau))):
            if conjugate(system, emb) in lifts_out:
                i_tilde.add(emb)
    if {restrict(system, emb) for emb in i_tilde} != set(descriptor.i_t):
        raise AssertionError("every bundle direction must acquire a marked lift")

    return LiftChoice(
        s_tilde_of_t=frozenset(lifts_out),
        i_tilde_t=frozenset(i_tilde),
        recipes=tuple(recipes),
    )


def delta_sets(
    datum: ShimuraDatum, descriptor: StratumDescriptor, lift: LiftChoice
) -> DeltaSets:
    """The embedding sets where the isogenies toward the stratum degenerate.

    For each corrected chain with offsets ``a_1 < ... < a_r``, the minus set
    collects the runs ``sigma^{-l}(base lift)`` for ``a_j <= l < a_{j+1}`` over
    odd ``j``; the plus set is its conjugate image, except in case B2 and the
    pass-through cases where it is empty.
    """
    system = datum.places
    minus: set[EmbE] = set()
    plus: set[EmbE] = set()
    for recipe in lift.recipes:
        if recipe.case in (CaseTag.A_SHARP_PASS, CaseTag.B_SHARP_PASS):
            continue
        local_minus: set[EmbE] = set()
        for base_tilde, a_list in recipe.entries:
            for j in range(0, len(a_list) - 1, 2):
                for offset in range(a_list[j], a_list[j + 1]):
                    local_minus.add(frobenius_shift(system, base_tilde, -offset))
        minus |= local_minus
        if recipe.case is not CaseTag.B2:
            plus |= {conjugate(system, emb) for emb in local_minus}
    return DeltaSets(plus=frozenset(plus), minus=frozenset(minus))


def signature_from_lift(
    datum: ShimuraDatum, ramified_lift: frozenset[EmbE]
) -> SignatureProfile:
    """Signature 0 on the chosen lifts, 2 on their conjugates, 1 elsewhere."""
    system = datum.places
    seen: set[ArchPlace] = set()
    for emb in ramified_lift:
        tau = restrict(system, emb)
        if tau in seen:
            raise StratumError(f"two lifts of {tau} supplied")
        seen.add(tau)
    conj = {conjugate(system, emb) for emb in ramified_lift}
    values = []
    for emb in system.embeddings():
        if emb in ramified_lift:
            values.append((emb, 0))
        elif emb in conj:
            values.append((emb, 2))
        else:
            values.append((emb, 1))
    return SignatureProfile(tuple(values))


def dimension_count_check(
    datum: ShimuraDatum, s: SignatureProfile, delta: DeltaSets
) -> SignatureProfile:
    """Transfer a signature profile across the delta sets.

    Returns the profile ``s(x) - (d-(x) - d+(x)) + (d-(sigma x) - d+(sigma x))``
    where ``d±`` are the indicators of the delta sets; values outside {0, 1, 2}
    signal inconsistent inputs.
    """
    system = datum.places

    def weight(emb: EmbE) -> int:
        return (emb in delta.minus) - (emb in delta.plus)

    values = []
    for emb, value in s.s:
        out = value - weight(emb) + weight(frobenius_shift(system, emb, 1))
        if out not in (0, 1, 2):
            raise StratumError(f"inconsistent signature transfer at {emb}: {out}")
        values.append((emb, out))
    return SignatureProfile(tuple(values))


def descriptor_to_json(descriptor: StratumDescriptor) -> dict:
    return {
        "T": sorted([tau.prime_id, tau.i] for tau in descriptor.t),
        "S_of_T": {
            "infty": sorted([tau.prime_id, tau.i] for tau in descriptor.s_of_t.s_infty),
            "p": sorted(descriptor.s_of_t.s_p),
            "n_other": descriptor.s_of_t.n_other,
        },
        "I_T": sorted([tau.prime_id, tau.i] for tau in descriptor.i_t),
        "N": descriptor.n_bundle,
        "cases": {pid: tag.value for pid, tag in descriptor.case_tags},
        "level_T": {pid: level.value for pid, level in descriptor.level_t},
    }
