"""Cyclic embedding sets with Frobenius action, ramification data, and prime types.

A totally real base field is modeled only through its p-adic primes: each prime
contributes a cycle of archimedean embeddings of length ``f`` (the inertia
degree), on which the Frobenius ``sigma`` acts by a unit rotation.  The CM
quadratic extension is modeled through a split/inert flag per prime: the
embeddings upstairs form either two sheets of length ``f`` swapped by
conjugation (split) or a single cycle of length ``2f`` on which conjugation is
the half turn (inert).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping


class PlaceError(ValueError):
    """Raised for structurally invalid place-system data."""


@dataclass(frozen=True, order=True)
class PrimeSlot:
    """One p-adic prime: an id, its inertia degree, and its behavior upstairs."""

    id: str
    f: int
    e_split: bool

    def __post_init__(self) -> None:
        if self.f < 1:
            raise PlaceError(f"inertia degree must be >= 1, got {self.f}")


@dataclass(frozen=True, order=True)
class ArchPlace:
    """An archimedean embedding of the base field: a residue in the f-cycle."""

    prime_id: str
    i: int


@dataclass(frozen=True, order=True)
class EmbE:
    """An embedding of the CM field.

    For a split prime, ``sheet`` is 0 or 1 and ``i`` is a residue mod f; the
    two sheets are swapped by conjugation.  For an inert prime, ``sheet`` is
    always 0 and ``i`` is a residue mod 2f; conjugation adds f.
    """

    prime_id: str
    sheet: int
    i: int


@dataclass(frozen=True)
class PlaceSystem:
    """The full collection of embedding cycles, one per p-adic prime."""

    primes: tuple[PrimeSlot, ...]

    def __post_init__(self) -> None:
        ids = [slot.id for slot in self.primes]
        if len(set(ids)) != len(ids):
            raise PlaceError(f"duplicate prime ids in {ids}")

    def prime(self, prime_id: str) -> PrimeSlot:
        for slot in self.primes:
            if slot.id == prime_id:
                return slot
        raise PlaceError(f"unknown prime id {prime_id!r}")

    def arch_places(self, prime_id: str | None = None) -> tuple[ArchPlace, ...]:
        slots = self.primes if prime_id is None else (self.prime(prime_id),)
        return tuple(
            ArchPlace(slot.id, i) for slot in slots for i in range(slot.f)
        )

    def embeddings(self, prime_id: str | None = None) -> tuple[EmbE, ...]:
        slots = self.primes if prime_id is None else (self.prime(prime_id),)
        out: list[EmbE] = []
        for slot in slots:
            if slot.e_split:
                out.extend(
                    EmbE(slot.id, sheet, i)
                    for sheet in (0, 1)
                    for i in range(slot.f)
                )
            else:
                out.extend(EmbE(slot.id, 0, j) for j in range(2 * slot.f))
        return tuple(out)

    def check_member(self, x: ArchPlace | EmbE) -> None:
        slot = self.prime(x.prime_id)
        if isinstance(x, ArchPlace):
            if not 0 <= x.i < slot.f:
                raise PlaceError(f"{x} out of range for f={slot.f}")
            return
        if slot.e_split:
            if x.sheet not in (0, 1) or not 0 <= x.i < slot.f:
                raise PlaceError(f"{x} invalid for split prime with f={slot.f}")
        else:
            if x.sheet != 0 or not 0 <= x.i < 2 * slot.f:
                raise PlaceError(f"{x} invalid for inert prime with f={slot.f}")


def build_place_system(spec: Iterable[tuple[int, bool]]) -> PlaceSystem:
    """Build a PlaceSystem from (f, e_split) pairs, generating ids p1, p2, ..."""
    slots = tuple(
        PrimeSlot(f"p{k}", f, bool(e_split))
        for k, (f, e_split) in enumerate(spec, start=1)
    )
    if not slots:
        raise PlaceError("at least one prime is required")
    return PlaceSystem(slots)


def frobenius_shift(system: PlaceSystem, x: ArchPlace | EmbE, k: int):
    """Apply sigma^k to an embedding (rotation within its cycle or sheet)."""
    system.check_member(x)
    slot = system.prime(x.prime_id)
    if isinstance(x, ArchPlace):
        return ArchPlace(x.prime_id, (x.i + k) % slot.f)
    modulus = slot.f if slot.e_split else 2 * slot.f
    return EmbE(x.prime_id, x.sheet, (x.i + k) % modulus)


def conjugate(system: PlaceSystem, x: EmbE) -> EmbE:
    """Apply complex conjugation: swap sheets (split) or add f (inert)."""
    system.check_member(x)
    slot = system.prime(x.prime_id)
    if slot.e_split:
        return EmbE(x.prime_id, 1 - x.sheet, x.i)
    return EmbE(x.prime_id, 0, (x.i + slot.f) % (2 * slot.f))


def restrict(system: PlaceSystem, x: EmbE) -> ArchPlace:
    """The two-to-one restriction from CM-field embeddings to base embeddings."""
    system.check_member(x)
    slot = system.prime(x.prime_id)
    return ArchPlace(x.prime_id, x.i % slot.f)


def lifts(system: PlaceSystem, tau: ArchPlace) -> tuple[EmbE, EmbE]:
    """The two CM-field embeddings restricting to ``tau``."""
    system.check_member(tau)
    slot = system.prime(tau.prime_id)
    if slot.e_split:
        return EmbE(tau.prime_id, 0, tau.i), EmbE(tau.prime_id, 1, tau.i)
    return EmbE(tau.prime_id, 0, tau.i), EmbE(tau.prime_id, 0, tau.i + slot.f)


def canonical_lift(system: PlaceSystem, tau: ArchPlace) -> EmbE:
    """The sheet-0 / low-residue lift of ``tau``; the default everywhere."""
    return lifts(system, tau)[0]


class Level(Enum):
    """Level structure at a p-adic prime."""

    HYPERSPECIAL = "hyperspecial"
    IWAHORI = "iwahori"
    MAXIMAL_ORDER = "maximal_order"


class PrimeType(Enum):
    ALPHA = "alpha"
    ALPHA_SHARP = "alpha_sharp"
    BETA = "beta"
    BETA_SHARP = "beta_sharp"


@dataclass(frozen=True)
class EvenPlaceSet:
    """A ramification set: archimedean part, p-adic part, and an away-from-p count.

    The total cardinality must be even, and a ramified p-adic prime forces all
    of its archimedean cycle into the archimedean part.
    """

    s_infty: frozenset[ArchPlace]
    s_p: frozenset[str]
    n_other: int

    def __post_init__(self) -> None:
        if self.n_other < 0:
            raise PlaceError("n_other must be nonnegative")
        if (len(self.s_infty) + len(self.s_p) + self.n_other) % 2 != 0:
            raise PlaceError("ramification set must have even total cardinality")

    def validate(self, system: PlaceSystem) -> None:
        for tau in self.s_infty:
            system.check_member(tau)
        for pid in self.s_p:
            system.prime(pid)
            cycle = set(system.arch_places(pid))
            if not cycle <= self.s_infty:
                raise PlaceError(
                    f"prime {pid!r} is ramified but its archimedean cycle "
                    "is not fully contained in s_infty"
                )

    def infty_at(self, system: PlaceSystem, prime_id: str) -> frozenset[ArchPlace]:
        return frozenset(t for t in self.s_infty if t.prime_id == prime_id)


@dataclass(frozen=True)
class ShimuraDatum:
    """A place system, a ramification set, and a level flag per prime."""

    places: PlaceSystem
    s: EvenPlaceSet
    level_p: tuple[tuple[str, Level], ...]

    def __post_init__(self) -> None:
        self.s.validate(self.places)
        known = {slot.id for slot in self.places.primes}
        seen = set()
        for pid, level in self.level_p:
            if pid not in known:
                raise PlaceError(f"level flag for unknown prime {pid!r}")
            if pid in seen:
                raise PlaceError(f"duplicate level flag for {pid!r}")
            seen.add(pid)
            cycle = set(self.places.arch_places(pid))
            if level is Level.MAXIMAL_ORDER and pid not in self.s.s_p:
                raise PlaceError(f"maximal-order level at unramified prime {pid!r}")
            if level is Level.IWAHORI and (
                pid in self.s.s_p or not cycle <= self.s.s_infty
            ):
                raise PlaceError(
                    f"Iwahori level at {pid!r} requires a fully ramified "
                    "archimedean cycle and an unramified prime"
                )
        for pid in self.s.s_p:
            if self.level(pid) is not Level.MAXIMAL_ORDER:
                raise PlaceError(f"ramified prime {pid!r} must carry maximal-order level")

    def level(self, prime_id: str) -> Level:
        for pid, level in self.level_p:
            if pid == prime_id:
                return level
        self.places.prime(prime_id)
        return Level.HYPERSPECIAL


def make_datum(
    system: PlaceSystem,
    s_infty: Iterable[ArchPlace] = (),
    s_p: Iterable[str] = (),
    n_other: int | None = None,
    level: Mapping[str, Level] | None = None,
) -> ShimuraDatum:
    """Convenience constructor; with ``n_other=None`` the parity pad is chosen."""
    s_infty = frozenset(s_infty)
    s_p = frozenset(s_p)
    if n_other is None:
        n_other = (len(s_infty) + len(s_p)) % 2
    level_items: dict[str, Level] = dict(level or {})
    for pid in s_p:
        level_items.setdefault(pid, Level.MAXIMAL_ORDER)
    return ShimuraDatum(
        places=system,
        s=EvenPlaceSet(s_infty, s_p, n_other),
        level_p=tuple(sorted(level_items.items(), key=lambda kv: kv[0])),
    )


def classify_prime(datum: ShimuraDatum, prime_id: str) -> PrimeType:
    """Classify a prime by the parity of its unramified cycle and its level."""
    slot = datum.places.prime(prime_id)
    if prime_id in datum.s.s_p:
        return PrimeType.BETA_SHARP
    cycle = set(datum.places.arch_places(prime_id))
    free = cycle - set(datum.s.s_infty)
    if len(free) % 2 == 1:
        return PrimeType.BETA
    if not free and datum.level(prime_id) is Level.IWAHORI:
        return PrimeType.ALPHA_SHARP
    return PrimeType.ALPHA


def n_tau(datum: ShimuraDatum, tau: ArchPlace) -> tuple[int, ArchPlace, ArchPlace]:
    """Gap data at an unramified embedding.

    Returns ``(n, tau_minus, tau_plus)`` where ``n >= 1`` is the number of steps
    back to the previous unramified embedding ``tau_minus = sigma^{-n} tau``,
    and ``tau_plus`` is the unique unramified embedding whose own minus is
    ``tau``.
    """
    system = datum.places
    system.check_member(tau)
    s_infty = datum.s.s_infty
    if tau in s_infty:
        raise PlaceError(f"{tau} lies in the ramified archimedean set")
    cycle = set(system.arch_places(tau.prime_id))
    if cycle <= s_infty:
        raise PlaceError(f"prime {tau.prime_id!r} has no unramified embeddings")
    n = 1
    current = frobenius_shift(system, tau, -1)
    while current in s_infty:
        n += 1
        current = frobenius_shift(system, current, -1)
    tau_minus = current
    m = 1
    current = frobenius_shift(system, tau, 1)
    while current in s_infty:
        m += 1
        current = frobenius_shift(system, current, 1)
    tau_plus = current
    return n, tau_minus, tau_plus


# --- JSON serialization ------------------------------------------------------

_LEVEL_BY_NAME = {level.value: level for level in Level}


def system_to_json(system: PlaceSystem) -> dict:
    return {
        "primes": [
            {"id": slot.id, "f": slot.f, "e_split": slot.e_split}
            for slot in system.primes
        ]
    }


def system_from_json(data: Mapping) -> PlaceSystem:
    return PlaceSystem(
        tuple(
            PrimeSlot(str(entry["id"]), int(entry["f"]), bool(entry["e_split"]))
            for entry in data["primes"]
        )
    )


def datum_to_json(datum: ShimuraDatum) -> dict:
    return {
        **system_to_json(datum.places),
        "S": {
            "infty": sorted([t.prime_id, t.i] for t in datum.s.s_infty),
            "p": sorted(datum.s.s_p),
            "n_other": datum.s.n_other,
        },
        "level": {pid: level.value for pid, level in datum.level_p},
    }


def datum_from_json(data: Mapping) -> ShimuraDatum:
    system = system_from_json(data)
    s_block = data.get("S", {})
    s_infty = frozenset(
        ArchPlace(str(pid), int(i)) for pid, i in s_block.get("infty", [])
    )
    s_p = frozenset(str(pid) for pid in s_block.get("p", []))
    n_other = int(s_block.get("n_other", 0))
    level_block = data.get("level", {})
    level_items = []
    for pid, name in level_block.items():
        if name not in _LEVEL_BY_NAME:
            raise PlaceError(f"unknown level flag {name!r}")
        level_items.append((str(pid), _LEVEL_BY_NAME[name]))
    return ShimuraDatum(
        places=system,
        s=EvenPlaceSet(s_infty, s_p, n_other),
        level_p=tuple(sorted(level_items, key=lambda kv: kv[0])),
    )
