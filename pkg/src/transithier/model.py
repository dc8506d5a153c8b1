"""Domain types and the ascending/descending transfer classification."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence


class ChainError(ValueError):
    """Base class for a trip chain that fails validation.

    ``kind`` is the stable name used in ingest reports.
    """

    kind = "ChainError"


class EmptyChain(ChainError):
    kind = "EmptyChain"


class WalkingLeg(ChainError):
    kind = "WalkingLeg"


class NonMonotoneTime(ChainError):
    kind = "NonMonotoneTime"


class NonPositiveDistance(ChainError):
    kind = "NonPositiveDistance"


class UnknownMode(ChainError):
    kind = "UnknownMode"


class RegistryError(ValueError):
    kind = "RegistryError"


class DuplicateId(RegistryError):
    kind = "DuplicateId"


class NonContiguousIds(RegistryError):
    kind = "NonContiguousIds"


class NoWalkingMode(RegistryError):
    kind = "NoWalkingMode"


class MultipleWalkingModes(RegistryError):
    kind = "MultipleWalkingModes"


class Phase(enum.IntEnum):
    ASCENDING = 0
    DESCENDING = 1


@dataclass(frozen=True)
class Mode:
    id: int
    name: str
    is_walking: bool = False


@dataclass(frozen=True)
class ModeRegistry:
    """Ordered set of modes ``1..M`` with exactly one walking mode."""

    modes: tuple[Mode, ...]

    def __post_init__(self):
        modes = tuple(sorted(self.modes, key=lambda m: m.id))
        object.__setattr__(self, "modes", modes)
        ids = [m.id for m in modes]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise DuplicateId(f"duplicate mode ids: {dup}")
        if ids != list(range(1, len(ids) + 1)):
            raise NonContiguousIds(f"mode ids must be 1..M, got {ids}")
        if len(ids) < 2:
            raise NonContiguousIds("at least two modes are required")
        walking = [m.id for m in modes if m.is_walking]
        if not walking:
            raise NoWalkingMode("no mode is flagged as walking")
        if len(walking) > 1:
            raise MultipleWalkingModes(f"several walking modes: {walking}")

    @classmethod
    def from_names(cls, names: Sequence[str], walking: int = 1) -> "ModeRegistry":
        return cls(tuple(Mode(i, n, i == walking) for i, n in enumerate(names, 1)))

    @property
    def M(self) -> int:
        return len(self.modes)

    @property
    def walking(self) -> int:
        return next(m.id for m in self.modes if m.is_walking)

    @property
    def ids(self) -> list[int]:
        return [m.id for m in self.modes]

    @property
    def names(self) -> list[str]:
        return [m.name for m in self.modes]

    def name(self, mode_id: int) -> str:
        return self.modes[mode_id - 1].name

    def __contains__(self, mode_id) -> bool:
        return isinstance(mode_id, int) and 1 <= mode_id <= len(self.modes)

    def to_json(self) -> list[dict]:
        return [{"id": m.id, "name": m.name, "walking": m.is_walking} for m in self.modes]


#: The six modes of the Seoul case study, walking first.
SEOUL_MODES = ModeRegistry.from_names(
    ["walking", "community bus", "urban bus", "intercity bus", "light rail", "metro"]
)


@dataclass(frozen=True)
class Leg:
    mode: int
    distance: float
    board_stop: str = ""
    alight_stop: str = ""
    board_time: float = 0.0
    alight_time: float = 0.0


@dataclass(frozen=True)
class TripChain:
    chain_id: str
    legs: tuple[Leg, ...]
    total_distance: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "legs", tuple(self.legs))
        total = 0.0
        for leg in self.legs:
            total += leg.distance
        object.__setattr__(self, "total_distance", total)

    @property
    def origin_stop(self) -> str:
        return self.legs[0].board_stop

    @property
    def destination_stop(self) -> str:
        return self.legs[-1].alight_stop


@dataclass(frozen=True)
class Transfer:
    from_mode: int
    to_mode: int
    position: float
    phase: Phase


def validate_chain(
    raw_legs: Iterable[Leg], registry: ModeRegistry, chain_id: str = ""
) -> TripChain:
    """Build a :class:`TripChain` from parsed legs, or raise a :class:`ChainError`.

    Checks run class by class over all legs, so a chain with several
    problems always reports the same one: unknown mode, walking leg,
    non-positive distance, then time ordering.
    """
    legs = tuple(raw_legs)
    if not legs:
        raise EmptyChain(f"chain {chain_id!r} has no legs")
    for leg in legs:
        if leg.mode not in registry:
            raise UnknownMode(f"chain {chain_id!r}: unknown mode {leg.mode!r}")
    for leg in legs:
        if leg.mode == registry.walking:
            raise WalkingLeg(f"chain {chain_id!r}: explicit walking leg")
    for leg in legs:
        if not leg.distance > 0:
            raise NonPositiveDistance(
                f"chain {chain_id!r}: leg distance {leg.distance!r} is not positive"
            )
    prev_alight = None
    for leg in legs:
        if leg.alight_time < leg.board_time:
            raise NonMonotoneTime(f"chain {chain_id!r}: alights before boarding")
        if prev_alight is not None and leg.board_time < prev_alight:
            raise NonMonotoneTime(
                f"chain {chain_id!r}: boards at {leg.board_time} before previous "
                f"alighting at {prev_alight}"
            )
        prev_alight = leg.alight_time
    return TripChain(chain_id, legs)


def classify_transfers(chain: TripChain, registry: ModeRegistry) -> list[Transfer]:
    """Split a chain's transfers into ascending and descending phases.

    Walking is implicit: a walk->first-mode transfer at position 0 and a
    last-mode->walk transfer at the total distance bracket the internal
    transfers. A transfer is ascending iff its cumulative distance is
    strictly below half the chain length.
    """
    walk = registry.walking
    half = chain.total_distance / 2
    out = [Transfer(walk, chain.legs[0].mode, 0.0, Phase.ASCENDING)]
    position = 0.0
    for prev, nxt in zip(chain.legs, chain.legs[1:]):
        position += prev.distance
        phase = Phase.ASCENDING if position < half else Phase.DESCENDING
        out.append(Transfer(prev.mode, nxt.mode, position, phase))
    out.append(Transfer(chain.legs[-1].mode, walk, chain.total_distance, Phase.DESCENDING))
    return out
