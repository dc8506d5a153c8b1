"""Origin/destination zone decomposition of the hierarchy analysis."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .hierarchy import HierarchyConfig, HierarchyResult, PhaseCounts, analyze_counts
from .model import ModeRegistry, TripChain, classify_transfers

UNKNOWN_POLICIES = ("skip", "error")


class UnknownStop(KeyError):
    pass


@dataclass(frozen=True)
class ZonePartition:
    """Stop to zone lookup plus the full zone set.

    ``zones`` defaults to the zones named in ``stop_to_zone``; extra zones
    without stops may be listed and get empty results.
    """

    stop_to_zone: Mapping[str, int]
    zones: tuple[int, ...] = ()
    unknown_policy: str = "skip"

    def __post_init__(self):
        mapped = set(self.stop_to_zone.values())
        zones = tuple(sorted(set(self.zones) | mapped))
        object.__setattr__(self, "zones", zones)
        if self.unknown_policy not in UNKNOWN_POLICIES:
            raise ValueError(f"unknown_policy must be one of {UNKNOWN_POLICIES}")

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [(p, q) for p in self.zones for q in self.zones]

    def zone_of(self, stop: str) -> int | None:
        zone = self.stop_to_zone.get(stop)
        if zone is None and self.unknown_policy == "error":
            raise UnknownStop(f"stop {stop!r} is not in the zone map")
        return zone


def assign_zone_pair(chain: TripChain, partition: ZonePartition) -> tuple[int, int] | None:
    """``(origin zone, destination zone)`` of a chain, or None when skipped."""
    p = partition.zone_of(chain.origin_stop)
    q = partition.zone_of(chain.destination_stop)
    if p is None or q is None:
        return None
    return p, q


def pair_key(p, q) -> str:
    return f"{p}->{q}"


@dataclass
class ZonalResults:
    pairs: dict[tuple[int, int], HierarchyResult]
    skipped_unknown: int = 0
    totals: HierarchyResult | None = None

    def chain_count(self, p, q) -> int:
        return self.pairs[p, q].counts.chains_counted

    @property
    def chains_assigned(self) -> int:
        return sum(r.counts.chains_counted for r in self.pairs.values())

    @property
    def chains_processed(self) -> int:
        return self.chains_assigned + self.skipped_unknown


def build_results(
    counts: Mapping[tuple[int, int], PhaseCounts],
    partition: ZonePartition,
    registry: ModeRegistry,
    config: HierarchyConfig,
    skipped: int,
) -> ZonalResults:
    results = {}
    total = PhaseCounts(registry.M)
    for pair in partition.pairs:
        c = counts.get(pair) or PhaseCounts(registry.M)
        results[pair] = analyze_counts(c, registry, config)
        total = total + c
    return ZonalResults(results, skipped, analyze_counts(total, registry, config))


def zonal_analyze(
    chains: Iterable[TripChain],
    partition: ZonePartition,
    registry: ModeRegistry,
    config: HierarchyConfig = HierarchyConfig(),
) -> ZonalResults:
    """Route each chain to its zone pair and analyze every pair separately."""
    M = registry.M
    cubes: dict[tuple[int, int], np.ndarray] = {}
    chains_in: dict[tuple[int, int], int] = {}
    skipped = 0
    for chain in chains:
        pair = assign_zone_pair(chain, partition)
        if pair is None:
            skipped += 1
            continue
        cube = cubes.get(pair)
        if cube is None:
            cube = cubes[pair] = np.zeros((2, M, M), dtype=np.int64)
            chains_in[pair] = 0
        for t in classify_transfers(chain, registry):
            cube[t.phase, t.from_mode - 1, t.to_mode - 1] += 1
        chains_in[pair] += 1
    counts = {
        pair: PhaseCounts(M, cube[0], cube[1], chains_in[pair]) for pair, cube in cubes.items()
    }
    return build_results(counts, partition, registry, config, skipped)
