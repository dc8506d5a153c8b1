"""File-level analysis: columnar scan with a reference-parser fallback."""

from __future__ import annotations

import logging

import numpy as np
import pyarrow as pa
import pyarrow.compute as pc

from .hierarchy import HierarchyConfig, HierarchyResult, PhaseCounts, accumulate, analyze_counts
from .ingest import IngestReport, parse_chains
from .model import ModeRegistry, classify_transfers
from .scan import Untypable, group_counts, iter_chain_batches
from .zonal import UnknownStop, ZonalResults, ZonePartition, build_results, zonal_analyze

log = logging.getLogger(__name__)


def set_threads(threads: int | None) -> None:
    if threads:
        pa.set_cpu_count(max(1, int(threads)))
        pa.set_io_thread_count(max(1, int(threads)))


def count_file(path, registry: ModeRegistry) -> tuple[PhaseCounts, IngestReport]:
    """Phase counts and ingest report for a chains CSV."""
    M, walk = registry.M, registry.walking
    report = IngestReport()
    flat = np.zeros(2 * M * M, dtype=np.int64)
    chains = 0
    try:
        for batch in iter_chain_batches(path, registry, report):
            flat += group_counts(batch, M, walk)[0]
            chains += batch.n_chains
        return PhaseCounts.from_flat(flat, M, chains), report
    except Untypable as exc:
        log.info("columnar scan gave up (%s); re-reading with the row parser", exc)
    report = IngestReport()
    counts = accumulate(
        (classify_transfers(c, registry) for c in parse_chains(path, registry, report)), M
    )
    return counts, report


def analyze_file(
    path, registry: ModeRegistry, config: HierarchyConfig = HierarchyConfig()
) -> tuple[HierarchyResult, IngestReport]:
    counts, report = count_file(path, registry)
    return analyze_counts(counts, registry, config), report


def _zone_codes(stops: pa.Array, lookup: pa.Array, codes: np.ndarray, partition) -> np.ndarray:
    pos = pc.index_in(stops, value_set=lookup).to_numpy(zero_copy_only=False)
    missing = np.isnan(pos) if pos.dtype.kind == "f" else np.zeros(len(pos), dtype=bool)
    out = np.full(len(stops), -1, dtype=np.int64)
    out[~missing] = codes[pos[~missing].astype(np.int64)]
    if missing.any() and partition.unknown_policy == "error":
        raise UnknownStop(f"stop {stops[int(np.flatnonzero(missing)[0])].as_py()!r} is not in the zone map")
    return out


def zonal_file(
    path,
    registry: ModeRegistry,
    partition: ZonePartition,
    config: HierarchyConfig = HierarchyConfig(),
) -> tuple[ZonalResults, IngestReport]:
    """Per zone pair results for a chains CSV."""
    M, walk = registry.M, registry.walking
    zones = list(partition.zones)
    Z = len(zones)
    stops = list(partition.stop_to_zone)
    lookup = pa.array(stops, type=pa.string())
    zone_index = {z: k for k, z in enumerate(zones)}
    codes = np.array([zone_index[partition.stop_to_zone[s]] for s in stops], dtype=np.int64)
    report = IngestReport()
    flat = np.zeros((Z * Z, 2 * M * M), dtype=np.int64)
    per_pair = np.zeros(Z * Z, dtype=np.int64)
    skipped = 0
    try:
        for batch in iter_chain_batches(path, registry, report, want_stops=True):
            p = _zone_codes(batch.origin_stop, lookup, codes, partition)
            q = _zone_codes(batch.destination_stop, lookup, codes, partition)
            group = np.where((p >= 0) & (q >= 0), p * Z + q, -1)
            skipped += int((group < 0).sum())
            per_pair += np.bincount(group[group >= 0], minlength=Z * Z)
            flat += group_counts(batch, M, walk, group, Z * Z)
    except Untypable as exc:
        log.info("columnar scan gave up (%s); re-reading with the row parser", exc)
        report = IngestReport()
        chains = parse_chains(path, registry, report)
        return zonal_analyze(chains, partition, registry, config), report
    counts = {}
    for k, pair in enumerate((p, q) for p in zones for q in zones):
        if per_pair[k]:
            counts[pair] = PhaseCounts.from_flat(flat[k], M, per_pair[k])
    return build_results(counts, partition, registry, config, skipped), report
