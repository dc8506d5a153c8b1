"""Columnar chain scanner for large files.

Reads the chains CSV in blocks with pyarrow, validates whole chains with
vectorized checks and turns accepted chains into transfer counts without
building per-chain Python objects. Semantics follow
:func:`transithier.ingest.parse_chains` exactly; any row that pyarrow
cannot type (wrong field count, non-numeric text) makes the scanner give
up and the caller re-reads the file with the reference parser.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterator

import numpy as np
import pandas as pd
import pyarrow as pa
import pyarrow.compute as pc
import pyarrow.csv as pacsv

from .ingest import CHAIN_COLUMNS, IngestReport, MissingHeader, _read_header
from .model import ModeRegistry

BLOCK_BYTES = 8 << 20

# rejection reasons in priority order, matching the reference parser
REASONS = (
    "NonContiguousChain",
    "MalformedRow",
    "GapInLegIndex",
    "UnknownMode",
    "WalkingLeg",
    "NonPositiveDistance",
    "NonMonotoneTime",
)

_TYPES = {
    "chain_id": pa.string(),
    "leg_index": pa.int64(),
    "mode_id": pa.int64(),
    "board_stop_id": pa.string(),
    "alight_stop_id": pa.string(),
    "board_time": pa.float64(),
    "alight_time": pa.float64(),
    "distance_m": pa.float64(),
}


class Untypable(Exception):
    """Raised when the file holds rows pyarrow cannot parse into typed columns."""


@dataclass
class ChainBatch:
    """Accepted chains laid out as flat leg arrays.

    ``offsets`` has one entry per chain plus a final end offset, so chain
    ``k`` owns legs ``offsets[k]:offsets[k+1]``.
    """

    mode: np.ndarray
    distance: np.ndarray
    offsets: np.ndarray
    origin_stop: pa.Array | None = None
    destination_stop: pa.Array | None = None

    @property
    def n_chains(self) -> int:
        return len(self.offsets) - 1


class _DigestIndex:
    """Set of 63-bit chain id digests, each tagged with its first-run outcome.

    The outcome lives in the lowest bit so a level is one sorted uint64
    array. Levels merge when a new one grows comparable in size, so a
    lookup touches O(log n) arrays.
    """

    _TAG = np.uint64(1)

    def __init__(self):
        self.levels: list[np.ndarray] = []

    def lookup(self, keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        keys = keys & ~self._TAG
        found = np.zeros(len(keys), dtype=bool)
        status = np.zeros(len(keys), dtype=bool)
        for level in self.levels:
            idx = np.searchsorted(level, keys)
            idx[idx == len(level)] = 0
            entry = level[idx]
            hit = (entry & ~self._TAG) == keys
            found |= hit
            status[hit] = (entry[hit] & self._TAG).astype(bool)
        return found, status

    def add(self, keys: np.ndarray, ok: np.ndarray) -> None:
        if not len(keys):
            return
        level = np.sort((keys & ~self._TAG) | ok.astype(np.uint64))
        while self.levels and len(self.levels[-1]) <= 2 * len(level):
            level = np.concatenate([self.levels.pop(), level])
            level.sort(kind="stable")
        self.levels.append(level)

    def __len__(self):
        return sum(len(level) for level in self.levels)


def _run_any(flags: np.ndarray, starts: np.ndarray) -> np.ndarray:
    if not len(starts):
        return np.zeros(0, dtype=bool)
    return np.logical_or.reduceat(flags, starts)


def _digest(ids: pa.Array) -> np.ndarray:
    return pd.util.hash_array(np.asarray(ids.to_numpy(zero_copy_only=False), dtype=object))


def _header_line(fh) -> bytes:
    """Consume and check the header line."""
    line = fh.readline()
    while line and not line.strip():
        line = fh.readline()
    text = line.decode("utf-8-sig", errors="replace")
    found = _read_header(csv.reader([text]), CHAIN_COLUMNS, "chains file")
    if found is None:
        raise MissingHeader(f"chains file: empty input, expected header {','.join(CHAIN_COLUMNS)}")
    return line


def _blocks(fh, block_bytes: int) -> Iterator[bytes]:
    """Newline-aligned byte blocks of the rest of ``fh``."""
    tail = b""
    while True:
        data = fh.read(block_bytes)
        if not data:
            if tail.strip():
                yield tail
            return
        data = tail + data
        cut = data.rfind(b"\n") + 1
        if cut == 0:
            tail = data
            continue
        tail = data[cut:]
        yield data[:cut]


_CONVERT = pacsv.ConvertOptions(
    column_types=_TYPES,
    include_columns=list(CHAIN_COLUMNS),
    null_values=[],
    strings_can_be_null=False,
    quoted_strings_can_be_null=False,
)


def _parse_block(block: bytes, names: list[str]) -> pa.Table:
    if b'"' in block:
        # quoted fields may hide newlines; leave them to the row parser
        raise Untypable("quoted fields")
    try:
        return pacsv.read_csv(
            io.BytesIO(block),
            read_options=pacsv.ReadOptions(column_names=names, use_threads=False),
            convert_options=_CONVERT,
        )
    except pa.ArrowInvalid as exc:
        raise Untypable(str(exc)) from None


class _Scanner:
    def __init__(self, registry: ModeRegistry, report: IngestReport, want_stops: bool):
        self.M = registry.M
        self.walking = registry.walking
        self.report = report
        self.want_stops = want_stops
        self.index = _DigestIndex()
        self.flipped: set[int] = set()

    def process(self, table: pa.Table) -> ChainBatch | None:
        n = table.num_rows
        if n == 0:
            return None
        report = self.report
        report.rows_read += n
        cid = table.column("chain_id").combine_chunks()
        boundary = np.ones(n, dtype=bool)
        if n > 1:
            boundary[1:] = pc.not_equal(cid.slice(1), cid.slice(0, n - 1)).to_numpy(
                zero_copy_only=False
            )
        starts = np.flatnonzero(boundary)
        lengths = np.diff(np.append(starts, n))
        pos = np.arange(n) - np.repeat(starts, lengths)

        col = lambda name: table.column(name).to_numpy()
        leg, mode = col("leg_index"), col("mode_id")
        bt, at, dist = col("board_time"), col("alight_time"), col("distance_m")

        malformed = ~(np.isfinite(bt) & np.isfinite(at) & np.isfinite(dist))
        for name in ("chain_id", "board_stop_id", "alight_stop_id"):
            malformed |= pc.equal(pc.binary_length(table.column(name)), 0).to_numpy()
        prev_at = np.empty(n)
        prev_at[1:] = at[:-1]
        prev_at[starts] = -np.inf
        checks = (
            malformed,
            leg != pos + 1,
            (mode < 1) | (mode > self.M),
            mode == self.walking,
            ~(dist > 0),
            (at < bt) | (bt < prev_at),
        )
        reason = np.zeros(len(starts), dtype=np.int8)
        for code in range(len(checks), 0, -1):
            reason[_run_any(checks[code - 1], starts)] = code + 1
        ok = reason == 0

        digests = _digest(cid.take(pa.array(starts)))
        _, first_idx, inverse = np.unique(digests, return_index=True, return_inverse=True)
        first_in_batch = np.zeros(len(starts), dtype=bool)
        first_in_batch[first_idx] = True
        known, known_ok = self.index.lookup(digests)
        repeat = known | ~first_in_batch
        fresh = ~repeat

        if repeat.any():
            prior_ok = np.where(known, known_ok, ok[first_idx[inverse.ravel()]])
            for d in np.unique(digests[repeat & prior_ok]).tolist():
                if d not in self.flipped:
                    self.flipped.add(d)
                    report.chains_accepted -= 1
                    report.late_rejections += 1
                    report.reject("NonContiguousChain")

        accepted = fresh & ok
        report.chains_accepted += int(accepted.sum())
        bad = reason[fresh & ~ok]
        for code, count in zip(*np.unique(bad, return_counts=True)):
            report.chains_rejected += int(count)
            report.rejection_reasons[REASONS[code - 1]] += int(count)
        self.index.add(digests[fresh], ok[fresh])

        if not accepted.any():
            return None
        rows = np.repeat(accepted, lengths)
        kept_lengths = lengths[accepted]
        offsets = np.zeros(len(kept_lengths) + 1, dtype=np.int64)
        np.cumsum(kept_lengths, out=offsets[1:])
        batch = ChainBatch(mode[rows], dist[rows], offsets)
        if self.want_stops:
            first_rows = starts[accepted]
            last_rows = first_rows + kept_lengths - 1
            batch.origin_stop = table.column("board_stop_id").take(pa.array(first_rows))
            batch.destination_stop = table.column("alight_stop_id").take(pa.array(last_rows))
        return batch


def _last_run_start(cid: pa.ChunkedArray) -> int:
    arr = cid.combine_chunks() if isinstance(cid, pa.ChunkedArray) else cid
    n = len(arr)
    last = arr[n - 1]
    diff = pc.not_equal(arr, last).to_numpy(zero_copy_only=False)
    hits = np.flatnonzero(diff)
    return int(hits[-1]) + 1 if len(hits) else 0


def iter_chain_batches(
    path,
    registry: ModeRegistry,
    report: IngestReport,
    *,
    want_stops: bool = False,
    block_bytes: int = BLOCK_BYTES,
) -> Iterator[ChainBatch]:
    """Yield accepted chains of a chains CSV as :class:`ChainBatch` blocks.

    Raises :class:`Untypable` as soon as a block cannot be typed; the
    report is then partial and must be discarded.
    """
    scanner = _Scanner(registry, report, want_stops)
    with open(path, "rb") as fh:
        header = _header_line(fh).decode("utf-8-sig")
        names = [h.strip() for h in next(csv.reader([header]))]
        carry = None
        for block in _blocks(fh, block_bytes):
            table = _parse_block(block, names)
            if carry is not None:
                table = pa.concat_tables([carry, table])
            if table.num_rows == 0:
                continue
            cut = _last_run_start(table.column("chain_id"))
            carry = table.slice(cut).combine_chunks()
            batch = scanner.process(table.slice(0, cut).combine_chunks())
            if batch is not None:
                yield batch
        if carry is not None:
            batch = scanner.process(carry)
            if batch is not None:
                yield batch


def _cumulative(distance: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    # sequential running sum per chain, rounding exactly like a Python loop
    cum = distance.copy()
    starts = offsets[:-1]
    lengths = np.diff(offsets)
    k = 1
    while True:
        live = lengths > k
        if not live.any():
            break
        starts, lengths = starts[live], lengths[live]
        rows = starts + k
        cum[rows] = cum[rows - 1] + distance[rows]
        k += 1
    return cum


def _codes(batch: ChainBatch, M: int, walking: int) -> tuple[np.ndarray, np.ndarray]:
    mode, offsets = batch.mode, batch.offsets
    n_chains = batch.n_chains
    lengths = np.diff(offsets)
    chain_of_row = np.repeat(np.arange(n_chains), lengths)
    cum = _cumulative(batch.distance, offsets)
    total = cum[offsets[1:] - 1]
    half = total / 2
    MM = M * M
    internal = np.ones(len(mode), dtype=bool)
    internal[offsets[1:] - 1] = False
    r = np.flatnonzero(internal)
    phase = (cum[r] >= half[chain_of_row[r]]).astype(np.int64)
    inner = phase * MM + (mode[r] - 1) * M + (mode[r + 1] - 1)
    first = (walking - 1) * M + (mode[offsets[:-1]] - 1)
    last = MM + (mode[offsets[1:] - 1] - 1) * M + (walking - 1)
    codes = np.concatenate([first, inner, last])
    owner = np.concatenate([np.arange(n_chains), chain_of_row[r], np.arange(n_chains)])
    return codes, owner


def group_counts(
    batch: ChainBatch, M: int, walking: int, group: np.ndarray | None = None, n_groups: int = 1
) -> np.ndarray:
    """Transfer counts per chain group, shape ``(n_groups, 2*M*M)``.

    ``group`` assigns each chain of the batch to a group; chains with a
    negative group are dropped.
    """
    size = 2 * M * M
    codes, owner = _codes(batch, M, walking)
    if group is None:
        return np.bincount(codes, minlength=size).reshape(1, size)
    g = group[owner]
    keep = g >= 0
    flat = np.bincount(g[keep] * size + codes[keep], minlength=n_groups * size)
    return flat.reshape(n_groups, size)
