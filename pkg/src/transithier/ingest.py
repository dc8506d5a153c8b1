"""Streaming readers for chain files, mode registries and zone maps.

The chain reader here is the reference implementation: one pass, one
chain's rows in memory, every rejected chain tallied by reason. The
columnar scanner in :mod:`transithier.scan` must agree with it.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

from .model import ChainError, Leg, Mode, ModeRegistry, RegistryError, TripChain, validate_chain

CHAIN_COLUMNS = (
    "chain_id",
    "leg_index",
    "mode_id",
    "board_stop_id",
    "alight_stop_id",
    "board_time",
    "alight_time",
    "distance_m",
)
ZONE_COLUMNS = ("stop_id", "zone_id")


class IngestError(ValueError):
    """A fatal input problem: the file cannot be read as a whole."""


class MissingHeader(IngestError):
    pass


class MalformedRow(ChainError, IngestError):
    kind = "MalformedRow"


class NonContiguousChain(ChainError):
    kind = "NonContiguousChain"


class GapInLegIndex(ChainError):
    kind = "GapInLegIndex"


class ConflictingZone(IngestError):
    pass


class MalformedRegistry(RegistryError):
    kind = "MalformedRegistry"


@dataclass
class IngestReport:
    """Per-file chain accounting.

    Counts are per distinct ``chain_id``. ``late_rejections`` counts
    chains whose first run of rows was already accepted when the same id
    reappeared further down the file; they are reported as rejected but
    their first run has been emitted.
    """

    chains_accepted: int = 0
    chains_rejected: int = 0
    rejection_reasons: Counter = field(default_factory=Counter)
    rows_read: int = 0
    late_rejections: int = 0

    @property
    def chains_encountered(self) -> int:
        return self.chains_accepted + self.chains_rejected

    def reject(self, kind: str) -> None:
        self.chains_rejected += 1
        self.rejection_reasons[kind] += 1

    def __add__(self, other: "IngestReport") -> "IngestReport":
        return IngestReport(
            self.chains_accepted + other.chains_accepted,
            self.chains_rejected + other.chains_rejected,
            self.rejection_reasons + other.rejection_reasons,
            self.rows_read + other.rows_read,
            self.late_rejections + other.late_rejections,
        )

    def to_json(self) -> dict:
        return {
            "chains_accepted": self.chains_accepted,
            "chains_rejected": self.chains_rejected,
            "rejection_reasons": dict(sorted(self.rejection_reasons.items())),
            "rows_read": self.rows_read,
            "late_rejections": self.late_rejections,
        }


@contextmanager
def open_text(source) -> Iterator[IO[str]]:
    """Yield a text handle for a path, a binary stream or a text stream."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8-sig", newline="") as fh:
            yield fh
    elif isinstance(source, (io.TextIOBase,)) or hasattr(source, "encoding"):
        yield source
    else:
        wrapper = io.TextIOWrapper(source, encoding="utf-8-sig", newline="")
        try:
            yield wrapper
        finally:
            wrapper.detach()


def _read_header(reader, expected, what) -> tuple[list[int], int] | None:
    """Column positions of ``expected`` and the header width; None if no input."""
    for header in reader:
        if header:
            break
    else:
        return None
    header = [h.strip() for h in header]
    missing = [c for c in expected if c not in header]
    if missing:
        raise MissingHeader(f"{what}: header lacks {missing}; got {header}")
    return [header.index(c) for c in expected], len(header)


def _finite(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(text)
    return value


def _parse_leg(row: list[str], width: int, cols: list[int]):
    if len(row) != width:
        raise MalformedRow(f"expected {width} fields, got {len(row)}")
    try:
        vals = [row[c] for c in cols]
        if not all(v != "" for v in vals):
            raise ValueError("empty field")
        leg_index = int(vals[1])
        leg = Leg(
            mode=int(vals[2]),
            board_stop=vals[3],
            alight_stop=vals[4],
            board_time=_finite(vals[5]),
            alight_time=_finite(vals[6]),
            distance=_finite(vals[7]),
        )
    except (ValueError, IndexError) as exc:
        raise MalformedRow(str(exc)) from None
    return leg_index, leg


def _build_chain(chain_id, rows, registry) -> TripChain:
    legs = []
    for row in rows:
        if isinstance(row, MalformedRow):
            raise row
    for expected, (leg_index, leg) in enumerate(rows, 1):
        if leg_index != expected:
            raise GapInLegIndex(f"chain {chain_id!r}: leg {leg_index} where {expected} expected")
        legs.append(leg)
    return validate_chain(legs, registry, chain_id)


def parse_chains(
    source, registry: ModeRegistry, report: IngestReport | None = None
) -> Iterator[TripChain]:
    """Yield valid chains from a chains CSV in file order.

    Invalid chains are skipped and tallied into ``report``. Only a missing
    or incomplete header is fatal (:class:`MissingHeader`).
    """
    if report is None:
        report = IngestReport()
    # first-run outcome per chain id: True once accepted, False if rejected
    seen: dict[str, bool] = {}
    flipped: set[str] = set()

    def finish(chain_id, rows):
        if chain_id in seen:
            if seen[chain_id] and chain_id not in flipped:
                flipped.add(chain_id)
                report.chains_accepted -= 1
                report.late_rejections += 1
                report.reject(NonContiguousChain.kind)
            return None
        try:
            chain = _build_chain(chain_id, rows, registry)
        except ChainError as exc:
            seen[chain_id] = False
            report.reject(exc.kind)
            return None
        seen[chain_id] = True
        report.chains_accepted += 1
        return chain

    with open_text(source) as fh:
        reader = csv.reader(fh)
        found = _read_header(reader, CHAIN_COLUMNS, "chains file")
        if found is None:
            raise MissingHeader(f"chains file: empty input, expected header {','.join(CHAIN_COLUMNS)}")
        cols, width = found
        current = None
        rows: list = []
        for row in reader:
            if not row:
                continue
            report.rows_read += 1
            chain_id = row[cols[0]] if len(row) > cols[0] else row[0]
            if chain_id != current and current is not None:
                chain = finish(current, rows)
                if chain is not None:
                    yield chain
                rows = []
            current = chain_id
            try:
                rows.append(_parse_leg(row, width, cols))
            except MalformedRow as exc:
                rows.append(exc)
        if current is not None:
            chain = finish(current, rows)
            if chain is not None:
                yield chain


def read_chains(source, registry: ModeRegistry) -> tuple[list[TripChain], IngestReport]:
    report = IngestReport()
    return list(parse_chains(source, registry, report)), report


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() and abs(x) < 2**53 else repr(float(x))


def chain_rows(chain: TripChain) -> Iterator[list[str]]:
    for k, leg in enumerate(chain.legs, 1):
        yield [
            chain.chain_id,
            str(k),
            str(leg.mode),
            leg.board_stop,
            leg.alight_stop,
            _fmt(leg.board_time),
            _fmt(leg.alight_time),
            _fmt(leg.distance),
        ]


def write_chains(chains: Iterable[TripChain], sink) -> int:
    """Write chains in the ingest CSV format; returns the number of chains."""
    n = 0
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="utf-8", newline="") as fh:
            return write_chains(chains, fh)
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(CHAIN_COLUMNS)
    for chain in chains:
        writer.writerows(chain_rows(chain))
        n += 1
    return n


def parse_mode_registry(source) -> ModeRegistry:
    """Read a JSON array of ``{"id", "name", "walking"}`` objects."""
    with open_text(source) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MalformedRegistry(f"modes file is not valid JSON: {exc}") from None
    if not isinstance(doc, list):
        raise MalformedRegistry("modes file must be a JSON array")
    modes = []
    for entry in doc:
        if not isinstance(entry, dict):
            raise MalformedRegistry(f"mode entry is not an object: {entry!r}")
        mode_id, name, walking = entry.get("id"), entry.get("name"), entry.get("walking", False)
        if not isinstance(mode_id, int) or isinstance(mode_id, bool):
            raise MalformedRegistry(f"mode id must be an integer: {entry!r}")
        if not isinstance(name, str) or not isinstance(walking, bool):
            raise MalformedRegistry(f"bad name or walking flag: {entry!r}")
        modes.append(Mode(mode_id, name, walking))
    return ModeRegistry(tuple(modes))


def parse_zone_map(source) -> dict[str, int]:
    """Read a ``stop_id,zone_id`` CSV into a dict. Empty input gives ``{}``."""
    zones: dict[str, int] = {}
    with open_text(source) as fh:
        reader = csv.reader(fh)
        found = _read_header(reader, ZONE_COLUMNS, "zone map")
        if found is None:
            return zones
        cols, width = found
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != width:
                raise MalformedRow(f"zone map line {lineno}: expected {width} fields, got {len(row)}")
            stop, zone = row[cols[0]], row[cols[1]]
            try:
                zone_id = int(zone)
            except ValueError:
                raise MalformedRow(f"zone map line {lineno}: zone id {zone!r} is not an integer") from None
            if not stop:
                raise MalformedRow(f"zone map line {lineno}: empty stop id")
            if zones.setdefault(stop, zone_id) != zone_id:
                raise ConflictingZone(
                    f"stop {stop!r} mapped to zones {zones[stop]} and {zone_id}"
                )
    return zones
