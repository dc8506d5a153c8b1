"""Synthetic trip chains with a planted mode hierarchy, and a brute-force oracle.

Every random quantity of chain ``k`` is a counter-based hash of
``(seed, k, slot)``, so a corpus is identical however it is split into
blocks or workers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
import pyarrow as pa
import pyarrow.csv as pacsv

from .hierarchy import (
    HierarchyConfig,
    HierarchyResult,
    ModeScores,
    PhaseCounts,
    RankEntry,
    Ranking,
)
from .ingest import CHAIN_COLUMNS
from .model import SEOUL_MODES, Leg, ModeRegistry, TripChain

MAX_LEGS = 4
PEAK_FACTOR = 4.0
SPEED_M_PER_S = 6.0
TRANSFER_GAP_S = 180
DAY_START_S, DAY_SPAN_S = 5 * 3600, 18 * 3600

# slot layout of the per-chain random stream
_S_LEN, _S_SPLIT, _S_PEAK, _S_INTER, _S_ORIG, _S_DEST, _S_START = range(7)
_S_DIST, _S_SWAP, _S_STOP = 8, 12, 16
_S_PRE, _S_POST = 24, 40
_SLOTS = 56
_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


class InvalidSpec(ValueError):
    pass


@dataclass(frozen=True)
class ZoneSetup:
    """Zones for a synthetic corpus.

    ``interzonal_only_modes`` never appear in chains that start and end in
    the same zone.
    """

    n_zones: int = 2
    stops_per_zone: int = 500
    interzonal_fraction: float = 0.3
    interzonal_only_modes: tuple[int, ...] = ()

    def stop_id(self, zone: int, j: int) -> str:
        return f"Z{zone}S{j:05d}"


@dataclass(frozen=True)
class SynthSpec:
    registry: ModeRegistry = SEOUL_MODES
    planted_order: tuple[int, ...] = (2, 3, 5, 6, 4)
    chain_length_weights: tuple[float, ...] = (0.3, 0.35, 0.25, 0.1)
    noise: float = 0.1
    mean_leg_distance: float = 3000.0
    zone_setup: ZoneSetup | None = None
    seed: int = 0
    n_stops: int = 2000

    def __post_init__(self):
        object.__setattr__(self, "planted_order", tuple(int(m) for m in self.planted_order))
        object.__setattr__(
            self, "chain_length_weights", tuple(float(w) for w in self.chain_length_weights)
        )
        self.validate()

    def validate(self) -> None:
        reg = self.registry
        order = self.planted_order
        if not order or len(set(order)) != len(order):
            raise InvalidSpec("planted_order must list distinct modes")
        for m in order:
            if m not in reg or m == reg.walking:
                raise InvalidSpec(f"planted mode {m} is not a non-walking mode of the registry")
        w = self.chain_length_weights
        if len(w) != MAX_LEGS or min(w) < 0 or abs(sum(w) - 1.0) > 1e-9:
            raise InvalidSpec(f"chain_length_weights must be {MAX_LEGS} weights summing to 1")
        if not 0 <= self.noise < 0.5:
            raise InvalidSpec(f"noise must lie in [0, 0.5), got {self.noise}")
        if not self.mean_leg_distance > 0:
            raise InvalidSpec("mean_leg_distance must be positive")
        if not 0 <= self.seed < 2**64:
            raise InvalidSpec("seed must be a 64-bit unsigned integer")
        if self.n_stops < 1:
            raise InvalidSpec("n_stops must be positive")
        z = self.zone_setup
        if z is not None:
            if z.n_zones < 1 or z.stops_per_zone < 1:
                raise InvalidSpec("zone setup needs at least one zone and one stop per zone")
            if not 0 <= z.interzonal_fraction <= 1:
                raise InvalidSpec("interzonal_fraction must lie in [0, 1]")
            if z.n_zones == 1 and z.interzonal_fraction > 0:
                raise InvalidSpec("a single zone cannot have interzonal chains")
            if not set(z.interzonal_only_modes) <= set(order):
                raise InvalidSpec("interzonal_only_modes must be planted modes")
            if set(z.interzonal_only_modes) == set(order):
                raise InvalidSpec("at least one planted mode must be usable within a zone")

    def to_json(self) -> dict:
        z = self.zone_setup
        return {
            "modes": self.registry.to_json(),
            "planted_order": list(self.planted_order),
            "chain_length_weights": list(self.chain_length_weights),
            "noise": self.noise,
            "mean_leg_distance": self.mean_leg_distance,
            "n_stops": self.n_stops,
            "seed": self.seed,
            "zone_setup": None
            if z is None
            else {
                "n_zones": z.n_zones,
                "stops_per_zone": z.stops_per_zone,
                "interzonal_fraction": z.interzonal_fraction,
                "interzonal_only_modes": list(z.interzonal_only_modes),
            },
        }


def _mix(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 arithmetic wraps
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def _uniform(key: np.ndarray, index: np.ndarray, slot: int) -> np.ndarray:
    counter = index * np.uint64(_SLOTS) + np.uint64(slot)
    bits = _mix(key ^ _mix(counter))
    return (bits >> np.uint64(11)).astype(np.float64) * 2.0**-53


def _pick(u: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    """Column index of the ``floor(u * count)``-th True per row of ``allowed``."""
    count = allowed.sum(axis=1)
    target = np.minimum((u * count).astype(np.int64), count - 1)
    return np.argmax(np.cumsum(allowed, axis=1) > target[:, None], axis=1)


def generate_arrays(spec: SynthSpec, start: int, stop: int) -> dict[str, np.ndarray]:
    """Leg rows for chains ``start..stop-1`` as column arrays.

    Keys follow the chains CSV columns, plus ``chain_index``.
    """
    idx = np.arange(start, stop, dtype=np.uint64)
    n = len(idx)
    key = _mix(np.array([spec.seed], dtype=np.uint64))
    U = lambda slot: _uniform(key, idx, slot)
    order = np.array(spec.planted_order)
    K = len(order)
    z = spec.zone_setup
    levels = np.arange(K)

    # zones and per-chain mode availability
    if z is None:
        origin = dest = np.zeros(n, dtype=np.int64)
        avail = np.ones((n, K), dtype=bool)
    else:
        origin = np.minimum((U(_S_ORIG) * z.n_zones).astype(np.int64), z.n_zones - 1)
        inter = U(_S_INTER) < z.interzonal_fraction
        shift = 1 + np.minimum((U(_S_DEST) * (z.n_zones - 1)).astype(np.int64), z.n_zones - 2)
        dest = np.where(inter, (origin + np.where(inter, shift, 0)) % z.n_zones, origin)
        only = np.isin(order, z.interzonal_only_modes)
        avail = np.where(inter[:, None], True, ~only[None, :])
    n_avail = avail.sum(axis=1)

    # leg count, then legs before and after the peak
    cw = np.cumsum(spec.chain_length_weights)
    length = 1 + np.searchsorted(cw, U(_S_LEN) * cw[-1], side="right")
    length = np.minimum(np.minimum(length, MAX_LEGS), 2 * n_avail - 1)
    split = U(_S_SPLIT) < 0.5
    pre = np.where(length == 2, 1, (length - 1) // 2 + np.where(length % 2 == 0, split, 0))
    post = length - 1 - pre

    below = np.cumsum(avail, axis=1) - avail
    feasible = avail & (below >= np.maximum(pre, post)[:, None])
    peak = _pick(U(_S_PEAK), feasible)

    under = avail & (levels[None, :] < peak[:, None])
    pre_keys = np.stack([U(_S_PRE + l) for l in range(K)], axis=1)
    post_keys = np.stack([U(_S_POST + l) for l in range(K)], axis=1)
    pre_keys[~under] = np.inf
    post_keys[~under] = np.inf
    pre_pick = np.argsort(pre_keys, axis=1)[:, :2]
    post_pick = np.argsort(post_keys, axis=1)[:, :2]

    seq = np.full((n, MAX_LEGS), -1, dtype=np.int64)
    rows = np.arange(n)
    # ascending part: pre levels sorted upward
    p2 = np.sort(pre_pick, axis=1)
    seq[:, 0] = np.where(pre == 0, peak, np.where(pre == 1, pre_pick[:, 0], p2[:, 0]))
    seq[:, 1] = np.where(pre == 2, p2[:, 1], np.where(pre == 1, peak, -1))
    peak_pos = pre
    seq[rows, peak_pos] = peak
    # descending part: post levels sorted downward
    d2 = -np.sort(-post_pick, axis=1)
    first_post = np.where(post == 1, post_pick[:, 0], d2[:, 0])
    has1 = post >= 1
    seq[rows[has1], peak_pos[has1] + 1] = first_post[has1]
    has2 = post >= 2
    seq[rows[has2], peak_pos[has2] + 2] = d2[has2, 1]

    # adjacency noise: swap neighbouring legs' modes
    for t in range(MAX_LEGS - 1):
        swap = (t < length - 1) & (U(_S_SWAP + t) < spec.noise)
        a, b = seq[swap, t].copy(), seq[swap, t + 1].copy()
        seq[swap, t], seq[swap, t + 1] = b, a

    # distances in whole meters, peak position longest on average
    leg_pos = np.arange(MAX_LEGS)[None, :]
    factor = np.where(leg_pos == peak_pos[:, None], PEAK_FACTOR, 1.0)
    u_dist = np.stack([U(_S_DIST + t) for t in range(MAX_LEGS)], axis=1)
    dist = np.maximum(1, np.rint(spec.mean_leg_distance * factor * (0.5 + u_dist))).astype(np.int64)

    # stops: origin pool before the peak, destination pool after it
    if z is None:
        pool = spec.n_stops
        stop_num = lambda slot: np.minimum((U(slot) * pool).astype(np.int64), pool - 1)
    else:
        pool = z.stops_per_zone
        stop_num = lambda slot: np.minimum((U(slot) * pool).astype(np.int64), pool - 1)
    alight_num = np.stack([stop_num(_S_STOP + 1 + t) for t in range(MAX_LEGS)], axis=1)
    alight_zone = np.where(leg_pos < peak_pos[:, None], origin[:, None], dest[:, None])
    board_num = np.empty_like(alight_num)
    board_num[:, 0] = stop_num(_S_STOP)
    board_num[:, 1:] = alight_num[:, :-1]
    board_zone = np.empty_like(alight_zone)
    board_zone[:, 0] = origin
    board_zone[:, 1:] = alight_zone[:, :-1]
    last = length - 1
    alight_zone[rows, last] = dest

    # times: legs at a fixed speed with a fixed transfer gap
    dur = np.rint(dist / SPEED_M_PER_S).astype(np.int64)
    t0 = DAY_START_S + (U(_S_START) * DAY_SPAN_S).astype(np.int64)
    board_t = np.empty_like(dur)
    alight_t = np.empty_like(dur)
    clock = t0
    for t in range(MAX_LEGS):
        board_t[:, t] = clock
        alight_t[:, t] = clock + dur[:, t]
        clock = alight_t[:, t] + TRANSFER_GAP_S

    live = leg_pos < length[:, None]
    chain_index = np.repeat(idx.astype(np.int64), length)
    return {
        "chain_index": chain_index,
        "leg_index": np.broadcast_to(leg_pos + 1, live.shape)[live],
        "mode_id": order[seq[live]],
        "board_zone": board_zone[live] + 1,
        "board_num": board_num[live],
        "alight_zone": alight_zone[live] + 1,
        "alight_num": alight_num[live],
        "board_time": board_t[live],
        "alight_time": alight_t[live],
        "distance_m": dist[live],
    }


def _chain_ids(chain_index: np.ndarray) -> np.ndarray:
    return np.char.add("c", np.char.zfill(chain_index.astype(str), 9))


def _stop_ids(spec: SynthSpec, zone: np.ndarray, num: np.ndarray) -> np.ndarray:
    nums = np.char.zfill(num.astype(str), 5)
    if spec.zone_setup is None:
        return np.char.add("S", nums)
    return np.char.add(np.char.add(np.char.add("Z", zone.astype(str)), "S"), nums)


def generate(spec: SynthSpec, n: int, block: int = 50_000) -> Iterator[TripChain]:
    """Yield ``n`` chains in index order."""
    for lo in range(0, n, block):
        cols = generate_arrays(spec, lo, min(n, lo + block))
        ids = _chain_ids(cols["chain_index"])
        boards = _stop_ids(spec, cols["board_zone"], cols["board_num"])
        alights = _stop_ids(spec, cols["alight_zone"], cols["alight_num"])
        legs_of = np.flatnonzero(cols["leg_index"] == 1).tolist() + [len(ids)]
        modes = cols["mode_id"].tolist()
        dist = cols["distance_m"].tolist()
        bt, at = cols["board_time"].tolist(), cols["alight_time"].tolist()
        for a, b in zip(legs_of, legs_of[1:]):
            yield TripChain(
                str(ids[a]),
                tuple(
                    Leg(modes[r], float(dist[r]), str(boards[r]), str(alights[r]), float(bt[r]), float(at[r]))
                    for r in range(a, b)
                ),
            )


def write_corpus(spec: SynthSpec, n: int, path, block: int = 500_000) -> int:
    """Write ``n`` chains to ``path`` in the chains CSV format; returns rows written."""
    rows = 0
    opts = pacsv.WriteOptions(include_header=False, quoting_style="none")
    with pa.OSFile(str(path), "wb") as sink:
        sink.write((",".join(CHAIN_COLUMNS) + "\n").encode())
        for lo in range(0, n, block):
            cols = generate_arrays(spec, lo, min(n, lo + block))
            table = pa.table(
                {
                    "chain_id": _chain_ids(cols["chain_index"]),
                    "leg_index": cols["leg_index"],
                    "mode_id": cols["mode_id"],
                    "board_stop_id": _stop_ids(spec, cols["board_zone"], cols["board_num"]),
                    "alight_stop_id": _stop_ids(spec, cols["alight_zone"], cols["alight_num"]),
                    "board_time": cols["board_time"],
                    "alight_time": cols["alight_time"],
                    "distance_m": cols["distance_m"],
                }
            )
            pacsv.write_csv(table, sink, write_options=opts)
            rows += table.num_rows
    return rows


def zone_map_rows(spec: SynthSpec) -> Iterator[tuple[str, int]]:
    z = spec.zone_setup
    if z is None:
        for j in range(spec.n_stops):
            yield f"S{j:05d}", 1
        return
    for zone in range(1, z.n_zones + 1):
        for j in range(z.stops_per_zone):
            yield z.stop_id(zone, j), zone


def write_zone_map(spec: SynthSpec, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["stop_id", "zone_id"])
        writer.writerows(zone_map_rows(spec))


def oracle_analyze(
    chains: Sequence[TripChain], registry: ModeRegistry, config: HierarchyConfig = HierarchyConfig()
) -> HierarchyResult:
    """Direct enumeration of the whole hierarchy computation.

    Written with plain loops over the complete chain list and no helper
    from the streaming pipeline, so equivalence tests compare two
    independent derivations.
    """
    M = registry.M
    walk = registry.walking
    a = [[0] * (M + 1) for _ in range(M + 1)]
    d = [[0] * (M + 1) for _ in range(M + 1)]
    for chain in chains:
        legs = chain.legs
        length = 0.0
        for leg in legs:
            length += leg.distance
        for k in range(len(legs) + 1):
            src = walk if k == 0 else legs[k - 1].mode
            dst = walk if k == len(legs) else legs[k].mode
            where = 0.0
            for leg in legs[:k]:
                where += leg.distance
            if where < length / 2:
                a[src][dst] += 1
            else:
                d[src][dst] += 1

    def rate(c, i, j):
        tot = c[i][j] + c[j][i]
        return c[i][j] / tot if tot else None

    def diff(x, y):
        return None if x is None or y is None else x - y

    modes = list(range(1, M + 1))
    A = {(i, j): rate(a, i, j) for i in modes for j in modes}
    D = {(i, j): rate(d, i, j) for i in modes for j in modes}
    if config.ascending_sign == "flipped":
        A_star = {(i, j): diff(A[j, i], A[i, j]) for i in modes for j in modes}
    else:
        A_star = {(i, j): diff(A[i, j], A[j, i]) for i in modes for j in modes}
    D_star = {(i, j): diff(D[i, j], D[j, i]) for i in modes for j in modes}

    def score(star, i):
        vals = [star[i, j] for j in modes if j != i and star[i, j] is not None]
        if config.undefined_pairs == "zero":
            return 0.5 * (sum(vals) / (M - 1)) + 0.5, len(vals)
        if not vals:
            return 0.5, 0
        return 0.5 * (sum(vals) / len(vals)) + 0.5, len(vals)

    asc = [score(A_star, i) for i in modes]
    desc = [score(D_star, i) for i in modes]
    H = [(x[0] + y[0]) / 2 for x, y in zip(asc, desc)]
    observed = [i for i in modes if asc[i - 1][1] or desc[i - 1][1]]
    ranked = sorted(observed, key=lambda i: (-H[i - 1], i))
    entries = tuple(
        RankEntry(i, registry.name(i), H[i - 1], sum(1 for j in observed if H[j - 1] == H[i - 1]) > 1)
        for i in ranked
    )

    def matrix(table):
        return np.array(
            [[np.nan if table[i, j] is None else table[i, j] for j in modes] for i in modes]
        )

    counts = PhaseCounts(
        M,
        np.array([row[1:] for row in a[1:]], dtype=np.int64),
        np.array([row[1:] for row in d[1:]], dtype=np.int64),
        len(chains),
    )
    scores = ModeScores(
        np.array([s for s, _ in asc]),
        np.array([s for s, _ in desc]),
        np.array(H),
        np.array([c for _, c in asc]),
        np.array([c for _, c in desc]),
    )
    return HierarchyResult(
        counts,
        matrix(A),
        matrix(D),
        matrix(A_star),
        matrix(D_star),
        scores,
        Ranking(entries, tuple(i for i in modes if i not in observed)),
        config,
    )
