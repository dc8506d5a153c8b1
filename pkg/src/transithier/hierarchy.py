"""Phase count matrices, transfer rates, hierarchy distances and mode scores.

Undefined entries (pairs with no transfers in either direction) are NaN
in every float matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .model import ModeRegistry, Transfer

ASCENDING_SIGNS = ("flipped", "literal")
UNDEFINED_PAIRS = ("exclude", "zero")


class ModeOutOfRange(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class HierarchyConfig:
    """Sign convention for ascending distances and the policy for 0/0 pairs.

    ``ascending_sign="flipped"`` scores a mode higher when it *receives*
    ascending transfers; ``"literal"`` keeps the raw difference
    ``A_ij - A_ji``. ``undefined_pairs="exclude"`` averages over observed
    pairs only, ``"zero"`` counts unobserved pairs as 0 and divides by M-1.
    """

    ascending_sign: str = "flipped"
    undefined_pairs: str = "exclude"

    def __post_init__(self):
        if self.ascending_sign not in ASCENDING_SIGNS:
            raise ValueError(f"ascending_sign must be one of {ASCENDING_SIGNS}")
        if self.undefined_pairs not in UNDEFINED_PAIRS:
            raise ValueError(f"undefined_pairs must be one of {UNDEFINED_PAIRS}")


@dataclass
class PhaseCounts:
    """Ascending and descending transfer counts, ``[i-1, j-1]`` is ``i -> j``."""

    M: int
    ascending: np.ndarray = None
    descending: np.ndarray = None
    chains_counted: int = 0

    def __post_init__(self):
        shape = (self.M, self.M)
        if self.ascending is None:
            self.ascending = np.zeros(shape, dtype=np.int64)
        if self.descending is None:
            self.descending = np.zeros(shape, dtype=np.int64)
        self.ascending = np.asarray(self.ascending, dtype=np.int64)
        self.descending = np.asarray(self.descending, dtype=np.int64)
        if self.ascending.shape != shape or self.descending.shape != shape:
            raise DimensionMismatch(f"count matrices must be {shape}")
        if (self.ascending < 0).any() or (self.descending < 0).any():
            raise ValueError("transfer counts must be non-negative")

    @classmethod
    def from_flat(cls, flat: np.ndarray, M: int, chains: int) -> "PhaseCounts":
        """Counts from a length ``2*M*M`` vector laid out ``[phase, i, j]``."""
        cube = np.asarray(flat, dtype=np.int64).reshape(2, M, M)
        return cls(M, cube[0].copy(), cube[1].copy(), int(chains))

    @property
    def total_transfers(self) -> int:
        return int(self.ascending.sum() + self.descending.sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, PhaseCounts):
            return NotImplemented
        return (
            self.M == other.M
            and self.chains_counted == other.chains_counted
            and np.array_equal(self.ascending, other.ascending)
            and np.array_equal(self.descending, other.descending)
        )

    def __add__(self, other: "PhaseCounts") -> "PhaseCounts":
        return merge(self, other)


def accumulate(chains: Iterable[Iterable[Transfer]], M: int) -> PhaseCounts:
    """Sum per-chain transfer lists into a :class:`PhaseCounts`.

    Each element of ``chains`` is the transfer list of one chain, as
    returned by :func:`~transithier.model.classify_transfers`.
    """
    counts = PhaseCounts(M)
    mats = (counts.ascending, counts.descending)
    n = 0
    for transfers in chains:
        for t in transfers:
            if not (1 <= t.from_mode <= M and 1 <= t.to_mode <= M):
                raise ModeOutOfRange(f"transfer {t.from_mode}->{t.to_mode} outside 1..{M}")
            mats[t.phase][t.from_mode - 1, t.to_mode - 1] += 1
        n += 1
    counts.chains_counted = n
    return counts


def merge(counts_1: PhaseCounts, counts_2: PhaseCounts) -> PhaseCounts:
    if counts_1.M != counts_2.M:
        raise DimensionMismatch(f"cannot merge M={counts_1.M} with M={counts_2.M}")
    return PhaseCounts(
        counts_1.M,
        counts_1.ascending + counts_2.ascending,
        counts_1.descending + counts_2.descending,
        counts_1.chains_counted + counts_2.chains_counted,
    )


def _rates(c: np.ndarray) -> np.ndarray:
    total = c + c.T
    out = np.full(c.shape, np.nan)
    np.divide(c, total, out=out, where=total > 0)
    return out


def transfer_rates(counts: PhaseCounts) -> tuple[np.ndarray, np.ndarray]:
    """Directional transfer rates ``x_ij / (x_ij + x_ji)`` for both phases."""
    return _rates(counts.ascending), _rates(counts.descending)


def hierarchy_distances(
    A: np.ndarray, D: np.ndarray, config: HierarchyConfig = HierarchyConfig()
) -> tuple[np.ndarray, np.ndarray]:
    """Antisymmetric rate differences in [-1, 1].

    The descending distance is ``D_ij - D_ji``. The ascending one is
    ``A_ji - A_ij`` under the flipped convention, ``A_ij - A_ji`` under
    the literal one.
    """
    A = np.asarray(A, dtype=float)
    D = np.asarray(D, dtype=float)
    a_star = A.T - A if config.ascending_sign == "flipped" else A - A.T
    return a_star, D - D.T


def phase_scores(
    distances: np.ndarray, config: HierarchyConfig = HierarchyConfig()
) -> tuple[np.ndarray, np.ndarray]:
    """Rescaled mean hierarchy distance per mode.

    Returns ``(scores, defined_pairs)``. Under ``exclude`` a mode with no
    defined pairs gets the neutral score 0.5.
    """
    dist = np.asarray(distances, dtype=float)
    M = dist.shape[0]
    off = ~np.eye(M, dtype=bool)
    defined = ~np.isnan(dist) & off
    n_defined = defined.sum(axis=1)
    sums = np.where(defined, dist, 0.0).sum(axis=1)
    if config.undefined_pairs == "zero":
        means = sums / (M - 1)
    else:
        means = np.zeros(M)
        np.divide(sums, n_defined, out=means, where=n_defined > 0)
    scores = 0.5 * means + 0.5
    return scores, n_defined.astype(np.int64)


@dataclass
class ModeScores:
    ascending: np.ndarray
    descending: np.ndarray
    overall: np.ndarray
    defined_pairs_asc: np.ndarray
    defined_pairs_desc: np.ndarray

    @property
    def observed(self) -> np.ndarray:
        return (self.defined_pairs_asc > 0) | (self.defined_pairs_desc > 0)


def overall_hierarchy(scores_asc, scores_desc, pairs_asc=None, pairs_desc=None) -> ModeScores:
    asc = np.asarray(scores_asc, dtype=float)
    desc = np.asarray(scores_desc, dtype=float)
    if asc.shape != desc.shape:
        raise DimensionMismatch("phase score vectors differ in length")
    if pairs_asc is None:
        pairs_asc = np.zeros(asc.shape, dtype=np.int64)
    if pairs_desc is None:
        pairs_desc = np.zeros(desc.shape, dtype=np.int64)
    return ModeScores(asc, desc, (asc + desc) / 2, np.asarray(pairs_asc), np.asarray(pairs_desc))


@dataclass(frozen=True)
class RankEntry:
    mode_id: int
    name: str
    score: float
    tied: bool = False


@dataclass(frozen=True)
class Ranking:
    ranked: tuple[RankEntry, ...]
    unobserved: tuple[int, ...] = ()

    @property
    def order(self) -> list[int]:
        """Ranked mode ids, highest first."""
        return [e.mode_id for e in self.ranked]

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.ranked]


def rank_modes(scores: ModeScores, registry: ModeRegistry) -> Ranking:
    """Sort observed modes by overall score, highest first.

    Exact ties keep ascending mode id order and are flagged. Modes
    without a single defined pair in either phase are set aside.
    """
    observed = scores.observed
    ids = [i for i in registry.ids if observed[i - 1]]
    ids.sort(key=lambda i: (-scores.overall[i - 1], i))
    values = [float(scores.overall[i - 1]) for i in ids]
    ranked = tuple(
        RankEntry(i, registry.name(i), v, values.count(v) > 1) for i, v in zip(ids, values)
    )
    unobserved = tuple(i for i in registry.ids if not observed[i - 1])
    return Ranking(ranked, unobserved)


@dataclass
class HierarchyResult:
    counts: PhaseCounts
    A: np.ndarray
    D: np.ndarray
    A_star: np.ndarray
    D_star: np.ndarray
    scores: ModeScores
    ranking: Ranking
    config: HierarchyConfig = field(default_factory=HierarchyConfig)


def analyze_counts(
    counts: PhaseCounts, registry: ModeRegistry, config: HierarchyConfig = HierarchyConfig()
) -> HierarchyResult:
    """Run rates, distances, scores and ranking on accumulated counts."""
    if counts.M != registry.M:
        raise DimensionMismatch(f"counts have M={counts.M}, registry has {registry.M}")
    A, D = transfer_rates(counts)
    a_star, d_star = hierarchy_distances(A, D, config)
    asc, n_asc = phase_scores(a_star, config)
    desc, n_desc = phase_scores(d_star, config)
    scores = overall_hierarchy(asc, desc, n_asc, n_desc)
    return HierarchyResult(counts, A, D, a_star, d_star, scores, rank_modes(scores, registry), config)

