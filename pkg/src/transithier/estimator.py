"""scikit-learn style estimators over trip chains.

``X`` may be a path to a chains CSV, a pandas DataFrame with the chains
CSV columns, or an iterable of :class:`~transithier.model.TripChain`.
"""

from __future__ import annotations

import io
import os
from collections.abc import Mapping

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .hierarchy import HierarchyConfig, PhaseCounts, accumulate, analyze_counts, merge
from .ingest import CHAIN_COLUMNS, IngestReport, parse_chains, parse_mode_registry, parse_zone_map
from .model import SEOUL_MODES, ModeRegistry, TripChain, classify_transfers
from .pipeline import count_file, zonal_file
from .zonal import ZonePartition, assign_zone_pair, pair_key, zonal_analyze


def check_registry(modes) -> ModeRegistry:
    """Coerce ``None``, a registry, a modes JSON path or a list of names."""
    if modes is None:
        return SEOUL_MODES
    if isinstance(modes, ModeRegistry):
        return modes
    if isinstance(modes, (str, os.PathLike)):
        return parse_mode_registry(modes)
    if isinstance(modes, (list, tuple)) and all(isinstance(m, str) for m in modes):
        return ModeRegistry.from_names(modes)
    raise TypeError(f"cannot build a mode registry from {type(modes).__name__}")


def check_partition(zones, unknown_stops: str = "skip") -> ZonePartition:
    if isinstance(zones, ZonePartition):
        return zones
    if isinstance(zones, (str, os.PathLike)):
        return ZonePartition(parse_zone_map(zones), unknown_policy=unknown_stops)
    if isinstance(zones, Mapping):
        return ZonePartition(dict(zones), unknown_policy=unknown_stops)
    raise TypeError("zones must be a ZonePartition, a zone map path or a stop->zone mapping")


def check_chains(X, registry: ModeRegistry, report: IngestReport | None = None):
    """Iterate over validated chains of any supported input."""
    report = IngestReport() if report is None else report
    if isinstance(X, (str, os.PathLike)):
        return parse_chains(X, registry, report)
    if isinstance(X, pd.DataFrame):
        missing = [c for c in CHAIN_COLUMNS if c not in X.columns]
        if missing:
            raise ValueError(f"DataFrame lacks chain columns {missing}")
        buf = io.StringIO()
        X.loc[:, list(CHAIN_COLUMNS)].to_csv(buf, index=False, lineterminator="\n")
        buf.seek(0)
        return parse_chains(buf, registry, report)
    if isinstance(X, TripChain):
        raise TypeError("expected a collection of TripChain, got a single chain")
    return iter(X)


class TransitHierarchy(TransformerMixin, BaseEstimator):
    """Mode hierarchy scores from ascending/descending transfer counts.

    Parameters
    ----------
    modes : ModeRegistry, path, list of str or None
        Mode set; ``None`` uses the six Seoul modes.
    ascending_sign : {"flipped", "literal"}
    undefined_pairs : {"exclude", "zero"}

    Attributes
    ----------
    counts_ : PhaseCounts
    ingest_report_ : IngestReport
    result_ : HierarchyResult
    scores_ : ModeScores
    ranking_ : Ranking
    """

    def __init__(self, modes=None, ascending_sign="flipped", undefined_pairs="exclude"):
        self.modes = modes
        self.ascending_sign = ascending_sign
        self.undefined_pairs = undefined_pairs

    def _config(self) -> HierarchyConfig:
        return HierarchyConfig(self.ascending_sign, self.undefined_pairs)

    def _count(self, X) -> tuple[PhaseCounts, IngestReport]:
        registry = self.registry_
        if isinstance(X, (str, os.PathLike)):
            return count_file(X, registry)
        report = IngestReport()
        chains = check_chains(X, registry, report)
        counts = accumulate((classify_transfers(c, registry) for c in chains), registry.M)
        if not isinstance(X, pd.DataFrame):
            report.chains_accepted = counts.chains_counted
        return counts, report

    def fit(self, X, y=None):
        self.registry_ = check_registry(self.modes)
        self._config()
        self.counts_, self.ingest_report_ = self._count(X)
        return self._finish()

    def partial_fit(self, X, y=None):
        """Add more chains to the running counts."""
        if not hasattr(self, "counts_"):
            return self.fit(X)
        counts, report = self._count(X)
        self.counts_ = merge(self.counts_, counts)
        self.ingest_report_ = self.ingest_report_ + report
        return self._finish()

    def _finish(self):
        self.result_ = analyze_counts(self.counts_, self.registry_, self._config())
        self.scores_ = self.result_.scores
        self.ranking_ = self.result_.ranking
        self.n_features_out_ = 2 * self.registry_.M ** 2
        return self

    def transform(self, X) -> np.ndarray:
        """Per-chain transfer counts, one row per chain.

        Columns are the flattened ``[phase, from, to]`` cells, see
        :meth:`get_feature_names_out`; summing the rows gives the counts
        :meth:`fit` would accumulate.
        """
        check_is_fitted(self, "registry_")
        registry = self.registry_
        M = registry.M
        rows = []
        for chain in check_chains(X, registry):
            row = np.zeros(2 * M * M, dtype=np.int64)
            for t in classify_transfers(chain, registry):
                row[int(t.phase) * M * M + (t.from_mode - 1) * M + t.to_mode - 1] += 1
            rows.append(row)
        return np.array(rows, dtype=np.int64).reshape(len(rows), 2 * M * M)

    def get_feature_names_out(self, input_features=None) -> np.ndarray:
        check_is_fitted(self, "registry_")
        names = self.registry_.names
        return np.array(
            [f"{phase}:{a}->{b}" for phase in ("asc", "desc") for a in names for b in names],
            dtype=object,
        )

    def ranking_table(self) -> pd.DataFrame:
        """Scores of all modes, observed ones ranked by overall score."""
        check_is_fitted(self, "result_")
        s = self.scores_
        df = pd.DataFrame(
            {
                "mode_id": self.registry_.ids,
                "mode_name": self.registry_.names,
                "ascending": s.ascending,
                "descending": s.descending,
                "overall": s.overall,
                "observed": s.observed,
            }
        )
        rank = {e.mode_id: k for k, e in enumerate(self.ranking_.ranked, 1)}
        df["rank"] = df["mode_id"].map(rank).astype("Int64")
        return df.sort_values(["rank", "mode_id"], na_position="last").reset_index(drop=True)


class ZonalTransitHierarchy(BaseEstimator):
    """Hierarchy results per ordered (origin zone, destination zone) pair.

    ``predict`` labels each chain with its ``"p->q"`` pair, or None when
    one of its end stops is outside the zone map.
    """

    def __init__(
        self,
        zones=None,
        modes=None,
        ascending_sign="flipped",
        undefined_pairs="exclude",
        unknown_stops="skip",
        min_chains=1000,
    ):
        self.zones = zones
        self.modes = modes
        self.ascending_sign = ascending_sign
        self.undefined_pairs = undefined_pairs
        self.unknown_stops = unknown_stops
        self.min_chains = min_chains

    def fit(self, X, y=None):
        if self.zones is None:
            raise ValueError("ZonalTransitHierarchy needs a zone map")
        self.registry_ = check_registry(self.modes)
        self.partition_ = check_partition(self.zones, self.unknown_stops)
        config = HierarchyConfig(self.ascending_sign, self.undefined_pairs)
        if isinstance(X, (str, os.PathLike)):
            self.results_, self.ingest_report_ = zonal_file(X, self.registry_, self.partition_, config)
        else:
            report = IngestReport()
            chains = list(check_chains(X, self.registry_, report))
            if not isinstance(X, pd.DataFrame):
                report.chains_accepted = len(chains)
            self.results_ = zonal_analyze(chains, self.partition_, self.registry_, config)
            self.ingest_report_ = report
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "partition_")
        labels = []
        for chain in check_chains(X, self.registry_):
            pair = assign_zone_pair(chain, self.partition_)
            labels.append(None if pair is None else pair_key(*pair))
        return np.array(labels, dtype=object)

    def low_support_pairs(self) -> list[str]:
        check_is_fitted(self, "results_")
        return [
            pair_key(p, q)
            for (p, q), r in sorted(self.results_.pairs.items())
            if r.counts.chains_counted < self.min_chains
        ]
