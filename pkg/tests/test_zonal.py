import numpy as np
import pytest

from transithier.hierarchy import accumulate, analyze_counts
from transithier.ingest import write_chains
from transithier.model import Leg, SEOUL_MODES, TripChain, classify_transfers
from transithier.pipeline import analyze_file, zonal_file
from transithier.synth import SynthSpec, ZoneSetup, generate, write_corpus, zone_map_rows
from transithier.zonal import UnknownStop, ZonePartition, assign_zone_pair, zonal_analyze

from conftest import BUS, METRO

SEOUL_STOPS = {"gangnam": 1, "hongdae": 1, "suwon": 2, "incheon": 2}


def trip(cid, board, alight, *modes):
    legs = [Leg(m, 1000.0 * (k + 1), board if k == 0 else f"x{k}", alight if k == len(modes) - 1 else f"x{k + 1}") for k, m in enumerate(modes)]
    return TripChain(cid, tuple(legs))


def test_assign_pairs():
    part = ZonePartition(SEOUL_STOPS)
    assert assign_zone_pair(trip("a", "gangnam", "hongdae", BUS), part) == (1, 1)
    assert assign_zone_pair(trip("b", "gangnam", "suwon", BUS, METRO), part) == (1, 2)
    assert assign_zone_pair(trip("c", "nowhere", "suwon", BUS), part) is None


def test_unknown_stop_error_policy():
    part = ZonePartition(SEOUL_STOPS, unknown_policy="error")
    with pytest.raises(UnknownStop):
        assign_zone_pair(trip("c", "nowhere", "suwon", BUS), part)
    with pytest.raises(ValueError):
        ZonePartition(SEOUL_STOPS, unknown_policy="ignore")


def test_two_chains_two_pairs(tiny_registry):
    chains = [trip("a", "gangnam", "hongdae", BUS, METRO), trip("b", "hongdae", "incheon", METRO)]
    res = zonal_analyze(chains, ZonePartition(SEOUL_STOPS), tiny_registry)
    counts = {k: r.counts.chains_counted for k, r in res.pairs.items()}
    assert counts == {(1, 1): 1, (1, 2): 1, (2, 1): 0, (2, 2): 0}
    assert res.chains_processed == 2


def test_single_zone_equals_global(tiny_registry):
    chains = [trip(str(k), "gangnam", "hongdae", *ms) for k, ms in enumerate([(BUS,), (BUS, METRO), (METRO, BUS, METRO)])]
    res = zonal_analyze(chains, ZonePartition({"gangnam": 1, "hongdae": 1}), tiny_registry)
    counts = accumulate((classify_transfers(c, tiny_registry) for c in chains), 3)
    direct = analyze_counts(counts, tiny_registry)
    assert list(res.pairs) == [(1, 1)]
    assert res.pairs[1, 1].counts == direct.counts
    np.testing.assert_array_equal(res.pairs[1, 1].scores.overall, direct.scores.overall)


def test_empty_zone_changes_nothing(tiny_registry):
    chains = [trip("a", "gangnam", "suwon", BUS, METRO), trip("b", "suwon", "suwon", METRO)]
    base = zonal_analyze(chains, ZonePartition(SEOUL_STOPS), tiny_registry)
    more = zonal_analyze(chains, ZonePartition(SEOUL_STOPS, zones=(3,)), tiny_registry)
    assert len(more.pairs) == 9
    for pair, r in base.pairs.items():
        assert more.pairs[pair].counts == r.counts
    assert all(more.pairs[p].counts.chains_counted == 0 for p in more.pairs if 3 in p)


def test_count_conservation_with_skips(tiny_registry):
    chains = [trip("a", "gangnam", "mars", BUS), trip("b", "suwon", "gangnam", BUS), trip("c", "x", "y", METRO)]
    res = zonal_analyze(chains, ZonePartition(SEOUL_STOPS), tiny_registry)
    assert res.skipped_unknown == 2 and res.chains_assigned == 1
    assert res.chains_processed == len(chains)


@pytest.mark.parametrize("policy", ["skip", "error"])
def test_file_scan_matches_reference(tmp_path, policy):
    spec = SynthSpec(seed=21, zone_setup=ZoneSetup(3, 40, 0.5, (4,)))
    path = tmp_path / "c.csv"
    write_corpus(spec, 3000, path)
    stops = dict(zone_map_rows(spec))
    if policy == "skip":
        for j in range(10):  # some stops fall outside the map
            stops.pop(f"Z2S{j:05d}")
    part = ZonePartition(stops, unknown_policy=policy)
    fast, report = zonal_file(path, SEOUL_MODES, part)
    slow = zonal_analyze(generate(spec, 3000), part, SEOUL_MODES)
    assert report.chains_accepted == 3000
    assert fast.skipped_unknown == slow.skipped_unknown
    assert (fast.skipped_unknown > 0) == (policy == "skip")
    for pair in part.pairs:
        assert fast.pairs[pair].counts == slow.pairs[pair].counts
    assert fast.totals.counts.chains_counted == 3000 - fast.skipped_unknown


def test_file_scan_unknown_stop_error(tmp_path, tiny_registry):
    path = tmp_path / "c.csv"
    write_chains([trip("a", "gangnam", "mars", BUS)], path)
    with pytest.raises(UnknownStop):
        zonal_file(path, tiny_registry, ZonePartition(SEOUL_STOPS, unknown_policy="error"))


def test_one_zone_file_equals_analyze(tmp_path):
    spec = SynthSpec(seed=2)
    path = tmp_path / "c.csv"
    write_corpus(spec, 2000, path)
    zonal, _ = zonal_file(path, SEOUL_MODES, ZonePartition(dict(zone_map_rows(spec))))
    flat, _ = analyze_file(path, SEOUL_MODES)
    assert zonal.pairs[1, 1].counts == flat.counts
    np.testing.assert_array_equal(zonal.pairs[1, 1].scores.overall, flat.scores.overall)
