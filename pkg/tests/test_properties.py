"""Property-based checks of the hierarchy pipeline, 1000 generated corpora each."""
import dataclasses
import random

import numpy as np
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from transithier.hierarchy import HierarchyConfig, accumulate, analyze_counts, merge
from transithier.model import Leg, ModeRegistry, Phase, TripChain, classify_transfers
from transithier.synth import oracle_analyze
from transithier.zonal import ZonePartition, zonal_analyze

from conftest import corpora

CASES = 1000
configs = st.builds(
    HierarchyConfig,
    st.sampled_from(["flipped", "literal"]),
    st.sampled_from(["exclude", "zero"]),
)
cases = settings(
    max_examples=CASES,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)


def counts_of(chains, registry):
    return accumulate((classify_transfers(c, registry) for c in chains), registry.M)


def analyze(chains, registry, config=HierarchyConfig()):
    return analyze_counts(counts_of(chains, registry), registry, config)


def defined_pairs(R):
    both = ~np.isnan(R) & ~np.isnan(R.T)
    np.fill_diagonal(both, False)
    return both


@cases
@given(corpora(), configs)
def test_complementarity(corpus, config):
    registry, chains = corpus
    res = analyze(chains, registry, config)
    for R in (res.A, res.D):
        mask = defined_pairs(R)
        assert np.all(np.abs((R + R.T)[mask] - 1) <= 1e-12)
        # a rate is defined exactly when its mirror is
        assert np.array_equal(np.isnan(R), np.isnan(R.T))


@cases
@given(corpora(), configs)
def test_antisymmetry(corpus, config):
    registry, chains = corpus
    res = analyze(chains, registry, config)
    for S in (res.A_star, res.D_star):
        mask = defined_pairs(S)
        assert np.array_equal(S[mask], -S.T[mask])


@cases
@given(corpora(), configs)
def test_scores_in_unit_interval(corpus, config):
    registry, chains = corpus
    s = analyze(chains, registry, config).scores
    for v in (s.ascending, s.descending, s.overall):
        assert np.all((v >= 0) & (v <= 1))


@cases
@given(corpora(), st.sampled_from([0.5, 0.25, 2.0, 4.0, 8.0, 1024.0, 3.0, 7.0, 1000.0]))
def test_scale_invariance(corpus, c):
    registry, chains = corpus
    scaled = [
        TripChain(ch.chain_id, tuple(dataclasses.replace(l, distance=l.distance * c) for l in ch.legs))
        for ch in chains
    ]
    assert counts_of(scaled, registry) == counts_of(chains, registry)


def tie_groups(ranking, tol=1e-12):
    """Ranked names grouped into sets of (near-)equal scores."""
    groups = []
    for e in ranking.ranked:
        if groups and abs(groups[-1][0] - e.score) <= tol:
            groups[-1][1].add(e.name)
        else:
            groups.append((e.score, {e.name}))
    return [g for _, g in groups]


@cases
@given(corpora(), st.randoms(use_true_random=False), configs)
def test_relabeling_equivariance(corpus, rng, config):
    registry, chains = corpus
    M = registry.M
    new_ids = list(range(1, M + 1))
    rng.shuffle(new_ids)
    perm = dict(zip(range(1, M + 1), new_ids))
    names = [None] * M
    for old, new in perm.items():
        names[new - 1] = registry.name(old)
    relabeled_registry = ModeRegistry.from_names(names, walking=perm[registry.walking])
    relabeled = [
        TripChain(ch.chain_id, tuple(dataclasses.replace(l, mode=perm[l.mode]) for l in ch.legs))
        for ch in chains
    ]
    base = analyze(chains, registry, config)
    moved = analyze(relabeled, relabeled_registry, config)
    idx = [perm[i] - 1 for i in range(1, M + 1)]
    for a, b in (
        (base.scores.ascending, moved.scores.ascending),
        (base.scores.descending, moved.scores.descending),
        (base.scores.overall, moved.scores.overall),
    ):
        np.testing.assert_allclose(b[idx], a, rtol=0, atol=1e-12)
    assert tie_groups(moved.ranking) == tie_groups(base.ranking)
    assert set(relabeled_registry.name(i) for i in moved.ranking.unobserved) == set(
        registry.name(i) for i in base.ranking.unobserved
    )


def has_midpoint_transfer(chain):
    length, where = chain.total_distance, 0.0
    for leg in chain.legs[:-1]:
        where += leg.distance
        if where == length / 2:
            return True
    return False


@cases
@given(corpora())
def test_reversal_duality(corpus):
    registry, chains = corpus
    assume(not any(has_midpoint_transfer(c) for c in chains))
    reversed_chains = [TripChain(c.chain_id, tuple(reversed(c.legs))) for c in chains]
    fwd = counts_of(chains, registry)
    rev = counts_of(reversed_chains, registry)
    assert np.array_equal(rev.ascending, fwd.descending.T)
    assert np.array_equal(rev.descending, fwd.ascending.T)
    s_fwd = analyze_counts(fwd, registry).scores
    s_rev = analyze_counts(rev, registry).scores
    np.testing.assert_allclose(s_rev.ascending, s_fwd.descending, rtol=0, atol=1e-12)
    np.testing.assert_allclose(s_rev.descending, s_fwd.ascending, rtol=0, atol=1e-12)


@cases
@given(corpora(), st.sampled_from([1, 4, 16]), st.randoms(use_true_random=False))
def test_sharding_determinism(corpus, shards, rng):
    registry, chains = corpus
    parts = [[] for _ in range(shards)]
    for c in chains:
        parts[rng.randrange(shards)].append(c)
    for p in parts:
        rng.shuffle(p)
    rng.shuffle(parts)
    merged = counts_of(parts[0], registry)
    for p in parts[1:]:
        merged = merge(merged, counts_of(p, registry))
    assert merged == counts_of(chains, registry)


@cases
@given(corpora(), st.integers(1, 3), st.randoms(use_true_random=False), configs)
def test_partition_consistency(corpus, n_zones, rng, config):
    registry, chains = corpus
    pool = [f"st{k}" for k in range(8)]
    stop_zone = {s: rng.randint(1, n_zones) for s in pool[:-1]}  # last stop is unmapped
    placed = []
    for c in chains:
        legs = list(c.legs)
        legs[0] = dataclasses.replace(legs[0], board_stop=rng.choice(pool))
        legs[-1] = dataclasses.replace(legs[-1], alight_stop=rng.choice(pool))
        placed.append(TripChain(c.chain_id, tuple(legs)))
    part = ZonePartition(stop_zone)
    zonal = zonal_analyze(placed, part, registry, config)
    for (p, q), res in zonal.pairs.items():
        subset = [
            c for c in placed
            if stop_zone.get(c.origin_stop) == p and stop_zone.get(c.destination_stop) == q
        ]
        direct = analyze(subset, registry, config)
        assert res.counts == direct.counts
        for x, y in zip(
            (res.A, res.D, res.A_star, res.D_star, res.scores.overall),
            (direct.A, direct.D, direct.A_star, direct.D_star, direct.scores.overall),
        ):
            np.testing.assert_array_equal(x, y)
    assert sum(r.counts.chains_counted for r in zonal.pairs.values()) + zonal.skipped_unknown == len(placed)


@cases
@given(corpora())
def test_walking_extremum(corpus):
    registry, chains = corpus
    res = analyze(chains, registry)
    w = registry.walking - 1
    assert res.counts.ascending[:, w].sum() == 0
    assert res.counts.descending[w, :].sum() == 0
    for S in (res.A_star, res.D_star):
        row = np.delete(S[w], w)
        assert np.all(row[~np.isnan(row)] == -1)
    s = res.scores
    if s.observed[w]:
        assert s.overall[w] == s.overall[s.observed].min()


def assert_results_equal(got, want, tol=1e-12):
    assert got.counts == want.counts
    for x, y in (
        (got.A, want.A),
        (got.D, want.D),
        (got.A_star, want.A_star),
        (got.D_star, want.D_star),
        (got.scores.ascending, want.scores.ascending),
        (got.scores.descending, want.scores.descending),
        (got.scores.overall, want.scores.overall),
    ):
        np.testing.assert_array_equal(np.isnan(x), np.isnan(y))
        np.testing.assert_allclose(x, y, rtol=0, atol=tol, equal_nan=True)
    assert list(got.ranking.order) == list(want.ranking.order)
    assert tuple(got.ranking.unobserved) == tuple(want.ranking.unobserved)


@cases
@given(corpora(), configs)
def test_pipeline_matches_oracle(corpus, config):
    registry, chains = corpus
    assert_results_equal(analyze(chains, registry, config), oracle_analyze(chains, registry, config))


def test_transfer_positions_reverse():
    """A single reversed chain maps each transfer i->j at x to j->i at L - x."""
    registry = ModeRegistry.from_names(["walking", "bus", "metro", "rail"])
    chain = TripChain("r", (Leg(2, 1000.0), Leg(3, 2500.0), Leg(4, 700.0)))
    back = TripChain("r", tuple(reversed(chain.legs)))
    fwd = {(t.from_mode, t.to_mode, t.phase) for t in classify_transfers(chain, registry)}
    rev = {(t.to_mode, t.from_mode, Phase(1 - t.phase)) for t in classify_transfers(back, registry)}
    assert fwd == rev
