from __future__ import annotations

import io
import json
import random

import pytest
from hypothesis import strategies as st

from transithier.ingest import write_chains
from transithier.model import Leg, ModeRegistry, TripChain

WALK, BUS, METRO = 1, 2, 3


@pytest.fixture
def tiny_registry() -> ModeRegistry:
    return ModeRegistry.from_names(["walking", "bus", "metro"])


@pytest.fixture
def worked_chain() -> TripChain:
    return TripChain("w1", (Leg(BUS, 3000.0), Leg(METRO, 5000.0)))


def chain(chain_id, *legs) -> TripChain:
    """Chain from ``(mode, distance)`` pairs with consistent stops and times."""
    out, clock = [], 0.0
    for k, (mode, dist) in enumerate(legs):
        out.append(Leg(mode, float(dist), f"s{k}", f"s{k + 1}", clock, clock + 60))
        clock += 120
    return TripChain(str(chain_id), tuple(out))


def csv_text(chains) -> str:
    buf = io.StringIO()
    write_chains(chains, buf)
    return buf.getvalue()


def write_modes(path, registry: ModeRegistry) -> None:
    path.write_text(json.dumps(registry.to_json()))


@st.composite
def corpora(draw, max_modes=4, max_chains=100, min_chains=0, max_dist=10_000):
    """``(registry, chains)`` with random mode count, walking id and legs.

    Hypothesis draws the shape and a seed; the legs come from that seed,
    which keeps generation cheap at thousands of examples. Small distance
    ranges are drawn often so midpoint ties and repeated pairs show up.
    """
    M = draw(st.integers(2, max_modes))
    walking = draw(st.integers(1, M))
    registry = ModeRegistry.from_names([f"m{i}" for i in range(1, M + 1)], walking=walking)
    transit = [i for i in range(1, M + 1) if i != walking]
    n = draw(st.integers(min_chains, max_chains))
    top = draw(st.sampled_from([2, 4, 10, max_dist]))
    rng = random.Random(draw(st.integers(0, 2**32 - 1)))
    chains = []
    for k in range(n):
        legs = [(rng.choice(transit), rng.randint(1, top)) for _ in range(rng.randint(1, 4))]
        chains.append(chain(f"c{k}", *legs))
    return registry, chains


# acceptance criteria outcomes, printed after the run
ACCEPTANCE: list[tuple[str, str, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{status} {name}" + (f": {detail}" if detail else ""))
