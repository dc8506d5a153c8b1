import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import jsonschema
import pytest

from transithier.cli import EXIT_INPUT, EXIT_OK, EXIT_USAGE, main
from transithier.model import SEOUL_MODES
from transithier.report import load_schema

from conftest import BUS, METRO, chain, csv_text, write_modes


@pytest.fixture
def worked(tmp_path, tiny_registry):
    chains = tmp_path / "chains.csv"
    chains.write_text(csv_text([chain("w1", (BUS, 3000), (METRO, 5000))]))
    modes = tmp_path / "modes.json"
    write_modes(modes, tiny_registry)
    return chains, modes


def run(*argv):
    return main([str(a) for a in argv])


def load(path):
    return json.loads(path.read_text())


def overall(result):
    return {s["name"]: s["overall"] for s in result["scores"]}


def strip_created(doc):
    doc["manifest"].pop("created")
    return doc


def test_analyze_worked_example(tmp_path, worked):
    chains, modes = worked
    out = tmp_path / "r.json"
    assert run("analyze", "--chains", chains, "--modes", modes, "--out", out) == EXIT_OK
    doc = load(out)
    jsonschema.validate(doc, load_schema())
    assert overall(doc["result"]) == {"walking": 0.0, "bus": 0.5, "metro": 1.0}
    assert [r["name"] for r in doc["result"]["ranking"]] == ["metro", "bus", "walking"]
    assert doc["ingest"]["chains_accepted"] == 1


def test_analyze_is_deterministic(tmp_path, worked):
    chains, modes = worked
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run("analyze", "--chains", chains, "--modes", modes, "--out", a)
    run("analyze", "--chains", chains, "--modes", modes, "--out", b)
    assert strip_created(load(a)) == strip_created(load(b))


def test_analyze_empty_corpus(tmp_path, worked):
    _, modes = worked
    chains = tmp_path / "empty.csv"
    chains.write_text(csv_text([]))
    out = tmp_path / "r.json"
    assert run("analyze", "--chains", chains, "--modes", modes, "--out", out) == EXIT_OK
    res = load(out)["result"]
    assert res["chains"] == 0
    assert all(v == 0 for row in res["counts"]["ascending"] for v in row)
    assert res["ranking"] == [] and res["unobserved"] == [1, 2, 3]


def test_missing_modes_file(tmp_path, worked, capsys):
    chains, _ = worked
    missing = tmp_path / "nope.json"
    assert run("analyze", "--chains", chains, "--modes", missing) == EXIT_INPUT
    assert str(missing) in capsys.readouterr().err


def test_bad_row_is_reported_not_fatal(tmp_path, worked):
    chains, modes = worked
    chains.write_text(chains.read_text() + "w2,0,9,100,a,b,0,10\n")
    out = tmp_path / "v.json"
    assert run("validate", "--chains", chains, "--modes", modes, "--out", out) == EXIT_OK
    rep = load(out)
    assert rep["chains_accepted"] == 1 and rep["chains_rejected"] == 1


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        run("analyze", "--bogus")
    assert exc.value.code == EXIT_USAGE
    assert run("synth", "--n", "5") == EXIT_USAGE


def test_zonal_keys_and_single_zone(tmp_path, worked):
    chains, modes = worked
    zones = tmp_path / "zones.csv"
    zones.write_text("stop_id,zone_id\ns0,1\ns2,2\ns1,2\n")
    out = tmp_path / "z.json"
    assert run("zonal", "--chains", chains, "--modes", modes, "--zones", zones, "--out", out) == 0
    doc = load(out)
    jsonschema.validate(doc, load_schema())
    assert sorted(doc["pairs"]) == ["1->1", "1->2", "2->1", "2->2"]
    assert doc["pairs"]["1->2"]["chain_count"] == 1
    assert doc["pairs"]["1->2"]["low_support"]

    zones.write_text("stop_id,zone_id\ns0,7\ns1,7\ns2,7\n")
    flat = tmp_path / "r.json"
    run("zonal", "--chains", chains, "--modes", modes, "--zones", zones, "--out", out)
    run("analyze", "--chains", chains, "--modes", modes, "--out", flat)
    assert load(out)["pairs"]["7->7"]["result"] == load(flat)["result"]


def test_synth_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert run("synth", "--n", 1000, "--seed", 42, "--out", p) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    echo = load(tmp_path / "a.csv.spec.json")
    assert echo["n"] == 1000 and echo["spec"]["seed"] == 42


def test_synth_rejects_noise_at_half_or_more(tmp_path, capsys):
    assert run("synth", "--n", 10, "--noise", 0.6, "--out", tmp_path / "x.csv") == EXIT_USAGE
    assert "noise" in capsys.readouterr().err


def test_synth_zero_chains(tmp_path):
    out = tmp_path / "x.csv"
    assert run("synth", "--n", 0, "--out", out) == EXIT_OK
    assert len(out.read_text().splitlines()) == 1


def test_synth_zones_then_zonal(tmp_path):
    chains, zones, out = tmp_path / "c.csv", tmp_path / "z.csv", tmp_path / "r.json"
    assert run("synth", "--n", 500, "--n-zones", 2, "--stops-per-zone", 30,
               "--out", chains, "--zones", zones) == EXIT_OK
    modes = tmp_path / "m.json"
    write_modes(modes, SEOUL_MODES)
    assert run("zonal", "--chains", chains, "--modes", modes, "--zones", zones, "--out", out) == 0
    doc = load(out)
    assert sum(p["chain_count"] for p in doc["pairs"].values()) == 500


def test_plot_data(tmp_path, worked):
    chains, modes = worked
    res, fig, svg = tmp_path / "r.json", tmp_path / "fig.csv", tmp_path / "fig.svg"
    run("analyze", "--chains", chains, "--modes", modes, "--out", res)
    assert run("plot-data", "--result", res, "--out", fig, "--svg", svg) == EXIT_OK
    lines = fig.read_text().splitlines()
    assert lines[0] == "mode_id,mode_name,ascending_score,descending_score,overall"
    assert lines[1:] == [
        "1,walking,0.000000,0.000000,0.000000",
        "2,bus,0.500000,0.500000,0.500000",
        "3,metro,1.000000,1.000000,1.000000",
    ]
    assert not (tmp_path / "fig.csv.unobserved.txt").exists()
    root = ET.parse(svg).getroot()
    ns = "{http://www.w3.org/2000/svg}"
    dots = [c for c in root.iter(ns + "circle") if c.get("class") == "mode"]
    assert len(dots) == 3
    for c in dots:  # every worked mode lies on the diagonal
        assert float(c.get("cx")) + float(c.get("cy")) == pytest.approx(480)
    assert [l for l in root.iter(ns + "line") if l.get("class") == "diagonal"]


def test_plot_data_unobserved_sidecar(tmp_path, tiny_registry):
    chains, modes = tmp_path / "c.csv", tmp_path / "m.json"
    chains.write_text(csv_text([chain("a", (BUS, 100))]))
    write_modes(modes, tiny_registry)
    res, fig = tmp_path / "r.json", tmp_path / "fig.csv"
    run("analyze", "--chains", chains, "--modes", modes, "--out", res)
    assert run("plot-data", "--result", res, "--out", fig) == EXIT_OK
    assert len(fig.read_text().splitlines()) == 3
    assert "3,metro" in (tmp_path / "fig.csv.unobserved.txt").read_text()


def test_plot_data_zonal_needs_pair(tmp_path, worked):
    chains, modes = worked
    zones, res = tmp_path / "z.csv", tmp_path / "z.json"
    zones.write_text("stop_id,zone_id\ns0,1\ns1,1\ns2,1\n")
    run("zonal", "--chains", chains, "--modes", modes, "--zones", zones, "--out", res)
    assert run("plot-data", "--result", res, "--out", tmp_path / "f.csv") == EXIT_INPUT
    assert run("plot-data", "--result", res, "--pair", "1->1", "--out", tmp_path / "f.csv") == 0


def test_console_script_entry(tmp_path, worked):
    chains, modes = worked
    proc = subprocess.run(
        [sys.executable, "-m", "transithier.cli", "analyze", "--chains", chains, "--modes", modes],
        capture_output=True, text=True, check=True,
    )
    assert json.loads(proc.stdout)["result"]["ranking"][0]["name"] == "metro"
