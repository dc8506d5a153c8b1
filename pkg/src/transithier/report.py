"""Result documents, figure data and the ascending-vs-descending SVG scatter."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from datetime import datetime, timezone
from importlib import resources
from xml.sax.saxutils import escape

import numpy as np

from . import __version__
from .hierarchy import HierarchyResult
from .ingest import IngestReport
from .model import ModeRegistry
from .zonal import ZonalResults, pair_key

SCHEMA_ID = "transithier/result/v1"
FIGURE_COLUMNS = ("mode_id", "mode_name", "ascending_score", "descending_score", "overall")


class MalformedDocument(ValueError):
    pass


def file_digest(path, chunk: int = 1 << 22) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        while block := fh.read(chunk):
            h.update(block)
    return h.hexdigest()


def manifest(command: str, inputs: dict, config: dict, seed=None) -> dict:
    """Reproducibility record; ``created`` is the only non-deterministic field."""
    return {
        "command": command,
        "inputs": {
            name: {"path": str(path), "sha256": file_digest(path)}
            for name, path in sorted(inputs.items())
            if path is not None
        },
        "config": config,
        "seed": seed,
        "tool_version": __version__,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def _matrix(m: np.ndarray) -> list:
    return [[None if math.isnan(x) else float(x) for x in row] for row in np.asarray(m, float)]


def result_json(result: HierarchyResult, registry: ModeRegistry) -> dict:
    s = result.scores
    observed = s.observed
    return {
        "chains": int(result.counts.chains_counted),
        "counts": {
            "ascending": result.counts.ascending.tolist(),
            "descending": result.counts.descending.tolist(),
        },
        "rates": {"ascending": _matrix(result.A), "descending": _matrix(result.D)},
        "distances": {"ascending": _matrix(result.A_star), "descending": _matrix(result.D_star)},
        "scores": [
            {
                "mode_id": m.id,
                "name": m.name,
                "ascending": float(s.ascending[k]),
                "descending": float(s.descending[k]),
                "overall": float(s.overall[k]),
                "defined_pairs_asc": int(s.defined_pairs_asc[k]),
                "defined_pairs_desc": int(s.defined_pairs_desc[k]),
                "observed": bool(observed[k]),
            }
            for k, m in enumerate(registry.modes)
        ],
        "ranking": [
            {"rank": r, "mode_id": e.mode_id, "name": e.name, "overall": e.score, "tied": e.tied}
            for r, e in enumerate(result.ranking.ranked, 1)
        ],
        "unobserved": list(result.ranking.unobserved),
    }


def analyze_document(
    result: HierarchyResult, registry: ModeRegistry, report: IngestReport, run_manifest: dict
) -> dict:
    return {
        "schema": SCHEMA_ID,
        "kind": "analyze",
        "manifest": run_manifest,
        "modes": registry.to_json(),
        "ingest": report.to_json(),
        "result": result_json(result, registry),
    }


def zonal_document(
    results: ZonalResults,
    registry: ModeRegistry,
    report: IngestReport,
    run_manifest: dict,
    min_chains: int = 1000,
) -> dict:
    zones = sorted({p for p, _ in results.pairs})
    pairs = {}
    for (p, q), res in sorted(results.pairs.items()):
        n = int(res.counts.chains_counted)
        pairs[pair_key(p, q)] = {
            "origin": p,
            "destination": q,
            "chain_count": n,
            "low_support": n < min_chains,
            "result": result_json(res, registry),
        }
    return {
        "schema": SCHEMA_ID,
        "kind": "zonal",
        "manifest": run_manifest,
        "modes": registry.to_json(),
        "ingest": report.to_json(),
        "zones": zones,
        "min_chains": min_chains,
        "skipped_unknown": results.skipped_unknown,
        "pairs": pairs,
        "totals": result_json(results.totals, registry),
    }


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def load_schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("schema/result.schema.json").read_text())


def select_result(doc: dict, pair: str | None = None) -> dict:
    """The single-zone result block of a document (one pair for zonal ones)."""
    try:
        if doc.get("kind") == "zonal":
            if pair is None:
                raise MalformedDocument(
                    f"zonal document: choose a pair with --pair, one of {sorted(doc['pairs'])}"
                )
            if pair not in doc["pairs"]:
                raise MalformedDocument(f"pair {pair!r} not in document")
            return doc["pairs"][pair]["result"]
        if doc.get("kind") == "analyze":
            return doc["result"]
    except (KeyError, TypeError, AttributeError) as exc:
        raise MalformedDocument(f"malformed result document: {exc}") from None
    raise MalformedDocument("not a result document (missing or unknown 'kind')")


def figure_rows(result: dict) -> tuple[list[dict], list[dict]]:
    """Observed modes as figure rows, and the unobserved ones set aside."""
    try:
        rows, hidden = [], []
        for s in result["scores"]:
            entry = {
                "mode_id": int(s["mode_id"]),
                "mode_name": str(s["name"]),
                "ascending_score": float(s["ascending"]),
                "descending_score": float(s["descending"]),
                "overall": float(s["overall"]),
            }
            (rows if s["observed"] else hidden).append(entry)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedDocument(f"malformed scores block: {exc}") from None
    return rows, hidden


def figure_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FIGURE_COLUMNS)
    for r in rows:
        writer.writerow(
            [
                r["mode_id"],
                r["mode_name"],
                f"{r['ascending_score']:.6f}",
                f"{r['descending_score']:.6f}",
                f"{r['overall']:.6f}",
            ]
        )
    return buf.getvalue()


# plot geometry, in SVG user units
SIZE, MARGIN = 480, 60


def to_svg_xy(a: float, d: float) -> tuple[float, float]:
    span = SIZE - 2 * MARGIN
    return MARGIN + a * span, SIZE - MARGIN - d * span


def scatter_svg(rows: list[dict], title: str = "Ascending vs descending hierarchy") -> str:
    """Standalone SVG: ascending score on x, descending on y, with the y = x line."""
    x0, y0 = to_svg_xy(0, 0)
    x1, y1 = to_svg_xy(1, 1)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" '
        f'viewBox="0 0 {SIZE} {SIZE}" font-family="sans-serif" font-size="12">',
        f'<title>{escape(title)}</title>',
        f'<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white"/>',
        f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" fill="none" stroke="#444"/>',
        f'<line class="diagonal" x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="orange" stroke-width="2"/>',
    ]
    for t in (0, 0.25, 0.5, 0.75, 1):
        tx, _ = to_svg_xy(t, 0)
        _, ty = to_svg_xy(0, t)
        out.append(f'<text x="{tx}" y="{y0 + 18}" text-anchor="middle">{t:g}</text>')
        out.append(f'<text x="{x0 - 8}" y="{ty + 4}" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{(x0 + x1) / 2}" y="{SIZE - 15}" text-anchor="middle">ascending score</text>')
    out.append(
        f'<text x="18" y="{(y0 + y1) / 2}" text-anchor="middle" '
        f'transform="rotate(-90 18 {(y0 + y1) / 2})">descending score</text>'
    )
    for r in rows:
        cx, cy = to_svg_xy(r["ascending_score"], r["descending_score"])
        name = escape(r["mode_name"])
        out.append(
            f'<circle class="mode" data-mode-id="{r["mode_id"]}" cx="{cx:.3f}" cy="{cy:.3f}" '
            f'r="5" fill="steelblue"><title>{name}</title></circle>'
        )
        out.append(f'<text x="{cx + 8:.3f}" y="{cy - 8:.3f}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
