"""Command-line interface: ``transithier {analyze,zonal,synth,plot-data,validate}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .hierarchy import HierarchyConfig, HierarchyResult, analyze_counts
from .ingest import IngestError, parse_mode_registry, parse_zone_map
from .model import SEOUL_MODES, ModeRegistry, RegistryError
from .pipeline import count_file, set_threads, zonal_file
from .report import (
    MalformedDocument,
    analyze_document,
    dumps,
    figure_csv,
    figure_rows,
    manifest,
    scatter_svg,
    select_result,
    zonal_document,
)
from .synth import InvalidSpec, SynthSpec, ZoneSetup, write_corpus, write_zone_map
from .zonal import UnknownStop, ZonePartition

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("transithier")


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class InvariantViolation(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args) -> dict:
    return {
        "ascending_sign": args.ascending_sign,
        "undefined_pairs": args.undefined_pairs,
        "unknown_stops": args.unknown_stops,
        "min_chains": args.min_chains,
    }


def _need(path, what) -> Path:
    if path is None:
        raise UsageError(f"--{what} is required")
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{what} file not found: {path}")
    return p


def _registry(args) -> ModeRegistry:
    path = _need(args.modes, "modes")
    try:
        return parse_mode_registry(path)
    except RegistryError as exc:
        raise InputError(f"{path}: {exc}") from None


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def check_invariants(result: HierarchyResult, walking: int) -> None:
    """Cheap consistency checks on a finished analysis."""
    c = result.counts
    w = walking - 1
    if c.ascending[w].sum() != c.chains_counted or c.descending[:, w].sum() != c.chains_counted:
        raise InvariantViolation("walking boundary transfers do not match the chain count")
    for R in (result.A, result.D):
        both = ~np.isnan(R) & ~np.isnan(R.T)
        if np.any(np.abs((R + R.T)[both] - 1) > 1e-12):
            raise InvariantViolation("transfer rates are not complementary")
    s = result.scores
    for v in (s.ascending, s.descending, s.overall):
        if np.any((v < 0) | (v > 1)):
            raise InvariantViolation("a score left [0, 1]")


def cmd_analyze(args) -> int:
    registry = _registry(args)
    chains = _need(args.chains, "chains")
    config = HierarchyConfig(args.ascending_sign, args.undefined_pairs)
    counts, report = count_file(chains, registry)
    result = analyze_counts(counts, registry, config)
    check_invariants(result, registry.walking)
    m = manifest("analyze", {"chains": chains, "modes": args.modes}, _config(args))
    _emit(dumps(analyze_document(result, registry, report, m)), args.out)
    return EXIT_OK


def cmd_zonal(args) -> int:
    registry = _registry(args)
    chains = _need(args.chains, "chains")
    zones = _need(args.zones, "zones")
    config = HierarchyConfig(args.ascending_sign, args.undefined_pairs)
    partition = ZonePartition(parse_zone_map(zones), unknown_policy=args.unknown_stops)
    results, report = zonal_file(chains, registry, partition, config)
    for res in results.pairs.values():
        check_invariants(res, registry.walking)
    m = manifest(
        "zonal", {"chains": chains, "modes": args.modes, "zones": zones}, _config(args)
    )
    _emit(dumps(zonal_document(results, registry, report, m, args.min_chains)), args.out)
    return EXIT_OK


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def build_spec(args) -> SynthSpec:
    registry = _registry(args) if args.modes else SEOUL_MODES
    zone_setup = None
    if args.n_zones:
        zone_setup = ZoneSetup(
            n_zones=args.n_zones,
            stops_per_zone=args.stops_per_zone,
            interzonal_fraction=args.interzonal_fraction,
            interzonal_only_modes=_ints(args.interzonal_only),
        )
    return SynthSpec(
        registry=registry,
        planted_order=_ints(args.planted_order),
        chain_length_weights=_floats(args.length_weights),
        noise=args.noise,
        mean_leg_distance=args.mean_leg_distance,
        zone_setup=zone_setup,
        seed=args.seed,
        n_stops=args.n_stops,
    )


def cmd_synth(args) -> int:
    if args.out is None:
        raise UsageError("--out is required")
    if args.n < 0:
        raise UsageError("--n must be non-negative")
    try:
        spec = build_spec(args)
    except (InvalidSpec, ValueError) as exc:
        raise UsageError(f"invalid synthetic spec: {exc}") from None
    out = Path(args.out)
    write_corpus(spec, args.n, out)
    echo = {"n": args.n, "spec": spec.to_json(), "tool_version": __version__}
    spec_out = Path(args.spec_out) if args.spec_out else out.with_name(out.name + ".spec.json")
    spec_out.write_text(json.dumps(echo, indent=2) + "\n", encoding="utf-8")
    if args.zones:
        write_zone_map(spec, args.zones)
    return EXIT_OK


def cmd_plot_data(args) -> int:
    if args.out is None:
        raise UsageError("--out is required")
    path = _need(args.result, "result")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise InputError(f"{path}: not a result document")
    rows, hidden = figure_rows(select_result(doc, args.pair))
    out = Path(args.out)
    out.write_text(figure_csv(rows), encoding="utf-8")
    if hidden:
        note = out.with_name(out.name + ".unobserved.txt")
        note.write_text(
            "modes with no observed transfers, left out of the figure data:\n"
            + "".join(f"{r['mode_id']},{r['mode_name']}\n" for r in hidden),
            encoding="utf-8",
        )
    if args.svg:
        title = "Ascending vs descending hierarchy" + (f" ({args.pair})" if args.pair else "")
        Path(args.svg).write_text(scatter_svg(rows, title), encoding="utf-8")
    return EXIT_OK


def cmd_validate(args) -> int:
    registry = _registry(args)
    chains = _need(args.chains, "chains")
    _, report = count_file(chains, registry)
    _emit(json.dumps(report.to_json(), indent=2) + "\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--chains", help="chains CSV")
    common.add_argument("--modes", help="modes JSON")
    common.add_argument("--zones", help="zone map CSV (for synth: where to write it)")
    common.add_argument("--out", help="output path (default: stdout where sensible)")
    common.add_argument("--ascending-sign", choices=("flipped", "literal"), default="flipped")
    common.add_argument("--undefined-pairs", choices=("exclude", "zero"), default="exclude")
    common.add_argument("--unknown-stops", choices=("skip", "error"), default="skip")
    common.add_argument("--min-chains", type=int, default=1000)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="transithier", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("analyze", parents=[common], help="single-zone hierarchy analysis").set_defaults(
        func=cmd_analyze
    )
    sub.add_parser("zonal", parents=[common], help="per zone-pair analysis").set_defaults(
        func=cmd_zonal
    )
    sub.add_parser("validate", parents=[common], help="ingest dry run").set_defaults(
        func=cmd_validate
    )

    p = sub.add_parser("synth", parents=[common], help="write a synthetic corpus")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--planted-order", default="2,3,5,6,4", help="mode ids, lowest first")
    p.add_argument("--length-weights", default="0.3,0.35,0.25,0.1")
    p.add_argument("--mean-leg-distance", type=float, default=3000.0)
    p.add_argument("--n-stops", type=int, default=2000)
    p.add_argument("--n-zones", type=int, default=0)
    p.add_argument("--stops-per-zone", type=int, default=500)
    p.add_argument("--interzonal-fraction", type=float, default=0.3)
    p.add_argument("--interzonal-only", default="", help="mode ids absent from intrazonal chains")
    p.add_argument("--spec-out", help="spec echo path (default: OUT.spec.json)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("plot-data", parents=[common], help="figure data and SVG scatter")
    p.add_argument("--result", help="result document from analyze or zonal")
    p.add_argument("--pair", help="zone pair of a zonal document, e.g. 1->2")
    p.add_argument("--svg", help="also write an SVG scatter here")
    p.set_defaults(func=cmd_plot_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    set_threads(args.threads)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"transithier {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, IngestError, RegistryError, UnknownStop, MalformedDocument) as exc:
        msg = exc.args[0] if isinstance(exc, UnknownStop) else exc
        print(f"transithier {args.command}: input error: {msg}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"transithier {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InvariantViolation as exc:
        print(f"transithier {args.command}: internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
