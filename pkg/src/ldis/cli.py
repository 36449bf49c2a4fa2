"""Command-line entry point.

Subcommands mirror the pipeline stages (`ingest`, `relate`, `augment`,
`veg`, `score`, `report`, `run`) plus the statistical tools (`did`,
`synth`). Stage subcommands need --config; each executes the pipeline up
to its stage and emits that stage's artifacts into the output directory.
The LDIS_LOG environment variable sets the log level.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from .errors import LdisError
from .pipeline import EXIT_FATAL, load_run_config, run_pipeline
from .stats import (
    DiDPanel,
    did_fit,
    panel_from_series,
    significance_stars,
    synthetic_control_series,
)
from .vegetation import ZoneIndexSeries

logger = logging.getLogger("ldis")

STAGE_COMMANDS = {
    "ingest": "ingest",
    "relate": "relate",
    "augment": "augment",
    "veg": "veg",
    "score": "score",
    "report": "report",
    "run": "report",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ldis",
        description="Location-data integrity scoring for georeferenced planting sites",
    )
    parser.add_argument("--config", help="run configuration (JSON)")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--workers", type=int, help="worker count (overrides config)")
    parser.add_argument("--seed", type=int, help="random seed (overrides config)")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in [
        ("ingest", "parse and harmonize the site catalog"),
        ("relate", "detect duplicate/nested/intersecting sites"),
        ("augment", "compute raster/vector overlay indicators"),
        ("veg", "compute vegetation-index zone series"),
        ("score", "evaluate the ten integrity indicators"),
        ("report", "emit the summary report"),
        ("run", "full pipeline"),
    ]:
        sub.add_parser(name, help=help_text)

    did = sub.add_parser("did", help="difference-in-differences fit")
    did.add_argument("--panel", help="panel CSV with columns unit_id,g,t,y")
    did.add_argument("--series", help="veg_series.csv to build the panel from")
    did.add_argument("--horizon", type=int, default=1, help="-1, 1, 2 or 5 (with --series)")
    did.add_argument("--index", default="ndvi", help="index column for --series panels")
    did.add_argument("--out-file", help="write the JSON result here instead of stdout")

    synth = sub.add_parser("synth", help="synthetic-control series")
    synth.add_argument("--controls", required=True, help="CSV point_id,period,value")
    synth.add_argument("--site-values", required=True, help="CSV site_id,value (at planting)")
    synth.add_argument("--buckets", type=int, default=10)
    synth.add_argument("--out-file", help="write the JSON result here instead of stdout")

    return parser


def _setup_logging() -> None:
    level = os.environ.get("LDIS_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )


def _read_panel_csv(path) -> DiDPanel:
    unit, g, t, y = [], [], [], []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            unit.append(row["unit_id"])
            g.append(int(row["g"]))
            t.append(int(row["t"]))
            y.append(float(row["y"]))
    return DiDPanel(np.array(unit, dtype=object), g, t, y)


def _read_series_csv(path) -> list:
    series = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            evaluable = row["evaluable"] == "true"
            series.append(
                ZoneIndexSeries(
                    row["site_id"],
                    row["zone"],
                    int(row["period"]),
                    row["index"],
                    float(row["mean"]) if row["mean"] else None,
                    int(row["pixel_count"]),
                    evaluable,
                )
            )
    return series


def _emit_json(doc, out_file) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True)
    if out_file:
        with open(out_file, "w") as f:
            f.write(text + "\n")
    else:
        print(text)


def cmd_did(args) -> int:
    if bool(args.panel) == bool(args.series):
        raise LdisError("did needs exactly one of --panel or --series")
    if args.panel:
        panel = _read_panel_csv(args.panel)
    else:
        panel = panel_from_series(_read_series_csv(args.series), args.horizon, args.index)
    result = did_fit(panel)
    names = ("intercept", "treat_g", "time_t", "treat_time_gt")
    doc = {
        "coefficients": {
            name: {
                "estimate": beta,
                "se": se,
                "p_value": p,
                "stars": significance_stars(p),
            }
            for name, beta, se, p in zip(names, result.betas, result.se, result.p_values)
        },
        "n_obs": result.n_obs,
        "r2": result.r2,
        "adj_r2": result.adj_r2,
        "residual_std_error": result.residual_std_error,
        "df_resid": result.df_resid,
        "f_stat": result.f_stat,
    }
    _emit_json(doc, args.out_file)
    return 0


def cmd_synth(args) -> int:
    by_point = {}
    periods = set()
    with open(args.controls, newline="") as f:
        for row in csv.DictReader(f):
            period = int(row["period"])
            periods.add(period)
            by_point.setdefault(row["point_id"], {})[period] = float(row["value"])
    periods = sorted(periods)
    points = sorted(pid for pid, vals in by_point.items() if len(vals) == len(periods))
    control_values = np.array([[by_point[p][t] for t in periods] for p in points])
    if 0 not in periods:
        raise LdisError("controls must include period 0 (planting) values")
    at_planting = control_values[:, periods.index(0)]

    site_values = []
    with open(args.site_values, newline="") as f:
        for row in csv.DictReader(f):
            site_values.append(float(row["value"]))

    result = synthetic_control_series(
        control_values, at_planting, np.array(site_values), n_buckets=args.buckets
    )
    if result is None:
        raise LdisError("no control point falls in any site NDVI bucket")
    doc = {
        "periods": periods,
        "series": [float(v) for v in result.series],
        "weights": [float(w) for w in result.weights],
        "bin_edges": [float(e) for e in result.bin_edges],
        "control_counts": [int(c) for c in result.control_counts],
        "dropped_bins": result.dropped_bins,
        "renormalized": result.renormalized,
        "n_controls": len(points),
    }
    _emit_json(doc, args.out_file)
    return 0


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "did":
            return cmd_did(args)
        if args.command == "synth":
            return cmd_synth(args)
        if not args.config:
            raise LdisError(f"{args.command} requires --config")
        cfg = load_run_config(args.config, out=args.out, workers=args.workers, seed=args.seed)
        result = run_pipeline(cfg, upto=STAGE_COMMANDS[args.command])
        for name, path in sorted(result.artifacts.items()):
            logger.info("wrote %s: %s", name, path)
        return result.exit_code
    except LdisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
