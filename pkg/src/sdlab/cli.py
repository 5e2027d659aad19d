"""``sdlab <experiment> --config FILE [--set key=value]...``

Writes ``<output.dir>/<experiment>-<timestamp>.csv`` and ``.json`` and
exits with 0 (passed), 2 (ran, but a threshold failed) or 1 (bad
configuration or numerical failure).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .config import format_value, load_config
from .errors import SDLError
from .experiments import EXPERIMENTS, SCHEMA_VERSION, Report, run

log = logging.getLogger("sdlab")

EXIT_OK, EXIT_ERROR, EXIT_THRESHOLD = 0, 1, 2


def _plain(v):
    """JSON-safe value; non-finite floats become strings."""
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if hasattr(v, "value") and isinstance(getattr(v, "value"), str):  # enums
        return v.value
    return v


def _cell(v) -> str:
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def render_csv(rows) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    header = list(rows[0])
    for r in rows[1:]:
        header += [k for k in r if k not in header]
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for r in rows:
        writer.writerow([_cell(r.get(k, "")) for k in header])
    return buf.getvalue()


def render_json(report: Report, cfg: dict) -> str:
    doc = {
        "experiment": report.experiment,
        "schema_version": SCHEMA_VERSION,
        "config": {k: format_value(cfg[k]) for k in sorted(cfg)},
        "results": _plain({"summary": report.results, "rows": report.rows}),
        "residuals": _plain(report.residuals),
        "passed": bool(report.passed),
    }
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def _output_stem(out_dir: Path, experiment: str) -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    stem = out_dir / f"{experiment}-{stamp}"
    n = 1
    while stem.with_suffix(".json").exists() or stem.with_suffix(".csv").exists():
        stem = out_dir / f"{experiment}-{stamp}-{n}"
        n += 1
    return stem


def write_report(report: Report, cfg: dict) -> tuple[Path, Path]:
    out_dir = Path(cfg["output.dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = _output_stem(out_dir, report.experiment)
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    with open(csv_path, "w", newline="") as fh:
        fh.write(render_csv(report.rows))
    with open(json_path, "w", newline="") as fh:
        fh.write(render_json(report, cfg))
    return csv_path, json_path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdlab", description="Weighted-form experiments on polar meshes.")
    parser.add_argument("experiment", choices=sorted(EXPERIMENTS))
    parser.add_argument("--config", required=True, help="flat key = value config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
        t0 = time.perf_counter()
        report = run(args.experiment, cfg)
        log.info("%s finished in %.2f s", args.experiment, time.perf_counter() - t0)
        csv_path, json_path = write_report(report, cfg)
    except (SDLError, ValueError, ArithmeticError, OSError) as exc:
        print(f"sdlab: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    status = "passed" if report.passed else "FAILED"
    print(f"{report.experiment}: {status}  ({csv_path}, {json_path})")
    return EXIT_OK if report.passed else EXIT_THRESHOLD


if __name__ == "__main__":
    sys.exit(main())
