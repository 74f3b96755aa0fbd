"""Command line entry point.

    covlab run --config sc.ini [--config other.ini ...] [--format table|json|csv] [--out PATH] [--jobs N]
    covlab converge --config sc.ini --levels 3 [--format ...] [--out PATH]
    covlab list-scenarios

Exit status: 0 all checks passed, 1 a check failed, 2 configuration error,
3 capacity error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

from covlab.config import FORMATS, SCENARIOS, OutputConfig, load_config
from covlab.errors import CapacityError, ConfigError
from covlab.scenarios import DESCRIPTIONS, SCHEMA_VERSION, ScenarioReport, convergence_report, run_scenario

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_CAPACITY = 0, 1, 2, 3


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.3e}" if v != 0 else "0"
    return str(v)


def _table(rows: list[list[str]], header: list[str]) -> str:
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    line = lambda r: "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()  # noqa: E731
    return "\n".join([line(header), line(["-" * w for w in widths])] + [line(r) for r in rows])


def format_table(report: ScenarioReport) -> str:
    cfg = report.config
    out = [
        f"scenario {cfg.name}  (n_points={cfg.grid.n_points}, x_max={cfg.grid.x_max:g}, "
        f"n_steps={cfg.time.n_steps}, t_max={cfg.time.t_max:g}, seed={cfg.seed})",
        "",
    ]
    rows = [
        [c.name, c.category, _fmt(c.residual), _fmt(c.tol), "pass" if c.passed else "FAIL", c.note]
        for c in report.checks
    ]
    out.append(_table(rows, ["check", "category", "residual", "tol", "status", "note"]))
    if report.refinement:
        out.append("")
        rows = [
            [r.check, str(r.level), str(r.n_points), _fmt(r.h), str(r.n_steps), _fmt(r.dt), _fmt(r.residual),
             r.order if isinstance(r.order, str) else (f"{r.order:.2f}" if r.order is not None else "-")]
            for r in report.refinement
        ]
        out.append(_table(rows, ["check", "level", "n_points", "h", "n_steps", "dt", "residual", "order"]))
    for w in report.warnings:
        out.append(f"warning: {w}")
    out.append("")
    out.append(f"{'PASS' if report.passed else 'FAIL'}  ({report.timing.get('total_s', 0.0):.2f} s)")
    return "\n".join(out)


def format_csv(report: ScenarioReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if report.refinement:
        w.writerow(["schema_version", "scenario", "check", "level", "n_points", "h", "n_steps", "dt", "residual", "order"])
        for r in report.refinement:
            w.writerow([SCHEMA_VERSION, report.config.name, r.check, r.level, r.n_points, repr(r.h), r.n_steps, repr(r.dt), repr(r.residual), r.order if r.order is not None else ""])
    else:
        w.writerow(["schema_version", "scenario", "check", "category", "residual", "tol", "passed", "note"])
        for c in report.checks:
            w.writerow([SCHEMA_VERSION, report.config.name, c.name, c.category, repr(c.residual), repr(c.tol), c.passed, c.note])
    return buf.getvalue()


def render(reports: list[ScenarioReport], fmt: str) -> str:
    if fmt == "json":
        body = [r.to_dict() for r in reports]
        return json.dumps(body[0] if len(body) == 1 else body, indent=2, sort_keys=True)
    if fmt == "csv":
        parts = [format_csv(r) for r in reports]
        return parts[0] if len(parts) == 1 else "".join([parts[0]] + [p.split("\n", 1)[1] for p in parts[1:]])
    return "\n\n".join(format_table(r) for r in reports)


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def _load(paths, fmt, out):
    cfgs = []
    for p in paths:
        cfg = load_config(p)
        o = cfg.output
        cfgs.append(replace(cfg, output=OutputConfig(fmt or o.format, out or o.path)))
    return cfgs


def cmd_run(args) -> int:
    cfgs = _load(args.config, args.format, args.out)
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        reports = list(pool.map(run_scenario, cfgs))
    _emit(render(reports, cfgs[0].output.format), cfgs[0].output.path)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def cmd_converge(args) -> int:
    (cfg,) = _load([args.config], args.format, args.out)
    report = convergence_report(cfg, args.levels)
    _emit(render([report], cfg.output.format), cfg.output.path)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_list(args) -> int:
    for name in SCENARIOS:
        print(f"{name:26s} {DESCRIPTIONS[name]}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="covlab", description="Run perturbed-semigroup scenarios and refinement studies.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one or more scenario configs")
    r.add_argument("--config", action="append", required=True, help="INI config file (repeatable)")
    r.add_argument("--format", choices=FORMATS, help="report format (overrides the config)")
    r.add_argument("--out", help="write the report here instead of stdout")
    r.add_argument("--jobs", type=int, default=1, help="scenarios to run concurrently")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("converge", help="refinement table for one scenario")
    c.add_argument("--config", required=True)
    c.add_argument("--levels", type=int, required=True, help="number of grid levels (h halved each time)")
    c.add_argument("--format", choices=FORMATS)
    c.add_argument("--out")
    c.set_defaults(func=cmd_converge)

    ls = sub.add_parser("list-scenarios", help="list the available scenarios")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"covlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"covlab: capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY


if __name__ == "__main__":
    sys.exit(main())
