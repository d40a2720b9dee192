"""Command-line driver: gen-scenario, run, sweep, compare, regress.

Config files are flat JSON objects. Run keys mirror :class:`RunConfig`;
sweep and compare add ``replications``, ``base_seed``, ``parallelism`` and
``<param>_values`` lists; ``scenario`` names the scenario file. Any key can
be overridden with ``--set key=value`` (value parsed as JSON when possible).

Exit codes: 0 ok, 2 usage, 3 config error, 4 run failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

from . import __version__
from .engine import ConfigError, RunConfig, init, provenance, run, trace_csv
from .experiments import (DEFAULT_PREDICTORS, SWEEP_PARAMS, RegressionError, SweepResult, SweepSpec,
                          compare_baselines, run_sweep, standardized_regression)
from .scenario import ScenarioError, Scenario, generate_grid, load_scenario, place_deposits

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUN = 0, 2, 3, 4
OUTPUT_ENV = "SWARMWASTE_OUTPUT_DIR"

RUN_KEYS = {f.name for f in fields(RunConfig)}
EXTRA_KEYS = {"scenario", "replications", "base_seed", "parallelism",
              *(f"{p}_values" for p in SWEEP_PARAMS)}

log = logging.getLogger("swarmwaste")


class CliConfigError(Exception):
    pass


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path: str | None, overrides: list[str]) -> dict:
    data = {}
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise CliConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise CliConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise CliConfigError(f"{path}: top level must be an object")
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise CliConfigError(f"override {item!r} is not key=value")
        data[key.strip()] = _parse_value(value)
    unknown = sorted(set(data) - RUN_KEYS - EXTRA_KEYS)
    if unknown:
        raise CliConfigError(f"unknown config key(s): {', '.join(unknown)}")
    return data


def _run_config(data: dict, **forced) -> RunConfig:
    return RunConfig.from_dict({**{k: v for k, v in data.items() if k in RUN_KEYS}, **forced})


def _scenario(data: dict, arg: str | None) -> tuple[Scenario, dict]:
    path = arg or data.get("scenario")
    if not path:
        raise CliConfigError("no scenario given (use --scenario or the 'scenario' key)")
    p = Path(path)
    if not p.exists():
        raise CliConfigError(f"scenario file not found: {path}")
    raw = p.read_bytes()
    source = {"path": str(p), "sha256": hashlib.sha256(raw).hexdigest()}
    embedded = json.loads(raw).get("provenance") if raw.strip() else None
    if embedded:
        source["generated_by"] = embedded
    return load_scenario(p), source


def _outdir(arg: str | None) -> Path:
    out = Path(arg or os.environ.get(OUTPUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_scenario(args) -> int:
    scen = generate_grid(args.rows, args.cols, args.edge_len, args.bins, args.buildings, args.seed)
    gen = {"command": "gen-scenario", "rows": args.rows, "cols": args.cols, "edge_len": args.edge_len,
           "bins": args.bins, "buildings": args.buildings, "seed": args.seed,
           "version": __version__}
    if args.deposits:
        scen = scen.with_deposits(place_deposits(scen, args.deposits, args.deposit_seed))
        gen.update(deposits=args.deposits, deposit_seed=args.deposit_seed)
    out = _outdir(args.out) / args.name
    doc = {"provenance": gen, **scen.to_dict()}
    out.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    log.info("wrote %s", out)
    return EXIT_OK


def cmd_run(args) -> int:
    data = load_config(args.config, args.set)
    cfg = _run_config(data, **({"record_trace": True} if args.trace else {}))
    scen, source = _scenario(data, args.scenario)
    header = provenance(cfg, source)
    state = run(init(cfg, scen))
    metrics = state.metrics()
    out = _outdir(args.out)
    (out / "metrics.json").write_text(metrics.to_json(header))
    if cfg.record_trace:
        (out / "trace.csv").write_text("# " + json.dumps(header, sort_keys=True) + "\n"
                                       + trace_csv(metrics.trace))
    log.info("AUT %.4f FTB %.4f", metrics.aut_pct, metrics.ftb_pct)
    return EXIT_OK


def _sweep_spec(data: dict, scen: Scenario) -> SweepSpec:
    values = {p: data[f"{p}_values"] for p in SWEEP_PARAMS if f"{p}_values" in data}
    for p, v in values.items():
        if not isinstance(v, list) or not v:
            raise CliConfigError(f"{p}_values must be a non-empty list")
    return SweepSpec(scenario=scen, values=values, replications=int(data.get("replications", 10)),
                     base_seed=int(data.get("base_seed", 0)), base_config=_run_config(data),
                     parallelism=int(data.get("parallelism", 1)))


def cmd_sweep(args) -> int:
    data = load_config(args.config, args.set)
    scen, source = _scenario(data, args.scenario)
    try:
        spec = _sweep_spec(data, scen)
    except ValueError as exc:
        raise CliConfigError(str(exc)) from None
    header = {**provenance(spec.base_config, source), "sweep": {
        "values": {k: list(v) for k, v in spec.values.items()}, "replications": spec.replications,
        "base_seed": spec.base_seed}}
    result = run_sweep(spec)
    out = _outdir(args.out)
    (out / "sweep.csv").write_text(result.to_csv(header))
    (out / "summary.json").write_text(result.summary_json(header))
    (out / "heatmap.csv").write_text("# " + json.dumps(header, sort_keys=True) + "\n"
                                     + result.heatmap_csv())
    if result.failures:
        log.error("%d runs failed; see summary.json", len(result.failures))
        return EXIT_RUN
    return EXIT_OK


def cmd_compare(args) -> int:
    data = load_config(args.config, args.set)
    scen, source = _scenario(data, args.scenario)
    base = _run_config(data, mode="MPF")
    report = compare_baselines(scen, base, replace(base, mode="CPF"), replace(base, mode="TRUCK"),
                               replications=int(data.get("replications", 10)),
                               base_seed=int(data.get("base_seed", 0)),
                               parallelism=int(data.get("parallelism", 1)))
    header = {**provenance(base, source), "replications": int(data.get("replications", 10)),
              "base_seed": int(data.get("base_seed", 0))}
    out = _outdir(args.out)
    (out / "compare.json").write_text(
        json.dumps({"provenance": header, **report.to_dict()}, indent=1, sort_keys=True) + "\n")
    for mode, s in report.stats().items():
        log.info("%-5s AUT %.4f +- %.4f  FTB %.4f +- %.4f", mode, s["aut_pct_mean"], s["aut_pct_sd"],
                 s["ftb_pct_mean"], s["ftb_pct_sd"])
    return EXIT_OK


def cmd_regress(args) -> int:
    path = Path(args.input)
    if not path.exists():
        raise CliConfigError(f"sweep CSV not found: {path}")
    text = path.read_text()
    result = SweepResult.from_csv(text)
    predictors = list(DEFAULT_PREDICTORS)
    if args.include_rates:
        predictors += ["evaporation_rate", "exploitation_rate"]
    reports, failed = [], 0
    for resp in ("aut_pct", "ftb_pct"):
        try:
            reports.append(standardized_regression(result.rows, predictors, resp).to_dict())
        except RegressionError as exc:
            failed += 1
            reports.append({"response": resp, "error": str(exc)})
            log.error("%s: %s", resp, exc)
    header = {"artifact": "swarmwaste", "version": __version__, "command": "regress",
              "input": str(path), "input_sha256": hashlib.sha256(text.encode()).hexdigest(),
              "predictors": predictors}
    first = text.splitlines()[0] if text else ""
    if first.startswith("# "):
        header["sweep_provenance"] = json.loads(first[2:])
    out = _outdir(args.out)
    (out / "regression.json").write_text(
        json.dumps({"provenance": header, "reports": reports}, indent=1, sort_keys=True) + "\n")
    for rep in reports:
        if "error" in rep:
            continue
        log.info("%s: %s (R2 %.3f)", rep["response"],
                 ", ".join(f"{k}={v:+.4f}" for k, v in rep["betas"].items()), rep["r_squared"])
    return EXIT_RUN if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarmwaste", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scenario", help="write a synthetic grid scenario")
    g.add_argument("--rows", type=int, default=20)
    g.add_argument("--cols", type=int, default=20)
    g.add_argument("--edge-len", type=float, default=100.0)
    g.add_argument("--bins", type=int, default=50)
    g.add_argument("--buildings", type=int, default=1000)
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--deposits", type=int, default=0, help="also place this many deposits")
    g.add_argument("--deposit-seed", type=int, default=0)
    g.add_argument("--name", default="scenario.json")
    g.add_argument("-o", "--out")
    g.set_defaults(func=cmd_gen_scenario)

    for name, func, helptext in (("run", cmd_run, "simulate one configuration"),
                                 ("sweep", cmd_sweep, "run a parameter grid"),
                                 ("compare", cmd_compare, "MPF vs CPF vs truck on paired seeds")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("-c", "--config")
        p.add_argument("-s", "--scenario")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("-o", "--out")
        if name == "run":
            p.add_argument("--trace", action="store_true", help="write the per-tick trace CSV")
        p.set_defaults(func=func)

    r = sub.add_parser("regress", help="standardized regression over a sweep CSV")
    r.add_argument("input")
    r.add_argument("--include-rates", action="store_true",
                   help="add evaporation and exploitation rates as predictors")
    r.add_argument("-o", "--out")
    r.set_defaults(func=cmd_regress)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliConfigError, ConfigError, ScenarioError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        if args.command == "gen-scenario":
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"run failure: {exc}", file=sys.stderr)
        return EXIT_RUN
    except Exception as exc:
        print(f"run failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
