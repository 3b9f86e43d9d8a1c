"""Command-line front end.

Subcommands read a TOML scenario and write CSV plus JSON Lines files into
``--out``. Exit status: 0 success, 2 configuration error, 3 numerical
failure.
"""
import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import __version__
from .analysis import direct_link_secrecy_rate, secrecy_closed_form
from .errors import ConfigError, NumericalError, RissecError
from .mc import run_montecarlo
from .optimize import TraceRecord, multi_start, optimal_power_fraction
from .scenario import build_stats, describe, initial_phases, load_scenario

log = logging.getLogger("rissec")

BUILD_ID = f"rissec {__version__}"
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(v, (list, tuple, dict)):
        return json.dumps(v)
    if v is None:
        return ""
    return str(v)


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return _cell(v)
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v


def write_csv(path, rows, fields=None):
    """Write rows (dicts) with the union of their keys, in first-seen order."""
    fields = list(fields or [])
    for r in rows:
        fields.extend(k for k in r if k not in fields)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _cell(r.get(k)) for k in fields})
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(_json_safe(rec), allow_nan=False) + "\n")


def _echo(scenario):
    return {"build": BUILD_ID, **describe(scenario)}


# ---------------------------------------------------------------------------
# per-user evaluation
# ---------------------------------------------------------------------------

def _operating_point(scenario, built, k, threads, optimize_phases):
    """Phases, power fraction and optimizer state (or None) for user ``k``."""
    stats = built.stats
    xi_mode, xi_fixed = scenario.xi_mode()
    opt = scenario["optimize"]
    if optimize_phases:
        state, starts = multi_start(
            stats, k, starts=opt["starts"], seed=built.start_seed, threads=threads,
            epsilon=opt["epsilon"], max_outer=opt["max_outer"], max_inner=opt["max_inner"],
            xi=xi_fixed)
        return state.phases, state.xi, state, starts
    phases = initial_phases(scenario, built)
    xi = optimal_power_fraction(stats, phases, k) if xi_mode == "optimize" else xi_fixed
    return phases, xi, None, None


def _closed_form_row(scenario, built, k, phases, xi):
    ev = secrecy_closed_form(built.stats, phases, xi, k)
    row = {"user": k, "xi": ev.xi, "rate_user": ev.rate_user, "capacity_eve": ev.capacity_eve,
           "secrecy_rate": ev.secrecy_rate, "gamma_user": ev.gamma_user, "gamma_eve": ev.gamma_eve,
           "S_user": ev.S_user, "I_user": ev.I_user, "S_eve": ev.S_eve, "I_eve": ev.I_eve}
    pl = built.stats.path_loss
    if not pl.betaI.any() and pl.betaIE == 0 and pl.beta2.any():
        row["secrecy_rate_no_ris"] = direct_link_secrecy_rate(built.stats, xi, k)
    return row


def _aggregate(rows, key, how):
    if how == "none" or not rows:
        return []
    vals = [r[key] for r in rows]
    agg = min(vals) if how == "min" else sum(vals) / len(vals)
    return [{"user": how, key: agg}]


def _map(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _evaluate_rows(scenario, threads, optimize_phases):
    built = build_stats(scenario)

    def one(k):
        phases, xi, state, starts = _operating_point(scenario, built, k, threads, optimize_phases)
        row = _closed_form_row(scenario, built, k, phases, xi)
        if state is not None:
            row.update({"outer_iterations": state.outer, "inner_iterations": state.inner,
                        "converged": state.converged, "stationarity": state.stationarity,
                        "starts": len(starts)})
        return row, phases, xi, state

    return built, _map(one, scenario.users(), threads)


def cmd_evaluate(scenario, out, threads):
    _, results = _evaluate_rows(scenario, threads, scenario["optimize"]["phases"] == "optimize")
    rows = [r for r, *_ in results]
    rows += _aggregate(rows, "secrecy_rate", scenario["report"]["aggregate"])
    echo = _echo(scenario)
    write_csv(os.path.join(out, "evaluate.csv"), [{**r, **echo} for r in rows])
    write_jsonl(os.path.join(out, "evaluate.jsonl"),
                [{"command": "evaluate", "result": r, "config": scenario.config, "build": BUILD_ID}
                 for r in rows])
    return rows


def cmd_optimize(scenario, out, threads):
    mode = scenario["optimize"]["phases"]
    _, results = _evaluate_rows(scenario, threads, mode != "random")
    rows, trace = [], []
    for row, phases, xi, state in results:
        row = {**row, "phase_mode": "random" if mode == "random" else "optimize"}
        rows.append(row)
        if state is not None:
            trace.extend({"user": row["user"], **rec.as_dict()} for rec in state.trace)
    echo = _echo(scenario)
    write_csv(os.path.join(out, "optimize.csv"), [{**r, **echo} for r in rows])
    write_csv(os.path.join(out, "optimize_trace.csv"), trace,
              fields=["user", *TraceRecord.__dataclass_fields__])
    recs = []
    for row, phases, xi, state in results:
        recs.append({"command": "optimize", "result": row, "theta": [float(t) for t in phases.theta],
                     "config": scenario.config, "build": BUILD_ID})
    write_jsonl(os.path.join(out, "optimize.jsonl"), recs)
    return rows


def cmd_montecarlo(scenario, out, threads):
    built, results = _evaluate_rows(scenario, 1, scenario["optimize"]["phases"] == "optimize")
    m = scenario["montecarlo"]
    rows = []
    for row, phases, xi, _ in results:
        k = row["user"]
        res = run_montecarlo(built.stats, phases, xi, k, trials=m["trials"], seed=built.mc_seed + k,
                             threads=threads, tau=m["tau"], precoder=m["precoder"],
                             normalization=m["normalization"], block=m["block"],
                             sigma2_eve=built.stats.dims.sigma2_eve)
        rows.append({**row, **res.user.as_dict("mc_user_"), **res.eve.as_dict("mc_eve_"),
                     "mc_secrecy_rate": res.secrecy.mean, "mc_secrecy_half_width": res.secrecy.half_width,
                     "mc_discard_rate": res.eve.components["discard_rate"],
                     "mc_max_condition": res.max_condition})
    echo = _echo(scenario)
    write_csv(os.path.join(out, "montecarlo.csv"), [{**r, **echo} for r in rows])
    write_jsonl(os.path.join(out, "montecarlo.jsonl"),
                [{"command": "montecarlo", "result": r, "config": scenario.config, "build": BUILD_ID}
                 for r in rows])
    return rows


def cmd_sweep(scenario, out, threads):
    sw = scenario["sweep"]
    if sw["axis"] is None:
        raise ConfigError("sweep.axis is not set")
    points = [scenario.with_value(sw["axis"], v) for v in sw["values"]]
    optimize_phases = scenario["optimize"]["phases"] == "optimize"

    def one(pt):
        _, results = _evaluate_rows(pt, 1, optimize_phases)
        head = {"axis": sw["axis"], "value": pt.config_value(sw["axis"])}
        return [{**head, **r, **_echo(pt)} for r, *_ in results]

    rows = [row for chunk in _map(one, points, threads) for row in chunk]
    write_csv(os.path.join(out, "sweep.csv"), rows)
    return rows


COMMANDS = {"evaluate": cmd_evaluate, "optimize": cmd_optimize,
            "montecarlo": cmd_montecarlo, "sweep": cmd_sweep}


def build_parser():
    p = argparse.ArgumentParser(prog="rissec", description="Secrecy rate evaluation, "
                                "optimization and Monte Carlo validation for RIS-assisted massive MIMO.")
    p.add_argument("--version", action="version", version=BUILD_ID)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("evaluate", "closed-form secrecy rate per user"),
                        ("optimize", "alternating power/phase optimization with traces"),
                        ("montecarlo", "Monte Carlo check of the closed form"),
                        ("sweep", "closed-form rates over one config axis")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", metavar="PATH", help="TOML scenario (defaults if omitted)")
        s.add_argument("--out", metavar="DIR", default=".", help="output directory")
        s.add_argument("--seed", type=int, help="override the scenario seed")
        s.add_argument("--threads", type=int, default=1, help="worker threads")
        s.add_argument("--trials", type=int, help="override montecarlo.trials")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.trials is not None:
            overrides["montecarlo.trials"] = args.trials
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        scenario = load_scenario(args.config, overrides)
        os.makedirs(args.out, exist_ok=True)
        rows = COMMANDS[args.command](scenario, args.out, args.threads)
        log.info("%s: wrote %d rows to %s", args.command, len(rows), args.out)
    except NumericalError as exc:
        print(f"rissec: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (RissecError, ValueError) as exc:
        print(f"rissec: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
