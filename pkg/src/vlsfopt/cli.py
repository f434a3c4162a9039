"""Command-line front end.

Subcommands: ``cdf`` tabulates saddlepoint CDF values against oracles,
``optimize`` searches for one schedule, ``sweep`` produces figure-ready
CSV tables over parameter grids, and ``simulate`` validates a schedule
file empirically. Outputs are byte-identical across reruns with the same
arguments and seed: floats are written with ``repr``, rows are ordered
deterministically, and nothing timestamps the files.

Exit codes: 0 success, 2 argument or config error, 3 oracle failure or
certification mismatch, 4 infeasible problem.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from ._types import CodeSpec, Rule, Schedule
from .channels import ChannelModel, moments, parse_channel_spec, single_letter_law
from .errors import Infeasible, UnsupportedLaw, VlsfError
from .optimizer import (
    OptimizeOptions,
    dense_reference,
    objective,
    optimize,
    sweep,
)
from .oracles import (
    McConfig,
    SearchGrid,
    brute_force_search,
    default_search_grid,
    exact_cdf_lattice,
    mc_cdf,
)
from .saddlepoint import DEFAULT_EPS_S, CdfQuery, Overshoot, cdf, cdf_value
from .simulator import simulate, simulate_stopping_only

__all__ = ["main"]

_SWEEP_MAX_T = 8


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _fmt(value) -> str:
    """CSV cell formatting: repr for finite floats, empty for missing."""
    if value is None:
        return ""
    if isinstance(value, float):
        if not math.isfinite(value):
            return ""
        return repr(value)
    return str(value)


def _json_ready(value):
    """Replace non-finite floats with None so the JSON stays strict."""
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {k: _json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(v) for v in value]
    return value


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _write_json(path: str | None, payload) -> None:
    _write_text(path, json.dumps(_json_ready(payload), indent=2, sort_keys=True) + "\n")


def _parse_int_list(text: str, name: str) -> list[int]:
    """Integer list syntax: "7", "1,3,9", "1:8" (step 1), "30:120:10"."""
    out: list[int] = []
    for piece in str(text).split(","):
        piece = piece.strip()
        if not piece:
            continue
        if ":" in piece:
            parts = piece.split(":")
            if len(parts) not in (2, 3):
                raise CliError(2, f"bad range for --{name}: {piece!r}")
            try:
                lo, hi = int(parts[0]), int(parts[1])
                step = int(parts[2]) if len(parts) == 3 else 1
            except ValueError as exc:
                raise CliError(2, f"bad range for --{name}: {piece!r}") from exc
            if step <= 0 or hi < lo:
                raise CliError(2, f"bad range for --{name}: {piece!r}")
            out.extend(range(lo, hi + 1, step))
        else:
            try:
                out.append(int(piece))
            except ValueError as exc:
                raise CliError(2, f"bad integer for --{name}: {piece!r}") from exc
    if not out:
        raise CliError(2, f"--{name} must list at least one value")
    return out


def _parse_float_list(text: str, name: str) -> list[float]:
    out: list[float] = []
    for piece in str(text).split(","):
        piece = piece.strip()
        if not piece:
            continue
        try:
            out.append(float(piece))
        except ValueError as exc:
            raise CliError(2, f"bad number for --{name}: {piece!r}") from exc
    if not out:
        raise CliError(2, f"--{name} must list at least one value")
    return out


def _parse_channels(text: str) -> list[ChannelModel]:
    try:
        return [parse_channel_spec(p.strip()) for p in str(text).split(",") if p.strip()]
    except ValueError as exc:
        raise CliError(2, str(exc)) from exc


def _parse_rules(text: str) -> list[Rule]:
    value = str(text).strip().lower()
    if value == "both":
        return [Rule.P1, Rule.P2]
    if value == "p1":
        return [Rule.P1]
    if value == "p2":
        return [Rule.P2]
    raise CliError(2, f"--rule must be p1, p2, or both, got {value!r}")


def _load_config(path: str | None, command: str) -> dict:
    if path is None:
        return {}
    try:
        if path.endswith(".json"):
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        else:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
    except OSError as exc:
        raise CliError(2, f"cannot read config {path!r}: {exc}") from exc
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise CliError(2, f"cannot parse config {path!r}: {exc}") from exc
    if not isinstance(data, dict):
        raise CliError(2, f"config {path!r} must contain a table of settings")
    merged = {k: v for k, v in data.items() if not isinstance(v, dict)}
    section = data.get(command)
    if isinstance(section, dict):
        merged.update(section)
    return merged


def _setting(args: argparse.Namespace, config: dict, name: str, default):
    """Flag wins over config file; config wins over the hard default."""
    flag = getattr(args, name.replace("-", "_"), None)
    if flag is not None:
        return flag
    if name in config:
        return config[name]
    return default


def _default_seed(args, config) -> int:
    explicit = _setting(args, config, "seed", None)
    if explicit is not None:
        return int(explicit)
    env = os.environ.get("VLSF_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise CliError(2, f"VLSF_SEED must be an integer, got {env!r}") from exc
    return 0


def _require(config_value, name: str):
    if config_value is None:
        raise CliError(2, f"--{name} is required (flag or config file)")
    return config_value


# -- cdf ---------------------------------------------------------------------


def _gamma_grid_for(law, n: int, gamma, grid_spec) -> list[float]:
    if gamma is not None:
        return [float(gamma)]
    spec = str(grid_spec)
    if spec == "auto":
        m = moments(law, n)
        sd = math.sqrt(m.variance)
        lo, hi = m.mean - 6.0 * sd, m.mean + 6.0 * sd
        count = 200
    else:
        parts = spec.split(":")
        if len(parts) != 3:
            raise CliError(2, f"--gamma-grid must be lo:hi:count or auto, got {spec!r}")
        try:
            lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError as exc:
            raise CliError(2, f"--gamma-grid must be lo:hi:count, got {spec!r}") from exc
        if count < 1 or hi < lo:
            raise CliError(2, f"--gamma-grid must be lo:hi:count with hi >= lo, got {spec!r}")
    if count == 1:
        return [lo]
    step = (hi - lo) / (count - 1)
    return [lo + i * step for i in range(count)]


def cmd_cdf(args: argparse.Namespace) -> int:
    config = _load_config(args.config, "cdf")
    channel_text = _require(_setting(args, config, "channel", None), "channel")
    channels = _parse_channels(channel_text)
    if len(channels) != 1:
        raise CliError(2, "cdf takes exactly one --channel spec")
    channel = channels[0]
    n_list = _parse_int_list(_require(_setting(args, config, "n", None), "n"), "n")
    gamma = _setting(args, config, "gamma", None)
    grid_spec = _setting(args, config, "gamma-grid", None)
    if gamma is None and grid_spec is None:
        raise CliError(2, "one of --gamma or --gamma-grid is required")
    oracle = str(_setting(args, config, "oracle", "none"))
    if oracle not in ("exact", "mc", "none"):
        raise CliError(2, f"--oracle must be exact, mc, or none, got {oracle!r}")
    eps_s = float(_setting(args, config, "eps-s", DEFAULT_EPS_S))
    trials = int(_setting(args, config, "trials", 100_000))
    workers = int(_setting(args, config, "workers", 1))
    seed = _default_seed(args, config)
    out = _setting(args, config, "out", None)

    law = single_letter_law(channel)
    is_lattice = law.lattice is not None
    if oracle == "exact" and not is_lattice:
        raise CliError(3, "exact oracle is only available for lattice channels")
    mc_cfg = McConfig(trials=trials, seed=seed, workers=workers) if oracle == "mc" else None

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        [
            "n", "gamma", "p_saddle_lower", "p_saddle_upper",
            "p_saddle_exactlattice", "p_oracle", "oracle_stderr", "branch",
        ]
    )
    for n in n_list:
        for g in _gamma_grid_for(law, n, gamma, grid_spec):
            if is_lattice:
                lower = cdf_value(law, n, g, Overshoot.LOWER, eps_s)
                upper = cdf_value(law, n, g, Overshoot.UPPER, eps_s)
                detail = cdf(CdfQuery(law, n, g, Overshoot.EXACT_LATTICE), eps_s)
                exact_col: float | None = detail.p
            else:
                detail = cdf(CdfQuery(law, n, g), eps_s)
                lower = upper = detail.p
                exact_col = None
            p_oracle: float | None = None
            oracle_err: float | None = None
            if oracle == "exact":
                try:
                    p_oracle = exact_cdf_lattice(law, n, g)
                except VlsfError as exc:
                    raise CliError(3, f"exact oracle failed: {exc}") from exc
            elif oracle == "mc":
                est = mc_cdf(law, n, g, mc_cfg)
                p_oracle = est.p_hat
                oracle_err = est.std_err
            writer.writerow(
                [
                    _fmt(n), _fmt(float(g)), _fmt(lower), _fmt(upper),
                    _fmt(exact_col), _fmt(p_oracle), _fmt(oracle_err),
                    detail.branch.value,
                ]
            )
    _write_text(out, buf.getvalue())
    return 0


# -- optimize ------------------------------------------------------------------


def _result_payload(channel, spec, rule, res) -> dict:
    return {
        "channel": channel.describe(),
        "bits": spec.message_bits,
        "eps": spec.epsilon,
        "t": spec.attempts,
        "rule": rule.value,
        "gamma": res.schedule.gamma,
        "instants": list(res.schedule.instants),
        "objective": res.objective,
        "rate_bits": res.rate_bits,
        "residual": res.constraint_residual,
        "diagnostics": res.diagnostics,
    }


def cmd_optimize(args: argparse.Namespace) -> int:
    config = _load_config(args.config, "optimize")
    channel_text = _require(_setting(args, config, "channel", None), "channel")
    channels = _parse_channels(channel_text)
    if len(channels) != 1:
        raise CliError(2, "optimize takes exactly one --channel spec")
    channel = channels[0]
    bits = int(_require(_setting(args, config, "bits", None), "bits"))
    eps = float(_require(_setting(args, config, "eps", None), "eps"))
    attempts = int(_require(_setting(args, config, "t", None), "t"))
    rules = _parse_rules(_setting(args, config, "rule", "p1"))
    eps_s = float(_setting(args, config, "eps-s", DEFAULT_EPS_S))
    n_max = int(_setting(args, config, "n-max", 8192))
    certify = bool(_setting(args, config, "certify", False))
    certify_tol = float(_setting(args, config, "certify-tol", 0.005))
    certify_stride = int(_setting(args, config, "certify-stride", 1))
    out = _setting(args, config, "out", None)

    try:
        spec = CodeSpec(bits, eps, attempts)
    except ValueError as exc:
        raise CliError(2, str(exc)) from exc
    options = OptimizeOptions(eps_s=eps_s, n_max=n_max)

    payloads = []
    certification_failed = False
    for rule in rules:
        res = optimize(channel, spec, rule, options)
        payload = _result_payload(channel, spec, rule, res)
        if certify:
            if attempts > 3:
                raise CliError(2, "--certify supports at most 3 attempts")
            grid = default_search_grid(channel, spec, rule)
            if certify_stride > 1:
                grid = SearchGrid(
                    grid.n_min, grid.n_max, certify_stride, grid.gamma_grid
                )
            brute = brute_force_search(channel, spec, rule, grid, eps_s=eps_s)
            rate_gap = abs(res.rate_bits - brute.rate_bits) / brute.rate_bits
            instants_gap = max(
                abs(a - b)
                for a, b in zip(res.schedule.instants, brute.schedule.instants)
            )
            payload["certify"] = {
                "rate_gap": rate_gap,
                "instants_gap": instants_gap,
                "brute_rate_bits": brute.rate_bits,
                "brute_objective": brute.objective,
                "brute_gamma": brute.schedule.gamma,
                "brute_instants": list(brute.schedule.instants),
            }
            if rate_gap > certify_tol:
                certification_failed = True
        payloads.append(payload)

    summary_stream = sys.stdout if out is not None else sys.stderr
    for payload in payloads:
        summary_stream.write(
            "{rule} rate={rate} bits/use objective={obj} instants={inst} gamma={g}\n".format(
                rule=payload["rule"],
                rate=_fmt(payload["rate_bits"]),
                obj=_fmt(payload["objective"]),
                inst=",".join(str(v) for v in payload["instants"]),
                g=_fmt(payload["gamma"]),
            )
        )
    _write_json(out, payloads[0] if len(payloads) == 1 else payloads)
    if certification_failed:
        sys.stderr.write("certification failed: rate gap exceeds tolerance\n")
        return 3
    return 0


# -- sweep ---------------------------------------------------------------------


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _load_config(args.config, "sweep")
    channels = _parse_channels(
        _require(_setting(args, config, "channel", None), "channel")
    )
    bits_list = _parse_int_list(
        _require(_setting(args, config, "bits", None), "bits"), "bits"
    )
    eps_list = _parse_float_list(
        _require(_setting(args, config, "eps", None), "eps"), "eps"
    )
    t_list = _parse_int_list(_require(_setting(args, config, "t", None), "t"), "t")
    rules = _parse_rules(_setting(args, config, "rule", "both"))
    eps_s = float(_setting(args, config, "eps-s", DEFAULT_EPS_S))
    n_max = int(_setting(args, config, "n-max", 8192))
    dense = bool(_setting(args, config, "dense-ref", False))
    out = _setting(args, config, "out", None)

    if any(t > _SWEEP_MAX_T for t in t_list):
        raise CliError(2, f"sweep supports at most {_SWEEP_MAX_T} attempts per schedule")
    if any(t < 1 for t in t_list):
        raise CliError(2, "attempt counts must be positive")

    options = OptimizeOptions(eps_s=eps_s, n_max=n_max)
    rows = sweep(channels, bits_list, eps_list, t_list, rules, options, include_dense=dense)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = [
        "channel", "param", "bits", "eps", "t", "rule",
        "rate_bits", "objective", "gamma",
    ]
    header += [f"n{i}" for i in range(1, _SWEEP_MAX_T + 1)]
    header.append("feasible")
    writer.writerow(header)
    infeasible = 0
    for row in rows:
        cells = [
            row.channel, _fmt(row.param), _fmt(row.bits), _fmt(row.eps),
            _fmt(row.t), row.rule, _fmt(row.rate_bits), _fmt(row.objective),
            _fmt(row.gamma),
        ]
        inst = list(row.instants) + [None] * (_SWEEP_MAX_T - len(row.instants))
        cells += [_fmt(v) for v in inst]
        cells.append("true" if row.feasible else "false")
        writer.writerow(cells)
        if not row.feasible:
            infeasible += 1
    _write_text(out, buf.getvalue())
    optimized = [r for r in rows if r.rule != "dense"]
    if optimized and all(not r.feasible for r in optimized):
        sys.stderr.write("all sweep cells were infeasible\n")
        return 4
    if infeasible:
        sys.stderr.write(f"warning: {infeasible} infeasible sweep cells\n")
    return 0


# -- simulate --------------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _load_config(args.config, "simulate")
    sched_path = _require(_setting(args, config, "schedule", None), "schedule")
    try:
        with open(sched_path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise CliError(2, f"cannot read schedule {sched_path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(2, f"cannot parse schedule {sched_path!r}: {exc}") from exc
    if isinstance(data, list):
        raise CliError(
            2,
            "schedule file holds multiple results; rerun optimize with a single rule",
        )
    for key in ("channel", "gamma", "instants", "rule"):
        if key not in data:
            raise CliError(2, f"schedule file is missing {key!r}")
    try:
        channel = parse_channel_spec(data["channel"])
        schedule = Schedule(float(data["gamma"]), tuple(int(v) for v in data["instants"]))
    except ValueError as exc:
        raise CliError(2, f"bad schedule file: {exc}") from exc
    rule_text = _setting(args, config, "rule", None) or data["rule"]
    rules = _parse_rules(rule_text)
    if len(rules) != 1:
        raise CliError(2, "simulate runs a single rule at a time")
    rule = rules[0]
    trials = int(_setting(args, config, "trials", 100_000))
    workers = int(_setting(args, config, "workers", 1))
    seed = _default_seed(args, config)
    eps_s = float(_setting(args, config, "eps-s", DEFAULT_EPS_S))
    stopping_only = bool(_setting(args, config, "stopping-only", False))
    out = _setting(args, config, "out", None)

    try:
        cfg = McConfig(trials=trials, seed=seed, workers=workers)
    except ValueError as exc:
        raise CliError(2, str(exc)) from exc

    bound = {
        "objective": objective(channel, schedule, eps_s),
        "gamma": schedule.gamma,
    }
    if "eps" in data:
        bound["epsilon"] = float(data["eps"])

    if stopping_only:
        res = simulate_stopping_only(channel, schedule, cfg)
        payload = {
            "mode": "stopping_only",
            "channel": channel.describe(),
            "rule": rule.value,
            "mean_tau": res.mean_tau,
            "tau_stderr": res.tau_stderr,
            "attempt_histogram": list(res.attempt_histogram),
            "continue_freq": list(res.continue_freq),
            "below_freq": list(res.below_freq),
            "trials": res.trials,
            "bound": bound,
        }
    else:
        msim = int(_require(_setting(args, config, "msim", None), "msim"))
        if msim < 2:
            raise CliError(2, "--msim must be at least 2")
        res = simulate(channel, schedule, msim, rule, cfg)
        payload = {
            "mode": "protocol",
            "channel": channel.describe(),
            "rule": rule.value,
            "msim": msim,
            "err_rate": res.err_rate,
            "err_stderr": res.err_stderr,
            "mean_tau": res.mean_tau,
            "tau_stderr": res.tau_stderr,
            "outcome_counts": res.outcome_counts,
            "attempt_histogram": list(res.attempt_histogram),
            "extrapolated": res.extrapolated,
            "trials": res.trials,
            "bound": bound,
        }
    _write_json(out, payload)
    return 0


# -- entry point -----------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vlsf",
        description="Achievability bounds and schedule search for sparse "
        "stop-feedback codes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="TOML or JSON settings file; flags override it")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--eps-s", type=float, help="near-mean hand-off half-width")
        p.add_argument("--seed", type=int, help="RNG seed (or env VLSF_SEED)")
        p.add_argument("--workers", type=int, help="parallel worker cap")

    p_cdf = sub.add_parser("cdf", help="tabulate CDF approximations against oracles")
    common(p_cdf)
    p_cdf.add_argument("--channel", help="channel spec, e.g. bsc:delta=0.11")
    p_cdf.add_argument("--n", help="blocklengths: single, list, or a:b:step range")
    p_cdf.add_argument("--gamma", type=float, help="single threshold")
    p_cdf.add_argument("--gamma-grid", help="lo:hi:count or auto")
    p_cdf.add_argument("--oracle", choices=["exact", "mc", "none"], help="comparison oracle")
    p_cdf.add_argument("--trials", type=int, help="Monte Carlo trials for --oracle mc")
    p_cdf.set_defaults(func=cmd_cdf)

    p_opt = sub.add_parser("optimize", help="search for one schedule")
    common(p_opt)
    p_opt.add_argument("--channel", help="channel spec")
    p_opt.add_argument("--bits", type=int, help="message size in bits")
    p_opt.add_argument("--eps", type=float, help="error budget")
    p_opt.add_argument("--t", type=int, help="number of decoding attempts")
    p_opt.add_argument("--rule", help="p1, p2, or both")
    p_opt.add_argument("--n-max", type=int, help="final-instant search bound")
    p_opt.add_argument(
        "--certify", action="store_const", const=True,
        help="cross-check against brute force (t <= 3)",
    )
    p_opt.add_argument("--certify-tol", type=float, help="relative rate gap allowed")
    p_opt.add_argument("--certify-stride", type=int, help="brute-force grid stride")
    p_opt.set_defaults(func=cmd_optimize)

    p_sweep = sub.add_parser("sweep", help="optimize a parameter grid to CSV")
    common(p_sweep)
    p_sweep.add_argument("--channel", help="comma-separated channel specs")
    p_sweep.add_argument("--bits", help="bit sizes: list or a:b:step")
    p_sweep.add_argument("--eps", help="error budgets, comma-separated")
    p_sweep.add_argument("--t", help="attempt counts: list or a:b range")
    p_sweep.add_argument("--rule", help="p1, p2, or both")
    p_sweep.add_argument("--n-max", type=int, help="final-instant search bound")
    p_sweep.add_argument(
        "--dense-ref", action="store_const", const=True,
        help="add dense-schedule reference rows",
    )
    p_sweep.set_defaults(func=cmd_sweep)

    p_sim = sub.add_parser("simulate", help="validate a schedule file empirically")
    common(p_sim)
    p_sim.add_argument("--schedule", help="JSON schedule written by optimize")
    p_sim.add_argument("--msim", type=int, help="simulation codebook size")
    p_sim.add_argument("--trials", type=int, help="number of trials")
    p_sim.add_argument("--rule", help="override the rule from the schedule file")
    p_sim.add_argument(
        "--stopping-only", action="store_const", const=True,
        help="single-codeword stopping statistics, no competitors",
    )
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else 2
    try:
        return args.func(args)
    except CliError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.code
    except Infeasible as exc:
        sys.stderr.write(f"infeasible: {exc}\n")
        return 4
    except UnsupportedLaw as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 3
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
