"""Command-line front end: figure data, frontier, optimization, and oracle validation.

Exit codes: 0 success, 1 a validation check failed, 2 bad configuration,
3 output could not be written.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from wsn_tradeoff.gmrf import parse_decay
from wsn_tradeoff.scenarios import Scenario, chain3_scenario, custom_scenario, indep_scenario
from wsn_tradeoff.topology import InvalidLayoutError, read_layout_csv
from wsn_tradeoff import tradeoff

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

SCENARIO_DEFAULTS = {
    "indep": {"n": 8, "l": 100.0, "alpha": 0.2, "sigma_sq": 1.0},
    "chain3": {"n": 3, "l": 10.0, "alpha": 0.4, "sigma_sq": 1.0, "g": 0.25},
    "custom": {"l": 100.0, "alpha": 0.2, "sigma_sq": 1.0},
}


class ConfigError(ValueError):
    pass


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.12g}"


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    write_atomic(path, buf.getvalue())


def parse_rate_grid(text: str) -> np.ndarray:
    try:
        lo, hi, pts = text.split(":")
        lo, hi, pts = float(lo), float(hi), int(pts)
    except ValueError:
        raise ConfigError(f"--rate-grid: expected LO:HI:POINTS, got {text!r}") from None
    if not (0 < lo < hi) or pts < 2:
        raise ConfigError("--rate-grid: need 0 < LO < HI and POINTS >= 2")
    return np.logspace(math.log10(lo), math.log10(hi), pts)


def parse_beta_grid(text: str) -> np.ndarray:
    try:
        lo, hi, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise ConfigError(f"--beta-grid: expected LO:HI:STEP, got {text!r}") from None
    if not (0 < lo <= hi < 1) or step <= 0:
        raise ConfigError("--beta-grid: need 0 < LO <= HI < 1 and STEP > 0")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(count), 10)


def parse_list(text: str, name: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--{name}: expected comma-separated numbers") from None


def read_config_file(path: str) -> dict:
    out = {}
    try:
        with open(path) as fh:
            for line_no, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{line_no}: expected key=value")
                key, value = (s.strip() for s in line.split("=", 1))
                out[key.lstrip("-").replace("-", "_")] = value
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value file; flags override it")
    common.add_argument("--scenario", choices=sorted(SCENARIO_DEFAULTS), default="indep")
    common.add_argument("--n", type=int)
    common.add_argument("--l", type=float)
    common.add_argument("--alpha", type=float)
    common.add_argument("--sigma-sq", type=float)
    common.add_argument("--g", type=float, help="constant edge correlation")
    common.add_argument("--decay", help="iid, const:C or exp:RHO (custom scenario)")
    common.add_argument("--layout", help="CSV with id,x,y (custom scenario)")
    common.add_argument("--rate-grid", default="0.01:100:200", help="LO:HI:POINTS, log-spaced")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=os.environ.get("STL_OUT", "out"))

    p = argparse.ArgumentParser(prog="wsn-tradeoff", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep", parents=[common], help="figure data versus back-off rate")
    fr = sub.add_parser("frontier", parents=[common], help="lifetime-accuracy curves per alpha")
    fr.add_argument("--alphas", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")
    op = sub.add_parser("optimize", parents=[common], help="maximize lifetime subject to accuracy")
    g = op.add_mutually_exclusive_group()
    g.add_argument("--beta", type=float)
    g.add_argument("--beta-grid")
    op.add_argument("--alpha-grid", default="0.01:0.90:90", help="LO:HI:POINTS, linear")
    op.add_argument("--rate-cap", type=float, default=tradeoff.DEFAULT_RATE_CAP)
    va = sub.add_parser("validate", parents=[common], help="simulation oracles versus analysis")
    va.add_argument("--events", type=int, default=1_000_000)
    va.add_argument("--trials", type=int, default=10_000)
    va.add_argument("--replications", type=int, help="end-to-end replications (default 200 indep, 500 chain3)")
    p.subcommands = sub.choices
    return p


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            file_cfg = read_config_file(args.config)
        except ConfigError as exc:
            parser.exit(EXIT_CONFIG, f"error: {exc}\n")
        sub = parser.subcommands[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(file_cfg) - known)
        if unknown:
            parser.exit(EXIT_CONFIG, f"error: unknown config keys: {', '.join(unknown)}\n")
        sub.set_defaults(**file_cfg)
        args = parser.parse_args(argv)
        # defaults coming from a file are strings; run them through the flag types
        for a in sub._actions:
            v = getattr(args, a.dest, None)
            if isinstance(v, str) and a.type not in (None, str):
                try:
                    setattr(args, a.dest, a.type(v))
                except ValueError:
                    parser.exit(EXIT_CONFIG, f"error: config key {a.dest}: invalid value {v!r}\n")
    return args


def resolve(args) -> dict:
    """Fill scenario defaults and validate every numeric field."""
    cfg = {k: v for k, v in vars(args).items() if k != "config"}
    for key, value in SCENARIO_DEFAULTS[args.scenario].items():
        if cfg.get(key) is None:
            cfg[key] = value
    if args.scenario == "chain3" and cfg["n"] != 3:
        raise ConfigError("--n: the chain3 scenario has exactly 3 nodes")
    if args.scenario == "custom":
        if not cfg.get("layout"):
            raise ConfigError("--layout: required for the custom scenario")
        if cfg.get("decay") is None:
            cfg["decay"] = f"const:{cfg['g']}" if cfg.get("g") is not None else "iid"
    if cfg.get("n") is not None and cfg["n"] < 1:
        raise ConfigError("--n: must be a positive integer")
    if not cfg["l"] > 0:
        raise ConfigError("--l: must be positive")
    if not cfg["sigma_sq"] > 0:
        raise ConfigError("--sigma-sq: must be positive")
    if not 0.0 <= cfg["alpha"] <= 1.0:
        raise ConfigError(f"--alpha: must lie in [0, 1], got {cfg['alpha']}")
    if cfg.get("g") is not None and not 0.0 < cfg["g"] < 1.0:
        raise ConfigError("--g: must lie in (0, 1)")
    if cfg.get("decay") is not None:
        try:
            parse_decay(cfg["decay"])
        except ValueError as exc:
            raise ConfigError(f"--decay: {exc}") from None
    parse_rate_grid(cfg["rate_grid"])
    if args.command == "frontier":
        alphas = parse_list(cfg["alphas"], "alphas")
        if not alphas or any(not 0 < a < 1 for a in alphas):
            raise ConfigError("--alphas: values must lie in (0, 1)")
    if args.command == "optimize":
        if cfg.get("beta") is None and cfg.get("beta_grid") is None:
            cfg["beta_grid"] = "0.55:0.80:0.005"
        if cfg.get("beta") is not None and not 0 < cfg["beta"] < 1:
            raise ConfigError("--beta: must lie in (0, 1)")
        if cfg.get("beta_grid") is not None:
            parse_beta_grid(cfg["beta_grid"])
        parse_alpha_grid(cfg["alpha_grid"])
        if not (cfg["rate_cap"] > 0 and math.isfinite(cfg["rate_cap"])):
            raise ConfigError("--rate-cap: must be positive and finite")
    if args.command == "validate":
        for key in ("events", "trials", "replications"):
            if cfg.get(key) is not None and cfg[key] < 1:
                raise ConfigError(f"--{key}: must be a positive integer")
    return cfg


def parse_alpha_grid(text: str) -> np.ndarray:
    try:
        lo, hi, pts = text.split(":")
        lo, hi, pts = float(lo), float(hi), int(pts)
    except ValueError:
        raise ConfigError(f"--alpha-grid: expected LO:HI:POINTS, got {text!r}") from None
    if not (0 <= lo < hi <= 1) or pts < 2:
        raise ConfigError("--alpha-grid: need 0 <= LO < HI <= 1 and POINTS >= 2")
    return np.round(np.linspace(lo, hi, pts), 10)


def make_scenario(cfg: dict) -> Scenario:
    if cfg["scenario"] == "indep":
        return indep_scenario(cfg["n"], cfg["l"], cfg["sigma_sq"])
    if cfg["scenario"] == "chain3":
        return chain3_scenario(cfg["l"], cfg["sigma_sq"], cfg["g"])
    try:
        layout = read_layout_csv(cfg["layout"])
    except OSError as exc:
        raise ConfigError(f"--layout: {exc}") from None
    except InvalidLayoutError as exc:
        raise ConfigError(f"--layout: {exc}") from None
    return custom_scenario(layout, cfg["l"], cfg["sigma_sq"], parse_decay(cfg["decay"]))


def cmd_sweep(cfg: dict, out: Path) -> int:
    sc = make_scenario(cfg)
    rows = tradeoff.sweep(sc, parse_rate_grid(cfg["rate_grid"]), cfg["alpha"])
    labels = sc.group_labels()
    write_csv(out / "fig_U.csv", ["rate", "U"], [(r.rate, r.U) for r in rows])
    write_csv(out / "fig_kbar.csv", ["rate", "k_bar"], [(r.rate, r.k_bar) for r in rows])
    write_csv(
        out / "fig_mbar.csv",
        ["rate", "m_bar"] + [f"m_{g}" for g in labels],
        [(r.rate, r.m_bar, *tradeoff.group_values(sc, r.m_per_state)) for r in rows],
    )
    write_csv(out / "fig_A.csv", ["rate", "A", "A_bayes"], [(r.rate, r.A, r.A_bayes) for r in rows])
    write_csv(
        out / "fig_A_states.csv",
        ["rate"] + [f"A_{g}" for g in labels],
        [(r.rate, *tradeoff.group_values(sc, r.per_state_A)) for r in rows],
    )
    print(f"sweep: {len(rows)} rates written to {out}")
    return EXIT_OK


def cmd_frontier(cfg: dict, out: Path) -> int:
    sc = make_scenario(cfg)
    res = tradeoff.frontier(sc, parse_rate_grid(cfg["rate_grid"]), parse_list(cfg["alphas"], "alphas"))
    rows = []
    for a, curve in res["curves"].items():
        for rate, U, A, A_b in curve:
            rows.append((a, rate, U, A, A_b, (a, rate) in res["envelope"]))
    for rate, U, A_b in res["bayes"]:
        rows.append((0.0, rate, U, A_b, A_b, False))
    write_csv(out / "frontier.csv", ["alpha", "rate", "U", "A", "A_bayes", "envelope"], rows)
    print(f"frontier: {len(res['curves'])} curves plus Bayes reference written to {out}")
    return EXIT_OK


def cmd_optimize(cfg: dict, out: Path) -> int:
    sc = make_scenario(cfg)
    betas = [cfg["beta"]] if cfg.get("beta") is not None else list(parse_beta_grid(cfg["beta_grid"]))
    reports, opt = tradeoff.threshold_scan(
        sc, betas, parse_alpha_grid(cfg["alpha_grid"]), parse_rate_grid(cfg["rate_grid"]), cfg["rate_cap"]
    )
    write_csv(
        out / "opt.csv",
        ["beta", "alpha_star", "rate_star", "U_star", "feasible"],
        [(r.beta, r.alpha_star, r.rate_star, r.U_star, r.feasible) for r in reports],
    )
    beta_t = tradeoff.transition_beta(opt, reports)
    summary = f"optimize: {len(reports)} targets, {sum(r.feasible for r in reports)} feasible"
    if beta_t is not None:
        summary += f", rate becomes unbounded at beta={beta_t:.4f}"
    print(summary)
    return EXIT_OK


def cmd_validate(cfg: dict, out: Path) -> int:
    from wsn_tradeoff import validation

    report = validation.run_checks(
        seed=cfg["seed"],
        events=cfg["events"],
        trials=cfg["trials"],
        replications=cfg.get("replications"),
    )
    write_atomic(out / "validate.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    for chk in report["checks"]:
        status = "PASS" if chk["passed"] else "FAIL"
        print(f"{status} {chk['name']}: observed {fmt(chk['observed'])} vs tolerance {fmt(chk['tolerance'])}")
    return EXIT_OK if report["passed"] else EXIT_CHECK_FAILED


COMMANDS = {"sweep": cmd_sweep, "frontier": cmd_frontier, "optimize": cmd_optimize, "validate": cmd_validate}


def main(argv=None) -> int:
    args = parse_args(argv)
    try:
        cfg = resolve(args)
        out = Path(cfg["out"])
        echo = json.dumps({k: cfg[k] for k in sorted(cfg)}, sort_keys=True)
        print(echo)
        try:
            write_atomic(out / "config.json", echo + "\n")
        except OSError as exc:
            print(f"error: cannot write to {out}: {exc}", file=sys.stderr)
            return EXIT_IO
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
