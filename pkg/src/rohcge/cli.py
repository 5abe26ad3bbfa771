"""Command-line entry point: ``rohcge <subcommand> [--config PATH | --preset NAME] ...``.

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import experiments as ex
from .chain import ChainError, NoConvergence, StateSpaceTooLarge, solve
from .model_closed import max_irt, min_w, solve_model2
from .model_full import build_model1, is_oos, oos_breakdown
from .model_multiflow import MultiflowParams, p_oos_model3_chain, p_oos_multiflow
from .sim import ConfigError, run_simulation, summarize

EXIT_OK, EXIT_CONFIG, EXIT_NOCONV = 0, 2, 3


def _load(args) -> ex.ExperimentConfig:
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.config is None and args.preset is None:
        # flags only: start from an empty config
        raw = {}
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r}: expected key=value")
            k, v = (s.strip() for s in item.split("=", 1))
            raw[k.lower()] = v
        return ex.ExperimentConfig.from_mapping(raw)
    return ex.load_config(args.config, args.preset, overrides)


def _require(exp, engine):
    for pt in exp.points():
        ex._check_engine(engine, ex.build_rohc(pt), ex.build_channel(pt))


def _point(exp):
    pts = list(exp.points())
    if len(pts) != 1:
        raise ConfigError(f"this subcommand evaluates a single point; the config has {len(pts)} (drop sweep/grid or use 'sweep')")
    p = pts[0]
    return ex.build_channel(p), ex.build_rohc(p)


def _kv(pairs):
    for k, v in pairs:
        print(f"{k} = {ex._cell(v)}")


def cmd_model1(args, exp):
    _require(exp, "model1")
    chan, cfg = _point(exp)
    chain = build_model1(cfg, chan)
    ss = solve(chain)
    p = float(sum(pi for lab, pi in zip(ss.labels, ss.distribution) if is_oos(lab)))
    _kv([("states", len(chain)), ("p_oos", p), ("residual", ss.residual)])
    _kv(sorted(oos_breakdown(cfg, chan).items()))
    if args.out:
        rows = [{"state": repr(tuple(lab)), "pi": float(pi)} for lab, pi in zip(ss.labels, ss.distribution)]
        ex.write_csv(rows, args.out, ["state", "pi"])


def cmd_model2(args, exp):
    _require(exp, "model2")
    chan, cfg = _point(exp)
    s = solve_model2(chan, cfg.windows.w, cfg.irt)
    _kv([("w", cfg.windows.w), ("irt", cfg.irt), ("pi0", s.pi0), ("pi_w_plus", s.pi_w_plus),
         ("pi_oos_g", s.pi_oos_g), ("pi_oos_b", s.pi_oos_b),
         ("p_oos_exact", s.p_oos_exact), ("p_oos_approx", s.p_oos_approx)])
    if args.out:
        rows = [{"state": str(i + 1), "pi": v} for i, v in enumerate(s.pi_w)]
        rows = [{"state": "0", "pi": s.pi0}] + rows + [
            {"state": "W+", "pi": s.pi_w_plus}, {"state": "oos_G", "pi": s.pi_oos_g}, {"state": "oos_B", "pi": s.pi_oos_b}]
        ex.write_csv(rows, args.out, ["state", "pi"])


def cmd_model3(args, exp):
    _require(exp, "model3")
    rows = []
    for pt in exp.points():
        chan, cfg = ex.build_channel(pt), ex.build_rohc(pt)
        mp = MultiflowParams(cfg.m, cfg.windows.w, cfg.windows.w_o, cfg.irt, chan)
        rows.append({"m": cfg.m, "w": mp.w, "w_o": mp.w_o, "irt": cfg.irt,
                     "p_oos_formula": p_oos_multiflow(mp), "p_oos_chain": p_oos_model3_chain(mp)})
    cols = ["m", "w", "w_o", "irt", "p_oos_formula", "p_oos_chain"]
    if args.out:
        ex.write_csv(rows, args.out, cols)
    else:
        sys.stdout.write(ex.write_csv(rows, None, cols))


def cmd_simulate(args, exp):
    chan, cfg = _point(exp)
    seeds = np.random.SeedSequence(exp.seed).spawn(exp.n_seeds)
    runs = []
    for i, sd in enumerate(seeds):
        log = args.log_events if (args.log_events and i == 0) else None
        runs.append(run_simulation(cfg, chan, exp.n_packets, sd, headers=exp.headers, log=log))
    s = summarize(runs)
    fields = ("sent", "delivered", "dropped_channel", "dropped_context", "dropped_crc", "false_negative")
    counts = {k: sum(getattr(r, k) for r in runs) for k in fields}
    _kv([("n_seeds", exp.n_seeds), ("n_packets", exp.n_packets), ("seed", exp.seed),
         ("p_oos_mean", s.mean), ("ci_half_width", s.half_width), ("ci_low", s.lo), ("ci_high", s.hi),
         ("episodes", sum(r.episodes for r in runs)),
         ("efficiency", float(np.mean([r.efficiency for r in runs])))])
    _kv(counts.items())
    if args.out:
        rows = [{"run": i, "p_oos": r.oos_fraction, "episodes": r.episodes, "efficiency": r.efficiency}
                for i, r in enumerate(runs)]
        ex.write_csv(rows, args.out, ["run", "p_oos", "episodes", "efficiency"])


def cmd_design(args, exp):
    rows = []
    for pt in exp.points():
        chan, cfg = ex.build_channel(pt), ex.build_rohc(pt)
        mw = min_w(exp.a, chan.lb, cfg.irt)
        rows.append({"lb": chan.lb, "irt": cfg.irt, "a": exp.a, "min_w": mw.ceil, "min_w_exact": mw.exact,
                     "min_w_asymptotic": mw.asymptotic, "w": cfg.windows.w,
                     "max_irt": max_irt(exp.a, chan.lb, cfg.windows.w)})
    cols = ["lb", "irt", "a", "min_w", "min_w_exact", "min_w_asymptotic", "w", "max_irt"]
    text = ex.write_csv(rows, args.out, cols)
    if not args.out:
        sys.stdout.write(text)


def cmd_efficiency(args, exp):
    rows = []
    for pt in exp.points():
        chan, cfg = ex.build_channel(pt), ex.build_rohc(pt)
        if exp.irt_cap is not None:
            cfg = cfg.replace(irt=ex.retuned_irt(exp.a, chan.lb, cfg.windows.w, exp.irt_cap))
        mu = ex.compression_efficiency(exp.headers, cfg)
        rows.append({"lb": chan.lb, "irt": cfg.irt, "l": cfg.l, "fot": cfg.fo_timeout,
                     "efficiency": mu, "shrink_factor": ex.shrink_factor(mu)})
    cols = ["lb", "irt", "l", "fot", "efficiency", "shrink_factor"]
    text = ex.write_csv(rows, args.out, cols)
    if not args.out:
        sys.stdout.write(text)


def cmd_sweep(args, exp):
    if not exp.engines:
        raise ConfigError("engines: name at least one engine to sweep")
    rows = ex.run_experiment(exp, jobs=args.jobs)
    out = args.out or exp.out
    text = ex.write_csv(rows, out)
    if not out:
        sys.stdout.write(text)


def cmd_ratio(args, exp):
    if exp.grid_irt is None:
        raise ConfigError("ratio needs grid_irt and grid_w")
    a, b = exp.ratio or ("model2", "model1")
    pts = list(exp.points())
    chan, base = ex.build_channel(pts[0]), ex.build_rohc(exp.params)
    for eng in (a, b):
        ex._check_engine(eng, base, chan)
    rows = ex.ratio_surface(a, b, chan, base, exp.grid_irt, exp.grid_w)
    inside = np.mean([0.5 <= r["ratio"] <= 2.0 for r in rows])
    print(f"# share of grid points with ratio in [0.5, 2] = {inside!r}", file=sys.stderr)
    cols = ["irt", "w", "p_a", "p_b", "ratio"]
    text = ex.write_csv(rows, args.out, cols)
    if not args.out:
        sys.stdout.write(text)


COMMANDS = {
    "model1": (cmd_model1, "detailed single-flow chain at one point"),
    "model2": (cmd_model2, "closed-form simplified model at one point"),
    "model3": (cmd_model3, "multi-flow model (formula and chain), one point or a sweep"),
    "simulate": (cmd_simulate, "seeded packet-level simulation with a 95%% CI"),
    "design": (cmd_design, "minimum W and maximum IRT for a target P_OoS/eps"),
    "sweep": (cmd_sweep, "run every engine over the config's sweep or grid"),
    "ratio": (cmd_ratio, "ratio of two models over an (IRT, W) grid"),
    "efficiency": (cmd_efficiency, "compression efficiency from the emission schedule"),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rohcge", description="ROHC U-mode OoS models and simulator over a Gilbert-Elliott channel")
    ap.add_argument("--list-presets", action="store_true", help="print the shipped preset names and exit")
    sub = ap.add_subparsers(dest="command")
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        src = p.add_mutually_exclusive_group()
        src.add_argument("--config", help="path to a key = value config file")
        src.add_argument("--preset", help="name of a shipped preset (e.g. figure-5)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
        p.add_argument("--out", help="CSV output path")
        p.add_argument("--seed", type=int, help="base seed for simulations")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
        p.add_argument("--log-events", metavar="PATH", help="write the first run's per-packet event log as CSV")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.list_presets:
        print("\n".join(ex.preset_names()))
        return EXIT_OK
    if args.command is None:
        ap.print_help()
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    fn = COMMANDS[args.command][0]
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        exp = _load(args)
        fn(args, exp)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NoConvergence as e:
        print(f"solver did not converge: {e}", file=sys.stderr)
        return EXIT_NOCONV
    except (StateSpaceTooLarge, ChainError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
