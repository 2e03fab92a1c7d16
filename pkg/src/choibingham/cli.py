"""Command-line front end.

Configuration is resolved per command as defaults, then the ``--config``
key-value file, then explicit flags. Exit codes: 0 success, 2 configuration
error, 3 numeric failure (``error.json`` is written to the output directory).
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments as ex
from . import frame_bingham as fb
from . import io, report, stiefel_opt, tomography
from .channel_reps import depolarizing_choi, process_fidelity
from .errors import ConfigError, NumericError


def _float_list(s):
    return tuple(float(v) for v in str(s).split(",") if v.strip())


def _int_list(s):
    return tuple(int(float(v)) for v in str(s).split(",") if v.strip())


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s):
    return None if str(s).strip().lower() in ("", "none") else float(s)


def _opt_int(s):
    return None if str(s).strip().lower() in ("", "none") else int(s)


# key -> (parser, default, default under --full)
SCHEMAS = {
    "sample": {
        "thetas": (_float_list, "10,100,1000,10000", None),
        "reps": (int, "200", "1000"),
        "dim": (int, "2", None),
        "kraus_rank": (_opt_int, "none", None),
        "burn_in": (int, "500", None),
        "thinning": (int, "5", None),
        "emit_channels": (_bool, "false", None),
    },
    "simulate": {
        "truth": (str, "depolarizing", None),
        "fidelity": (float, "0.9999", None),
        "design": (str, "pauli6", None),
        "n": (int, "100", None),
        "expected": (_bool, "false", None),
    },
    "estimate": {
        "counts": (str, "", None),
        "mode": (str, "mle", None),
        "theta": (float, "0", None),
        "theta_file": (str, "", None),
        "restarts": (int, "5", None),
        "kraus_rank": (_opt_int, "none", None),
        "max_iters": (int, "500", None),
    },
    "calibrate": {
        "fidelity": (float, "0.9997", None),
        "reps": (int, "200", "1000"),
        "tol": (float, "1e-5", None),
        "burn_in": (int, "500", None),
        "thinning": (int, "5", None),
    },
    "fig1": {
        "prior_fidelity": (float, "0.99", None),
        "x": (int, "96", None),
        "n": (int, "100", None),
        "grid": (int, "4096", None),
        "n_rep": (int, "100", None),
        "gamma": (_opt_float, "none", None),
    },
    "fig3": {
        "thetas": (_float_list, "10,100,1000,10000", None),
        "reps": (int, "200", "1000"),
        "burn_in": (int, "500", None),
        "thinning": (int, "5", None),
    },
    "fig4": {
        "reps": (int, "20", "100"),
        "ns": (_int_list, "10,100,1000,10000", None),
        "design": (str, "pauli4", None),
        "theta": (float, "1e4", None),
        "fidelity": (float, "0.9999", None),
        "restarts": (int, "5", None),
        "dd_restarts": (int, "10", "20"),
    },
    "fig5": {
        "reps": (int, "20", "100"),
        "ns": (_int_list, "10,100,1000,10000", None),
        "sqrt_ns": (_int_list, "100,1000,10000", None),
        "design": (str, "pauli4", None),
        "theta": (float, "1e4", None),
        "fidelity": (float, "0.9999", None),
        "restarts": (int, "5", None),
        "dd_restarts": (int, "10", "20"),
    },
    "report": {
        "inputs": (str, "", None),
        "labels": (str, "", None),
        "column": (str, "process_fidelity", None),
        "transform": (str, "none", None),
        "title": (str, "", None),
        "ylabel": (str, "", None),
    },
}

STOCHASTIC = {"sample", "simulate", "estimate", "calibrate", "fig3", "fig4", "fig5"}

# flag name -> config key, per schema
FLAG_KEYS = {"design": "design", "theta": "theta", "n": "n", "reps": "reps",
             "emit_channels": "emit_channels"}


def resolve_config(schema_name, args):
    schema = SCHEMAS[schema_name]
    raw = {k: (full if args.full and full is not None else default)
           for k, (_, default, full) in schema.items()}
    if args.config:
        for k, v in io.read_config(args.config).items():
            if k == "seed":
                if args.seed is None:
                    args.seed = int(v)
                continue
            if k not in schema:
                raise ConfigError(f"unknown config key {k!r} for {schema_name}")
            raw[k] = v
    for flag, key in FLAG_KEYS.items():
        val = getattr(args, flag, None)
        if val is None or val is False:
            continue
        if key == "theta" and "thetas" in schema:
            raw["thetas"] = str(val)
        elif key in schema:
            raw[key] = str(val)
        elif flag != "emit_channels":
            raise ConfigError(f"--{flag.replace('_', '-')} does not apply to {schema_name}")
    cfg = {}
    for k, (parse, _, _) in schema.items():
        try:
            cfg[k] = parse(raw[k])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {k}: {raw[k]!r} ({exc})") from None
    if schema_name in STOCHASTIC and args.seed is None:
        raise ConfigError("--seed is required for stochastic commands")
    if args.seed is not None and args.seed < 0:
        raise ConfigError("--seed must be a nonnegative integer")
    return raw, cfg


def _positive(cfg, *keys):
    for k in keys:
        if cfg[k] < 1:
            raise ConfigError(f"{k} must be >= 1")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_sample(cfg, seed, out, meta, workers):
    _positive(cfg, "reps", "thinning", "dim")
    if not cfg["thetas"] or any(t < 0 for t in cfg["thetas"]):
        raise ConfigError("thetas must be a nonempty list of nonnegative numbers")
    res, samples = ex.fidelity_sweep(cfg["thetas"], seed, cfg["reps"], cfg["dim"], cfg["kraus_rank"],
                                     cfg["burn_in"], cfg["thinning"], workers, keep_samples=True)
    ex.write_sweep(res, out, meta, samples if cfg["emit_channels"] else None)


def _truth_channel(cfg, seed):
    if cfg["truth"] == "depolarizing":
        return depolarizing_choi(cfg["fidelity"])
    if cfg["truth"] == "random":
        return tomography.random_channel_with_fidelity(cfg["fidelity"], rng=ex.derived_rng(seed, 1))
    return io.read_channel(cfg["truth"])


def cmd_simulate(cfg, seed, out, meta, workers):
    _positive(cfg, "n")
    design = tomography.get_design(cfg["design"])
    truth = _truth_channel(cfg, seed)
    if cfg["expected"]:
        data = tomography.expected_counts(truth, design, cfg["n"])
        x = data.x
        obj = {"design": design.name, "n_per_setting": cfg["n"], "x": x, "seed": seed, "meta": meta}
    else:
        data = tomography.simulate_counts(truth, design, cfg["n"], ex.derived_rng(seed, 2))
        obj = io.counts_to_dict(design.name, cfg["n"], data.x, seed, meta)
    io.write_json(Path(out) / "counts.json", obj)
    io.write_channel(Path(out) / "truth.json", truth, meta, process_fidelity=process_fidelity(truth))


def _read_counts_any(path):
    obj = io.read_json(path)
    try:
        return str(obj["design"]), int(obj["n_per_setting"]), [float(v) for v in obj["x"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed counts JSON: {exc}") from None


def cmd_estimate(cfg, seed, out, meta, workers):
    if not cfg["counts"]:
        raise ConfigError("estimate needs counts = <path> (config) or --counts")
    if cfg["mode"] not in ("mle", "map"):
        raise ConfigError("mode must be mle or map")
    _positive(cfg, "restarts")
    design_name, n, x = _read_counts_any(cfg["counts"])
    design = tomography.get_design(design_name)
    if len(x) != design.m:
        raise ConfigError(f"counts length {len(x)} does not match design {design_name} ({design.m})")
    data = tomography.CountData(np.array(x), np.full(design.m, float(n)))
    opts = stiefel_opt.OptimizerOptions(restarts=cfg["restarts"], rng_seed=seed,
                                        max_iters=cfg["max_iters"])
    if cfg["mode"] == "mle":
        res = tomography.mle(data, design, opts, cfg["kraus_rank"])
    else:
        if cfg["theta_file"]:
            theta = io.read_channel(cfg["theta_file"])
        else:
            if cfg["theta"] < 0:
                raise ConfigError("theta must be nonnegative")
            theta = fb.depolarizing_parameter(cfg["theta"], design.dim)
        res = tomography.map_estimate(data, design, theta, opts, cfg["kraus_rank"])
    io.write_channel(Path(out) / "estimate.json", res.choi, meta,
                     process_fidelity=process_fidelity(res.choi), report=res.to_dict())


def cmd_calibrate(cfg, seed, out, meta, workers):
    _positive(cfg, "reps", "thinning")
    if not 0.0 < cfg["fidelity"] < 1.0:
        raise ConfigError("target fidelity must lie in (0, 1)")
    chain = fb.ChainConfig(sample_count=cfg["reps"], burn_in=cfg["burn_in"],
                           thinning=cfg["thinning"], seed=seed)
    res = fb.calibrate_fidelity(cfg["fidelity"], cfg=chain, tol=cfg["tol"])
    io.write_json(Path(out) / "calibration.json", {
        "meta": meta, "theta": res.scalar, "achieved_fidelity": float(res.achieved),
        "target_fidelity": float(res.target), "residual": res.residual,
        "converged": res.converged, "evaluations": res.evaluations,
        "history": [[t, f] for t, f in res.history],
    })


def cmd_experiment(name, cfg, seed, out, meta, workers):
    if name == "fig1":
        if not (0 <= cfg["x"] <= cfg["n"]):
            raise ConfigError("need 0 <= x <= n")
        ex.write_fig1(ex.fig1(cfg["prior_fidelity"], cfg["x"], cfg["n"], cfg["grid"], cfg["n_rep"],
                              cfg["gamma"]), out, meta)
        return
    _positive(cfg, "reps")
    if name == "fig3":
        ex.write_fig3(ex.fig3(seed, cfg["reps"], cfg["thetas"], workers, cfg["burn_in"],
                              cfg["thinning"]), out, meta)
        return
    if cfg["design"] not in tomography.DESIGNS:
        raise ConfigError(f"unknown design {cfg['design']!r}")
    kw = dict(design=cfg["design"], theta=cfg["theta"], fidelity=cfg["fidelity"],
              restarts=cfg["restarts"], dd_restarts=cfg["dd_restarts"])
    if name == "fig4":
        ex.write_fig4(ex.fig4(seed, cfg["reps"], cfg["ns"], workers, **kw), out, meta)
    else:
        ex.write_fig5(ex.fig5(seed, cfg["reps"], cfg["ns"], workers, sqrt_ns=cfg["sqrt_ns"], **kw),
                      out, meta)


TRANSFORMS = {
    "none": lambda v: v,
    "log10": np.log10,
    "log10_infidelity": lambda v: np.log10(np.maximum(1.0 - v, 1e-300)),
}


def cmd_report(cfg, seed, out, meta, workers):
    paths = [p.strip() for p in cfg["inputs"].split(",") if p.strip()]
    if not paths:
        raise ConfigError("report needs inputs = a.csv,b.csv")
    labels = [s.strip() for s in cfg["labels"].split(",")] if cfg["labels"] else [Path(p).stem for p in paths]
    if len(labels) != len(paths):
        raise ConfigError("one label per input is required")
    if cfg["transform"] not in TRANSFORMS:
        raise ConfigError(f"transform must be one of {sorted(TRANSFORMS)}")
    groups = [TRANSFORMS[cfg["transform"]](io.read_csv_column(p, cfg["column"])) for p in paths]
    ds = report.ViolinDataset(labels, groups)
    ex.write_violin(ds, Path(out) / "violin", meta, cfg["title"], cfg["ylabel"] or cfg["column"])


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (u64)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--config", default=None, help="key = value config file")
    common.add_argument("--full", action="store_true", help="large replication counts")
    common.add_argument("--design", choices=sorted(tomography.DESIGNS), default=None)
    common.add_argument("--theta", type=float, default=None)
    common.add_argument("--n", type=int, default=None)
    common.add_argument("--reps", type=int, default=None)
    common.add_argument("--emit-channels", dest="emit_channels", action="store_true")
    common.add_argument("--workers", type=int, default=1)

    p = argparse.ArgumentParser(prog="choibingham", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("sample", parents=[common], help="Gibbs-sample channels over a theta sweep")
    sub.add_parser("simulate", parents=[common], help="simulate tomography counts")
    est = sub.add_parser("estimate", parents=[common], help="MLE or MAP estimate from counts")
    est.add_argument("--counts", default=None)
    est.add_argument("--mode", choices=["mle", "map"], default=None)
    sub.add_parser("calibrate", parents=[common], help="theta for a target mean fidelity")
    exp = sub.add_parser("experiment", parents=[common], help="scripted figure reproductions")
    exp.add_argument("name", choices=["fig1", "fig3", "fig4", "fig5"])
    rep = sub.add_parser("report", parents=[common], help="violin SVG from CSV columns")
    rep.add_argument("--inputs", default=None)
    rep.add_argument("--labels", default=None)
    rep.add_argument("--column", default=None)
    return p


COMMANDS = {"sample": cmd_sample, "simulate": cmd_simulate, "estimate": cmd_estimate,
            "calibrate": cmd_calibrate, "report": cmd_report}

EXTRA_FLAGS = ("counts", "mode", "inputs", "labels", "column")


def run(argv=None):
    args = build_parser().parse_args(argv)
    schema_name = args.name if args.command == "experiment" else args.command
    out = Path(args.out)
    try:
        raw, cfg = resolve_config(schema_name, args)
        for key in EXTRA_FLAGS:
            val = getattr(args, key, None)
            if val is not None:
                raw[key] = str(val)
                cfg[key] = SCHEMAS[schema_name][key][0](val)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        out.mkdir(parents=True, exist_ok=True)
        label = f"experiment {args.name}" if args.command == "experiment" else args.command
        meta = io.metadata(label, {k: raw[k] for k in sorted(raw)}, args.seed)
        if args.command == "experiment":
            cmd_experiment(args.name, cfg, args.seed, out, meta, args.workers)
        else:
            COMMANDS[args.command](cfg, args.seed, out, meta, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        out.mkdir(parents=True, exist_ok=True)
        io.write_json(out / "error.json", {"error": type(exc).__name__, "message": str(exc),
                                           "command": args.command, "seed": args.seed})
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
