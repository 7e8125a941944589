"""Command-line entry point.

Subcommands: run (single experiment), grid (horizon sweep with rate fit and
bound dominance), bounds (closed-form bound evaluation), lowerbound
(adversarial exceedance trials), sample-dist (output-rule distributions as
CSV), and data (parse | synth | split).

Experiments are declared in a YAML or JSON config file validated against
CONFIG_SCHEMA with unknown-key rejection; repeatable ``--set key=value``
flags override file values through dotted paths.  Every artifact-producing
command writes a manifest.json holding the fully resolved config and the
seed list; pointing ``--config`` at a manifest reproduces the run byte for
byte.  The default output directory is ``--out-dir``, else the config's
out_dir, else $STEPDECAY_LAB_OUT, else ./stepdecay-lab-out.
"""

from __future__ import annotations

import argparse
import difflib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import bounds as bounds_mod
from .data_io import (csv_text, format_float, parse_libsvm, serialize_libsvm,
                      synth_logistic_data, train_test_split, write_csv)
from .harness import (BETA_SQRT_T, ScheduleFamily, lower_bound_trial,
                      robustness_sweep, run_rate_experiment)
from .optimizer import RunConfig, replicate, run_metrics, sgd_run, write_trajectory_csv
from .output_rules import OutputRule, as_rule, weights_from_etas
from .problems import (FeasibleSet, make_adversarial_lower_bound,
                       make_bounded_nonconvex, make_logistic, make_quadratic)
from .schedules import (STEP_DECAY, ScheduleSpec, eta_sequence, phase_partition,
                        resolve_target_eta)


class ConfigError(ValueError):
    """Raised for malformed or unknown configuration entries."""


_NUM = (int, float)
_SCALARS = (int, float, str, bool)

# Schema tree: dict -> nested keys, tuple -> accepted leaf types.
CONFIG_SCHEMA = {
    "problem": {
        "kind": (str,),
        "dimension": (int,),
        "spectrum": (list,),
        "x_star": (list, *_NUM),
        "noise": {"kind": (str,), "sigma2": _NUM, "radius": _NUM},
        "noise_variance": _NUM,
        "feasible_set": {"kind": (str,), "lo": (list, *_NUM), "hi": (list, *_NUM),
                         "center": (list, *_NUM), "radius": _NUM},
        "dataset": (str,),
        "synthetic": {"n": (int,), "d": (int,), "separation": _NUM, "seed": (int,)},
        "reg_lambda": _NUM,
        "batch_size": (int,),
        "alpha": _NUM,
    },
    "schedule": {
        "variant": (str,), "eta0": _NUM, "alpha": _NUM, "S": (int,), "mode": (str,),
        "a0": _NUM, "beta": (str, *_NUM), "T0": (int,), "target_eta_T": _NUM,
    },
    "T": (int,),
    "T_grid": (list,),
    "output_rules": (list,),
    "n_reps": (int,),
    "seed": (int,),
    "x0": (list, *_NUM),
    "retention": (str,),
    "metric": (str,),
    "bound": (str,),
    "bound_inputs": (dict,),
    "suffix_mu": _NUM,
    "n_trials": (int,),
    "delta": _NUM,
    "eta0_grid": (list,),
    "families": (dict,),
    "out_dir": (str,),
    "threads": (int,),
}


def validate_config(config: dict, schema=None, path: str = "") -> None:
    schema = CONFIG_SCHEMA if schema is None else schema
    if not isinstance(config, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping")
    for key, value in config.items():
        where = f"{path}.{key}" if path else key
        if key not in schema:
            hint = difflib.get_close_matches(key, schema.keys(), n=1)
            extra = f" (did you mean {hint[0]!r}?)" if hint else ""
            raise ConfigError(f"{where}: unknown key{extra}")
        rule = schema[key]
        if isinstance(rule, dict):
            validate_config(value, rule, where)
        elif not isinstance(value, rule):
            names = "/".join(t.__name__ for t in rule)
            raise ConfigError(f"{where}: expected {names}, got {type(value).__name__}")


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    text = Path(path).read_text()
    config = yaml.safe_load(text) or {}
    if "resolved_config" in config:  # manifests replay directly
        config = config["resolved_config"]
    validate_config(config)
    return config


def apply_overrides(config: dict, pairs) -> dict:
    for pair in pairs or ():
        key, sep, raw = pair.partition("=")
        if not sep:
            raise ConfigError(f"--set needs key=value, got {pair!r}")
        value = yaml.safe_load(raw)
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    validate_config(config)
    return config


# ---------------------------------------------------------------------------
# config -> objects
# ---------------------------------------------------------------------------

def _as_vector(value, d):
    return np.broadcast_to(np.atleast_1d(np.asarray(value, dtype=np.float64)), (d,)).copy()


def build_feasible_set(cfg: dict | None, d: int) -> FeasibleSet | None:
    if not cfg:
        return None
    kind = cfg.get("kind", "all")
    if kind == "all":
        return FeasibleSet.all_space()
    if kind == "box":
        return FeasibleSet.box(_as_vector(cfg["lo"], d), _as_vector(cfg["hi"], d))
    if kind == "ball":
        return FeasibleSet.ball(_as_vector(cfg.get("center", 0.0), d), cfg["radius"])
    raise ConfigError(f"problem.feasible_set.kind: unknown kind {kind!r}")


def build_problem(config: dict, T: int | None):
    pcfg = config.get("problem") or {}
    kind = pcfg.get("kind")
    if kind == "quadratic":
        d = pcfg.get("dimension", 1)
        spectrum = pcfg.get("spectrum", [1.0] * d)
        noise_cfg = pcfg.get("noise")
        noise = None
        if noise_cfg and noise_cfg.get("kind", "none") != "none":
            noise = (noise_cfg["kind"],
                     noise_cfg.get("sigma2") if noise_cfg["kind"] == "gaussian"
                     else noise_cfg.get("radius"))
        x_star = pcfg.get("x_star")
        return make_quadratic(d, spectrum,
                              x_star=None if x_star is None else _as_vector(x_star, d),
                              noise=noise,
                              feasible_set=build_feasible_set(pcfg.get("feasible_set"), d))
    if kind == "bounded_nonconvex":
        return make_bounded_nonconvex(pcfg.get("dimension", 1),
                                      pcfg.get("noise_variance", 1.0))
    if kind == "logistic":
        if "dataset" in pcfg:
            dataset = parse_libsvm(Path(pcfg["dataset"]))
        elif "synthetic" in pcfg:
            s = pcfg["synthetic"]
            dataset = synth_logistic_data(s["n"], s["d"], s.get("separation", 2.0),
                                          s.get("seed", 0))
        else:
            raise ConfigError("problem: logistic needs dataset or synthetic")
        d = dataset.d
        return make_logistic(dataset, pcfg.get("reg_lambda", 1e-4),
                             pcfg.get("batch_size", 128),
                             feasible_set=build_feasible_set(pcfg.get("feasible_set"), d))
    if kind == "adversarial":
        alpha = pcfg.get("alpha", (config.get("schedule") or {}).get("alpha"))
        if alpha is None or T is None:
            raise ConfigError("problem: adversarial needs alpha and T")
        return make_adversarial_lower_bound(int(T), float(alpha))
    raise ConfigError(f"problem.kind: unknown kind {kind!r}")


def build_schedule(config: dict, T: int) -> ScheduleSpec:
    scfg = dict(config.get("schedule") or {})
    variant = scfg.pop("variant", None)
    if variant is None:
        raise ConfigError("schedule.variant is required")
    mode = scfg.pop("mode", None)
    target = scfg.pop("target_eta_T", None)
    if variant == STEP_DECAY and "S" not in scfg:
        if mode is None:
            raise ConfigError("schedule: step_decay needs S or mode")
        scfg["S"] = phase_partition(scfg.get("alpha"), T, mode).S
    if scfg.get("beta") == BETA_SQRT_T:
        scfg["beta"] = math.sqrt(T)
    spec = ScheduleSpec(variant=variant, **scfg)
    if target is not None:
        spec = resolve_target_eta(spec, T, target)
    return spec.validate(T)


def build_family(config: dict) -> ScheduleFamily:
    scfg = config.get("schedule") or {}
    return ScheduleFamily(variant=scfg["variant"], eta0=scfg.get("eta0", 1.0),
                          alpha=scfg.get("alpha"), mode=scfg.get("mode"),
                          a0=scfg.get("a0"), beta=scfg.get("beta"),
                          T0=scfg.get("T0"), target_eta_T=scfg.get("target_eta_T"))


def build_rules(config: dict) -> tuple:
    raw = config.get("output_rules", ["last_iterate"])
    rules = []
    for entry in raw:
        if isinstance(entry, dict):
            rules.append(OutputRule(kind=entry["kind"], mu=entry.get("mu")).validate())
        else:
            rules.append(as_rule(entry))
    return tuple(rules)


# ---------------------------------------------------------------------------
# manifests and output plumbing
# ---------------------------------------------------------------------------

def resolve_out_dir(args, config: dict) -> Path:
    out = args.out_dir or config.get("out_dir") or os.environ.get("STEPDECAY_LAB_OUT") \
        or "stepdecay-lab-out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def resolve_threads(args, config: dict) -> int:
    # results are thread-count invariant: reps are reduced in index order
    return args.threads or config.get("threads") or os.cpu_count() or 1


def write_manifest(out_dir: Path, command: str, config: dict, seeds, outputs) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "resolved_config": config,
        "seed_stream": "SeedSequence(entropy=seed, spawn_key=per-cell-and-rep keys)",
        "seeds": seeds,
        "outputs": sorted(Path(o).name for o in outputs),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _gather(args, names):
    out = {}
    for name in names:
        value = getattr(args, name.replace("-", "_"), None)
        if value is not None:
            out[name] = value
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_run(args) -> int:
    config = apply_overrides(load_config(args.config), args.set)
    if args.seed is not None:
        config["seed"] = args.seed
    T = config.get("T")
    if T is None:
        raise ConfigError("T is required for run")
    problem = build_problem(config, T)
    spec = build_schedule(config, T)
    rules = build_rules(config)
    out_dir = resolve_out_dir(args, config)
    seed = config.get("seed", 0)
    n_reps = config.get("n_reps", 1)
    x0 = config.get("x0")
    run_config = RunConfig(problem=problem, schedule=spec, T=T, output_rules=rules,
                           seed=seed, spawn_key=(0,),
                           x0=None if x0 is None else _as_vector(x0, problem.dimension),
                           retention=config.get("retention", "final_phase_plus_sampled"))
    outputs = []
    trajectory = sgd_run(run_config)
    traj_path = out_dir / "trajectory.csv"
    write_trajectory_csv(trajectory, traj_path)
    outputs.append(traj_path)

    metrics_rows = []
    if n_reps > 1:
        summary = replicate(run_config, n_reps, seed, threads=resolve_threads(args, config))
        for name in sorted(summary.metrics):
            m = summary[name]
            metrics_rows.append((name, m.mean, m.std, m.ci_half, m.n))
        div = summary.n_diverged
    else:
        for name, value in sorted(run_metrics(trajectory, run_config).items()):
            metrics_rows.append((name, value, 0.0, 0.0, 1))
        div = int(trajectory.diverged_at is not None)
    summary_path = out_dir / "summary.csv"
    write_csv(summary_path, ("metric", "mean", "std", "ci_half", "n"), metrics_rows)
    outputs.append(summary_path)
    outputs.append(write_manifest(out_dir, "run", config,
                                  [[seed, [0]], [seed, list(range(n_reps))]], outputs))
    print(f"run complete: T={T}, schedule={spec.variant}, backend outputs in {out_dir}")
    if div:
        print(f"warning: {div} run(s) diverged", file=sys.stderr)
        return 2
    return 0


def cmd_grid(args) -> int:
    config = apply_overrides(load_config(args.config), args.set)
    if args.seed is not None:
        config["seed"] = args.seed
    T_grid = config.get("T_grid")
    if not T_grid:
        raise ConfigError("T_grid is required for grid")
    metric = config.get("metric")
    if metric is None:
        raise ConfigError("metric is required for grid")
    problem = build_problem(config, max(T_grid))
    family = build_family(config)
    out_dir = resolve_out_dir(args, config)
    x0 = config.get("x0")
    result = run_rate_experiment(
        problem, family, metric, T_grid=tuple(T_grid),
        n_reps=config.get("n_reps", 50), base_seed=config.get("seed", 0),
        x0=None if x0 is None else _as_vector(x0, problem.dimension),
        suffix_mu=config.get("suffix_mu"), bound_kind=config.get("bound"),
        threads=resolve_threads(args, config))
    rates_path = out_dir / "rates.csv"
    write_csv(rates_path, result.csv_header(), result.rows())
    outputs = [rates_path]
    outputs.append(write_manifest(out_dir, "grid", config,
                                  [[config.get("seed", 0), list(range(len(T_grid)))]],
                                  outputs))
    print(f"fitted slope {result.fit.slope:.4f} over T={T_grid}")
    if result.bound_reports is not None:
        ok = bool(np.all(result.dominated))
        print(f"bound {result.bound_kind}: "
              f"{'dominates at every grid point' if ok else 'VIOLATED somewhere'}")
        if not ok:
            return 1
    return 0


_BOUND_FLAGS = ("eta0", "T", "L", "V2", "f_max", "alpha", "beta", "f_gap",
                "D2", "G2", "mu", "R", "delta")


def cmd_bounds(args) -> int:
    config = apply_overrides(load_config(args.config), args.set)
    kind = args.kind or config.get("bound")
    if kind is None:
        raise ConfigError("bounds needs --kind or a config 'bound' entry")
    inputs = dict(config.get("bound_inputs") or {})
    inputs.update(_gather(args, _BOUND_FLAGS))
    if "T" in inputs:
        inputs["T"] = int(inputs["T"])
    report = bounds_mod.evaluate_bound(kind, **inputs)
    rows = [(section, name, value) for section, name, value in report.rows()]
    if args.format == "csv":
        print(csv_text(("section", "name", "value"), rows), end="")
    else:
        width = max(len(name) for _, name, _ in rows)
        for section, name, value in rows:
            shown = format_float(value) if isinstance(value, (int, float)) else str(value)
            print(f"{section:9s} {name:<{width}s} {shown}")
    if args.out_dir:
        out_dir = resolve_out_dir(args, config)
        path = out_dir / "bounds.csv"
        write_csv(path, ("section", "name", "value"),
                  [(s, n, v if isinstance(v, (int, float)) else str(v)) for s, n, v in rows])
        write_manifest(out_dir, "bounds", {**config, "bound": kind,
                                           "bound_inputs": inputs}, [], [path])
    return 0


def cmd_lowerbound(args) -> int:
    config = apply_overrides(load_config(args.config), args.set)
    T = int(args.T or config.get("T") or 0)
    alpha = args.alpha or (config.get("schedule") or {}).get("alpha") or config.get("bound_inputs", {}).get("alpha")
    delta = args.delta or config.get("delta")
    n_trials = int(args.n_trials or config.get("n_trials") or 0)
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    if not (T and alpha and delta and n_trials):
        raise ConfigError("lowerbound needs T, alpha, delta, and n-trials")
    result = lower_bound_trial(T, float(alpha), float(delta), n_trials, base_seed=seed)
    out_dir = resolve_out_dir(args, config)
    path = out_dir / "exceedance.csv"
    write_csv(path, ("T", "alpha", "delta", "threshold", "n_trials", "n_exceeding",
                     "frequency", "ci_low", "ci_high"),
              [(result.T, result.alpha, result.delta, result.threshold, result.n_trials,
                result.n_exceeding, result.frequency, result.ci_low, result.ci_high)])
    write_manifest(out_dir, "lowerbound",
                   {"T": T, "alpha": alpha, "delta": delta, "n_trials": n_trials,
                    "seed": seed}, [[seed, list(range(n_trials))]], [path])
    print(f"threshold {format_float(result.threshold)}: exceeded in "
          f"{result.n_exceeding}/{result.n_trials} trials "
          f"(frequency {result.frequency:.4f}, 95% CI [{result.ci_low:.4f}, {result.ci_high:.4f}])")
    return 0


def cmd_sample_dist(args) -> int:
    config = apply_overrides(load_config(args.config), args.set)
    T = int(args.T or config.get("T") or 0)
    if not T:
        raise ConfigError("sample-dist needs T")
    if args.ratio is not None:
        # raw geometric sequence eta_t = eta0 * ratio^t for distribution studies
        etas = args.eta0 * args.ratio ** np.arange(1, T + 1, dtype=np.float64)
        label = f"geometric(ratio={args.ratio})"
    else:
        spec = build_schedule(config, T)
        etas = eta_sequence(spec, T)
        label = spec.variant
    inv = weights_from_etas(etas, "sample_inv_eta").probs
    pro = weights_from_etas(etas, "sample_eta").probs
    out_dir = resolve_out_dir(args, config)
    path = out_dir / "dist.csv"
    write_csv(path, ("t", "eta", "p_inv_eta", "p_eta"),
              ((t + 1, etas[t], inv[t], pro[t]) for t in range(T)))
    write_manifest(out_dir, "sample-dist", {**config, "T": T}, [], [path])
    print(f"wrote selection distribution for {label}, T={T}, to {path}")
    return 0


def cmd_data(args) -> int:
    if args.data_command == "parse":
        dataset = parse_libsvm(Path(args.infile), d=args.d)
        print(f"n={dataset.n} d={dataset.d} nnz={len(dataset.data)}")
        if args.out:
            Path(args.out).write_text(serialize_libsvm(dataset))
            print(f"wrote normalized copy to {args.out}")
        return 0
    if args.data_command == "synth":
        dataset = synth_logistic_data(args.n, args.d, args.separation, args.seed)
        Path(args.out).write_text(serialize_libsvm(dataset))
        print(f"wrote {dataset.n} rows (d={dataset.d}) to {args.out}")
        return 0
    # split
    dataset = parse_libsvm(Path(args.infile), d=args.d)
    train, test = train_test_split(dataset, args.fraction, args.seed)
    Path(args.out_train).write_text(serialize_libsvm(train))
    Path(args.out_test).write_text(serialize_libsvm(test))
    print(f"split {dataset.n} rows into {train.n} train / {test.n} test")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(parser, include_seed=True):
    parser.add_argument("--config", help="YAML or JSON experiment config (or a manifest)")
    parser.add_argument("--out-dir", help="output directory")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config entry (dotted path, repeatable)")
    parser.add_argument("--threads", type=int, help="worker cap for replications")
    if include_seed:
        parser.add_argument("--seed", type=int, help="base seed override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stepdecay-lab",
        description="SGD schedule laboratory: runs, bounds, and rate verification")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="single experiment from a config")
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("grid", help="horizon sweep with rate fit and bound check")
    _add_common(p)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("bounds", help="evaluate a closed-form bound")
    _add_common(p)
    p.add_argument("--kind", help="bound kind, e.g. T3.1 or T5.4")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    for flag in _BOUND_FLAGS:
        p.add_argument(f"--{flag.replace('_', '-')}", type=float, dest=flag)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("lowerbound", help="adversarial exceedance trials")
    _add_common(p)
    p.add_argument("--T", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--n-trials", type=int, dest="n_trials")
    p.set_defaults(func=cmd_lowerbound)

    p = sub.add_parser("sample-dist", help="emit selection probabilities as CSV")
    _add_common(p, include_seed=False)
    p.add_argument("--T", type=int)
    p.add_argument("--ratio", type=float,
                   help="raw geometric schedule eta_t = eta0 * ratio^t")
    p.add_argument("--eta0", type=float, default=1.0)
    p.set_defaults(func=cmd_sample_dist)

    p = sub.add_parser("data", help="dataset utilities")
    data_sub = p.add_subparsers(dest="data_command", required=True)
    q = data_sub.add_parser("parse", help="parse and report a LIBSVM file")
    q.add_argument("infile")
    q.add_argument("--d", type=int, help="pin the feature dimension")
    q.add_argument("--out", help="write a normalized copy")
    q.set_defaults(func=cmd_data)
    q = data_sub.add_parser("synth", help="generate synthetic classification data")
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--d", type=int, required=True)
    q.add_argument("--separation", type=float, default=2.0)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_data)
    q = data_sub.add_parser("split", help="deterministic train/test split")
    q.add_argument("infile")
    q.add_argument("--fraction", type=float, default=0.75)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--d", type=int)
    q.add_argument("--out-train", required=True)
    q.add_argument("--out-test", required=True)
    q.set_defaults(func=cmd_data)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"{args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
