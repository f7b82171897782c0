"""Command-line front end: ``converge``, ``validate`` and ``paths``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import platform
import sys
import time
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .core import (BUILTIN_IDS, builtin_problem, check_class_membership, make_grid,
                   sample_randomized_times, sample_wiener)
from .corruption import (NOISE_IDS, NoiseDraw, corrupt_wiener_path, draw_noise,
                         holder_sine_wiener_noise, k0_linear_wiener_noise,
                         linear_coefficient_noise, validate_holder, validate_k0)
from .harness import ExperimentConfig, SweepResult, default_threads, run_sweep
from .solver import SolverInputs, randomized_euler

CSV_HEADER = ["n", "delta1", "delta2", "delta3", "class", "r", "error", "std_error",
              "diverged", "K_effective"]

CONVERGE_KEYS = ("problem", "noise", "delta", "delta1", "delta2", "delta3", "beta", "n", "K",
                 "r", "reference", "nref", "seed", "fixed-noise", "threads", "deterministic",
                 "independent-paths", "out")

DEFAULTS = {"noise": "none", "beta": 0.25, "n": "16,64,256,1024", "K": 2000, "r": 2.0,
            "reference": "exact", "nref": 2 ** 15, "seed": 0, "deterministic": False,
            "independent-paths": False, "out": "."}


class ConfigError(Exception):
    pass


def fmt(x) -> str:
    """Round-trip exact text for a float."""
    return "%.17g" % x


def _floats(text, name, count=None) -> List[float]:
    if isinstance(text, (int, float)):
        values = [float(text)]
    elif isinstance(text, (list, tuple)):
        values = [float(v) for v in text]
    else:
        try:
            values = [float(v) for v in str(text).split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"{name}: expected comma-separated numbers, got {text!r}")
    if count is not None and len(values) != count:
        raise ConfigError(f"{name}: expected {count} values, got {len(values)}")
    return values


def _ints(text, name) -> List[int]:
    values = _floats(text, name)
    if any(v != int(v) for v in values):
        raise ConfigError(f"{name}: expected integers, got {text!r}")
    return [int(v) for v in values]


def _load_config_file(path: str) -> tuple:
    """Read a JSON config (or a manifest holding one) and return ``(dict, text)``."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}")
    if isinstance(data, dict) and isinstance(data.get("config"), dict) and "tool" in data:
        data = data["config"]
    if not isinstance(data, dict):
        raise ConfigError(f"{path}:1: top level must be a JSON object")
    return {k.replace("_", "-"): v for k, v in data.items()}, text


def _line_of(text: str, key: str) -> int:
    for variant in (key, key.replace("-", "_")):
        needle = f'"{variant}"'
        for lineno, line in enumerate(text.splitlines(), 1):
            if needle in line:
                return lineno
    return 1


def resolve_converge(args) -> dict:
    """Merge flags over the optional config file over defaults."""
    file_values, text, path = {}, "", None
    if args.config:
        path = args.config
        file_values, text = _load_config_file(path)
        unknown = sorted(set(file_values) - set(CONVERGE_KEYS))
        if unknown:
            raise ConfigError(f"{path}:{_line_of(text, unknown[0])}: unknown key {unknown[0]!r}")
    merged = {}
    for key in CONVERGE_KEYS:
        flag = getattr(args, key.replace("-", "_"))
        if flag is not None:
            merged[key] = (flag, None)
        elif key in file_values:
            merged[key] = (file_values[key], f"{path}:{_line_of(text, key)}")
        elif key in DEFAULTS:
            merged[key] = (DEFAULTS[key], None)
    return merged


def build_configs(merged: dict) -> List[ExperimentConfig]:
    def value(key):
        return merged[key][0] if key in merged else None

    def where(key):
        loc = merged.get(key, (None, None))[1]
        return f"{loc}: " if loc else ""

    if value("problem") is None:
        raise ConfigError("the following arguments are required: --problem")
    try:
        n_list = _ints(value("n"), "--n")
        fixed = value("fixed-noise")
        fixed = _floats(fixed, "--fixed-noise", 3) if fixed is not None else None
        deltas = _floats(value("delta"), "--delta") if value("delta") is not None else [None]
        common = dict(problem=str(value("problem")), noise=str(value("noise")),
                      beta=float(value("beta")), n_list=n_list, K=int(value("K")),
                      r=float(value("r")), reference=str(value("reference")),
                      n_ref=int(value("nref")), master_seed=int(value("seed")),
                      fixed_noise=fixed, coupled=not bool(value("independent-paths")))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))
    configs = []
    for delta in deltas:
        individual = {}
        for k in ("delta1", "delta2", "delta3"):
            v = value(k)
            if v is not None:
                individual[k] = float(v)
            else:
                individual[k] = 0.0 if delta is None else delta
        config = ExperimentConfig(**common, **individual)
        try:
            config.validate()
        except ValueError as exc:
            key = _guess_key(str(exc))
            raise ConfigError(f"{where(key)}{exc}")
        configs.append(config)
    return configs


def _guess_key(message: str) -> str:
    for key, words in (("problem", "problem"), ("noise", "noise model"), ("K", "K must"),
                       ("nref", "n_ref"), ("n", "n_list"), ("reference", "reference"),
                       ("beta", "beta"), ("r", "r must"), ("fixed-noise", "fixed_noise")):
        if words in message:
            return key
    for k in ("delta1", "delta2", "delta3"):
        if k in message:
            return k
    return ""


def config_echo(merged: dict) -> dict:
    out = {}
    for key in CONVERGE_KEYS:
        if key in ("out", "threads") or key not in merged:
            continue
        out[key] = merged[key][0]
    return out


def _csv_rows(results: List[SweepResult]) -> List[List[str]]:
    lines = []
    for res in results:
        for row in res.table.rows:
            lines.append([str(row.n), fmt(row.delta1), fmt(row.delta2), fmt(row.delta3),
                          row.class_tag, fmt(row.r), fmt(row.error), fmt(row.std_error),
                          str(row.diverged_count), str(row.K_effective)])
    return lines


def write_errors_csv(path: Path, results: List[SweepResult]) -> List[str]:
    """Write the error table and return one checksum per data row."""
    rows = _csv_rows(results)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        writer.writerows(rows)
    return [hashlib.sha256(",".join(r).encode()).hexdigest() for r in rows]


def write_loglog(path: Path, results: List[SweepResult]) -> None:
    """Blocks of ``ln n, ln error, ln(ln(error/eps0 + 1))``, one block per run.

    ``eps0`` is the smallest positive error of the whole table.
    """
    errors = [row.error for res in results for row in res.table.rows
              if math.isfinite(row.error) and row.error > 0]
    eps0 = min(errors) if errors else 1.0
    with open(path, "w") as fh:
        for k, res in enumerate(results):
            c = res.config
            if k:
                fh.write("\n\n")
            fh.write(f"# delta1={c.delta1:g} delta2={c.delta2:g} delta3={c.delta3:g} "
                     f"class={c.class_tag}\n# ln_n ln_error lnln_error\n")
            for row in res.table.rows:
                if not (math.isfinite(row.error) and row.error > 0):
                    continue
                # error / eps0 is computed in logs so huge errors stay finite
                ratio_log = math.log(row.error) - math.log(eps0)
                lnln = math.log(math.log1p(math.exp(ratio_log))) if ratio_log < 700 else math.log(ratio_log)
                fh.write(f"{fmt(math.log(row.n))} {fmt(math.log(row.error))} {fmt(lnln)}\n")


def write_gnuplot(path: Path, results: List[SweepResult]) -> None:
    plots = []
    for k, res in enumerate(results):
        c = res.config
        plots.append(f"'loglog.dat' index {k} using 1:2 with linespoints "
                     f"title 'delta={c.delta1:g},{c.delta2:g},{c.delta3:g}'")
    with open(path, "w") as fh:
        fh.write("set xlabel 'ln n'\nset ylabel 'ln error'\nset key left bottom\n")
        fh.write("plot " + ", \\\n     ".join(plots) + "\n")


def _fit_dict(fit):
    if fit is None:
        return None
    return {"slope": fit.slope, "intercept": fit.intercept, "residual": fit.residual,
            "n_range": list(fit.n_range)}


def cmd_converge(args) -> int:
    try:
        merged = resolve_converge(args)
        configs = build_configs(merged)
    except ConfigError as exc:
        sys.stderr.write(args.usage())
        print(f"noisy-euler converge: error: {exc}", file=sys.stderr)
        return 2
    threads = merged["threads"][0] if "threads" in merged else default_threads()
    deterministic = bool(merged["deterministic"][0])
    out = Path(merged["out"][0])
    out.mkdir(parents=True, exist_ok=True)

    start = time.perf_counter()
    results = run_sweep(configs, threads=int(threads), deterministic=deterministic)
    elapsed = time.perf_counter() - start

    checksums = write_errors_csv(out / "errors.csv", results)
    write_loglog(out / "loglog.dat", results)
    write_gnuplot(out / "loglog.gp", results)
    manifest = {
        "tool": "noisy-euler",
        "version": __version__,
        "master_seed": configs[0].master_seed,
        "deterministic": deterministic,
        "threads": int(threads),
        "config": config_echo(merged),
        "runs": [{"delta1": r.config.delta1, "delta2": r.config.delta2,
                  "delta3": r.config.delta3, "class": r.config.class_tag,
                  "fit": _fit_dict(r.fit), "tail_fit": _fit_dict(r.tail_fit)}
                 for r in results],
        "row_checksums": checksums,
        "wall_clock_seconds": elapsed,
        "platform": {"python": platform.python_version(), "numpy": np.__version__},
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    for res in results:
        for row in res.table.rows:
            if row.K_effective == 0:
                print(f"warning: all {row.diverged_count} replications diverged at n={row.n} "
                      f"(delta={row.delta1:g},{row.delta2:g},{row.delta3:g})", file=sys.stderr)
        if res.fit is not None:
            print(f"delta=({res.config.delta1:g},{res.config.delta2:g},{res.config.delta3:g}) "
                  f"slope={res.fit.slope:.4f}")
    return 0


def _draw_from(fixed, default) -> NoiseDraw:
    if fixed is None:
        return NoiseDraw.fixed(*default)
    return NoiseDraw.fixed(*_floats(fixed, "--fixed-noise", 3))


def cmd_validate(args) -> int:
    try:
        problem = builtin_problem(args.problem)
        if args.noise not in NOISE_IDS:
            raise ConfigError(f"unknown noise model {args.noise!r}; expected one of {', '.join(NOISE_IDS)}")
        # without an override the extreme draw u = (1, 1, 1) is checked
        draw = _draw_from(args.fixed_noise, (1.0, 1.0, 1.0))
        if not 0 < args.beta <= 1:
            raise ConfigError(f"beta must lie in (0, 1], got {args.beta}")
    except (ConfigError, ValueError) as exc:
        sys.stderr.write(args.usage())
        print(f"noisy-euler validate: error: {exc}", file=sys.stderr)
        return 1

    failed = False
    print(f"problem: {problem.name}")
    member = check_class_membership(problem, count=args.samples, seed=args.seed)
    for name in ("drift_lipschitz", "diffusion_lipschitz", "diffusion_time_holder",
                 "drift_growth", "diffusion_growth"):
        print(f"  {name}: {getattr(member, name):.6g}")
    print(f"  K: {member.K:g}  eta norm: {member.eta_norm:.6g}")
    print("  membership: " + ("VIOLATION " + ",".join(member.violations) if member.violation else "pass"))
    failed |= member.violation

    if args.noise != "none":
        print(f"noise: {args.noise} (u1={draw.u1:g}, u2={draw.u2:g}, u3={draw.u3:g})")
        coeff = linear_coefficient_noise(problem, draw, 1.0, 1.0)
        growth = coeff.growth_constants(problem, seed=args.seed)
        print(f"  observed growth constant p_a: {growth['p_a']:.6g}  p_b: {growth['p_b']:.6g}"
              " (class bound 1, informational)")
        if args.noise == "linear-k0":
            p_w = k0_linear_wiener_noise(draw, 1.0).p_w
            report = validate_k0(p_w, problem.m, count=args.samples, seed=args.seed, T=problem.T)
        else:
            p_w = holder_sine_wiener_noise(draw, 1.0, args.beta).p_w
            report = validate_holder(p_w, problem.m, 1.0, args.beta, count=args.samples,
                                     seed=args.seed, T=problem.T)
        for line in report.lines():
            print("  " + line)
        failed |= not report.passed
    return 2 if failed else 0


def write_paths(path, problem, n: int, count: int, seed: int, noise: str = "none",
                deltas=(0.0, 0.0, 0.0), beta: float = 0.25, fixed_noise=None) -> None:
    """Trajectories of replications ``0..count-1`` as ``replication,i,t,x1..xd`` rows."""
    if count < 1:
        raise ValueError("count must be at least 1")
    grid = make_grid(n, problem.T)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["replication", "i", "t"] + [f"x{k + 1}" for k in range(problem.d)])
        for rep in range(count):
            base = sample_wiener(seed, rep, grid, problem.m)
            xi = sample_randomized_times(seed, rep, grid)
            if noise == "none":
                inputs = SolverInputs(problem, xi, base)
            else:
                draw = NoiseDraw.fixed(*fixed_noise) if fixed_noise else draw_noise(seed, rep)
                coeff = linear_coefficient_noise(problem, draw, deltas[0], deltas[1])
                if noise == "linear-k0":
                    wn = k0_linear_wiener_noise(draw, deltas[2])
                else:
                    wn = holder_sine_wiener_noise(draw, deltas[2], beta)
                inputs = SolverInputs(problem, xi, corrupt_wiener_path(base, wn), coeff)
            traj = randomized_euler(inputs)
            for i in range(n + 1):
                writer.writerow([rep, i, fmt(grid.nodes[i])] + [fmt(v) for v in traj.states[i]])


def cmd_paths(args) -> int:
    try:
        problem = builtin_problem(args.problem)
        if args.noise not in NOISE_IDS:
            raise ConfigError(f"unknown noise model {args.noise!r}")
        if args.count < 1 or args.n < 1:
            raise ConfigError("--n and --count must be positive")
        d = args.delta if args.delta is not None else 0.0
        deltas = tuple(v if v is not None else d for v in (args.delta1, args.delta2, args.delta3))
        if args.noise == "none" and any(deltas):
            raise ConfigError("noise model 'none' takes no deltas")
        fixed = _floats(args.fixed_noise, "--fixed-noise", 3) if args.fixed_noise else None
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_paths(out / "paths.csv", problem, args.n, args.count, args.seed, args.noise,
                    deltas, args.beta, fixed)
    except (ConfigError, ValueError) as exc:
        print(f"noisy-euler paths: error: {exc}", file=sys.stderr)
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noisy-euler",
        description="Randomized Euler scheme under inexact information: error studies.")
    sub = parser.add_subparsers(dest="command", required=True)

    conv = sub.add_parser("converge", help="Monte Carlo strong-error table over n")
    conv.add_argument("--config", help="JSON file whose keys mirror the flag names")
    conv.add_argument("--problem", choices=BUILTIN_IDS)
    conv.add_argument("--noise", choices=NOISE_IDS)
    conv.add_argument("--delta", help="comma list; each value sets delta1=delta2=delta3 for one run")
    for k in ("delta1", "delta2", "delta3"):
        conv.add_argument(f"--{k}", type=float)
    conv.add_argument("--beta", type=float)
    conv.add_argument("--n", help="comma list of step counts")
    conv.add_argument("--K", type=int, help="replications")
    conv.add_argument("--r", type=float, help="error norm order (>= 2)")
    conv.add_argument("--reference", choices=("exact", "self"))
    conv.add_argument("--nref", type=int)
    conv.add_argument("--seed", type=int)
    conv.add_argument("--fixed-noise", help="u1,u2,u3 used for every replication")
    conv.add_argument("--threads", type=int, help="worker cap (default: $NOISY_EULER_THREADS or CPU count)")
    conv.add_argument("--deterministic", action="store_true", default=None,
                      help="reduce in replication order (bitwise reproducible)")
    conv.add_argument("--independent-paths", action="store_true", default=None,
                      help="fresh Wiener path per n instead of one coarsened path")
    conv.add_argument("--out", help="output directory")
    conv.set_defaults(func=cmd_converge, usage=conv.format_usage)

    val = sub.add_parser("validate", help="sampled class checks for a noise model and problem")
    val.add_argument("--noise", required=True)
    val.add_argument("--problem", default="example1", choices=BUILTIN_IDS)
    val.add_argument("--beta", type=float, default=0.25)
    val.add_argument("--fixed-noise")
    val.add_argument("--samples", type=int, default=10_000)
    val.add_argument("--seed", type=int, default=0)
    val.set_defaults(func=cmd_validate, usage=val.format_usage)

    paths = sub.add_parser("paths", help="write sample trajectories to paths.csv")
    paths.add_argument("--problem", required=True, choices=BUILTIN_IDS)
    paths.add_argument("--n", type=int, required=True)
    paths.add_argument("--count", type=int, default=1)
    paths.add_argument("--seed", type=int, default=0)
    paths.add_argument("--noise", default="none")
    paths.add_argument("--delta", type=float)
    for k in ("delta1", "delta2", "delta3"):
        paths.add_argument(f"--{k}", type=float)
    paths.add_argument("--beta", type=float, default=0.25)
    paths.add_argument("--fixed-noise")
    paths.add_argument("--out", default=".")
    paths.set_defaults(func=cmd_paths)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
