"""Command-line front end: simulation, single fits, and replication experiments.

Three subcommands share one JSON config document with sections
``simulation``, ``em`` and ``experiment``:

    switchem simulate   --config cfg.json --out outdir
    switchem fit        --config cfg.json --data path.csv --out outdir
    switchem experiment --config cfg.json --out outdir --jobs 4

File schemas (all CSV floats printed with 9 significant digits):

    path.csv     t,x[,alpha_true]
    trace.csv    iter,b1..bN,lambda,delta,H,stat,elapsed_ms
    summary.csv  rep,seed,b1..bN,lambda,delta,qe_b1..qe_delta,iters,status
    result.json  estimate, quadratic_error, status, iterations, elapsed_ms,
                 config, seed

Exit codes: 0 success, 2 configuration or input-schema error, 3 numerical
failure (for experiments: more than half of the replications failed).

The environment variable ``SWITCHEM_SEED`` overrides the configured seed
base.  Replication r runs with seed ``seed_base + r``, so partial
experiments can be resumed or re-run selectively.  ``--stable-output``
zeroes the elapsed-time fields, making outputs bit-identical across runs
and across ``--jobs`` values.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .ctmc import GeneratorMatrix, validate_generator
from .em import (
    EmConfig,
    EmResult,
    em_fit,
    quadratic_error,
    random_theta0,
    sort_regimes,
)
from .errors import ConfigError, EvaluationError, NumericalFailure
from .likelihood import ObservationSeries, Theta
from .sde import SimulationConfig, simulate_path
from .smoother import smooth_regimes

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_GRID_TOL = 1e-9


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def _seed_base(sim_section: dict) -> int | None:
    env = os.environ.get("SWITCHEM_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"SWITCHEM_SEED={env!r} is not an integer") from exc
    seed = sim_section.get("seed")
    if seed is not None and not isinstance(seed, int):
        raise ConfigError(f"simulation.seed must be an integer, got {seed!r}")
    return seed


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing required key {where}.{key}")
    return section[key]


def _parse_simulation(cfg: dict) -> tuple[SimulationConfig, dict]:
    sim = cfg.get("simulation")
    if not isinstance(sim, dict):
        raise ConfigError("config needs a 'simulation' object section")
    b = np.asarray(_require(sim, "b", "simulation"), dtype=float)
    lam = float(_require(sim, "lambda", "simulation"))
    delta = float(_require(sim, "delta", "simulation"))
    try:
        theta = Theta(b, lam, delta)
        g = validate_generator(
            _require(sim, "q", "simulation"), allow_single_state=b.size == 1
        )
        sc = SimulationConfig(
            theta_true=theta,
            a_nuisance=float(_require(sim, "a", "simulation")),
            generator=g,
            horizon_t=float(_require(sim, "horizon_t", "simulation")),
            obs_step_h=float(_require(sim, "obs_step_h", "simulation")),
            fine_factor=int(sim.get("fine_factor", 10)),
            x0=float(sim.get("x0", 0.0)),
            alpha0=sim.get("alpha0"),
            seed=_seed_base(sim),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad simulation section: {exc}") from exc
    return sc, sim


def _parse_em(cfg: dict) -> EmConfig:
    em = cfg.get("em", {})
    if not isinstance(em, dict):
        raise ConfigError("'em' section must be a JSON object")
    kwargs = {}
    for key in (
        "epsilon",
        "rho",
        "max_iters",
        "termination",
        "m_step",
        "update_q",
        "init_seed",
    ):
        if key in em:
            kwargs[key] = em[key]
    for key in (
        "b_box",
        "lambda_box",
        "delta_box",
        "init_b_range",
        "init_lambda_range",
        "init_delta_range",
    ):
        if key in em:
            kwargs[key] = tuple(float(v) for v in em[key])
    if em.get("theta0") is not None:
        kwargs["theta0"] = tuple(float(v) for v in em["theta0"])
    if em.get("initial_filter_probs") is not None:
        kwargs["initial_filter_probs"] = tuple(
            float(v) for v in em["initial_filter_probs"]
        )
    try:
        return EmConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad em section: {exc}") from exc


def _write_path_csv(
    path: Path, obs: ObservationSeries, alpha: np.ndarray | None
) -> None:
    lines = ["t,x,alpha_true" if alpha is not None else "t,x"]
    t = obs.t0 + obs.h * np.arange(obs.x.size)
    for j in range(obs.x.size):
        row = f"{_fmt(t[j])},{_fmt(obs.x[j])}"
        if alpha is not None:
            row += f",{int(alpha[j])}"
        lines.append(row)
    _write_atomic(path, "\n".join(lines) + "\n")


def _trace_csv_text(result: EmResult, n_states: int, stable: bool) -> str:
    cols = (
        ["iter"]
        + [f"b{i + 1}" for i in range(n_states)]
        + ["lambda", "delta", "H", "stat", "elapsed_ms"]
    )
    lines = [",".join(cols)]
    for rec in result.trace:
        vals = (
            [str(rec.iteration)]
            + [_fmt(v) for v in rec.theta]
            + [_fmt(rec.h_before), _fmt(rec.stat)]
            + [_fmt(0.0 if stable else rec.elapsed_ms)]
        )
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def _read_path_csv(path: str) -> ObservationSeries:
    """Parse the t and x columns of a path file; any regime column is ignored."""
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"t", "x"} <= set(reader.fieldnames):
                raise ConfigError(
                    f"{path}: header must contain columns t and x, "
                    f"got {reader.fieldnames}"
                )
            t_vals, x_vals = [], []
            for ln, row in enumerate(reader, start=2):
                try:
                    t_vals.append(float(row["t"]))
                    x_vals.append(float(row["x"]))
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"{path}:{ln}: bad numeric value: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read data file {path}: {exc}") from exc
    if len(x_vals) < 2:
        raise ConfigError(f"{path}: need at least two rows")
    t = np.asarray(t_vals)
    dt = np.diff(t)
    h = float(dt[0])
    if h <= 0.0 or np.any(np.abs(dt - h) > _GRID_TOL * max(1.0, abs(h))):
        raise ConfigError(f"{path}: time column is not an equally spaced grid")
    return ObservationSeries(np.asarray(x_vals), h, t0=float(t[0]))


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    sc, sim_section = _parse_simulation(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    obs, chain_obs, chain_fine = simulate_path(sc)
    _write_path_csv(out / "path.csv", obs, chain_obs.states)
    if sim_section.get("emit_chain_fine", False):
        lines = ["t,alpha"]
        for k, s in enumerate(chain_fine.states):
            lines.append(f"{_fmt(k * chain_fine.step)},{int(s)}")
        _write_atomic(out / "chain_fine.csv", "\n".join(lines) + "\n")
    print(
        f"simulated n={sc.n_obs} observations over T={_fmt(sc.horizon_t)} "
        f"at h={_fmt(sc.obs_step_h)} -> {out / 'path.csv'}"
    )
    return EXIT_OK


def _fit_once(
    obs: ObservationSeries,
    g: GeneratorMatrix,
    em_cfg: EmConfig,
    theta_true: Theta | None,
    stable: bool,
    theta0: Theta | None = None,
) -> tuple[EmResult, dict, float]:
    t_start = time.perf_counter()
    result = em_fit(obs, g, em_cfg, theta0)
    elapsed_ms = 0.0 if stable else (time.perf_counter() - t_start) * 1e3
    est, _ = sort_regimes(result.theta)
    payload = {
        "estimate": {
            "b": [float(v) for v in est.b],
            "lambda": float(est.lam),
            "delta": float(est.delta),
        },
        "status": result.status,
        "iterations": result.iterations,
        "elapsed_ms": elapsed_ms,
    }
    if theta_true is not None:
        truth, _ = sort_regimes(theta_true)
        qe = quadratic_error(est, truth)
        payload["quadratic_error"] = {
            **{f"b{i + 1}": float(qe[i]) for i in range(truth.n_states)},
            "lambda": float(qe[-2]),
            "delta": float(qe[-1]),
        }
    return result, payload, elapsed_ms


def _parse_fit_inputs(cfg: dict) -> tuple[GeneratorMatrix, Theta | None, int | None]:
    """Fitting needs only the generator; the true theta is optional and,
    when present, enables quadratic-error reporting."""
    sim = cfg.get("simulation")
    if not isinstance(sim, dict):
        raise ConfigError("config needs a 'simulation' object section")
    try:
        g = validate_generator(_require(sim, "q", "simulation"))
    except ValueError as exc:
        raise ConfigError(f"bad simulation.q: {exc}") from exc
    truth = None
    if all(k in sim for k in ("b", "lambda", "delta")):
        try:
            truth = Theta(
                np.asarray(sim["b"], dtype=float),
                float(sim["lambda"]),
                float(sim["delta"]),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad true theta in simulation section: {exc}") from exc
        if truth.n_states != g.n_states:
            raise ConfigError(
                f"simulation.b has {truth.n_states} levels but q has "
                f"{g.n_states} states"
            )
    return g, truth, _seed_base(sim)


def cmd_fit(args) -> int:
    cfg = _load_config(args.config)
    g, truth, seed = _parse_fit_inputs(cfg)
    em_cfg = _parse_em(cfg)
    obs = _read_path_csv(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if em_cfg.theta0 is None and em_cfg.init_seed is None:
        if seed is None:
            raise ConfigError(
                "fit needs em.theta0, em.init_seed, or simulation.seed "
                "to choose a reproducible starting point"
            )
        theta0 = random_theta0(
            g.n_states,
            np.random.default_rng([seed, 1]),
            em_cfg.init_b_range,
            em_cfg.init_lambda_range,
            em_cfg.init_delta_range,
        )
    else:
        theta0 = None
    result, payload, _ = _fit_once(
        obs, g, em_cfg, truth, args.stable_output, theta0=theta0
    )
    payload["config"] = cfg
    payload["seed"] = seed
    _write_atomic(out / "result.json", json.dumps(payload, indent=2) + "\n")
    _write_atomic(
        out / "trace.csv",
        _trace_csv_text(result, g.n_states, args.stable_output),
    )
    if cfg.get("experiment", {}).get("emit_probs", False):
        _write_probs_csv(out / "probs.csv", result, obs)
    print(f"fit status={result.status} iterations={result.iterations}")
    return EXIT_NUMERICAL if result.status == "numerical_failure" else EXIT_OK


def _write_probs_csv(path: Path, result: EmResult, obs: ObservationSeries) -> None:
    _, smoothed, _ = smooth_regimes(result.theta, result.generator, obs)
    m = smoothed.shape[1]
    lines = ["t," + ",".join(f"p{i + 1}" for i in range(m))]
    for j in range(smoothed.shape[0]):
        lines.append(
            _fmt(obs.t0 + j * obs.h) + "," + ",".join(_fmt(v) for v in smoothed[j])
        )
    _write_atomic(path, "\n".join(lines) + "\n")


def _run_replication(packed) -> dict:
    """Worker entry point: simulate one path with its derived seed and fit it."""
    cfg, rep, seed, stable = packed
    base, _ = _parse_simulation(cfg)
    sc = SimulationConfig(
        theta_true=base.theta_true,
        a_nuisance=base.a_nuisance,
        generator=base.generator,
        horizon_t=base.horizon_t,
        obs_step_h=base.obs_step_h,
        fine_factor=base.fine_factor,
        x0=base.x0,
        alpha0=base.alpha0,
        seed=seed,
    )
    em_cfg = _parse_em(cfg)
    obs, _, _ = simulate_path(sc)
    try:
        if em_cfg.theta0 is None:
            # independent starting point per replication; the second seed
            # word decouples this stream from the path simulation stream
            theta0 = random_theta0(
                sc.theta_true.n_states,
                np.random.default_rng([seed, 1]),
                em_cfg.init_b_range,
                em_cfg.init_lambda_range,
                em_cfg.init_delta_range,
            )
        else:
            theta0 = None
        result = em_fit(obs, sc.generator, em_cfg, theta0)
        if result.status == "numerical_failure":
            raise NumericalFailure(result.message)
        est, _ = sort_regimes(result.theta)
        truth, _ = sort_regimes(sc.theta_true)
        qe = quadratic_error(est, truth)
        return {
            "rep": rep,
            "seed": seed,
            "estimate": est.to_vector().tolist(),
            "qe": qe.tolist(),
            "iters": result.iterations,
            "status": result.status,
            "trace": _trace_csv_text(result, sc.generator.n_states, stable),
        }
    except (NumericalFailure, EvaluationError) as exc:
        return {
            "rep": rep,
            "seed": seed,
            "estimate": None,
            "qe": None,
            "iters": 0,
            "status": "numerical_failure",
            "message": str(exc),
            "trace": "",
        }


def cmd_experiment(args) -> int:
    cfg = _load_config(args.config)
    sc, sim_section = _parse_simulation(cfg)
    _parse_em(cfg)  # validate up front
    exp = cfg.get("experiment", {})
    if not isinstance(exp, dict):
        raise ConfigError("'experiment' section must be a JSON object")
    reps = int(exp.get("replications", 1))
    if reps < 1:
        raise ConfigError(f"experiment.replications must be >= 1, got {reps}")
    emit_trace = bool(exp.get("emit_trace", False))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed_base = _seed_base(sim_section)
    if seed_base is None:
        raise ConfigError("experiments need simulation.seed (or SWITCHEM_SEED)")
    jobs = args.jobs if args.jobs else (os.cpu_count() or 1)
    tasks = [(cfg, r, seed_base + r, args.stable_output) for r in range(1, reps + 1)]
    if jobs > 1 and reps > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_replication, tasks))
    else:
        rows = [_run_replication(t) for t in tasks]
    rows.sort(key=lambda r: r["rep"])

    n = sc.theta_true.n_states
    est_names = [f"b{i + 1}" for i in range(n)] + ["lambda", "delta"]
    header = (
        ["rep", "seed"]
        + est_names
        + [f"qe_{c}" for c in est_names]
        + ["iters", "status"]
    )
    lines = [",".join(header)]
    ok_rows = []
    for row in rows:
        if row["estimate"] is None:
            vals = [str(row["rep"]), str(row["seed"])] + [""] * (2 * (n + 2)) + [
                str(row["iters"]),
                row["status"],
            ]
        else:
            ok_rows.append(row)
            vals = (
                [str(row["rep"]), str(row["seed"])]
                + [_fmt(v) for v in row["estimate"]]
                + [_fmt(v) for v in row["qe"]]
                + [str(row["iters"]), row["status"]]
            )
        lines.append(",".join(vals))
        if emit_trace and row["trace"]:
            _write_atomic(out / f"rep_{row['rep']:04d}_trace.csv", row["trace"])
    # aggregate row: medians of the estimates, interquartile ranges in the
    # quadratic-error columns
    if ok_rows:
        est = np.asarray([r["estimate"] for r in ok_rows])
        med = np.median(est, axis=0)
        iqr = np.percentile(est, 75, axis=0) - np.percentile(est, 25, axis=0)
        vals = (
            ["aggregate", ""]
            + [_fmt(v) for v in med]
            + [_fmt(v) for v in iqr]
            + ["", f"median_iqr_over_{len(ok_rows)}"]
        )
        lines.append(",".join(vals))
    _write_atomic(out / "summary.csv", "\n".join(lines) + "\n")
    n_ok = len(ok_rows)
    print(f"experiment: {n_ok}/{reps} replications succeeded -> {out / 'summary.csv'}")
    return EXIT_OK if n_ok * 2 >= reps else EXIT_NUMERICAL


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="switchem",
        description="Simulation and EM estimation for regime-switching "
        "mean-reverting SDEs with NIG noise.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate one observed path")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="fit theta to an observed path")
    fit.add_argument("--config", required=True)
    fit.add_argument("--data", required=True)
    fit.add_argument("--out", required=True)
    fit.add_argument(
        "--stable-output",
        action="store_true",
        help="zero elapsed-time fields for bit-reproducible outputs",
    )
    fit.set_defaults(func=cmd_fit)

    exp = sub.add_parser("experiment", help="seeded replication study")
    exp.add_argument("--config", required=True)
    exp.add_argument("--out", required=True)
    exp.add_argument("--jobs", type=int, default=0, help="worker count (0 = all cores)")
    exp.add_argument(
        "--stable-output",
        action="store_true",
        help="zero elapsed-time fields for bit-reproducible outputs",
    )
    exp.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
