"""Experiment plumbing: config files, sweeps, and deterministic output.

Config files are TOML.  Top-level keys describe the synthetic data and
run budget; the constraint, protection, scheme, inner and sweep tables
fill in the rest.  Unknown keys are rejected so typos fail loudly.

All emitted files render numbers with 9 significant digits and a fixed
row order, so repeated invocations are byte-identical.
"""
from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .centralized import compute_delta, solve_centralized
from .config import InnerSolverConfig, RunConfig
from .constraints import (
    ClassicalConsensus,
    GroupConsensus,
    SoftNormConsensus,
)
from .diagnostics import (
    build_upsilon,
    estimate_strong_monotonicity,
    is_p_matrix,
    kkt_residual,
)
from .losses import LossKind, curvature_bounds, loss_gradient
from .model import UserDataset, generate_synthetic
from .multipliers import (
    FixedMultipliers,
    HyperplaneScheme,
    ProjectionScheme,
    TikhonovScheme,
    tikhonov_step_valid,
)
from .orchestrator import OrchestratedRun, run_algorithm1, run_algorithm2
from .protection import L2Protection, NoProtection


class ConfigError(ValueError):
    """Invalid or missing configuration; carries the offending field."""

    def __init__(self, field: str, reason: str):
        super().__init__(f"config field {field!r}: {reason}")
        self.field = field


@dataclass(frozen=True)
class DataSettings:
    samples_per_user: int
    dim: int
    noise_std: float


@dataclass(frozen=True)
class SweepSettings:
    parameter: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class ExperimentSpec:
    run: RunConfig
    data: DataSettings
    sweep: SweepSettings | None = None


@dataclass
class SweepResult:
    value: float
    converged: bool
    iterations: int
    messages: int
    delta_param: float
    delta_objective: float
    run: OrchestratedRun | None
    error: str | None = None


def _fmt(x) -> str:
    """9 significant digits; integers verbatim."""
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    v = float(x)
    if math.isnan(v):
        return "nan"
    return f"{v:.9g}"


# ---------------------------------------------------------------------------
# config parsing


_TOP_KEYS = {
    "seed",
    "n_users",
    "samples_per_user",
    "dim",
    "noise_std",
    "loss",
    "tolerance",
    "max_iterations",
    "constraint",
    "protection",
    "scheme",
    "inner",
    "sweep",
}


def _require(table: dict, key: str, field: str):
    if key not in table:
        raise ConfigError(field, "missing")
    return table[key]


def _as_positive_int(value, field: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(field, "must be a positive integer")
    return value


def _as_nonneg_float(value, field: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(field, "must be a number")
    v = float(value)
    if not math.isfinite(v) or v < 0:
        raise ConfigError(field, "must be finite and non-negative")
    return v


def _as_positive_float(value, field: str) -> float:
    v = _as_nonneg_float(value, field)
    if v <= 0:
        raise ConfigError(field, "must be positive")
    return v


def _broadcast(value, n: int, field: str) -> tuple[float, ...]:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return (float(value),) * n
    if isinstance(value, list):
        vals = tuple(_as_nonneg_float(v, field) for v in value)
        if len(vals) == 1:
            return vals * n
        if len(vals) == n:
            return vals
        raise ConfigError(field, f"needs 1 or {n} entries")
    raise ConfigError(field, "must be a number or a list of numbers")


def _parse_constraint(raw: dict, n_users: int):
    kind = raw.get("kind", "classical")
    extra = set(raw) - {"kind", "p", "epsilon", "adjacency"}
    if extra:
        raise ConfigError(f"constraint.{sorted(extra)[0]}", "unknown key")
    if kind == "classical":
        return ClassicalConsensus()
    if kind == "soft_norm":
        p = raw.get("p", 2)
        if p not in (1, 2):
            raise ConfigError("constraint.p", "must be 1 or 2")
        eps = _broadcast(
            _require(raw, "epsilon", "constraint.epsilon"),
            n_users,
            "constraint.epsilon",
        )
        return SoftNormConsensus(p=p, epsilon=eps)
    if kind == "group":
        adj = _require(raw, "adjacency", "constraint.adjacency")
        if not isinstance(adj, list) or len(adj) != n_users:
            raise ConfigError("constraint.adjacency", f"needs {n_users} rows")
        try:
            return GroupConsensus(tuple(tuple(row) for row in adj))
        except (TypeError, ValueError) as exc:
            raise ConfigError("constraint.adjacency", str(exc)) from None
    raise ConfigError("constraint.kind", f"unknown kind {kind!r}")


def _parse_protection(raw: dict | None, n_users: int):
    if raw is None:
        return NoProtection()
    extra = set(raw) - {"kind", "varsigma", "delta"}
    if extra:
        raise ConfigError(f"protection.{sorted(extra)[0]}", "unknown key")
    kind = raw.get("kind", "l2")
    if kind == "none":
        return NoProtection()
    if kind != "l2":
        raise ConfigError("protection.kind", f"unknown kind {kind!r}")
    varsigma = _broadcast(raw.get("varsigma", 0.0), n_users, "protection.varsigma")
    delta = _broadcast(raw.get("delta", 0.0), n_users, "protection.delta")
    return L2Protection(varsigma=varsigma, delta=delta)


def _parse_scheme(raw: dict | None):
    if raw is None:
        return FixedMultipliers()
    known = {
        "kind",
        "tau",
        "delta",
        "max_backtracks",
        "tau_n",
        "inner_iters",
        "zeta0",
        "lambda0",
        "mu0",
    }
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"scheme.{sorted(extra)[0]}", "unknown key")
    kind = raw.get("kind", "fixed")
    try:
        if kind == "fixed":
            return FixedMultipliers(
                lambda0=float(raw.get("lambda0", 0.0)),
                mu0=float(raw.get("mu0", 0.0)),
            )
        if kind == "projection":
            return ProjectionScheme(tau=float(raw.get("tau", 2e-4)))
        if kind == "hyperplane":
            return HyperplaneScheme(
                delta=float(raw.get("delta", 0.5)),
                max_backtracks=int(raw.get("max_backtracks", 40)),
            )
        if kind == "tikhonov":
            return TikhonovScheme(
                tau_n=float(raw.get("tau_n", 1.0)),
                inner_iters=int(raw.get("inner_iters", 10)),
                zeta0=float(raw.get("zeta0", 0.1)),
            )
    except ValueError as exc:
        raise ConfigError(f"scheme ({kind})", str(exc)) from None
    raise ConfigError("scheme.kind", f"unknown kind {kind!r}")


def _parse_inner(raw: dict | None):
    if raw is None:
        return InnerSolverConfig()
    extra = set(raw) - {"step_size", "tolerance", "max_iters", "box_bound"}
    if extra:
        raise ConfigError(f"inner.{sorted(extra)[0]}", "unknown key")
    step = raw.get("step_size", 0.0)
    step_size = None if not step else _as_positive_float(step, "inner.step_size")
    try:
        return InnerSolverConfig(
            step_size=step_size,
            tolerance=float(raw.get("tolerance", 1e-8)),
            max_iters=int(raw.get("max_iters", 500)),
            box_bound=float(raw.get("box_bound", 1e3)),
        )
    except ValueError as exc:
        raise ConfigError("inner", str(exc)) from None


def _parse_sweep(raw: dict | None, constraint, protection):
    if raw is None:
        return None
    extra = set(raw) - {"parameter", "values"}
    if extra:
        raise ConfigError(f"sweep.{sorted(extra)[0]}", "unknown key")
    parameter = _require(raw, "parameter", "sweep.parameter")
    if parameter not in ("epsilon", "varsigma"):
        raise ConfigError("sweep.parameter", "must be 'epsilon' or 'varsigma'")
    values = _require(raw, "values", "sweep.values")
    if not isinstance(values, list) or not values:
        raise ConfigError("sweep.values", "must be a non-empty list")
    vals = tuple(_as_nonneg_float(v, "sweep.values") for v in values)
    if parameter == "epsilon" and not isinstance(constraint, SoftNormConsensus):
        raise ConfigError("sweep.parameter", "epsilon sweep needs a soft_norm constraint")
    if parameter == "varsigma" and not isinstance(protection, L2Protection):
        raise ConfigError("sweep.parameter", "varsigma sweep needs l2 protection")
    return SweepSettings(parameter=parameter, values=vals)


def parse_config(path: str | Path) -> ExperimentSpec:
    """Load and validate a TOML experiment config."""
    path = Path(path)
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("(file)", f"not valid TOML: {exc}") from None

    extra = set(raw) - _TOP_KEYS
    if extra:
        raise ConfigError(sorted(extra)[0], "unknown key")

    n_users = _as_positive_int(_require(raw, "n_users", "n_users"), "n_users")
    samples = _as_positive_int(
        _require(raw, "samples_per_user", "samples_per_user"), "samples_per_user"
    )
    dim = _as_positive_int(_require(raw, "dim", "dim"), "dim")
    noise_std = _as_nonneg_float(raw.get("noise_std", 0.0), "noise_std")
    loss_raw = _require(raw, "loss", "loss")
    try:
        loss = LossKind(loss_raw)
    except ValueError:
        raise ConfigError("loss", f"unknown loss {loss_raw!r}") from None
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", "must be a non-negative integer")

    constraint = _parse_constraint(raw.get("constraint", {}), n_users)
    protection = _parse_protection(raw.get("protection"), n_users)
    scheme = _parse_scheme(raw.get("scheme"))
    inner = _parse_inner(raw.get("inner"))
    sweep = _parse_sweep(raw.get("sweep"), constraint, protection)

    try:
        run = RunConfig(
            n_users=n_users,
            loss_kind=loss,
            constraint=constraint,
            protection=protection,
            scheme=scheme,
            tolerance=_as_positive_float(raw.get("tolerance", 1e-4), "tolerance"),
            max_iterations=_as_positive_int(
                raw.get("max_iterations", 5000), "max_iterations"
            ),
            inner=inner,
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError("(run)", str(exc)) from None
    data = DataSettings(samples_per_user=samples, dim=dim, noise_std=noise_std)
    return ExperimentSpec(run=run, data=data, sweep=sweep)


# ---------------------------------------------------------------------------
# running


def _with_value(spec: ExperimentSpec, parameter: str, value: float) -> RunConfig:
    run = spec.run
    if parameter == "epsilon":
        constraint = dataclasses.replace(
            run.constraint, epsilon=(float(value),) * run.n_users
        )
        return dataclasses.replace(run, constraint=constraint)
    if parameter == "varsigma":
        protection = dataclasses.replace(
            run.protection, varsigma=(float(value),) * run.n_users
        )
        return dataclasses.replace(run, protection=protection)
    raise ValueError(f"unknown sweep parameter {parameter!r}")


def configured_value(run: RunConfig) -> float:
    """The natural 'value' column for a non-sweep run."""
    if isinstance(run.constraint, SoftNormConsensus):
        return run.constraint.epsilon[0]
    if isinstance(run.protection, L2Protection):
        return run.protection.varsigma[0]
    return 0.0


def make_datasets(spec: ExperimentSpec, run: RunConfig) -> tuple[list[UserDataset], np.ndarray]:
    return generate_synthetic(
        seed=run.seed,
        n_users=run.n_users,
        samples_per_user=spec.data.samples_per_user,
        dim=spec.data.dim,
        noise_std=spec.data.noise_std,
        task=run.loss_kind.value,
    )


def execute_run(spec: ExperimentSpec, run: RunConfig, value: float) -> SweepResult:
    """One full pipeline: data, centralized reference, orchestration."""
    datasets, _ = make_datasets(spec, run)
    try:
        w_ref = solve_centralized(run.loss_kind, datasets)
        algorithm = (
            run_algorithm1
            if isinstance(run.scheme, FixedMultipliers)
            else run_algorithm2
        )
        result = algorithm(run, datasets, w_star=w_ref)
        delta_param, delta_objective = compute_delta(
            result.state, w_ref, run.loss_kind, datasets
        )
    except (RuntimeError, np.linalg.LinAlgError) as exc:
        return SweepResult(
            value=value,
            converged=False,
            iterations=0,
            messages=0,
            delta_param=float("nan"),
            delta_objective=float("nan"),
            run=None,
            error=f"{type(exc).__name__}: {exc}",
        )
    return SweepResult(
        value=value,
        converged=result.trace.converged,
        iterations=result.trace.iterations_used,
        messages=result.trace.final_messages,
        delta_param=delta_param,
        delta_objective=delta_objective,
        run=result,
    )


def _sweep_point(args: tuple[ExperimentSpec, str, float]) -> SweepResult:
    spec, parameter, value = args
    return execute_run(spec, _with_value(spec, parameter, value), value)


def run_sweep(spec: ExperimentSpec, workers: int = 1) -> list[SweepResult]:
    """Run every sweep value with the shared seed; order follows values.

    Per-value errors are recorded in the result row; the remaining
    values still run.  Results are assembled in sweep order regardless
    of worker scheduling, so output files stay deterministic.
    """
    if spec.sweep is None:
        raise ConfigError("sweep.values", "missing sweep section")
    jobs = [(spec, spec.sweep.parameter, v) for v in spec.sweep.values]
    if workers <= 1 or len(jobs) == 1:
        return [_sweep_point(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_point, jobs))


# ---------------------------------------------------------------------------
# emission


def emit_csv(results: list[SweepResult], out_dir: str | Path) -> list[Path]:
    """summary.csv plus one trace_NN.csv per result; returns paths written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    summary = out_dir / "summary.csv"
    lines = ["value,iterations,delta_param,delta_objective,messages"]
    for res in results:
        lines.append(
            ",".join(
                [
                    _fmt(res.value),
                    _fmt(res.iterations),
                    _fmt(res.delta_param),
                    _fmt(res.delta_objective),
                    _fmt(res.messages),
                ]
            )
        )
    summary.write_text("\n".join(lines) + "\n")
    written.append(summary)

    for idx, res in enumerate(results):
        trace_path = out_dir / f"trace_{idx:02d}.csv"
        rows = [
            "iteration,weight_change,consensus_violation,delta_param,"
            "messages_sent,lambda_max,lambda_min"
        ]
        if res.run is not None:
            for rec in res.run.trace.records:
                rows.append(
                    ",".join(
                        [
                            _fmt(rec.iteration),
                            _fmt(rec.weight_change),
                            _fmt(rec.consensus_violation),
                            _fmt(rec.delta_param if rec.delta_param is not None else float("nan")),
                            _fmt(rec.messages_sent),
                            _fmt(rec.lambda_max),
                            _fmt(rec.lambda_min),
                        ]
                    )
                )
        trace_path.write_text("\n".join(rows) + "\n")
        written.append(trace_path)
    return written


def emit_plot_data(
    results: list[SweepResult], path: str | Path, parameter: str = "value"
) -> Path:
    """Whitespace-separated (iteration, delta) series, one block per result.

    Each series starts with a '#'-prefixed header naming the swept
    value.  Requires traces with per-iteration deltas.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blocks = []
    for res in results:
        lines = [f"# {parameter}={_fmt(res.value)}"]
        if res.run is not None:
            for rec in res.run.trace.records:
                if rec.delta_param is None:
                    raise ValueError("trace lacks per-iteration delta values")
                lines.append(f"{rec.iteration} {_fmt(rec.delta_param)}")
        blocks.append("\n".join(lines))
    path.write_text("\n\n".join(blocks) + "\n")
    return path


def write_report(
    results: list[SweepResult], spec: ExperimentSpec, path: str | Path
) -> Path:
    """Human-readable run report with the trend-only disclaimer."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    inner = spec.run.inner
    lines = [
        "trend-only report",
        "=================",
        "Absolute iteration counts and final errors are specific to the",
        "synthetic data, noise level, and step schedules used here; they are",
        "not comparable against externally published figures.  Only monotone",
        "orderings across sweep values are asserted.",
        "",
    ]
    for res in results:
        status = "converged" if res.converged else "stopped at cap"
        if res.error is not None:
            status = f"error: {res.error}"
        lines.append(
            f"value={_fmt(res.value)} {status} iterations={res.iterations} "
            f"messages={res.messages} delta_param={_fmt(res.delta_param)} "
            f"delta_objective={_fmt(res.delta_objective)} "
            f"inner(step_size={'auto' if inner.step_size is None else _fmt(inner.step_size)},"
            f" tolerance={_fmt(inner.tolerance)}, max_iters={inner.max_iters})"
        )
    path.write_text("\n".join(lines) + "\n")
    return path


# ---------------------------------------------------------------------------
# diagnostics report


def diagnose(spec: ExperimentSpec) -> dict:
    """Build the diagnostics report for a configured instance.

    Runs the configured algorithm once, then reports curvature bounds,
    the condition matrix with and without the proximal term, P-matrix
    verdicts, an empirical strong-monotonicity estimate of the stacked
    gradient map, KKT residuals at the final state, and scheme-specific
    step validity.  Estimates are sampled witnesses, not certificates.
    """
    run = spec.run
    datasets, _ = make_datasets(spec, run)
    result = execute_run(spec, run, configured_value(run))

    ups = build_upsilon(run.loss_kind, datasets, run.protection, include_proximal=False)
    ups_prox = build_upsilon(run.loss_kind, datasets, run.protection, include_proximal=True)

    dim = spec.data.dim
    n = run.n_users

    def stacked_gradient(x: np.ndarray) -> np.ndarray:
        W = x.reshape(n, dim)
        return np.concatenate(
            [loss_gradient(run.loss_kind, W[i], datasets[i]) for i in range(n)]
        )

    box = (-np.ones(n * dim), np.ones(n * dim))
    monotonicity = estimate_strong_monotonicity(
        stacked_gradient, 32, box, seed=run.seed
    )

    report: dict = {
        "curvature_bounds": [
            list(curvature_bounds(run.loss_kind, d)) for d in datasets
        ],
        "upsilon": ups.entries.tolist(),
        "upsilon_is_p_matrix": is_p_matrix(ups.entries),
        "upsilon_with_proximal": ups_prox.entries.tolist(),
        "upsilon_with_proximal_is_p_matrix": is_p_matrix(ups_prox.entries),
        "strong_monotonicity_estimate_empirical": monotonicity,
        "run_converged": result.converged,
        "run_iterations": result.iterations,
        "run_error": result.error,
        "delta_param": None if math.isnan(result.delta_param) else result.delta_param,
    }
    if result.run is not None:
        kkt = kkt_residual(
            result.run.state, run.loss_kind, datasets, run.constraint, run.protection
        )
        report["kkt"] = {
            "stationarity_norm": kkt.stationarity_norm,
            "equality_norm": kkt.equality_norm,
            "complementarity_gap": kkt.complementarity_gap,
            "dual_feasibility_violation": kkt.dual_feasibility_violation,
            "primal_inequality_violation": kkt.primal_inequality_violation,
        }
    if isinstance(run.scheme, TikhonovScheme):
        report["tikhonov_step_valid"] = tikhonov_step_valid(
            run.scheme.tau_n,
            cocoercivity=1.0 / max(monotonicity, 1e-12),
            zeta=run.scheme.zeta_at(0),
        )
    return report


def write_diagnostics(report: dict, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return path
