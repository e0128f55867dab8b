from __future__ import annotations

import json
import textwrap

import numpy as np
import pytest

from gadmm.cli import main as cli_main
from gadmm.config import RunConfig
from gadmm.constraints import ClassicalConsensus, SoftNormConsensus
from gadmm.experiments import (
    ConfigError,
    SweepResult,
    _fmt,
    configured_value,
    diagnose,
    emit_csv,
    emit_plot_data,
    execute_run,
    parse_config,
    run_sweep,
    write_report,
)
from gadmm.losses import LossKind
from gadmm.multipliers import (
    FixedMultipliers,
    HyperplaneScheme,
    ProjectionScheme,
    TikhonovScheme,
)
from gadmm.protection import L2Protection, NoProtection

_MINIMAL = """
seed = 3
n_users = 2
samples_per_user = 6
dim = 2
noise_std = 0.1
loss = "linear"
"""

_FULL = """
seed = 5
n_users = 3
samples_per_user = 8
dim = 2
noise_std = 0.2
loss = "linear"
tolerance = 1e-5
max_iterations = 800

[constraint]
kind = "soft_norm"
p = 2
epsilon = 0.05

[protection]
kind = "l2"
varsigma = 0.001
delta = 0.1

[scheme]
kind = "projection"

[inner]
step_size = 0
tolerance = 1e-9

[sweep]
parameter = "epsilon"
values = [0.02, 0.2]
"""


def _write(tmp_path, text, name="config.toml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text).lstrip())
    return path


def test_parse_minimal_defaults(tmp_path):
    spec = parse_config(_write(tmp_path, _MINIMAL))
    run = spec.run
    assert run.n_users == 2
    assert run.loss_kind is LossKind.LINEAR
    assert isinstance(run.constraint, ClassicalConsensus)
    assert isinstance(run.protection, NoProtection)
    assert isinstance(run.scheme, FixedMultipliers)
    assert run.tolerance == 1e-4
    assert run.max_iterations == 5000
    assert run.seed == 3
    assert run.inner.step_size is None
    assert spec.data.samples_per_user == 6
    assert spec.data.dim == 2
    assert spec.data.noise_std == 0.1
    assert spec.sweep is None


def test_parse_full_config(tmp_path):
    spec = parse_config(_write(tmp_path, _FULL))
    run = spec.run
    assert isinstance(run.constraint, SoftNormConsensus)
    assert run.constraint.p == 2
    # scalar epsilon broadcasts to one radius per user
    assert run.constraint.epsilon == (0.05, 0.05, 0.05)
    assert isinstance(run.protection, L2Protection)
    assert run.protection.varsigma == (0.001, 0.001, 0.001)
    assert isinstance(run.scheme, ProjectionScheme)
    # omitted tau falls back to the documented default
    assert run.scheme.tau == 2e-4
    # inner step_size 0 means automatic
    assert run.inner.step_size is None
    assert run.inner.tolerance == 1e-9
    assert spec.sweep is not None
    assert spec.sweep.parameter == "epsilon"
    assert spec.sweep.values == (0.02, 0.2)


def test_parse_scheme_kinds(tmp_path):
    text = _MINIMAL + '\n[scheme]\nkind = "hyperplane"\ndelta = 0.4\n'
    spec = parse_config(_write(tmp_path, text))
    assert isinstance(spec.run.scheme, HyperplaneScheme)
    assert spec.run.scheme.delta == 0.4
    assert spec.run.scheme.max_backtracks == 40

    text = _MINIMAL + '\n[scheme]\nkind = "tikhonov"\ntau_n = 4.0\n'
    spec = parse_config(_write(tmp_path, text, "t.toml"))
    assert isinstance(spec.run.scheme, TikhonovScheme)
    assert spec.run.scheme.tau_n == 4.0
    assert spec.run.scheme.inner_iters == 10
    assert spec.run.scheme.zeta0 == 0.1


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(ConfigError) as info:
        parse_config(_write(tmp_path, _MINIMAL + "\ntypo_key = 1\n"))
    assert info.value.field == "typo_key"

    text = _MINIMAL + '\n[constraint]\nkind = "classical"\nradius = 2\n'
    with pytest.raises(ConfigError) as info:
        parse_config(_write(tmp_path, text, "c.toml"))
    assert info.value.field == "constraint.radius"

    text = _MINIMAL + '\n[scheme]\nkind = "fixed"\nstep = 2\n'
    with pytest.raises(ConfigError) as info:
        parse_config(_write(tmp_path, text, "s.toml"))
    assert info.value.field == "scheme.step"

    text = _MINIMAL + "\n[inner]\nsteps = 2\n"
    with pytest.raises(ConfigError) as info:
        parse_config(_write(tmp_path, text, "i.toml"))
    assert info.value.field == "inner.steps"


def test_required_and_typed_fields(tmp_path):
    with pytest.raises(ConfigError) as info:
        parse_config(_write(tmp_path, "n_users = 2\nsamples_per_user = 4\ndim = 2\n"))
    assert info.value.field == "loss"

    with pytest.raises(ConfigError) as info:
        parse_config(_write(tmp_path, _MINIMAL.replace("seed = 3", "seed = -1"), "a.toml"))
    assert info.value.field == "seed"

    with pytest.raises(ConfigError) as info:
        parse_config(
            _write(tmp_path, _MINIMAL.replace("n_users = 2", "n_users = 0"), "b.toml")
        )
    assert info.value.field == "n_users"

    with pytest.raises(ConfigError) as info:
        parse_config(
            _write(tmp_path, _MINIMAL.replace('loss = "linear"', 'loss = "hinge"'), "c.toml")
        )
    assert info.value.field == "loss"

    with pytest.raises(ConfigError) as info:
        parse_config(_write(tmp_path, "loss = [1,\n", "bad.toml"))
    assert info.value.field == "(file)"


def test_epsilon_length_mismatch(tmp_path):
    text = _MINIMAL + '\n[constraint]\nkind = "soft_norm"\nepsilon = [0.1, 0.2, 0.3]\n'
    with pytest.raises(ConfigError) as info:
        parse_config(_write(tmp_path, text))
    assert info.value.field == "constraint.epsilon"


def test_group_adjacency_validation(tmp_path):
    text = _MINIMAL + '\n[constraint]\nkind = "group"\nadjacency = [[1], []]\n'
    with pytest.raises(ConfigError) as info:
        parse_config(_write(tmp_path, text))
    assert info.value.field == "constraint.adjacency"

    ok = _MINIMAL + '\n[constraint]\nkind = "group"\nadjacency = [[1], [0]]\n'
    spec = parse_config(_write(tmp_path, ok, "ok.toml"))
    assert spec.run.constraint.adjacency == ((1,), (0,))


def test_sweep_cross_validation(tmp_path):
    text = _MINIMAL + '\n[sweep]\nparameter = "epsilon"\nvalues = [0.1]\n'
    with pytest.raises(ConfigError) as info:
        parse_config(_write(tmp_path, text))
    assert info.value.field == "sweep.parameter"

    text = _MINIMAL + '\n[sweep]\nparameter = "varsigma"\nvalues = [0.1]\n'
    with pytest.raises(ConfigError) as info:
        parse_config(_write(tmp_path, text, "v.toml"))
    assert info.value.field == "sweep.parameter"

    text = _FULL.replace("values = [0.02, 0.2]", "values = []")
    with pytest.raises(ConfigError) as info:
        parse_config(_write(tmp_path, text, "e.toml"))
    assert info.value.field == "sweep.values"


def test_bad_scheme_parameter_is_config_error(tmp_path):
    text = _MINIMAL + '\n[scheme]\nkind = "projection"\ntau = -1.0\n'
    with pytest.raises(ConfigError):
        parse_config(_write(tmp_path, text))


def test_fmt_rendering():
    assert _fmt(True) == "true"
    assert _fmt(False) == "false"
    assert _fmt(7) == "7"
    assert _fmt(np.int64(7)) == "7"
    assert _fmt(float("nan")) == "nan"
    assert _fmt(0.1234567891234) == "0.123456789"
    assert _fmt(1e-07) == "1e-07"
    assert _fmt(2.5) == "2.5"


def test_configured_value_prefers_epsilon():
    soft = RunConfig(
        n_users=2,
        loss_kind=LossKind.LINEAR,
        constraint=SoftNormConsensus(p=2, epsilon=(0.3, 0.3)),
        protection=L2Protection(varsigma=(0.9, 0.9), delta=(0.0, 0.0)),
        scheme=FixedMultipliers(),
    )
    assert configured_value(soft) == 0.3
    prot = RunConfig(
        n_users=2,
        loss_kind=LossKind.LINEAR,
        constraint=ClassicalConsensus(),
        protection=L2Protection(varsigma=(0.9, 0.9), delta=(0.0, 0.0)),
        scheme=FixedMultipliers(),
    )
    assert configured_value(prot) == 0.9
    plain = RunConfig(
        n_users=2,
        loss_kind=LossKind.LINEAR,
        constraint=ClassicalConsensus(),
        protection=NoProtection(),
        scheme=FixedMultipliers(),
    )
    assert configured_value(plain) == 0.0


def test_execute_run_and_csv_layout(tmp_path):
    spec = parse_config(_write(tmp_path, _MINIMAL))
    result = execute_run(spec, spec.run, configured_value(spec.run))
    assert result.error is None
    assert result.converged
    assert result.messages == result.run.trace.final_messages
    assert np.isfinite(result.delta_param)

    out = tmp_path / "out"
    written = emit_csv([result], out)
    assert [p.name for p in written] == ["summary.csv", "trace_00.csv"]

    summary_lines = (out / "summary.csv").read_text().splitlines()
    assert summary_lines[0] == "value,iterations,delta_param,delta_objective,messages"
    assert len(summary_lines) == 2
    row = summary_lines[1].split(",")
    assert int(row[1]) == result.iterations
    assert int(row[4]) == result.messages

    trace_lines = (out / "trace_00.csv").read_text().splitlines()
    assert trace_lines[0] == (
        "iteration,weight_change,consensus_violation,delta_param,"
        "messages_sent,lambda_max,lambda_min"
    )
    assert len(trace_lines) == 1 + result.iterations


def test_emission_is_byte_identical(tmp_path):
    spec = parse_config(_write(tmp_path, _MINIMAL))
    a = execute_run(spec, spec.run, 0.0)
    b = execute_run(spec, spec.run, 0.0)
    emit_csv([a], tmp_path / "a")
    emit_csv([b], tmp_path / "b")
    assert (tmp_path / "a/summary.csv").read_bytes() == (
        tmp_path / "b/summary.csv"
    ).read_bytes()
    assert (tmp_path / "a/trace_00.csv").read_bytes() == (
        tmp_path / "b/trace_00.csv"
    ).read_bytes()


def test_plot_data_blocks(tmp_path):
    spec = parse_config(_write(tmp_path, _MINIMAL))
    result = execute_run(spec, spec.run, 0.25)
    path = emit_plot_data([result], tmp_path / "plot.dat", parameter="epsilon")
    blocks = path.read_text().rstrip("\n").split("\n\n")
    assert len(blocks) == 1
    lines = blocks[0].splitlines()
    assert lines[0] == "# epsilon=0.25"
    assert len(lines) == 1 + result.iterations
    first = lines[1].split()
    assert first[0] == "1"
    float(first[1])


def test_plot_data_requires_deltas(tmp_path):
    from gadmm.orchestrator import run_algorithm1
    from gadmm.model import generate_synthetic

    spec = parse_config(_write(tmp_path, _MINIMAL))
    datasets, _ = generate_synthetic(
        seed=3, n_users=2, samples_per_user=6, dim=2, noise_std=0.1
    )
    bare = run_algorithm1(spec.run, datasets)  # no reference, no deltas
    result = SweepResult(
        value=0.0,
        converged=bare.trace.converged,
        iterations=bare.trace.iterations_used,
        messages=bare.trace.final_messages,
        delta_param=float("nan"),
        delta_objective=float("nan"),
        run=bare,
    )
    with pytest.raises(ValueError):
        emit_plot_data([result], tmp_path / "plot.dat")


def test_report_wording_and_rows(tmp_path):
    spec = parse_config(_write(tmp_path, _MINIMAL))
    result = execute_run(spec, spec.run, 0.0)
    path = write_report([result], spec, tmp_path / "report.txt")
    text = path.read_text()
    assert "not comparable against externally published figures" in text
    assert "value=0 converged" in text
    assert f"iterations={result.iterations}" in text
    assert "step_size=auto" in text

    errored = SweepResult(
        value=1.0,
        converged=False,
        iterations=0,
        messages=0,
        delta_param=float("nan"),
        delta_objective=float("nan"),
        run=None,
        error="RuntimeError: boom",
    )
    text = write_report([errored], spec, tmp_path / "report2.txt").read_text()
    assert "error: RuntimeError: boom" in text
    assert "delta_param=nan" in text


def test_sweep_requires_section(tmp_path):
    spec = parse_config(_write(tmp_path, _MINIMAL))
    with pytest.raises(ConfigError):
        run_sweep(spec)


def test_single_value_sweep_matches_plain_run(tmp_path):
    text = _FULL.replace("values = [0.02, 0.2]", "values = [0.05]")
    spec = parse_config(_write(tmp_path, text))
    swept = run_sweep(spec)
    assert len(swept) == 1
    direct = execute_run(spec, spec.run, 0.05)
    assert swept[0].iterations == direct.iterations
    assert swept[0].delta_param == direct.delta_param
    assert swept[0].delta_objective == direct.delta_objective
    assert swept[0].messages == direct.messages


def test_parallel_sweep_matches_serial(tmp_path):
    spec = parse_config(_write(tmp_path, _FULL))
    serial = run_sweep(spec, workers=1)
    parallel = run_sweep(spec, workers=2)
    assert [r.value for r in parallel] == [r.value for r in serial]
    for a, b in zip(serial, parallel):
        assert a.iterations == b.iterations
        assert a.delta_param == b.delta_param


def test_cli_run_writes_outputs(tmp_path, capsys):
    cfg = _write(tmp_path, _MINIMAL)
    out = tmp_path / "out"
    assert cli_main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    captured = capsys.readouterr()
    assert "wrote" in captured.out
    assert "converged" in captured.out
    for name in ("summary.csv", "trace_00.csv", "plot.dat", "report.txt"):
        assert (out / name).is_file(), name


def test_cli_sweep_writes_outputs(tmp_path):
    cfg = _write(tmp_path, _FULL)
    out = tmp_path / "out"
    assert cli_main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    lines = (out / "summary.csv").read_text().splitlines()
    assert len(lines) == 3  # header + one row per sweep value
    assert (out / "trace_01.csv").is_file()


def test_cli_exit_codes(tmp_path, capsys):
    missing = tmp_path / "nope.toml"
    assert cli_main(["run", "--config", str(missing)]) == 1

    bad = _write(tmp_path, _MINIMAL + "\nwhat = 1\n", "bad.toml")
    assert cli_main(["run", "--config", str(bad)]) == 2

    no_sweep = _write(tmp_path, _MINIMAL, "nosweep.toml")
    assert cli_main(["sweep", "--config", str(no_sweep)]) == 2

    ok = _write(tmp_path, _MINIMAL, "ok.toml")
    assert cli_main(["run", "--config", str(ok), "--out", str(tmp_path / "o"), "--seed", "-2"]) == 2
    capsys.readouterr()


def test_cli_output_dir_collision_is_io_error(tmp_path, capsys):
    cfg = _write(tmp_path, _MINIMAL)
    blocker = tmp_path / "blocked"
    blocker.write_text("file, not a directory")
    assert cli_main(["run", "--config", str(cfg), "--out", str(blocker)]) == 3
    assert "i/o failure" in capsys.readouterr().err


def test_cli_solver_failure_exit_code(tmp_path, capsys, monkeypatch):
    cfg = _write(tmp_path, _MINIMAL)

    def failing(spec, run, value):
        return SweepResult(
            value=value,
            converged=False,
            iterations=0,
            messages=0,
            delta_param=float("nan"),
            delta_objective=float("nan"),
            run=None,
            error="RuntimeError: diverged",
        )

    monkeypatch.setattr("gadmm.cli.execute_run", failing)
    assert cli_main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 4
    assert "solver failed" in capsys.readouterr().err


def test_cli_seed_override_changes_outputs(tmp_path):
    cfg = _write(tmp_path, _MINIMAL)
    assert cli_main(["run", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "3"]) == 0
    assert cli_main(["run", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "12"]) == 0
    a = (tmp_path / "a/summary.csv").read_bytes()
    b = (tmp_path / "b/summary.csv").read_bytes()
    assert a != b


def test_cli_diagnose_and_report_fields(tmp_path):
    cfg = _write(tmp_path, _MINIMAL)
    out = tmp_path / "diag"
    assert cli_main(["diagnose", "--config", str(cfg), "--out", str(out)]) == 0
    report = json.loads((out / "diagnostics.json").read_text())
    assert report["run_converged"] is True
    assert report["run_error"] is None
    assert len(report["curvature_bounds"]) == 2
    assert len(report["upsilon"]) == 2
    assert isinstance(report["upsilon_is_p_matrix"], bool)
    assert isinstance(report["upsilon_with_proximal_is_p_matrix"], bool)
    assert np.isfinite(report["strong_monotonicity_estimate_empirical"])
    assert set(report["kkt"]) == {
        "stationarity_norm",
        "equality_norm",
        "complementarity_gap",
        "dual_feasibility_violation",
        "primal_inequality_violation",
    }
    assert "tikhonov_step_valid" not in report


def test_diagnose_tikhonov_validity_flag(tmp_path):
    text = _MINIMAL + '\n[scheme]\nkind = "tikhonov"\ntau_n = 50.0\n'
    text += '\n[constraint]\nkind = "soft_norm"\nepsilon = 0.5\n'
    spec = parse_config(_write(tmp_path, text))
    report = diagnose(spec)
    assert isinstance(report["tikhonov_step_valid"], bool)
