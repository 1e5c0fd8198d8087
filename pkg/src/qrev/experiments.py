"""Batch experiment orchestration: config parsing, runners, and writers.

Experiment configs are TOML files.  Unknown sections or keys are hard
errors: a typo in a physics parameter must not silently fall back to a
default.  Every output embeds the fully-resolved configuration, and data
files (CSV) are byte-identical across re-runs with the same seed; the
summary additionally records version and wall-clock, which are run
metadata, not data.

Trajectory CSV schema: ``t,x,y,z,I,Q,direction`` with direction in
{fwd, bwd}.  For single-quadrature channels the readout goes in the I
column and Q stays empty; state rows outnumber readout rows by one, so the
final row of each direction has empty readout fields.  Floats are written
with 17 significant digits so parsing back reproduces the exact doubles.
"""

from __future__ import annotations

import math
import os
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__, arrow, qubit, weak_values
from .channels import (
    ChannelSpec,
    Dichotomous,
    Fluorescence,
    GaussianMomentum,
    GaussianPosition,
    QuadratureConfig,
    completeness_residual,
)
from .errors import ConfigError
from .trajectory import DriveSpec, SimConfig, simulate_forward, unravel_backward

FAMILIES = ("gaussian-position", "gaussian-momentum", "dichotomous", "fluorescence")
EXPERIMENTS = (
    "unravel",
    "arrow-single",
    "arrow-ensemble",
    "prepost-arrow",
    "weak-value",
    "povm-check",
)

_SCHEMA: dict[str, set[str]] = {
    "": {"experiment", "seed", "out"},
    "channel": {"family", "gamma", "gamma1", "delta", "k", "tau"},
    "drive": {"omega"},
    "run": {"t_total", "dt", "n_trajectories", "chunk"},
    "state": {"theta", "phi"},
    "boundary": {"pre_theta", "pre_phi", "post_theta", "post_phi"},
    "record": {"outcomes"},
    "weak": {"k", "tau", "delta"},
    "povm": {
        "families",
        "delta",
        "k",
        "tau",
        "gamma",
        "gamma1",
        "dt",
        "gauss_half_width",
        "gauss_points",
        "polar_radius",
        "polar_radial",
        "polar_angular",
    },
}

_CHANNEL_KEYS = {
    "gaussian-position": {"delta", "k", "tau"},
    "gaussian-momentum": {"delta", "k", "tau"},
    "dichotomous": {"gamma"},
    "fluorescence": {"gamma1"},
}


def version_string() -> str:
    """Package version, extended with the git description when available."""
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{__version__}+g{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


@dataclass
class ExperimentConfig:
    """Validated experiment description (schema errors raise ConfigError)."""

    experiment: str
    seed: int
    out: Path | None
    raw: dict[str, Any] = field(repr=False)

    def section(self, name: str, required: bool = False) -> dict[str, Any]:
        if name not in self.raw:
            if required:
                raise ConfigError(f"experiment {self.experiment!r} needs a [{name}] section")
            return {}
        return self.raw[name]

    def value(self, section: str, key: str, default=None, required: bool = False):
        sec = self.section(section, required=False)
        if key not in sec:
            if required:
                raise ConfigError(f"missing required key {section}.{key}")
            return default
        return sec[key]


def _check_schema(doc: dict[str, Any]) -> None:
    for key, val in doc.items():
        if isinstance(val, dict):
            if key not in _SCHEMA or key == "":
                raise ConfigError(f"unknown section [{key}]")
            for sub in val:
                if sub not in _SCHEMA[key]:
                    raise ConfigError(f"unknown key {key}.{sub}")
                if isinstance(val[sub], dict):
                    raise ConfigError(f"{key}.{sub} must be a value, not a table")
        else:
            if key not in _SCHEMA[""]:
                raise ConfigError(f"unknown top-level key {key!r}")


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: TOML parse error: {exc}") from exc
    _check_schema(doc)
    if "experiment" not in doc:
        raise ConfigError("missing top-level key 'experiment'")
    experiment = doc["experiment"]
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}")
    if "seed" not in doc and experiment in ("unravel", "arrow-single", "arrow-ensemble"):
        raise ConfigError("missing top-level key 'seed'")
    seed = int(doc.get("seed", 0))
    out = Path(doc["out"]) if "out" in doc else None
    return ExperimentConfig(experiment=experiment, seed=seed, out=out, raw=doc)


def build_channel(cfg: ExperimentConfig, dt: float | None = None) -> ChannelSpec:
    sec = cfg.section("channel", required=True)
    family = sec.get("family")
    if family not in FAMILIES:
        raise ConfigError(f"channel.family must be one of {FAMILIES}, got {family!r}")
    extra = set(sec) - {"family"} - _CHANNEL_KEYS[family]
    if extra:
        raise ConfigError(f"keys {sorted(extra)} do not apply to the {family} family")
    try:
        if family == "gaussian-position":
            return GaussianPosition(delta=sec["delta"], k=sec["k"], tau=sec["tau"])
        if family == "gaussian-momentum":
            return GaussianMomentum(delta=sec["delta"], k=sec["k"], tau=sec["tau"])
        if family == "dichotomous":
            return Dichotomous(gamma=sec["gamma"])
        if dt is None:
            raise ConfigError("fluorescence channel needs run.dt")
        return Fluorescence(gamma1=sec["gamma1"], dt=dt)
    except KeyError as exc:
        raise ConfigError(f"channel.{exc.args[0]} is required for the {family} family") from exc


def build_sim_config(cfg: ExperimentConfig) -> SimConfig:
    run = cfg.section("run", required=True)
    for key in ("t_total", "dt"):
        if key not in run:
            raise ConfigError(f"missing required key run.{key}")
    channel = build_channel(cfg, dt=run["dt"])
    omega = cfg.value("drive", "omega", default=0.0)
    return SimConfig(
        t_total=run["t_total"],
        dt=run["dt"],
        channel=channel,
        drive=DriveSpec(omega=omega),
        seed=cfg.seed,
    )


def state_from_section(cfg: ExperimentConfig, section: str, prefix: str = "") -> np.ndarray:
    sec = cfg.section(section, required=True)
    try:
        theta = sec[f"{prefix}theta"]
        phi = sec[f"{prefix}phi"]
    except KeyError as exc:
        raise ConfigError(f"missing required key {section}.{exc.args[0]}") from exc
    return qubit.pure_from_angles(theta, phi)


def fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _echo_toml(doc: dict[str, Any]) -> str:
    """Deterministic TOML-ish echo of the resolved config."""
    lines = []
    scalars = {k: v for k, v in doc.items() if not isinstance(v, dict)}
    for k in sorted(scalars):
        lines.append(f"{k} = {_toml_value(scalars[k])}")
    for name in sorted(k for k, v in doc.items() if isinstance(v, dict)):
        lines.append(f"[{name}]")
        for k in sorted(doc[name]):
            lines.append(f"{k} = {_toml_value(doc[name][k])}")
    return "\n".join(lines)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise ConfigError(f"cannot serialize config value {v!r}")


def write_summary(path: Path, experiment: str, results: dict[str, Any], config_doc: dict) -> None:
    lines = [
        "# qrev run summary",
        f"version = {version_string()}",
        f"experiment = {experiment}",
        f"wall_clock_s = {results.pop('_wall_clock_s'):.3f}",
    ]
    for key, value in results.items():
        lines.append(f"{key} = {fmt(value)}")
    lines.append("")
    lines.append("[config]")
    lines.append(_echo_toml(config_doc))
    path.write_text("\n".join(lines) + "\n")


def write_trajectory_csv(path: Path, records) -> None:
    with open(path, "w") as fh:
        fh.write("t,x,y,z,I,Q,direction\n")
        for rec in records:
            width = rec.readouts.shape[1] if rec.n_steps else 1
            for i, t in enumerate(rec.times):
                x, y, z = rec.states[i]
                if i < rec.n_steps:
                    i_val = fmt(float(rec.readouts[i][0]))
                    q_val = fmt(float(rec.readouts[i][1])) if width == 2 else ""
                else:
                    i_val = q_val = ""
                fh.write(
                    f"{fmt(float(t))},{fmt(float(x))},{fmt(float(y))},{fmt(float(z))},"
                    f"{i_val},{q_val},{rec.direction}\n"
                )


def _run_unravel(cfg: ExperimentConfig, outdir: Path) -> dict[str, Any]:
    sim = build_sim_config(cfg)
    psi0 = state_from_section(cfg, "state")
    fwd = simulate_forward(psi0, sim)
    bwd = unravel_backward(fwd)
    write_trajectory_csv(outdir / "trajectory.csv", [fwd, bwd])
    target = qubit.time_reverse_state(psi0)
    endpoint = bwd.density(bwd.n_steps)
    fidelity = qubit.fidelity(endpoint, qubit.density(target))
    mirror = float(np.max(np.abs(bwd.states + fwd.states[::-1])))
    return {
        "backward_endpoint_fidelity": fidelity,
        "mirror_max_deviation": mirror,
        "files": "trajectory.csv",
    }


def _run_arrow_single(cfg: ExperimentConfig, outdir: Path) -> dict[str, Any]:
    sim = build_sim_config(cfg)
    if not isinstance(sim.channel, Fluorescence):
        raise ConfigError("arrow-single needs the fluorescence channel")
    psi0 = state_from_section(cfg, "state")
    traj = simulate_forward(psi0, sim)
    stats = arrow.fluorescence_log_arrow(traj)
    write_trajectory_csv(outdir / "trajectory.csv", [traj])
    return {
        "log_r": stats.log_r,
        "p_forward_given_record": stats.p_forward_given_record,
        "files": "trajectory.csv",
    }


def _run_arrow_ensemble(cfg: ExperimentConfig, outdir: Path, workers: int = 1) -> dict[str, Any]:
    sim = build_sim_config(cfg)
    if not isinstance(sim.channel, Fluorescence):
        raise ConfigError("arrow-ensemble needs the fluorescence channel")
    n = cfg.value("run", "n_trajectories", required=True)
    chunk = cfg.value("run", "chunk", default=2048)
    psi0 = state_from_section(cfg, "state")
    result = arrow.ensemble_arrow(psi0, sim, int(n), chunk=int(chunk), workers=workers)
    with open(outdir / "log_r.csv", "w") as fh:
        fh.write("trajectory,log_r\n")
        for i, v in enumerate(result.log_r):
            fh.write(f"{i},{fmt(float(v))}\n")
    return {
        "n_trajectories": int(n),
        "mean_log_r_mc": result.mc_mean,
        "mean_log_r_analytic": result.analytic_mean,
        "stderr": result.stderr,
        "files": "log_r.csv",
    }


def _run_prepost_arrow(cfg: ExperimentConfig, outdir: Path) -> dict[str, Any]:
    channel = build_channel(cfg)
    if not isinstance(channel, Dichotomous):
        raise ConfigError("prepost-arrow models dichotomous measurement sequences")
    if cfg.value("drive", "omega", default=0.0) != 0.0:
        raise ConfigError("prepost-arrow records carry no drive; set drive.omega = 0")
    outcomes = cfg.value("record", "outcomes", required=True)
    if not outcomes or any(o not in (0, 1) for o in outcomes):
        raise ConfigError("record.outcomes must be a nonempty list of 0/1")
    from .channels import Binary, forward_operator

    ops = [forward_operator(channel, Binary(int(o))) for o in outcomes]
    boundary = arrow.BoundaryPair(
        pre=state_from_section(cfg, "boundary", "pre_"),
        post=state_from_section(cfg, "boundary", "post_"),
    )
    stats = arrow.prepost_log_arrow_ops(ops, boundary)
    return {
        "log_r": stats.log_r,
        "p_forward_given_record": stats.p_forward_given_record,
    }


def _run_weak_value(cfg: ExperimentConfig, outdir: Path) -> dict[str, Any]:
    weak = cfg.section("weak", required=True)
    for key in ("k", "tau", "delta"):
        if key not in weak:
            raise ConfigError(f"missing required key weak.{key}")
    meter = weak_values.MeterOverlapModel(k=weak["k"], tau=weak["tau"], delta=weak["delta"])
    psi_s = state_from_section(cfg, "boundary", "pre_")
    psi_f = state_from_section(cfg, "boundary", "post_")
    s_op = np.diag([0.5, -0.5]).astype(complex)
    res = weak_values.weak_value(s_op, psi_s, psi_f, meter=meter)
    rev = weak_values.time_reversed_weak_value(s_op, psi_s, psi_f)
    p_f, p_b, p_r = weak_values.weak_protocol_probabilities(psi_s, psi_f, meter)
    return {
        "s_w_re": res.s_w.real,
        "s_w_im": res.s_w.imag,
        "s_w_reversed_re": rev.real,
        "s_w_reversed_im": rev.imag,
        "meter_shift_re": res.meter_shift.real,
        "meter_shift_im": res.meter_shift.imag,
        "pointer_overlap": meter.overlap,
        "p_f": p_f,
        "p_b": p_b,
        "p_r": p_r,
    }


def povm_table(
    families,
    params: dict[str, Any],
) -> list[tuple[str, float, float]]:
    """(family, forward residual, reversed residual) rows."""
    quad = QuadratureConfig(
        gauss_half_width=params.get("gauss_half_width"),
        gauss_points=int(params.get("gauss_points", 4001)),
        polar_radius=params.get("polar_radius", 6.0),
        polar_radial=int(params.get("polar_radial", 400)),
        polar_angular=int(params.get("polar_angular", 400)),
    )
    rows = []
    for family in families:
        if family not in FAMILIES:
            raise ConfigError(f"unknown POVM family {family!r}")
        if family.startswith("gaussian"):
            cls = GaussianPosition if family == "gaussian-position" else GaussianMomentum
            spec: ChannelSpec = cls(
                delta=params.get("delta", 1.0),
                k=params.get("k", 1.0),
                tau=params.get("tau", 1.0),
            )
        elif family == "dichotomous":
            spec = Dichotomous(gamma=params.get("gamma", 0.42))
        else:
            spec = Fluorescence(gamma1=params.get("gamma1", 1.0), dt=params.get("dt", 0.2))
        rows.append(
            (
                family,
                completeness_residual(spec, quad),
                completeness_residual(spec, quad, use_reversed=True),
            )
        )
    return rows


def _run_povm_check(cfg: ExperimentConfig, outdir: Path) -> dict[str, Any]:
    sec = cfg.section("povm")
    families = sec.get("families", ["gaussian-position", "dichotomous", "fluorescence"])
    rows = povm_table(families, sec)
    with open(outdir / "povm_residuals.csv", "w") as fh:
        fh.write("family,residual_forward,residual_reversed\n")
        for family, fres, rres in rows:
            fh.write(f"{family},{fmt(fres)},{fmt(rres)}\n")
    results: dict[str, Any] = {"files": "povm_residuals.csv"}
    for family, fres, rres in rows:
        key = family.replace("-", "_")
        results[f"residual_{key}_forward"] = fres
        results[f"residual_{key}_reversed"] = rres
    return results


_RUNNERS: dict[str, Callable] = {
    "unravel": _run_unravel,
    "arrow-single": _run_arrow_single,
    "arrow-ensemble": _run_arrow_ensemble,
    "prepost-arrow": _run_prepost_arrow,
    "weak-value": _run_weak_value,
    "povm-check": _run_povm_check,
}


def resolve_outdir(cfg_out: Path | None, cli_out: str | None) -> Path:
    if cli_out:
        return Path(cli_out)
    if cfg_out is not None:
        return cfg_out
    env = os.environ.get("QREV_OUT")
    return Path(env) if env else Path.cwd()


def run(
    cfg: ExperimentConfig,
    out_override: str | None = None,
    seed_override: int | None = None,
    workers: int = 1,
) -> Path:
    """Execute one experiment; returns the summary path."""
    if seed_override is not None:
        cfg.seed = int(seed_override)
        cfg.raw["seed"] = int(seed_override)
    outdir = resolve_outdir(cfg.out, out_override)
    outdir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    runner = _RUNNERS[cfg.experiment]
    if cfg.experiment == "arrow-ensemble":
        results = runner(cfg, outdir, workers=workers)
    else:
        results = runner(cfg, outdir)
    results["_wall_clock_s"] = time.perf_counter() - start
    summary = outdir / "summary.txt"
    write_summary(summary, cfg.experiment, results, cfg.raw)
    return summary
