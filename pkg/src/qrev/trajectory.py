"""Forward unraveling and backward retrodiction of monitored qubit dynamics.

Each step of duration dt applies a Rabi rotation followed by conditioning on
one measurement readout,

    rho(t+dt) = M(r) U rho(t) U^dag M(r)^dag / trace,

and the backward pass undoes steps with the adjoints in reverse order,

    rho'(t'+dt') = U^dag M(r)^dag rho'(t') M(r) U / trace,

starting from the time-reversed final state.  Because reversal is exact
Kraus algebra given the record, the backward sequence retraces the
parity-flipped forward sequence regardless of dt.

Bloch conventions.  Trajectory coordinates are reported in the frame in
which the fluorescence stochastic equations take their standard form: the
relaxation attractor (the ground state |0>) sits at z = -1 and the mean
quadratures are I = sqrt(gamma1/2) x, Q = sqrt(gamma1/2) y.  Relative to
the computational-basis Bloch map this is (x, -y, -z); equivalently, it is
the plain Bloch map over the basis ordered (excited, ground).  In this
frame the drive Hamiltonian is (Omega/2) sigma_y, which in the
computational basis makes the per-step unitary

    U = exp(+i (Omega/2) sigma_y dt) = [[cos, sin], [-sin, cos]](Omega dt/2).

The conditioned Bloch-coordinate rates for heterodyne fluorescence are

    dx/dt = Omega z + (g/2) x z + sqrt(g/2) [I (1 - x^2 + z) - Q x y]
    dy/dt =           (g/2) y z + sqrt(g/2) [Q (1 - y^2 + z) - I x y]
    dz/dt = -Omega x + (g/2)(z^2 - 1) - sqrt(g/2) [I x(1 + z) + Q y(1 + z)]

with white-noise readouts of variance 1/dt.  These are Stratonovich
equations: a single midpoint (Heun) step agrees with the exact Kraus map to
O(dt^{3/2}), which is how `bloch_sde_step` serves as an independent oracle
for `forward_step`.  (The y-noise bracket must carry +z, mirroring the
x-noise bracket; the opposite sign would kick the ground state and break
purity preservation of rank-2 conditioning.)

RNG contract: each trajectory consumes one counter-based stream derived
from (seed, trajectory index), so ensembles are reproducible regardless of
how work is chunked across workers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import qubit
from .channels import (
    Binary,
    ChannelSpec,
    Continuous,
    Dichotomous,
    Fluorescence,
    GaussianMomentum,
    GaussianPosition,
    Heterodyne,
    Readout,
    forward_operator,
)
from .errors import ImpossibleReadout, ParameterError, VariantMismatch

TRACE_FLOOR = 1e-300


@dataclass(frozen=True)
class DriveSpec:
    """Rabi drive of angular frequency omega about the y axis."""

    omega: float

    def __post_init__(self):
        if not np.isfinite(self.omega):
            raise ParameterError("omega must be finite")


@dataclass(frozen=True)
class SimConfig:
    t_total: float
    dt: float
    channel: ChannelSpec
    drive: DriveSpec
    seed: int

    def __post_init__(self):
        if not (self.t_total > 0 and self.dt > 0):
            raise ParameterError("t_total and dt must be positive")
        if self.dt > self.t_total:
            raise ParameterError("dt exceeds t_total")
        ratio = self.t_total / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(ratio, 1.0):
            raise ParameterError(f"t_total/dt = {ratio} is not an integer")
        if isinstance(self.channel, Fluorescence):
            if abs(self.channel.dt - self.dt) > 1e-12 * self.dt:
                raise ParameterError("fluorescence channel dt must equal config dt")
            if self.dt * self.channel.gamma1 > 0.1:
                warnings.warn(
                    f"dt*gamma1 = {self.dt * self.channel.gamma1:.3g} > 0.1; "
                    "per-step emission weight is large",
                    stacklevel=2,
                )

    @property
    def n_steps(self) -> int:
        return int(round(self.t_total / self.dt))


def traj_bloch_from_density(rho: np.ndarray) -> np.ndarray:
    """Trajectory-frame Bloch vector (x, -y, -z relative to the standard map)."""
    b = qubit.bloch_from_density(rho)
    return np.array([b[0], -b[1], -b[2]])


def density_from_traj_bloch(b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    return qubit.density_from_bloch([b[0], -b[1], -b[2]])


def drive_unitary(cfg: SimConfig) -> np.ndarray:
    th = cfg.drive.omega * cfg.dt / 2
    return np.array([[np.cos(th), np.sin(th)], [-np.sin(th), np.cos(th)]], dtype=complex)


@dataclass(frozen=True)
class TrajectoryRecord:
    """Aligned times, trajectory-frame Bloch states, and raw readouts.

    `readouts` has one row per step: (I, Q) for heterodyne, (ybar,) for the
    Gaussian families, (outcome,) for the dichotomous family.  For backward
    records the rows appear in the order they were consumed (reverse of the
    forward order) and times count from the start of the backward pass.
    """

    times: np.ndarray
    states: np.ndarray
    readouts: np.ndarray
    config: SimConfig
    direction: str = "fwd"

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ParameterError("times/states length mismatch")
        if len(self.readouts) != len(self.times) - 1:
            raise ParameterError("need exactly one readout per step")

    @property
    def n_steps(self) -> int:
        return len(self.readouts)

    def density(self, i: int) -> np.ndarray:
        return density_from_traj_bloch(self.states[i])

    def readout(self, i: int) -> Readout:
        return _readout_from_row(self.config.channel, self.readouts[i])


def _readout_from_row(channel: ChannelSpec, row) -> Readout:
    if isinstance(channel, Fluorescence):
        return Heterodyne(float(row[0]), float(row[1]))
    if isinstance(channel, (GaussianPosition, GaussianMomentum)):
        return Continuous(float(row[0]))
    if isinstance(channel, Dichotomous):
        return Binary(int(row[0]))
    raise VariantMismatch(f"unknown channel {type(channel).__name__}")


def trajectory_stream(seed: int, index: int = 0) -> np.random.Generator:
    """Counter-based stream for trajectory `index` of ensemble `seed`."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))
    )


def _conditioned(numerator: np.ndarray) -> np.ndarray:
    tr = np.trace(numerator).real
    if tr < TRACE_FLOOR:
        raise ImpossibleReadout(f"conditioning trace {tr:.3e} is numerically zero")
    return numerator / tr


def forward_step(rho: np.ndarray, r: Readout, cfg: SimConfig) -> np.ndarray:
    """One forward step: drive, then condition on readout r."""
    u = drive_unitary(cfg)
    m = forward_operator(cfg.channel, r)
    mu = m @ u
    return _conditioned(mu @ rho @ mu.conj().T)


def retrodict_step(rho_prime: np.ndarray, r: Readout, cfg: SimConfig) -> np.ndarray:
    """One backward step: condition on the adjoint, then undo the drive."""
    u = drive_unitary(cfg)
    m = forward_operator(cfg.channel, r)
    umd = u.conj().T @ m.conj().T
    return _conditioned(umd @ rho_prime @ umd.conj().T)


def synthesize_readout(rho: np.ndarray, cfg: SimConfig, rng: np.random.Generator) -> Readout:
    """Draw one readout from the statistics of the current state.

    Heterodyne: I = sqrt(g/2) x + zeta_x, Q = sqrt(g/2) y + zeta_y with
    independent zeta ~ Normal(0, 1/dt).  Gaussian families: ybar from the
    exact two-Gaussian mixture tr[M(ybar) rho M(ybar)^dag].  Dichotomous:
    Born-rule bit.
    """
    channel = cfg.channel
    if isinstance(channel, Fluorescence):
        b = traj_bloch_from_density(rho)
        amp = np.sqrt(channel.gamma1 / 2)
        noise = rng.standard_normal(2) / np.sqrt(cfg.dt)
        return Heterodyne(float(amp * b[0] + noise[0]), float(amp * b[1] + noise[1]))
    if isinstance(channel, (GaussianPosition, GaussianMomentum)):
        p0 = rho[0, 0].real
        kt2 = channel.k * channel.tau / 2
        center = kt2 if rng.random() < p0 else -kt2
        return Continuous(float(center + channel.delta * rng.standard_normal()))
    if isinstance(channel, Dichotomous):
        g = channel.gamma
        p0 = g * rho[0, 0].real + (1 - g) * rho[1, 1].real
        return Binary(0 if rng.random() < p0 else 1)
    raise VariantMismatch(f"cannot synthesize readouts for {type(channel).__name__}")


class _StepKernel:
    """Vectorized one-step sampler/updater shared by the scalar and batch paths.

    Operates on stacked density matrices of shape (n, 2, 2); n = 1 recovers
    single-trajectory simulation, which keeps the two paths bit-identical.
    """

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.u = drive_unitary(cfg)
        self.channel = cfg.channel
        self.sqrt_inv_dt = 1.0 / np.sqrt(cfg.dt)
        if isinstance(self.channel, Fluorescence):
            self.amp = np.sqrt(self.channel.gamma1 / 2)
            self.sqrt_eps = np.sqrt(self.channel.epsilon)
            self.sqrt_1meps = np.sqrt(1 - self.channel.epsilon)
            self.sqrt_dt2 = np.sqrt(cfg.dt / 2)

    def noise_block(self, rng: np.random.Generator, steps: int) -> np.ndarray:
        """Pre-draw everything a trajectory consumes, one row per step."""
        if isinstance(self.channel, Fluorescence):
            return rng.standard_normal((steps, 2))
        if isinstance(self.channel, (GaussianPosition, GaussianMomentum)):
            return np.column_stack([rng.random(steps), rng.standard_normal(steps)])
        if isinstance(self.channel, Dichotomous):
            return rng.random((steps, 1))
        raise VariantMismatch(f"cannot synthesize readouts for {type(self.channel).__name__}")

    def sample(self, rhos: np.ndarray, noise_rows: np.ndarray) -> np.ndarray:
        """Readout rows for each stacked state, shape (n, k)."""
        if isinstance(self.channel, Fluorescence):
            x = (rhos[:, 0, 1] + rhos[:, 1, 0]).real
            y = -(1j * (rhos[:, 0, 1] - rhos[:, 1, 0])).real
            i_val = self.amp * x + noise_rows[:, 0] * self.sqrt_inv_dt
            q_val = self.amp * y + noise_rows[:, 1] * self.sqrt_inv_dt
            return np.column_stack([i_val, q_val])
        if isinstance(self.channel, (GaussianPosition, GaussianMomentum)):
            p0 = rhos[:, 0, 0].real
            kt2 = self.channel.k * self.channel.tau / 2
            centers = np.where(noise_rows[:, 0] < p0, kt2, -kt2)
            return (centers + self.channel.delta * noise_rows[:, 1])[:, None]
        if isinstance(self.channel, Dichotomous):
            g = self.channel.gamma
            p0 = g * rhos[:, 0, 0].real + (1 - g) * rhos[:, 1, 1].real
            return (noise_rows[:, 0] >= p0).astype(float)[:, None]
        raise VariantMismatch(f"cannot synthesize readouts for {type(self.channel).__name__}")

    def operators(self, rows: np.ndarray) -> np.ndarray:
        """Stacked forward Kraus matrices for readout rows, shape (n, 2, 2)."""
        n = len(rows)
        ms = np.empty((n, 2, 2), dtype=complex)
        if isinstance(self.channel, Fluorescence):
            alpha = (rows[:, 0] - 1j * rows[:, 1]) * self.sqrt_dt2
            pref = np.exp(-np.abs(alpha) ** 2 / 2)
            ms[:, 0, 0] = pref
            ms[:, 0, 1] = pref * np.conj(alpha) * self.sqrt_eps
            ms[:, 1, 0] = 0
            ms[:, 1, 1] = pref * self.sqrt_1meps
            return ms
        for j in range(n):
            ms[j] = forward_operator(self.channel, _readout_from_row(self.channel, rows[j]))
        return ms

    def step(self, rhos: np.ndarray, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Conditioned update of stacked states; returns (new_rhos, log norms)."""
        ms = self.operators(rows)
        mu = ms @ self.u
        num = mu @ rhos @ mu.conj().transpose(0, 2, 1)
        traces = np.einsum("nii->n", num).real
        if np.any(traces < TRACE_FLOOR):
            raise ImpossibleReadout("conditioning trace is numerically zero")
        return num / traces[:, None, None], np.log(traces)


def batch_traj_bloch(rhos: np.ndarray) -> np.ndarray:
    """Trajectory-frame Bloch rows of stacked density matrices."""
    x = (rhos[:, 0, 1] + rhos[:, 1, 0]).real
    y = -(1j * (rhos[:, 0, 1] - rhos[:, 1, 0])).real
    z = -(rhos[:, 0, 0] - rhos[:, 1, 1]).real
    return np.column_stack([x, y, z])


def readout_width(channel: ChannelSpec) -> int:
    """Number of readout values recorded per step."""
    return 2 if isinstance(channel, Fluorescence) else 1


def simulate_forward(psi0: np.ndarray, cfg: SimConfig, traj_index: int = 0) -> TrajectoryRecord:
    """Unravel one forward trajectory; deterministic given (seed, traj_index)."""
    psi0 = qubit.normalize(np.asarray(psi0, dtype=complex))
    steps = cfg.n_steps
    kernel = _StepKernel(cfg)
    rng = trajectory_stream(cfg.seed, traj_index)
    noise = kernel.noise_block(rng, steps)

    rhos = qubit.density(psi0)[None, :, :]
    times = np.arange(steps + 1) * cfg.dt
    states = np.empty((steps + 1, 3))
    states[0] = batch_traj_bloch(rhos)[0]
    rows = np.empty((steps, readout_width(cfg.channel)))
    for i in range(steps):
        r = kernel.sample(rhos, noise[i : i + 1])
        rows[i] = r[0]
        rhos, _ = kernel.step(rhos, r)
        states[i + 1] = batch_traj_bloch(rhos)[0]
    return TrajectoryRecord(times=times, states=states, readouts=rows, config=cfg)


def unravel_backward(fwd: TrajectoryRecord) -> TrajectoryRecord:
    """Retrodict from the time-reversed final state back along the record.

    The output's state sequence mirrors the forward one with all Bloch
    components negated; its endpoint is the time-reversed initial state.
    """
    if fwd.direction != "fwd":
        raise ParameterError("unravel_backward expects a forward record")
    cfg = fwd.config
    steps = fwd.n_steps
    sigma = qubit.time_reverse_density(fwd.density(steps))
    states = np.empty((steps + 1, 3))
    states[0] = traj_bloch_from_density(sigma)
    rows = fwd.readouts[::-1].copy()
    for j in range(steps):
        sigma = retrodict_step(sigma, _readout_from_row(cfg.channel, rows[j]), cfg)
        states[j + 1] = traj_bloch_from_density(sigma)
    return TrajectoryRecord(
        times=fwd.times.copy(), states=states, readouts=rows, config=cfg, direction="bwd"
    )


def bloch_velocity(b, i_val: float, q_val: float, cfg: SimConfig) -> np.ndarray:
    """Right-hand side of the heterodyne-fluorescence Bloch equations."""
    if not isinstance(cfg.channel, Fluorescence):
        raise VariantMismatch("Bloch rates are defined for the fluorescence channel")
    x, y, z = np.asarray(b, dtype=float)
    g = cfg.channel.gamma1
    om = cfg.drive.omega
    sq = np.sqrt(g / 2)
    dx = om * z + g / 2 * x * z + sq * (i_val * (1 - x * x + z) - q_val * x * y)
    dy = g / 2 * y * z + sq * (q_val * (1 - y * y + z) - i_val * x * y)
    dz = -om * x + g / 2 * (z * z - 1) - sq * (i_val * (x + x * z) + q_val * (y + y * z))
    return np.array([dx, dy, dz])


def bloch_sde_step(b, i_val: float, q_val: float, cfg: SimConfig) -> np.ndarray:
    """Explicit midpoint (Heun) update of the Stratonovich Bloch equations.

    Predictor-corrector with the readouts held fixed across the step; agrees
    with the exact Kraus conditioning to O(dt^{3/2}), which a plain Euler
    update of a Stratonovich equation cannot do.
    """
    b = np.asarray(b, dtype=float)
    k1 = bloch_velocity(b, i_val, q_val, cfg)
    k2 = bloch_velocity(b + cfg.dt * k1, i_val, q_val, cfg)
    return b + cfg.dt * (k1 + k2) / 2


def iterate_ensemble(
    psi0: np.ndarray,
    cfg: SimConfig,
    n_traj: int,
    chunk: int = 2048,
    first_index: int = 0,
) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Stream ensemble members [first_index, first_index + n_traj) in chunks.

    Yields (indices, bloch_path, readout_rows) per chunk, with bloch_path of
    shape (m, steps+1, 3) and readout_rows of shape (m, steps, k).  Member i
    is bit-identical to simulate_forward(psi0, cfg, traj_index=i) because
    both consume the same per-index noise block through the same kernel, so
    any partition of the index range reproduces the same ensemble.
    """
    psi0 = qubit.normalize(np.asarray(psi0, dtype=complex))
    steps = cfg.n_steps
    kernel = _StepKernel(cfg)
    rho0 = qubit.density(psi0)
    width = readout_width(cfg.channel)
    stop = first_index + n_traj
    for start in range(first_index, stop, chunk):
        idx = np.arange(start, min(start + chunk, stop))
        m = len(idx)
        noise = np.stack(
            [kernel.noise_block(trajectory_stream(cfg.seed, int(i)), steps) for i in idx]
        )
        rhos = np.broadcast_to(rho0, (m, 2, 2)).copy()
        bloch = np.empty((m, steps + 1, 3))
        bloch[:, 0] = batch_traj_bloch(rhos)
        rows = np.empty((m, steps, width))
        for i in range(steps):
            r = kernel.sample(rhos, noise[:, i, :])
            rows[:, i, :] = r
            rhos, _ = kernel.step(rhos, r)
            bloch[:, i + 1] = batch_traj_bloch(rhos)
        yield idx, bloch, rows
