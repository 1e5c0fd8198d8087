"""Forward/backward record probabilities and the statistical arrow of time.

For a record {r_1..r_N} with per-step factors F_i = M(r_i) U the two
hypotheses are weighed by

    P_F = |F_N ... F_1 |psi_i>|^2,
    P_B = |F_1^dag ... F_N^dag  Theta|psi_f>|^2,

where |psi_f> is the normalized final state of the forward record; under a
uniform prior, Bayes gives P(forward | record) = R/(1+R) with
R = P_F / P_B and log R is the arrow-of-time statistic.  With pre- and
post-selection the probabilities become matrix elements instead of norms,

    P_F = |<phi_f| F |phi_i>|^2,    P_B = |<Theta phi_i| F^dag |Theta phi_f>|^2,

which vanishes identically when F is unitary, and when F is Hermitian with
phi_f = Theta phi_i.

All products are accumulated in log space (the per-step conditioning norms
multiply down to ~e^{-N} on long heterodyne records, so linear-space
probabilities underflow; their shared Gaussian weight cancels exactly in
the log difference).  Raw probabilities for continuous records are
densities with respect to the readout measure, not absolute probabilities.

The fluorescence channel also has a closed-form arrow: the log-ratio is a
midpoint-discretized (Stratonovich) sum over the record,

    log R = 2 dt sum_i [ sqrt(g/2) I_i (x_i+x_{i+1})/2
                         + sqrt(g/2) Q_i (y_i+y_{i+1})/2
                         - g (z_i+z_{i+1})/4 ],

whose noise average over an ensemble of trajectories has the analytic form
g * integral dt (1 + (<x^2>+<y^2>)/2 - <z>).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import qubit
from .channels import ChannelSpec, Fluorescence, Readout, forward_operator, reversed_operator
from .errors import EmptyEnsemble, ParameterError, UndefinedArrow, VariantMismatch
from .trajectory import (
    SimConfig,
    TrajectoryRecord,
    _readout_from_row,
    drive_unitary,
    iterate_ensemble,
)


def _stable_p_forward(log_r: float) -> float:
    if math.isinf(log_r):
        return 1.0 if log_r > 0 else 0.0
    if log_r >= 0:
        return 1.0 / (1.0 + math.exp(-log_r))
    e = math.exp(log_r)
    return e / (1.0 + e)


@dataclass(frozen=True)
class ArrowStats:
    """log R plus the Bayesian posterior P(forward | record)."""

    log_r: float
    p_forward_given_record: float
    per_term: np.ndarray | None = None


def _stats(log_r: float, per_term=None) -> ArrowStats:
    return ArrowStats(
        log_r=log_r, p_forward_given_record=_stable_p_forward(log_r), per_term=per_term
    )


@dataclass(frozen=True)
class BoundaryPair:
    """Pre-selected state |phi_i> and post-selected state |phi_f>."""

    pre: np.ndarray
    post: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pre", qubit.normalize(np.asarray(self.pre, dtype=complex)))
        object.__setattr__(self, "post", qubit.normalize(np.asarray(self.post, dtype=complex)))


@dataclass(frozen=True)
class ReadoutRecord:
    """Time-ordered readout rows with the config that produced them."""

    rows: np.ndarray
    config: SimConfig

    @classmethod
    def from_trajectory(cls, traj: TrajectoryRecord) -> "ReadoutRecord":
        return cls(rows=np.asarray(traj.readouts), config=traj.config)

    @property
    def n_steps(self) -> int:
        return len(self.rows)

    def readout(self, i: int) -> Readout:
        return _readout_from_row(self.config.channel, self.rows[i])

    def step_operators(self) -> list[np.ndarray]:
        """Per-step factors M(r_i) @ U in application order."""
        u = drive_unitary(self.config)
        return [
            forward_operator(self.config.channel, self.readout(i)) @ u
            for i in range(self.n_steps)
        ]


def _log_norm_product(ops: Sequence[np.ndarray], psi: np.ndarray):
    """Apply ops in order with per-step normalization.

    Returns (total log of squared norm, final normalized state or None when
    the state is annihilated, per-step log contributions).
    """
    state = qubit.normalize(np.asarray(psi, dtype=complex))
    total = 0.0
    per_step = np.empty(len(ops))
    for i, op in enumerate(ops):
        state = op @ state
        n2 = float(np.vdot(state, state).real)
        if n2 == 0.0:
            per_step[i:] = -np.inf
            return -np.inf, None, per_step
        per_step[i] = math.log(n2)
        total += per_step[i]
        state = state / math.sqrt(n2)
    return total, state, per_step


def forward_probability_ops(ops: Sequence[np.ndarray], psi_i: np.ndarray) -> float:
    """|ops[-1] ... ops[0] |psi_i>|^2 (a density for continuous records)."""
    total, _, _ = _log_norm_product(ops, psi_i)
    return math.exp(total) if total != -np.inf else 0.0


def backward_probability_ops(ops: Sequence[np.ndarray], psi_f: np.ndarray) -> float:
    """|ops[0]^dag ... ops[-1]^dag Theta|psi_f>|^2."""
    radj = [op.conj().T for op in reversed(ops)]
    total, _, _ = _log_norm_product(radj, qubit.time_reverse_state(psi_f))
    return math.exp(total) if total != -np.inf else 0.0


def forward_probability(record: ReadoutRecord, psi_i: np.ndarray) -> float:
    return forward_probability_ops(record.step_operators(), psi_i)


def backward_probability(record: ReadoutRecord, psi_f: np.ndarray) -> float:
    return backward_probability_ops(record.step_operators(), psi_f)


def log_arrow_ops(ops: Sequence[np.ndarray], psi_i: np.ndarray) -> ArrowStats:
    """Arrow statistic for a record starting from psi_i.

    The backward hypothesis retrodicts from the time reversal of the actual
    final state of the forward product.  +-inf is a legal value in the
    projective limit where one hypothesis is impossible.
    """
    log_pf, final_state, fterms = _log_norm_product(ops, psi_i)
    if final_state is None:
        raise UndefinedArrow("forward probability is exactly zero")
    radj = [op.conj().T for op in reversed(ops)]
    log_pb, _, bterms = _log_norm_product(radj, qubit.time_reverse_state(final_state))
    if log_pb == -np.inf:
        return _stats(np.inf, fterms - bterms[::-1])
    return _stats(log_pf - log_pb, fterms - bterms[::-1])


def log_arrow(record: ReadoutRecord, psi_i: np.ndarray) -> ArrowStats:
    return log_arrow_ops(record.step_operators(), psi_i)


def prepost_log_arrow_ops(ops: Sequence[np.ndarray], boundary: BoundaryPair) -> ArrowStats:
    """Arrow statistic for an ensemble with past and future boundary states."""
    log_f, state_f, _ = _log_norm_product(ops, boundary.pre)
    if state_f is not None:
        amp2 = abs(np.vdot(boundary.post, state_f)) ** 2
        log_pf = log_f + (math.log(amp2) if amp2 > 0 else -np.inf)
    else:
        log_pf = -np.inf

    radj = [op.conj().T for op in reversed(ops)]
    log_b, state_b, _ = _log_norm_product(radj, qubit.time_reverse_state(boundary.post))
    if state_b is not None:
        amp2 = abs(np.vdot(qubit.time_reverse_state(boundary.pre), state_b)) ** 2
        log_pb = log_b + (math.log(amp2) if amp2 > 0 else -np.inf)
    else:
        log_pb = -np.inf

    if log_pf == -np.inf and log_pb == -np.inf:
        raise UndefinedArrow("both forward and backward probabilities vanish")
    if log_pf == -np.inf:
        return _stats(-np.inf)
    if log_pb == -np.inf:
        return _stats(np.inf)
    return _stats(log_pf - log_pb)


def prepost_log_arrow(record: ReadoutRecord, boundary: BoundaryPair) -> ArrowStats:
    return prepost_log_arrow_ops(record.step_operators(), boundary)


def fluorescence_log_arrow(traj: TrajectoryRecord) -> ArrowStats:
    """Closed-form arrow of a heterodyne fluorescence record (midpoint sum)."""
    channel = traj.config.channel
    if not isinstance(channel, Fluorescence):
        raise VariantMismatch("fluorescence_log_arrow needs a fluorescence trajectory")
    g = channel.gamma1
    dt = traj.config.dt
    sq = math.sqrt(g / 2)
    b = np.asarray(traj.states)
    rows = np.asarray(traj.readouts)
    if len(rows) == 0:
        return _stats(0.0, np.empty(0))
    mid = (b[:-1] + b[1:]) / 2
    terms = 2 * dt * (
        sq * rows[:, 0] * mid[:, 0] + sq * rows[:, 1] * mid[:, 1] - g * mid[:, 2] / 2
    )
    return _stats(float(np.sum(terms)), terms)


def mean_log_arrow_from_moments(
    times: np.ndarray, x2: np.ndarray, y2: np.ndarray, z: np.ndarray, gamma1: float
) -> float:
    """Analytic noise-averaged arrow: g * int dt (1 + (<x^2>+<y^2>)/2 - <z>)."""
    integrand = 1.0 + (x2 + y2) / 2 - z
    return float(gamma1 * np.trapezoid(integrand, times))


def mean_log_arrow_analytic(trajectories: Sequence[TrajectoryRecord]) -> float:
    """Evaluate the analytic mean arrow from per-slice ensemble moments."""
    if len(trajectories) == 0:
        raise EmptyEnsemble("need at least one trajectory")
    channel = trajectories[0].config.channel
    if not isinstance(channel, Fluorescence):
        raise VariantMismatch("analytic mean arrow needs fluorescence trajectories")
    states = np.stack([np.asarray(t.states) for t in trajectories])
    times = np.asarray(trajectories[0].times)
    return mean_log_arrow_from_moments(
        times,
        np.mean(states[:, :, 0] ** 2, axis=0),
        np.mean(states[:, :, 1] ** 2, axis=0),
        np.mean(states[:, :, 2], axis=0),
        channel.gamma1,
    )


@dataclass(frozen=True)
class EnsembleArrowResult:
    """Monte Carlo arrow statistics of a forward fluorescence ensemble."""

    log_r: np.ndarray
    mc_mean: float
    stderr: float
    analytic_mean: float
    times: np.ndarray


def _arrow_partial(psi0, cfg: SimConfig, first_index: int, n_traj: int, chunk: int):
    """Per-trajectory arrow sums plus per-chunk slice-moment partials.

    Moment partials are kept per chunk (not folded locally) so the caller
    can fold them in canonical chunk order whatever the worker layout.
    """
    channel = cfg.channel
    g = channel.gamma1
    sq = math.sqrt(g / 2)
    dt = cfg.dt
    log_r = np.empty(n_traj)
    moment_chunks = []
    for idx, bloch, rows in iterate_ensemble(
        psi0, cfg, n_traj, chunk=chunk, first_index=first_index
    ):
        mid = (bloch[:, :-1, :] + bloch[:, 1:, :]) / 2
        terms = 2 * dt * (
            sq * rows[:, :, 0] * mid[:, :, 0]
            + sq * rows[:, :, 1] * mid[:, :, 1]
            - g * mid[:, :, 2] / 2
        )
        log_r[idx - first_index] = terms.sum(axis=1)
        moment_chunks.append(
            (
                (bloch[:, :, 0] ** 2).sum(axis=0),
                (bloch[:, :, 1] ** 2).sum(axis=0),
                bloch[:, :, 2].sum(axis=0),
            )
        )
    return log_r, moment_chunks


def _arrow_partial_star(args):
    return _arrow_partial(*args)


def ensemble_arrow(
    psi0: np.ndarray, cfg: SimConfig, n_traj: int, chunk: int = 2048, workers: int = 1
) -> EnsembleArrowResult:
    """Arrow statistics over n_traj forward trajectories, streamed in chunks.

    Per-trajectory values come from the closed-form midpoint sum; the
    analytic mean uses per-time-slice second moments of the same (filtered)
    ensemble.  Each trajectory owns its (seed, index) stream, worker ranges
    are chunk-aligned, and moment partials are folded in chunk order, so
    the result is bit-identical for any chunk-count-compatible worker
    layout.
    """
    if n_traj <= 0:
        raise EmptyEnsemble("n_traj must be positive")
    channel = cfg.channel
    if not isinstance(channel, Fluorescence):
        raise VariantMismatch("ensemble_arrow needs the fluorescence channel")
    steps = cfg.n_steps
    times = np.arange(steps + 1) * cfg.dt
    psi0 = qubit.normalize(np.asarray(psi0, dtype=complex))

    n_chunks = -(-n_traj // chunk)
    if workers <= 1 or n_chunks == 1:
        parts = [_arrow_partial(psi0, cfg, 0, n_traj, chunk)]
    else:
        import concurrent.futures

        workers = min(workers, n_chunks)
        chunk_bounds = np.linspace(0, n_chunks, workers + 1).astype(int) * chunk
        chunk_bounds = np.minimum(chunk_bounds, n_traj)
        jobs = [
            (psi0, cfg, int(lo), int(hi - lo), chunk)
            for lo, hi in zip(chunk_bounds[:-1], chunk_bounds[1:])
            if hi > lo
        ]
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_arrow_partial_star, jobs))

    log_r = np.concatenate([p[0] for p in parts])
    x2_sum = np.zeros(steps + 1)
    y2_sum = np.zeros(steps + 1)
    z_sum = np.zeros(steps + 1)
    for _, chunks in parts:
        for cx2, cy2, cz in chunks:
            x2_sum += cx2
            y2_sum += cy2
            z_sum += cz
    analytic = mean_log_arrow_from_moments(
        times, x2_sum / n_traj, y2_sum / n_traj, z_sum / n_traj, channel.gamma1
    )
    mc_mean = float(np.mean(log_r))
    stderr = float(np.std(log_r, ddof=1) / math.sqrt(n_traj)) if n_traj > 1 else math.inf
    return EnsembleArrowResult(
        log_r=log_r, mc_mean=mc_mean, stderr=stderr, analytic_mean=analytic, times=times
    )


def reverse_probability_equiv_check(
    spec: ChannelSpec, r: Readout, psi_s: np.ndarray
) -> tuple[float, float]:
    """(p_F, p_R): forward readout probability vs the same readout in the
    time-reversed protocol, p_R = |Mt_R(r) Theta psi|^2.  Equal by the
    anti-unitarity of the reversal."""
    psi_s = qubit.normalize(np.asarray(psi_s, dtype=complex))
    p_f = float(np.linalg.norm(forward_operator(spec, r) @ psi_s) ** 2)
    p_r = float(
        np.linalg.norm(reversed_operator(spec, r) @ qubit.time_reverse_state(psi_s)) ** 2
    )
    return p_f, p_r
