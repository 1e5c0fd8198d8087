"""Arrow of time when the observer only records coarse-grained outcomes.

An imperfect measurement is declared as a partition: each coarse outcome r
stands for a finite set of fine Kraus operators {M_rs}.  Conditioning on r
averages over the hidden index s,

    rho_r = sum_s M_rs rho M_rs^dag / P(r),

so an initially pure state generally ends mixed.  The forward probability
of a coarse record sums over all hidden histories; the backward probability
treats the final mixture as an ensemble of pure branches with definite
histories, reverses each branch along its own history, and weighs the
branch probabilities by the probability of drawing that branch:

    P_B({r}) = sum_{s-paths} P[back | Theta rho_branch] * P(branch | record).

With one fine operator per coarse outcome both definitions collapse to the
perfect-measurement forward/backward probabilities.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import qubit
from .arrow import ArrowStats, _stats
from .errors import EmptyEnsemble, ParameterError, UndefinedArrow, WeightMismatch

IDENTITY = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class CoarsePartition:
    """Coarse outcomes, each holding its tuple of fine Kraus operators."""

    fine_ops: tuple[tuple[np.ndarray, ...], ...]

    def __post_init__(self):
        if len(self.fine_ops) == 0 or any(len(group) == 0 for group in self.fine_ops):
            raise ParameterError("every coarse outcome needs at least one fine operator")
        total = sum(
            m.conj().T @ m for group in self.fine_ops for m in group
        )
        if not np.allclose(total, IDENTITY, atol=1e-10, rtol=0):
            raise ParameterError("fine operators do not satisfy the completeness relation")

    @property
    def n_outcomes(self) -> int:
        return len(self.fine_ops)

    def group(self, r: int) -> tuple[np.ndarray, ...]:
        return self.fine_ops[r]


def perfect_partition(ops: Sequence[np.ndarray]) -> CoarsePartition:
    """One fine operator per coarse outcome (no hidden index)."""
    return CoarsePartition(tuple((np.asarray(m, dtype=complex),) for m in ops))


@dataclass(frozen=True)
class BranchEnsemble:
    """Pure branches of a coarse record: weight, state, and hidden history."""

    weights: np.ndarray
    states: tuple[np.ndarray, ...]
    s_histories: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.weights) == 0:
            raise EmptyEnsemble("branch ensemble is empty")
        if abs(float(np.sum(self.weights)) - 1.0) > 1e-12:
            raise WeightMismatch(f"branch weights sum to {np.sum(self.weights)!r}, not 1")


def _effective(partition: CoarsePartition, u_step: np.ndarray | None):
    if u_step is None:
        return partition.fine_ops
    return tuple(tuple(m @ u_step for m in group) for group in partition.fine_ops)


def imperfect_forward_probability(
    partition: CoarsePartition,
    outcomes: Sequence[int],
    rho0: np.ndarray,
    u_step: np.ndarray | None = None,
) -> float:
    """Probability of the coarse record: sum over all hidden histories.

    The hidden sum factorizes per step, so the unnormalized state is pushed
    through rho -> sum_s M_rs rho M_rs^dag and traced at the end.
    """
    ops = _effective(partition, u_step)
    rho = np.asarray(rho0, dtype=complex)
    for r in outcomes:
        rho = sum(m @ rho @ m.conj().T for m in ops[r])
    return float(np.trace(rho).real)


def branch_ensemble(
    partition: CoarsePartition,
    outcomes: Sequence[int],
    psi0: np.ndarray,
    u_step: np.ndarray | None = None,
) -> BranchEnsemble:
    """Enumerate the pure branches of a coarse record from a pure start."""
    ops = _effective(partition, u_step)
    psi0 = qubit.normalize(np.asarray(psi0, dtype=complex))
    weights = []
    states = []
    histories = []
    ranges = [range(len(ops[r])) for r in outcomes]
    for s_path in itertools.product(*ranges):
        psi = psi0
        for r, s in zip(outcomes, s_path):
            psi = ops[r][s] @ psi
        w = float(np.vdot(psi, psi).real)
        if w == 0.0:
            continue
        weights.append(w)
        states.append(qubit.density(psi / math.sqrt(w)))
        histories.append(tuple(s_path))
    total = sum(weights)
    if total == 0.0:
        raise UndefinedArrow("coarse record has zero probability")
    return BranchEnsemble(
        weights=np.array(weights) / total,
        states=tuple(states),
        s_histories=tuple(histories),
    )


def imperfect_backward_probability(
    partition: CoarsePartition,
    outcomes: Sequence[int],
    ensemble: BranchEnsemble,
    u_step: np.ndarray | None = None,
) -> float:
    """Backward probability: branch-weighted retrodiction along each history."""
    ops = _effective(partition, u_step)
    total = 0.0
    for w, rho_branch, s_path in zip(ensemble.weights, ensemble.states, ensemble.s_histories):
        sigma = qubit.time_reverse_density(rho_branch)
        for r, s in zip(reversed(outcomes), reversed(s_path)):
            m = ops[r][s]
            sigma = m.conj().T @ sigma @ m
        total += float(w) * float(np.trace(sigma).real)
    return total


def imperfect_log_arrow(
    partition: CoarsePartition,
    outcomes: Sequence[int],
    psi0: np.ndarray,
    u_step: np.ndarray | None = None,
) -> ArrowStats:
    """log of the forward/backward probability ratio for a coarse record."""
    psi0 = qubit.normalize(np.asarray(psi0, dtype=complex))
    p_f = imperfect_forward_probability(partition, outcomes, qubit.density(psi0), u_step)
    if p_f == 0.0:
        raise UndefinedArrow("coarse record has zero forward probability")
    ens = branch_ensemble(partition, outcomes, psi0, u_step)
    p_b = imperfect_backward_probability(partition, outcomes, ens, u_step)
    if p_b == 0.0:
        return _stats(math.inf)
    return _stats(math.log(p_f) - math.log(p_b))
