"""Weak values, their behaviour under time reversal, and the canonical
weak-measurement protocol probabilities.

The weak value of an observable S between pre-selection |psi_s> and
post-selection <psi_f| is

    S_w = <psi_f| S |psi_s> / <psi_f|psi_s>,

generally complex and unbounded when the boundary states approach
orthogonality.  Time-reversing both boundary states maps it to -conj(S_w).

The meter is never simulated: for a Gaussian pointer of width delta coupled
with strength k for time tau, the two conditional pointer states are real
Gaussians centered at +-(k tau)/2 whose overlap is exp(-(k tau)^2 / 8 delta^2),
the only meter quantity the protocol probabilities need.  The post-selected
pointer wavefunction is itself a Gaussian centered at the complex shift
k*tau*S_w, exposed here for both the position-readout and momentum-readout
variants.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import qubit
from .errors import OrthogonalPostselection, ParameterError

ORTHOGONALITY_FLOOR = 1e-12
ANOMALY_FLAG = 1e6


@dataclass(frozen=True)
class MeterOverlapModel:
    """Gaussian meter: coupling k, interaction time tau, pointer width delta."""

    k: float
    tau: float
    delta: float

    def __post_init__(self):
        if self.delta <= 0 or self.tau <= 0:
            raise ParameterError("meter needs delta > 0 and tau > 0")

    @property
    def overlap(self) -> float:
        """<psi_0|psi_1> of the two shifted real Gaussian pointer states."""
        return math.exp(-((self.k * self.tau) ** 2) / (8 * self.delta**2))


@dataclass(frozen=True)
class WeakValueResult:
    s_w: complex
    overlap: complex
    meter_shift: complex | None = None


def weak_value(
    s_op: np.ndarray,
    psi_s: np.ndarray,
    psi_f: np.ndarray,
    meter: MeterOverlapModel | None = None,
) -> WeakValueResult:
    """S_w = <psi_f|S|psi_s>/<psi_f|psi_s>, with the complex pointer shift
    k*tau*S_w attached when a meter model is supplied.

    Anomalous values (|S_w| beyond any eigenvalue) are the point of the
    construction and are returned as-is; magnitudes above 1e6 trigger an
    ill-conditioning warning rather than clipping.
    """
    psi_s = qubit.normalize(np.asarray(psi_s, dtype=complex))
    psi_f = qubit.normalize(np.asarray(psi_f, dtype=complex))
    overlap = complex(np.vdot(psi_f, psi_s))
    if abs(overlap) <= ORTHOGONALITY_FLOOR:
        raise OrthogonalPostselection(
            f"|<psi_f|psi_s>| = {abs(overlap):.3e}; weak value diverges"
        )
    s_w = complex(np.vdot(psi_f, s_op @ psi_s)) / overlap
    if abs(s_w) > ANOMALY_FLAG:
        warnings.warn(
            f"|S_w| = {abs(s_w):.3e}: near-orthogonal post-selection", stacklevel=2
        )
    shift = meter.k * meter.tau * s_w if meter is not None else None
    return WeakValueResult(s_w=s_w, overlap=overlap, meter_shift=shift)


def time_reversed_weak_value(s_op: np.ndarray, psi_s: np.ndarray, psi_f: np.ndarray) -> complex:
    """Weak value between the time-reversed boundary states.

    Computed directly from Theta|psi_s>, Theta|psi_f> and cross-checked
    against the identity -conj(S_w); a violation means the operator algebra
    is inconsistent and raises.
    """
    fwd = weak_value(s_op, psi_s, psi_f).s_w
    rev = weak_value(
        s_op, qubit.time_reverse_state(psi_s), qubit.time_reverse_state(psi_f)
    ).s_w
    if abs(rev - (-np.conj(fwd))) > 1e-12 * max(1.0, abs(fwd)):
        raise AssertionError(
            f"time-reversed weak value {rev} != -conj({fwd}); broken reversal algebra"
        )
    return rev


def weak_protocol_probabilities(
    psi_s: np.ndarray, psi_f: np.ndarray, meter: MeterOverlapModel
) -> tuple[float, float, float]:
    """(p_F, p_B, p_R) for the Gaussian weak-measurement protocol.

    p_F: post-select |psi_f> after the forward interaction,
         |eps_0 |psi_0> + eps_1 |psi_1>|^2 with eps_0 = conj(alpha_f) alpha_s,
         eps_1 = conj(beta_f) beta_s and real pointer overlap chi.
    p_B: run from Theta|psi_f> and post-select Theta|psi_s>; the pointer
         assignments exchange, giving |eps_1 |psi_0> + eps_0 |psi_1>|^2.
    p_R: readout probability of the time-reversed protocol, computed from
         the Theta-transformed amplitudes.
    All three coincide for real Gaussian pointers.
    """
    psi_s = qubit.normalize(np.asarray(psi_s, dtype=complex))
    psi_f = qubit.normalize(np.asarray(psi_f, dtype=complex))
    chi = meter.overlap
    a_s, b_s = psi_s
    a_f, b_f = psi_f
    eps0 = np.conj(a_f) * a_s
    eps1 = np.conj(b_f) * b_s
    p_f = abs(eps0) ** 2 + abs(eps1) ** 2 + 2 * chi * (np.conj(eps0) * eps1).real

    # backward: initialize Theta|psi_f>, post-select onto Theta|psi_s>
    ts = qubit.time_reverse_state(psi_s)
    tf = qubit.time_reverse_state(psi_f)
    c0 = np.conj(ts[0]) * tf[0]  # pairs with pointer |psi_0>
    c1 = np.conj(ts[1]) * tf[1]
    p_b = abs(c0) ** 2 + abs(c1) ** 2 + 2 * chi * (np.conj(c0) * c1).real

    # reverse protocol: evolve Theta|psi_s> under the sign-flipped coupling,
    # |0> now displaces the pointer to psi_1 and |1> to psi_0
    d0 = np.conj(tf[1]) * ts[1]  # amplitude on pointer psi_0 (from |1>)
    d1 = np.conj(tf[0]) * ts[0]  # amplitude on pointer psi_1 (from |0>)
    p_r = abs(d0) ** 2 + abs(d1) ** 2 + 2 * chi * (np.conj(d0) * d1).real
    return float(p_f), float(p_b), float(p_r)


def pointer_wavefunction(
    xbar,
    meter: MeterOverlapModel,
    psi_s: np.ndarray,
    psi_f: np.ndarray,
    time_reversed: bool = False,
    variant: str = "position",
):
    """Post-selected meter wavefunction at pointer reading xbar.

    Forward: overlap * N * exp(-(xbar - k tau S_w)^2 / 4 delta^2) in either
    readout variant.  Time-reversed: the shift becomes k tau S~_w with
    S~_w = -conj(S_w); in the position variant the Gaussian argument is
    (xbar + k tau S~_w), in the momentum variant (xbar - k tau S~_w).
    Satisfies psi~(x) = conj(psi(x)) (position) and psi~(p) = conj(psi(-p))
    (momentum).
    """
    if variant not in ("position", "momentum"):
        raise ParameterError(f"unknown pointer variant {variant!r}")
    xbar = np.asarray(xbar, dtype=float)
    norm = (2 * np.pi * meter.delta**2) ** -0.25
    kt = meter.k * meter.tau
    if not time_reversed:
        res = weak_value(s_op=np.diag([0.5, -0.5]).astype(complex), psi_s=psi_s, psi_f=psi_f)
        amp = complex(np.vdot(qubit.normalize(psi_f), qubit.normalize(psi_s)))
        arg = xbar - kt * res.s_w
    else:
        ts = qubit.time_reverse_state(qubit.normalize(np.asarray(psi_s, dtype=complex)))
        tf = qubit.time_reverse_state(qubit.normalize(np.asarray(psi_f, dtype=complex)))
        res = weak_value(s_op=np.diag([0.5, -0.5]).astype(complex), psi_s=ts, psi_f=tf)
        amp = complex(np.vdot(tf, ts))
        arg = (xbar + kt * res.s_w) if variant == "position" else (xbar - kt * res.s_w)
    return amp * norm * np.exp(-(arg**2) / (4 * meter.delta**2))
