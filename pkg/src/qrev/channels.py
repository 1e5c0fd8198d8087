"""Measurement-operator families and their time-reversed counterparts.

Four families of generalized qubit measurements are supported, each a tagged
spec dataclass:

* GaussianPosition -- a spin coupled to the momentum of a continuous-variable
  meter read out in position.  For readout ybar the Kraus operator is
  diagonal in the S = sz/2 eigenbasis,

      M_F(ybar) = (2 pi delta^2)^(-1/4) exp(-(ybar - k tau S)^2 / 4 delta^2),

  and the time-reversed operator is the same matrix at the sign-flipped
  record, Mt_R(ybar) = M_F(-ybar).

* GaussianMomentum -- the complementary coupling (spin to meter position,
  momentum readout).  Identical matrix forms; kept as a distinct tag because
  the meter-pointer symmetry under reversal differs.

* Dichotomous -- a qubit meter prepared in sqrt(gamma)|0> + sqrt(1-gamma)|1>
  entangled by a c-NOT; outcomes 0/1 give

      M_F(0) = diag(sqrt(gamma), sqrt(1-gamma)),   M_F(1) = M_F(0) with the
      roles of the diagonal entries exchanged,

  and reversal exchanges the two outcomes: Mt_R(r) = M_F(1-r).

* Fluorescence -- spontaneous emission into a field mode projected onto a
  coherent state alpha, with eps = gamma1*dt:

      M_F(alpha)  = e^{-|alpha|^2/2} [ |0><0| + sqrt(1-eps)|1><1|
                                       + conj(alpha) sqrt(eps) |0><1| ],
      Mt_R(alpha) = e^{-|alpha|^2/2} [ |1><1| + sqrt(1-eps)|0><0|
                                       - alpha sqrt(eps) |1><0| ].

  Heterodyne quadrature records (I, Q) map to the coherent amplitude via
  Re(alpha) = I sqrt(dt/2), Im(alpha) = -Q sqrt(dt/2).

Every family satisfies a POVM (over)completeness relation; the residual
checker integrates M^dag M over readouts with a family-appropriate
quadrature and reports the max-norm deviation from the identity.  Reversal
of an arbitrary invertible operator is available through the rank-2 rule

      reverse_rank2(M) = det(M^dag) (M^dag)^-1,

which for 2x2 matrices is the adjugate of M^dag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ParameterError, RankDeficient, VariantMismatch

GAUSS_NORM_POWER = -0.25  # (2 pi delta^2)^(-1/4)


@dataclass(frozen=True)
class GaussianPosition:
    """Meter width delta, coupling k, interaction time tau; spin values +-1/2."""

    delta: float
    k: float
    tau: float

    def __post_init__(self):
        if not (self.delta > 0 and self.tau > 0):
            raise ParameterError("Gaussian family needs delta > 0 and tau > 0")
        if not np.isfinite([self.delta, self.k, self.tau]).all():
            raise ParameterError("Gaussian parameters must be finite")


@dataclass(frozen=True)
class GaussianMomentum(GaussianPosition):
    pass


@dataclass(frozen=True)
class Dichotomous:
    gamma: float

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0):
            raise ParameterError(f"gamma = {self.gamma} outside [0, 1]")


@dataclass(frozen=True)
class Fluorescence:
    """Relaxation rate gamma1 and step dt; per-step emission weight eps = gamma1*dt."""

    gamma1: float
    dt: float

    def __post_init__(self):
        if self.gamma1 < 0:
            raise ParameterError("gamma1 must be >= 0")
        if self.dt <= 0:
            raise ParameterError("dt must be > 0")
        if self.epsilon > 1.0:
            raise ParameterError(f"eps = gamma1*dt = {self.epsilon} exceeds 1")

    @property
    def epsilon(self) -> float:
        return self.gamma1 * self.dt


ChannelSpec = Union[GaussianPosition, GaussianMomentum, Dichotomous, Fluorescence]


@dataclass(frozen=True)
class Continuous:
    ybar: float

    def __post_init__(self):
        if not math.isfinite(self.ybar):
            raise ParameterError("readout must be finite")


@dataclass(frozen=True)
class Binary:
    outcome: int

    def __post_init__(self):
        if self.outcome not in (0, 1):
            raise ParameterError(f"binary outcome {self.outcome} not in {{0, 1}}")


@dataclass(frozen=True)
class Heterodyne:
    i_val: float
    q_val: float

    def __post_init__(self):
        if not (math.isfinite(self.i_val) and math.isfinite(self.q_val)):
            raise ParameterError("quadrature readouts must be finite")


Readout = Union[Continuous, Binary, Heterodyne]


def alpha_from_iq(i_val: float, q_val: float, dt: float) -> complex:
    """Coherent amplitude from normalized quadratures."""
    return (i_val - 1j * q_val) * np.sqrt(dt / 2)


def _gaussian_matrix(spec: GaussianPosition, ybar: float) -> np.ndarray:
    norm = (2 * np.pi * spec.delta**2) ** GAUSS_NORM_POWER
    kt = spec.k * spec.tau
    g_up = np.exp(-((ybar - kt / 2) ** 2) / (4 * spec.delta**2))
    g_dn = np.exp(-((ybar + kt / 2) ** 2) / (4 * spec.delta**2))
    return norm * np.array([[g_up, 0], [0, g_dn]], dtype=complex)


def _dichotomous_matrix(gamma: float, outcome: int) -> np.ndarray:
    if outcome == 0:
        return np.array([[np.sqrt(gamma), 0], [0, np.sqrt(1 - gamma)]], dtype=complex)
    return np.array([[np.sqrt(1 - gamma), 0], [0, np.sqrt(gamma)]], dtype=complex)


def _fluorescence_forward(spec: Fluorescence, alpha: complex) -> np.ndarray:
    eps = spec.epsilon
    pref = np.exp(-abs(alpha) ** 2 / 2)
    return pref * np.array(
        [[1, np.conj(alpha) * np.sqrt(eps)], [0, np.sqrt(1 - eps)]], dtype=complex
    )


def _fluorescence_reversed(spec: Fluorescence, alpha: complex) -> np.ndarray:
    eps = spec.epsilon
    pref = np.exp(-abs(alpha) ** 2 / 2)
    return pref * np.array(
        [[np.sqrt(1 - eps), 0], [-alpha * np.sqrt(eps), 1]], dtype=complex
    )


def _require(spec, readout, readout_type):
    if not isinstance(readout, readout_type):
        raise VariantMismatch(
            f"{type(spec).__name__} expects a {readout_type.__name__} readout, "
            f"got {type(readout).__name__}"
        )


def forward_operator(spec: ChannelSpec, r: Readout) -> np.ndarray:
    """Kraus operator of the forward measurement for readout r."""
    if isinstance(spec, (GaussianPosition, GaussianMomentum)):
        _require(spec, r, Continuous)
        return _gaussian_matrix(spec, r.ybar)
    if isinstance(spec, Dichotomous):
        _require(spec, r, Binary)
        return _dichotomous_matrix(spec.gamma, r.outcome)
    if isinstance(spec, Fluorescence):
        _require(spec, r, Heterodyne)
        return _fluorescence_forward(spec, alpha_from_iq(r.i_val, r.q_val, spec.dt))
    raise VariantMismatch(f"unknown channel spec {type(spec).__name__}")


def reversed_operator(spec: ChannelSpec, r: Readout) -> np.ndarray:
    """Time-reversed Kraus operator for the same readout r.

    Gaussian families flip the sign of the record, the dichotomous family
    exchanges the outcomes, and fluorescence has its own explicit matrix.
    """
    if isinstance(spec, (GaussianPosition, GaussianMomentum)):
        _require(spec, r, Continuous)
        return _gaussian_matrix(spec, -r.ybar)
    if isinstance(spec, Dichotomous):
        _require(spec, r, Binary)
        return _dichotomous_matrix(spec.gamma, 1 - r.outcome)
    if isinstance(spec, Fluorescence):
        _require(spec, r, Heterodyne)
        return _fluorescence_reversed(spec, alpha_from_iq(r.i_val, r.q_val, spec.dt))
    raise VariantMismatch(f"unknown channel spec {type(spec).__name__}")


def reverse_rank2(m: np.ndarray) -> np.ndarray:
    """det(M^dag) (M^dag)^-1, the reversal rule for any rank-2 qubit operator.

    For a 2x2 matrix this is the adjugate of M^dag, evaluated directly for
    numerical exactness.  Projective (singular) operators are rejected: the
    strong-measurement limit is not reversible.
    """
    m = np.asarray(m, dtype=complex)
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    scale = float(np.max(np.abs(m)))
    if abs(det) < 1e-14 * scale**2 or scale == 0.0:
        raise RankDeficient(f"|det| = {abs(det):.3e} too small; operator is not rank 2")
    md = m.conj().T
    return np.array([[md[1, 1], -md[0, 1]], [-md[1, 0], md[0, 0]]], dtype=complex)


@dataclass(frozen=True)
class QuadratureConfig:
    """Grids for the completeness integrals.

    gauss_half_width=None uses 10*(delta + |k| tau), wide enough that the
    truncated tail mass is far below the discretization error.  The polar
    grid for the coherent-state plane uses a midpoint rule in both radius
    and angle; e^(-R^2) at the default radius 6 is ~1e-16.
    """

    gauss_half_width: float | None = None
    gauss_points: int = 4001
    polar_radius: float = 6.0
    polar_radial: int = 400
    polar_angular: int = 400

    def __post_init__(self):
        if self.gauss_half_width is not None and self.gauss_half_width <= 0:
            raise ParameterError("gauss_half_width must be positive")
        if min(self.gauss_points, self.polar_radial, self.polar_angular) < 2:
            raise ParameterError("quadrature grids need at least 2 points")
        if self.polar_radius <= 0:
            raise ParameterError("polar_radius must be positive")


def _dichotomous_residual(gamma: float) -> float:
    # Grouped so the two-outcome sum cancels exactly in floating point:
    # each diagonal entry of E(0) + E(1) - I is (gamma - 1) + (1 - gamma).
    diag = (gamma - 1.0) + (1.0 - gamma)
    return abs(diag)


def _gaussian_residual(spec: GaussianPosition, quad: QuadratureConfig, use_reversed: bool) -> float:
    half = quad.gauss_half_width
    if half is None:
        half = 10.0 * (spec.delta + abs(spec.k) * spec.tau)
    ys = np.linspace(-half, half, quad.gauss_points)
    build = reversed_operator if use_reversed else forward_operator
    total = np.zeros((2, 2), dtype=complex)
    weights = np.full(quad.gauss_points, ys[1] - ys[0])
    weights[0] /= 2
    weights[-1] /= 2
    for y, w in zip(ys, weights):
        m = build(spec, Continuous(float(y)))
        total += w * (m.conj().T @ m)
    return float(np.max(np.abs(total - np.eye(2))))


def _fluorescence_residual(spec: Fluorescence, quad: QuadratureConfig, use_reversed: bool) -> float:
    # integral over the alpha plane with measure d^2 alpha / pi, polar midpoint
    build = reversed_operator if use_reversed else forward_operator
    dr = quad.polar_radius / quad.polar_radial
    dth = 2 * np.pi / quad.polar_angular
    rs = (np.arange(quad.polar_radial) + 0.5) * dr
    ths = (np.arange(quad.polar_angular) + 0.5) * dth
    total = np.zeros((2, 2), dtype=complex)
    for r in rs:
        cell = r * dr * dth / np.pi
        ring = np.zeros((2, 2), dtype=complex)
        for th in ths:
            alpha = r * np.exp(1j * th)
            i_val = alpha.real / np.sqrt(spec.dt / 2)
            q_val = -alpha.imag / np.sqrt(spec.dt / 2)
            m = build(spec, Heterodyne(float(i_val), float(q_val)))
            ring += m.conj().T @ m
        total += cell * ring
    return float(np.max(np.abs(total - np.eye(2))))


def completeness_residual(
    spec: ChannelSpec,
    quad: QuadratureConfig | None = None,
    use_reversed: bool = False,
) -> float:
    """Max-norm deviation of sum/integral of M^dag M from the identity.

    The residual is reported even when large; callers decide thresholds.
    """
    quad = quad or QuadratureConfig()
    if isinstance(spec, Dichotomous):
        return _dichotomous_residual(spec.gamma)
    if isinstance(spec, (GaussianPosition, GaussianMomentum)):
        return _gaussian_residual(spec, quad, use_reversed)
    if isinstance(spec, Fluorescence):
        return _fluorescence_residual(spec, quad, use_reversed)
    raise VariantMismatch(f"unknown channel spec {type(spec).__name__}")
