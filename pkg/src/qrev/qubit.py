"""Exact 2x2 linear algebra for a single qubit.

States are numpy arrays: pure states as length-2 complex vectors in the
computational basis {|0>, |1>}, density matrices as 2x2 complex Hermitian
matrices, Bloch vectors as length-3 reals with

    rho = (I + x sx + y sy + z sz) / 2,

so |0><0| sits at z = +1.  The anti-unitary time reversal for spin-1/2 is
fixed to Theta = i sy K (K = complex conjugation), which gives

    Theta|0> = -|1>,   Theta|1> = |0>,   Theta^2 = -1,

and conjugation Theta M Theta^-1 = (i sy) conj(M) (i sy)^dag flips every
spin component:  n.sigma -> -n.sigma.

The singular value decomposition of a 2x2 matrix is computed in closed form
from the eigen-decomposition of M^dag M; no iterative solver is involved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)

# unitary part of Theta = i sy K
THETA_UNITARY = 1j * SIGMA_Y

KET_0 = np.array([1, 0], dtype=complex)
KET_1 = np.array([0, 1], dtype=complex)


def ket(a, b) -> np.ndarray:
    """Column vector a|0> + b|1| as a length-2 complex array."""
    v = np.array([a, b], dtype=complex)
    if not np.all(np.isfinite(v.view(float))):
        raise ParameterError("state amplitudes must be finite")
    return v


def normalize(psi: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(psi)
    if n == 0:
        raise ParameterError("cannot normalize the zero vector")
    return psi / n


def pure_from_angles(theta: float, phi: float) -> np.ndarray:
    """cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>."""
    return np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)], dtype=complex)


def density(psi: np.ndarray) -> np.ndarray:
    """Projector |psi><psi| of a (normalized) pure state."""
    return np.outer(psi, psi.conj())


def inner(phi: np.ndarray, psi: np.ndarray) -> complex:
    return complex(np.vdot(phi, psi))


def fidelity_pure(phi: np.ndarray, psi: np.ndarray) -> float:
    """|<phi|psi>|^2 for pure states."""
    return abs(inner(phi, psi)) ** 2


def fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity of two qubit density matrices."""
    ev, vec = np.linalg.eigh(rho)
    sq = (vec * np.sqrt(np.clip(ev, 0, None))) @ vec.conj().T
    m = sq @ sigma @ sq
    mev = np.clip(np.linalg.eigvalsh((m + m.conj().T) / 2), 0, None)
    return float(np.sum(np.sqrt(mev)) ** 2)


def states_equal(a: np.ndarray, b: np.ndarray, atol: float = 1e-12, up_to_phase: bool = True) -> bool:
    """Compare pure states, by default ignoring the global phase.

    The exact-phase variant (up_to_phase=False) is needed when the sign
    bookkeeping of the time reversal convention itself is under test.
    """
    if up_to_phase:
        return abs(1 - fidelity_pure(normalize(a), normalize(b))) <= atol
    return bool(np.allclose(a, b, atol=atol, rtol=0))


def bloch_from_density(rho: np.ndarray) -> np.ndarray:
    """Bloch vector (x, y, z) of a density matrix, z(|0><0|) = +1."""
    return np.array(
        [
            np.trace(rho @ SIGMA_X).real,
            np.trace(rho @ SIGMA_Y).real,
            np.trace(rho @ SIGMA_Z).real,
        ]
    )


def density_from_bloch(b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.shape != (3,):
        raise ParameterError("Bloch vector must have three components")
    n2 = float(b @ b)
    if n2 > 1 + 1e-10:
        raise ParameterError(f"Bloch vector norm {np.sqrt(n2):.12g} exceeds 1")
    return (IDENTITY + b[0] * SIGMA_X + b[1] * SIGMA_Y + b[2] * SIGMA_Z) / 2


def validate_density(rho: np.ndarray, atol: float = 1e-12) -> None:
    """Raise unless rho is a valid qubit density matrix."""
    if rho.shape != (2, 2):
        raise ParameterError("density matrix must be 2x2")
    if abs(np.trace(rho) - 1) > atol:
        raise ParameterError(f"trace {np.trace(rho)} != 1")
    if not np.allclose(rho, rho.conj().T, atol=atol, rtol=0):
        raise ParameterError("density matrix is not Hermitian")
    if np.min(np.linalg.eigvalsh((rho + rho.conj().T) / 2)) < -atol:
        raise ParameterError("density matrix has a negative eigenvalue")


def time_reverse_state(psi: np.ndarray) -> np.ndarray:
    """Theta|psi> = i sy conj(psi).  Applying twice returns -|psi>."""
    return THETA_UNITARY @ psi.conj()


def time_reverse_operator(m: np.ndarray) -> np.ndarray:
    """Theta M Theta^-1 = (i sy) conj(M) (i sy)^dag; sends n.sigma to -n.sigma."""
    return THETA_UNITARY @ m.conj() @ THETA_UNITARY.conj().T


def time_reverse_density(rho: np.ndarray) -> np.ndarray:
    """Theta rho Theta^-1; negates the Bloch vector."""
    return THETA_UNITARY @ rho.conj() @ THETA_UNITARY.conj().T


@dataclass(frozen=True)
class Svd2:
    """M = u @ diag(d) @ v_dag with unitary u, v_dag and d[0] >= d[1] >= 0."""

    u: np.ndarray
    d: np.ndarray
    v_dag: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.u @ np.diag(self.d) @ self.v_dag


def _orth_complement(v: np.ndarray) -> np.ndarray:
    # unit vector orthogonal to unit v, fixed gauge
    return np.array([-np.conj(v[1]), np.conj(v[0])], dtype=complex)


def svd2(m: np.ndarray) -> Svd2:
    """Closed-form SVD of a 2x2 complex matrix.

    Eigen-decomposition of H = M^dag M: eigenvalues from trace/determinant,
    eigenvectors from the characteristic rows; degenerate or rank-deficient
    cases fall back to an explicit orthonormal completion.  Only the
    reconstruction u diag(d) v_dag = m is gauge-fixed; u and v_dag carry
    arbitrary phases in degenerate sectors.
    """
    m = np.asarray(m, dtype=complex)
    h = m.conj().T @ m
    a = h[0, 0].real
    c = h[1, 1].real
    b = h[0, 1]
    tr = a + c
    disc = np.sqrt(max((a - c) ** 2 + 4 * (abs(b) ** 2), 0.0))
    lam_p = max((tr + disc) / 2, 0.0)
    lam_m = max((tr - disc) / 2, 0.0)
    d = np.array([np.sqrt(lam_p), np.sqrt(lam_m)])

    if abs(b) <= 1e-15 * max(tr, 1e-300):
        v0 = KET_0.copy() if a >= c else KET_1.copy()
    else:
        # rows of (H - lam I) give the orthogonal direction; pick the better
        cand1 = np.array([b, lam_p - a], dtype=complex)
        cand2 = np.array([lam_p - c, np.conj(b)], dtype=complex)
        v0 = cand1 if np.linalg.norm(cand1) >= np.linalg.norm(cand2) else cand2
        v0 = v0 / np.linalg.norm(v0)
    v1 = _orth_complement(v0)

    scale = d[0] if d[0] > 0 else 1.0
    u_cols = []
    for dv, vv in ((d[0], v0), (d[1], v1)):
        if dv > 1e-15 * scale:
            u_cols.append((m @ vv) / dv)
        else:
            u_cols.append(None)
    if u_cols[0] is None:
        u_cols[0] = KET_0.copy()
    if u_cols[1] is None:
        u_cols[1] = _orth_complement(u_cols[0])
    u = np.column_stack(u_cols)
    v_dag = np.vstack([v0.conj(), v1.conj()])
    return Svd2(u=u, d=d, v_dag=v_dag)
