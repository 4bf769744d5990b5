"""Simulation-informed decoding of single-qubit purity from shadows.

The classical estimate rho_c fixes a rotation V taking its Bloch vector
onto +Z. Purity is parameterized by Bloch length: Tr[rho^2] = (1+gamma^2)/2.
In the decoded frame the overlap with the +Z eigenstate reads off

    (1 + gamma_qc) / 2 = <e+| V rho V^dag |e+>,

and gamma_qc <= gamma holds state by state (a projection of the Bloch
vector onto a fixed axis), with equality when the Bloch vectors of rho and
rho_c are parallel. The observable W = 2 V^dag |e+><e+| V - 1 has
Tr[rho_shadow W] averaging to gamma_qc, so the decoded purity is directly
shadow-measurable. Here |e+> is the +Z computational state |0>.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .entropy import LogDensity

__all__ = [
    "Decoder",
    "bloch_vector",
    "build_decoder",
    "gamma_qc",
    "decoder_weight",
    "s_qc_via_decoder",
]

_PAULIS = (
    np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
)
_ALIGNMENT_TOL = 1e-14


def bloch_vector(rho: np.ndarray) -> np.ndarray:
    """(x, y, z) expectation values of the Paulis."""
    if rho.shape != (2, 2):
        raise ValueError("expected a single-qubit state")
    return np.array([float(np.real(np.trace(rho @ p))) for p in _PAULIS])


@dataclass(frozen=True)
class Decoder:
    """Rotation V aligning the classical Bloch vector with +Z, and the
    classical Bloch length gamma_cc."""

    unitary: np.ndarray
    gamma_cc: float


def build_decoder(rho_c: np.ndarray) -> Decoder:
    """Decoder for a classical single-qubit estimate.

    V rotates bloch(rho_c) onto +Z (identity when rho_c is maximally
    mixed); the rotation axis is bloch(rho_c) x z. rho_c should be floored
    first so gamma_cc < 1 keeps downstream logs finite.
    """
    b = bloch_vector(rho_c)
    gamma_cc = float(np.linalg.norm(b))
    if gamma_cc < _ALIGNMENT_TOL:
        return Decoder(np.eye(2, dtype=complex), gamma_cc)
    direction = b / gamma_cc
    cos_t = float(np.clip(direction[2], -1.0, 1.0))
    axis = np.array([direction[1], -direction[0], 0.0])  # direction x z
    norm = np.linalg.norm(axis)
    if norm < _ALIGNMENT_TOL:
        if cos_t > 0.0:
            return Decoder(np.eye(2, dtype=complex), gamma_cc)
        # antiparallel: rotate by pi about x
        return Decoder(-1.0j * _PAULIS[0], gamma_cc)
    axis /= norm
    theta = np.arccos(cos_t)
    pauli_axis = sum(a * p for a, p in zip(axis, _PAULIS))
    v = np.cos(theta / 2) * np.eye(2, dtype=complex) \
        - 1.0j * np.sin(theta / 2) * pauli_axis
    return Decoder(v, gamma_cc)


def gamma_qc(rho: np.ndarray, decoder: Decoder) -> float:
    """Decoded Bloch overlap 2 <e+|V rho V^dag|e+> - 1; at most bloch
    length of rho, with equality for parallel Bloch vectors."""
    v = decoder.unitary
    rotated = v @ rho @ v.conj().T
    return float(2.0 * np.real(rotated[0, 0]) - 1.0)


def decoder_weight(decoder: Decoder) -> np.ndarray:
    """Observable W = 2 V^dag |e+><e+| V - 1 with eigenvalues +-1 and trace 0;
    Tr[rho_shadow W] averages to gamma_qc over snapshots."""
    v = decoder.unitary
    col = v.conj().T[:, 0]
    return 2.0 * np.outer(col, v[0, :]) - np.eye(2, dtype=complex)


def s_qc_via_decoder(rho: np.ndarray, log_c: LogDensity) -> float:
    """s_qc computed from the decoder's two-outcome picture.

    The decoder diagonalizes the floored classical estimate, whose
    eigenvalues are (1 +- gamma_cc)/2; averaging -log of them under the
    decoded outcome distribution of rho reproduces -Tr[rho log rho_c]
    exactly.
    """
    if log_c.dim != 2:
        raise ValueError("decoder route applies to single qubits")
    decoder = build_decoder(log_c.matrix)
    v = decoder.unitary
    rotated = v @ rho @ v.conj().T
    p_plus = float(np.real(rotated[0, 0]))
    p_minus = float(np.real(rotated[1, 1]))
    lam_plus = (1.0 + decoder.gamma_cc) / 2.0
    lam_minus = (1.0 - decoder.gamma_cc) / 2.0
    return -(p_plus * np.log(lam_plus) + p_minus * np.log(lam_minus))
