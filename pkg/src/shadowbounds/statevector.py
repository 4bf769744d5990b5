"""Exact statevector engine for small monitored circuits.

Amplitude layout: site 0 is the least significant bit of the flat index,
so amplitudes.reshape([2]*L) has site L-1 on axis 0. A two-qubit gate on
(site, site+1) acts on the joint index k = 2*b[site+1] + b[site]; a SWAP
therefore maps |b_site=1, b_site+1=0> to |b_site=0, b_site+1=1>.

Measurement outcomes are labeled by the Z eigenvalue: +1 for bit 0,
-1 for bit 1.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalError

__all__ = [
    "Statevector",
    "init_product_state",
    "apply_two_qubit_gate",
    "measure_qubit_born",
    "project_qubit",
    "reduced_density_matrix",
]

MAX_QUBITS = 24
_UNITARITY_TOL = 1e-8
_BRANCH_TOL = 1e-14


class Statevector:
    """Dense complex amplitudes for ``n_qubits`` sites."""

    __slots__ = ("n_qubits", "amplitudes")

    def __init__(self, n_qubits: int, amplitudes: np.ndarray):
        self.n_qubits = n_qubits
        self.amplitudes = amplitudes

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def init_product_state(n_qubits: int, bits: list[int] | None = None) -> Statevector:
    """Computational basis product state, |0...0> unless ``bits`` is given.

    ``bits[i]`` is the bit of site i.
    """
    if not 2 <= n_qubits <= MAX_QUBITS:
        raise ValueError(f"n_qubits must be in [2, {MAX_QUBITS}], got {n_qubits}")
    amps = np.zeros(2**n_qubits, dtype=complex)
    index = 0
    if bits is not None:
        if len(bits) != n_qubits:
            raise ValueError("bits length must equal n_qubits")
        for site, b in enumerate(bits):
            if b not in (0, 1):
                raise ValueError("bits must be 0 or 1")
            index |= b << site
    amps[index] = 1.0
    return Statevector(n_qubits, amps)


def _check_unitary(gate: np.ndarray, dim: int) -> None:
    if gate.shape != (dim, dim):
        raise ValueError(f"gate must be {dim}x{dim}, got {gate.shape}")
    err = np.max(np.abs(gate.conj().T @ gate - np.eye(dim)))
    if err > _UNITARITY_TOL:
        raise ValueError(f"gate is not unitary: deviation {err:.3e}")


def apply_two_qubit_gate(
    state: Statevector, site: int, gate: np.ndarray, check_unitary: bool = True
) -> None:
    """Apply a 4x4 unitary to (site, site+1) in place.

    ``check_unitary=False`` skips the per-gate check when the caller has
    already validated a whole batch.
    """
    n = state.n_qubits
    if not 0 <= site <= n - 2:
        raise ValueError(f"site must be in [0, {n - 2}], got {site}")
    if check_unitary:
        _check_unitary(gate, 4)
    hi, lo = 2 ** (n - site - 2), 2**site
    theta = state.amplitudes.reshape(hi, 4, lo)
    # matmul broadcasts the 4x4 over the leading axis
    state.amplitudes = np.matmul(gate, theta).reshape(-1)


def _prob_plus(state: Statevector, site: int) -> float:
    m = state.amplitudes.reshape(2 ** (state.n_qubits - site - 1), 2, 2**site)
    return float(np.sum(np.abs(m[:, 0, :]) ** 2))


def project_qubit(state: Statevector, site: int, outcome: int) -> float:
    """Project ``site`` onto outcome (+1 or -1), renormalize, return the
    Born probability of that branch."""
    n = state.n_qubits
    if not 0 <= site < n:
        raise ValueError(f"site must be in [0, {n - 1}], got {site}")
    if outcome not in (1, -1):
        raise ValueError("outcome must be +1 or -1")
    m = state.amplitudes.reshape(2 ** (n - site - 1), 2, 2**site)
    keep = 0 if outcome == 1 else 1
    prob = float(np.sum(np.abs(m[:, keep, :]) ** 2))
    if prob < _BRANCH_TOL:
        raise NumericalError(
            f"projection of site {site} onto outcome {outcome:+d} has "
            f"probability {prob:.3e}"
        )
    m[:, 1 - keep, :] = 0.0
    state.amplitudes = (m / np.sqrt(prob)).reshape(-1)
    return prob


def measure_qubit_born(
    state: Statevector, site: int, gen: np.random.Generator
) -> tuple[int, float]:
    """Born-sample a Z measurement of ``site``; project and renormalize.

    Returns (outcome, probability of the sampled branch). Raises
    NumericalError if the state norm is corrupted (both branches have
    probability below 1e-14).
    """
    p_plus = _prob_plus(state, site)
    if p_plus < _BRANCH_TOL and 1.0 - p_plus < _BRANCH_TOL:
        raise NumericalError(
            f"both branches of site {site} have probability < {_BRANCH_TOL}"
        )
    outcome = 1 if gen.random() < p_plus else -1
    # clamp: the unsampled branch may have prob 0 exactly
    prob = p_plus if outcome == 1 else 1.0 - p_plus
    m = state.amplitudes.reshape(2 ** (state.n_qubits - site - 1), 2, 2**site)
    m[:, (1 if outcome == 1 else 0), :] = 0.0
    state.amplitudes = (m / np.sqrt(prob)).reshape(-1)
    return outcome, prob


def reduced_density_matrix(state: Statevector, sites: list[int]) -> np.ndarray:
    """Reduced density matrix of one or two sites.

    The first listed site is the most significant tensor factor, matching
    np.kron(op_first, op_second) ordering on the output indices.
    """
    n = state.n_qubits
    if not 1 <= len(sites) <= 2:
        raise ValueError("sites must list one or two qubits")
    if len(set(sites)) != len(sites):
        raise ValueError("sites must be distinct")
    for s in sites:
        if not 0 <= s < n:
            raise ValueError(f"site {s} out of range")
    t = state.amplitudes.reshape([2] * n)  # axis i holds site n-1-i
    axes = [n - 1 - s for s in sites]
    rest = [a for a in range(n) if a not in axes]
    t = np.transpose(t, axes + rest).reshape(2 ** len(sites), -1)
    return t @ t.conj().T
