"""Bond-limited matrix product state engine.

Open-boundary MPS in mixed-canonical form: tensors left of ``center`` are
left isometries, tensors right of it are right isometries, and the center
tensor carries the norm. The orthogonality center is swept with the gate
position, so projective measurements and bond truncations act locally.

Physical index order matches the statevector engine: a two-qubit gate on
(site, site+1) acts on the joint index k = 2*b[site+1] + b[site], and
memory scales as n_qubits * chi^2.

Truncation policy: a gate is applied exactly (the bond may exceed
chi_max), measurement may lower the rank, and ``truncate_bond`` then keeps
the top chi_max singular values with no magnitude threshold, accumulating
the discarded squared weight.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg as sla

from .errors import NumericalError

__all__ = [
    "MpsState",
    "init_product_mps",
    "move_center",
    "apply_two_qubit_gate_mps",
    "force_projective_outcome",
    "truncate_bond",
    "gate_measure_truncate",
    "mps_reduced_density_matrix",
    "to_statevector",
    "bond_entropy",
]

_DEGENERATE_WEIGHT = 1e-12
_GATE_PERM = np.array([0, 2, 1, 3])  # k = 2*b[site+1]+b[site] -> m = 2*b[site]+b[site+1]


class MpsState:
    """Tensors[i] has shape (left_bond, 2, right_bond); boundary bonds are 1."""

    __slots__ = ("n_qubits", "chi_max", "tensors", "center",
                 "discarded_weight", "degenerate_forcing")

    def __init__(self, n_qubits: int, chi_max: int, tensors: list[np.ndarray]):
        self.n_qubits = n_qubits
        self.chi_max = chi_max
        self.tensors = tensors
        self.center = 0
        self.discarded_weight = 0.0
        self.degenerate_forcing = False

    def bond_dimensions(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]


def init_product_mps(
    n_qubits: int, chi_max: int, bits: list[int] | None = None
) -> MpsState:
    """Product state |bits> (default |0...0>) with bond limit ``chi_max``."""
    if n_qubits < 2:
        raise ValueError("n_qubits must be at least 2")
    if chi_max < 1:
        raise ValueError("chi_max must be positive")
    if bits is None:
        bits = [0] * n_qubits
    if len(bits) != n_qubits:
        raise ValueError("bits length must equal n_qubits")
    tensors = []
    for b in bits:
        t = np.zeros((1, 2, 1), dtype=complex)
        t[0, b, 0] = 1.0
        tensors.append(t)
    return MpsState(n_qubits, chi_max, tensors)


def _svd(matrix: np.ndarray, context: str):
    try:
        return sla.svd(matrix, full_matrices=False, check_finite=False)
    except np.linalg.LinAlgError:
        try:
            return sla.svd(matrix, full_matrices=False, check_finite=False,
                           lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise NumericalError(f"SVD failed at {context}") from exc


def move_center(state: MpsState, site: int) -> None:
    """Sweep the orthogonality center to ``site`` with QR/RQ steps."""
    if not 0 <= site < state.n_qubits:
        raise ValueError(f"site {site} out of range")
    t = state.tensors
    while state.center < site:
        c = state.center
        dl, _, dr = t[c].shape
        q, r = sla.qr(t[c].reshape(dl * 2, dr), mode="economic",
                      check_finite=False)
        t[c] = q.reshape(dl, 2, -1)
        nxt = t[c + 1]
        t[c + 1] = (r @ nxt.reshape(nxt.shape[0], -1)).reshape(
            -1, 2, nxt.shape[2])
        state.center = c + 1
    while state.center > site:
        c = state.center
        dl, _, dr = t[c].shape
        r, q = sla.rq(t[c].reshape(dl, 2 * dr), mode="economic",
                      check_finite=False)
        t[c] = q.reshape(-1, 2, dr)
        prv = t[c - 1]
        t[c - 1] = (prv.reshape(-1, prv.shape[2]) @ r).reshape(
            prv.shape[0], 2, -1)
        state.center = c - 1


def _contract_bond(state: MpsState, site: int) -> tuple[np.ndarray, int, int]:
    """Two-site tensor (dl, 4, dr) around the bond, joint index 2*b_i + b_i+1."""
    a, b = state.tensors[site], state.tensors[site + 1]
    dl, dr = a.shape[0], b.shape[2]
    theta = a.reshape(dl * 2, -1) @ b.reshape(-1, 2 * dr)
    return theta.reshape(dl, 4, dr), dl, dr


def _split_bond(
    state: MpsState, site: int, theta: np.ndarray, dl: int, dr: int,
    keep: int | None, to_right: bool,
) -> float:
    """SVD-split theta back into two tensors; returns the discarded weight."""
    u, s, vh = _svd(theta.reshape(dl * 2, 2 * dr), f"bond {site}")
    cut = 0.0
    if keep is not None and len(s) > keep:
        cut = float(np.sum(s[keep:] ** 2))
        u, s, vh = u[:, :keep], s[:keep], vh[:keep]
        s = s / np.sqrt(np.sum(s**2))
    if to_right:
        state.tensors[site] = u.reshape(dl, 2, -1)
        state.tensors[site + 1] = (s[:, None] * vh).reshape(-1, 2, dr)
        state.center = site + 1
    else:
        state.tensors[site] = (u * s).reshape(dl, 2, -1)
        state.tensors[site + 1] = vh.reshape(-1, 2, dr)
        state.center = site
    return cut


def apply_two_qubit_gate_mps(
    state: MpsState, site: int, gate: np.ndarray, check_unitary: bool = True
) -> None:
    """Apply a 4x4 unitary to (site, site+1) exactly.

    No truncation happens here: the bond may exceed chi_max until
    ``truncate_bond`` is called. The center ends at site+1.
    """
    if not 0 <= site <= state.n_qubits - 2:
        raise ValueError(f"site {site} out of range for a bond")
    if check_unitary:
        err = np.max(np.abs(gate.conj().T @ gate - np.eye(4)))
        if err > 1e-8:
            raise ValueError(f"gate is not unitary: deviation {err:.3e}")
    if not site <= state.center <= site + 1:
        move_center(state, site)
    theta, dl, dr = _contract_bond(state, site)
    gate_m = gate[np.ix_(_GATE_PERM, _GATE_PERM)]
    theta = np.matmul(gate_m, theta)
    _split_bond(state, site, theta, dl, dr, keep=None, to_right=True)


def force_projective_outcome(state: MpsState, site: int, outcome: int) -> float:
    """Project ``site`` onto a Z outcome already sampled elsewhere.

    Returns the branch weight <psi|P|psi> of the forced branch. A weight
    below 1e-12 is clamped to 1e-12 in the return value and flags the run
    as degenerate; the state itself is renormalized by the true weight.
    """
    if outcome not in (1, -1):
        raise ValueError("outcome must be +1 or -1")
    move_center(state, site)
    t = state.tensors[site].copy()
    t[:, (1 if outcome == 1 else 0), :] = 0.0
    weight = float(np.sum(np.abs(t) ** 2))
    if weight <= 0.0:
        raise NumericalError(
            f"forced outcome {outcome:+d} on site {site} has zero weight"
        )
    state.tensors[site] = t / np.sqrt(weight)
    if weight < _DEGENERATE_WEIGHT:
        state.degenerate_forcing = True
        return _DEGENERATE_WEIGHT
    return weight


def truncate_bond(state: MpsState, site: int) -> float:
    """Truncate the (site, site+1) bond to chi_max, renormalizing.

    Keeps the top chi_max singular values exactly (no magnitude threshold);
    the discarded squared weight is returned and accumulated on the state.
    """
    if not 0 <= site <= state.n_qubits - 2:
        raise ValueError(f"site {site} out of range for a bond")
    if not site <= state.center <= site + 1:
        move_center(state, site)
    theta, dl, dr = _contract_bond(state, site)
    cut = _split_bond(state, site, theta, dl, dr, keep=state.chi_max,
                      to_right=True)
    state.discarded_weight += cut
    return cut


def gate_measure_truncate(
    state: MpsState,
    site: int,
    gate: np.ndarray,
    forced: list[tuple[int, int]],
    to_right: bool = True,
    check_unitary: bool = True,
) -> tuple[list[float], float]:
    """Fused gate + forced measurements + bond truncation.

    Exactly equivalent to apply_two_qubit_gate_mps, then
    force_projective_outcome for each (site, outcome) in ``forced`` (sites
    must be ``site`` or ``site+1``), then truncate_bond, but with a single
    SVD. Returns (branch weights in forced order, discarded weight).
    """
    if check_unitary:
        err = np.max(np.abs(gate.conj().T @ gate - np.eye(4)))
        if err > 1e-8:
            raise ValueError(f"gate is not unitary: deviation {err:.3e}")
    if not site <= state.center <= site + 1:
        move_center(state, site)
    theta, dl, dr = _contract_bond(state, site)
    gate_m = gate[np.ix_(_GATE_PERM, _GATE_PERM)]
    theta = np.matmul(gate_m, theta)
    weights = []
    if forced:
        theta4 = theta.reshape(dl, 2, 2, dr)
        for q, outcome in forced:
            if q not in (site, site + 1):
                raise ValueError(f"forced site {q} not under the gate at {site}")
            if outcome not in (1, -1):
                raise ValueError("outcome must be +1 or -1")
            idx = [slice(None)] * 4
            idx[1 + (q - site)] = 1 if outcome == 1 else 0
            theta4[tuple(idx)] = 0.0
            weight = float(np.sum(np.abs(theta4) ** 2))
            if weight <= 0.0:
                raise NumericalError(
                    f"forced outcome {outcome:+d} on site {q} has zero weight"
                )
            theta4 /= np.sqrt(weight)
            if weight < _DEGENERATE_WEIGHT:
                state.degenerate_forcing = True
                weight = _DEGENERATE_WEIGHT
            weights.append(weight)
        theta = theta4.reshape(dl, 4, dr)
    cut = _split_bond(state, site, theta, dl, dr, keep=state.chi_max,
                      to_right=to_right)
    state.discarded_weight += cut
    return weights, cut


def mps_reduced_density_matrix(state: MpsState, sites: list[int]) -> np.ndarray:
    """Reduced density matrix of boundary sites: [0], [L-1], or [0, L-1].

    Index order matches the statevector engine: the first listed site is
    the most significant tensor factor.
    """
    n = state.n_qubits
    if sites not in ([0], [n - 1], [0, n - 1]):
        raise ValueError(
            f"only boundary probes [0], [{n - 1}], [0, {n - 1}] are supported"
        )
    move_center(state, 0)
    t = state.tensors
    first = t[0][0]  # (2, bond)
    if sites == [0]:
        return first @ first.conj().T
    if sites == [n - 1]:
        # carry M[a, a'] = sum over left configs of psi_left[a] conj(psi_left[a'])
        g = first.T @ first.conj()
        for i in range(1, n - 1):
            a0, a1 = t[i][:, 0, :], t[i][:, 1, :]
            g = a0.T @ g @ a0.conj() + a1.T @ g @ a1.conj()
        last = t[n - 1][:, :, 0]  # (bond, 2)
        return last.T @ g @ last.conj()
    # pair probe: carry one bond matrix per (s, t) pair of site-0 indices
    cross = [[np.outer(first[s], first[t].conj()) for t in range(2)]
             for s in range(2)]
    for i in range(1, n - 1):
        a0, a1 = t[i][:, 0, :], t[i][:, 1, :]
        for s in range(2):
            for tt in range(2):
                g = cross[s][tt]
                cross[s][tt] = a0.T @ g @ a0.conj() + a1.T @ g @ a1.conj()
    last = t[n - 1][:, :, 0]  # (bond, 2)
    rho = np.empty((4, 4), dtype=complex)
    for s in range(2):
        for tt in range(2):
            block = last.T @ cross[s][tt] @ last.conj()  # (u, v)
            rho[2 * s: 2 * s + 2, 2 * tt: 2 * tt + 2] = block
    return rho


def to_statevector(state: MpsState) -> np.ndarray:
    """Dense amplitudes with the statevector layout (site 0 = LSB); tests only."""
    n = state.n_qubits
    if n > 20:
        raise ValueError("dense conversion limited to 20 qubits")
    v = state.tensors[0]
    for i in range(1, n):
        v = np.tensordot(v, state.tensors[i], axes=(v.ndim - 1, 0))
    v = v.reshape([2] * n)
    return np.transpose(v, list(range(n))[::-1]).reshape(-1)


def bond_entropy(state: MpsState, site: int) -> float:
    """Von Neumann entropy of the Schmidt spectrum across bond (site, site+1)."""
    move_center(state, site)
    a = state.tensors[site]
    s = sla.svdvals(a.reshape(-1, a.shape[2]), check_finite=False)
    p = s**2
    p = p[p > 1e-16]
    return float(-np.sum(p * np.log(p)))
