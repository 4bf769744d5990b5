"""Classical shadow construction for one- and two-qubit probes.

A single-qubit snapshot with rotation U and Z outcome z (|z=+1> = |0>)
gives the unbiased state estimate

    rho_shadow = 3 U^dag |z><z| U - 1,

whose average over bases and Born-weighted outcomes reproduces rho exactly
for any ensemble whose basis average is unitarily 1-designed on the
measurement column (both shipped ensembles qualify). Multi-site snapshots
are tensor products of single-site ones; probes are limited to two sites.

Tensor-factor order follows the engines: the first listed site is the most
significant factor of the joint index.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .rng import BasisEnsemble

__all__ = [
    "ShadowRecord",
    "single_qubit_shadow",
    "multi_qubit_shadow",
    "sample_shadow_outcomes",
    "build_shadow",
    "shadow_average_oracle",
]

_I2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class ShadowRecord:
    """One snapshot: per-site basis indices, rotations, outcomes, and the
    reconstructed shadow matrix (eigenvalues in {2, -1} per site, trace 1)."""

    basis_ids: tuple[int, ...]
    unitaries: tuple[np.ndarray, ...]
    outcomes: tuple[int, ...]
    matrix: np.ndarray


def single_qubit_shadow(unitary: np.ndarray, outcome: int) -> np.ndarray:
    """Shadow estimate 3 U^dag |z><z| U - 1 for a single site."""
    if outcome not in (1, -1):
        raise ValueError("outcome must be +1 or -1")
    z = 0 if outcome == 1 else 1
    column = unitary.conj().T[:, z]
    return 3.0 * np.outer(column, unitary[z, :]) - _I2


def multi_qubit_shadow(
    unitaries: tuple[np.ndarray, ...], outcomes: tuple[int, ...]
) -> np.ndarray:
    """Tensor product of single-site shadows; at most two sites."""
    if not 1 <= len(unitaries) <= 2:
        raise ValueError("shadow probes are limited to one or two sites")
    if len(unitaries) != len(outcomes):
        raise ValueError("one outcome per unitary required")
    m = single_qubit_shadow(unitaries[0], outcomes[0])
    for u, z in zip(unitaries[1:], outcomes[1:]):
        m = np.kron(m, single_qubit_shadow(u, z))
    return m


def _rotated_probabilities(rho: np.ndarray, unitaries) -> np.ndarray:
    """Joint Z-outcome distribution of (U_1 x ... ) rho (.)^dag, flattened
    with the first site most significant; clipped and renormalized."""
    u = unitaries[0]
    for extra in unitaries[1:]:
        u = np.kron(u, extra)
    probs = np.real(np.einsum("ij,jk,ik->i", u, rho, u.conj()))
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def sample_shadow_outcomes(
    rho: np.ndarray, unitaries: tuple[np.ndarray, ...], uniforms: np.ndarray
) -> tuple[int, ...]:
    """Sample Z outcomes of the rotated state from given uniform variates.

    Sites are sampled sequentially (marginal, then conditional), consuming
    one uniform per site with the rule outcome=+1 iff u < P(+1 | earlier).
    Reusing the same uniforms on a second state gives the coupled draw a
    common-random-number estimator needs.
    """
    n = len(unitaries)
    if len(uniforms) != n:
        raise ValueError("one uniform variate per site required")
    probs = _rotated_probabilities(rho, unitaries)
    outcomes = []
    offset = 0
    block = len(probs)
    for k in range(n):
        block //= 2
        p_plus = probs[offset: offset + block].sum()
        p_total = probs[offset: offset + 2 * block].sum()
        cond = p_plus / p_total if p_total > 0 else 0.5
        if uniforms[k] < cond:
            outcomes.append(1)
        else:
            outcomes.append(-1)
            offset += block
    return tuple(outcomes)


def build_shadow(
    rho: np.ndarray,
    ensemble: BasisEnsemble,
    basis_ids: tuple[int, ...],
    uniforms: np.ndarray,
) -> ShadowRecord:
    """Deterministic snapshot of ``rho`` given basis choices and uniforms."""
    unitaries = tuple(ensemble.unitaries[i] for i in basis_ids)
    outcomes = sample_shadow_outcomes(rho, unitaries, uniforms)
    return ShadowRecord(
        basis_ids=tuple(basis_ids),
        unitaries=unitaries,
        outcomes=outcomes,
        matrix=multi_qubit_shadow(unitaries, outcomes),
    )


def shadow_average_oracle(rho: np.ndarray, ensemble: BasisEnsemble) -> np.ndarray:
    """Exact ensemble-and-outcome average of the shadow estimator.

    Enumerates every basis combination and outcome string with its Born
    weight; equals rho up to floating point for an unbiased ensemble. The
    probe size is read off rho (2x2 or 4x4).
    """
    dim = rho.shape[0]
    if rho.shape != (dim, dim) or dim not in (2, 4):
        raise ValueError("rho must be 2x2 or 4x4")
    n_sites = 1 if dim == 2 else 2
    total = np.zeros((dim, dim), dtype=complex)
    weight = 1.0 / len(ensemble) ** n_sites
    for ids in product(range(len(ensemble)), repeat=n_sites):
        unitaries = tuple(ensemble.unitaries[i] for i in ids)
        u = unitaries[0]
        for extra in unitaries[1:]:
            u = np.kron(u, extra)
        rotated = u @ rho @ u.conj().T
        for heads in product((1, -1), repeat=n_sites):
            index = sum((0 if z == 1 else 1) << (n_sites - 1 - k)
                        for k, z in enumerate(heads))
            born = float(np.real(rotated[index, index]))
            total += (weight * born) * multi_qubit_shadow(unitaries, heads)
    return total
