"""Deterministic random streams, Haar gate sampling, measurement-basis ensembles.

Every random draw in a protocol run comes from a stream addressed by
(master_seed, path). Streams with distinct paths are statistically
independent, and the same address always replays the same sequence, so a
full experiment is reproducible from its seed alone and paired comparisons
(same trajectory at different bond limits) come for free.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations, product
from math import factorial

import numpy as np

__all__ = [
    "RandomStream",
    "BasisEnsemble",
    "sample_haar_unitary",
    "sample_haar_unitaries",
    "sample_shadow_basis",
    "moment_check",
    "random_density_matrix",
]


@dataclass(frozen=True)
class RandomStream:
    """Address of a deterministic random stream.

    Parameters
    ----------
    master_seed : int
        Experiment-level seed.
    path : tuple of int
        Position in the stream tree, e.g. (run_index, purpose_tag).

    The generator is counter-based (Philox keyed through SeedSequence spawn
    keys), so child streams never overlap and derivation order is irrelevant.
    """

    master_seed: int
    path: tuple[int, ...] = field(default=())

    def child(self, *indices: int) -> "RandomStream":
        """Sub-stream at ``path + indices``."""
        return RandomStream(self.master_seed, self.path + tuple(indices))

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        seq = np.random.SeedSequence(self.master_seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(seq))


def sample_haar_unitaries(dim: int, count: int, gen: np.random.Generator) -> np.ndarray:
    """Draw ``count`` Haar-distributed unitaries of size ``dim``.

    QR of a complex Ginibre matrix, with the R diagonal phases pushed into Q
    so the distribution is exactly Haar rather than QR-convention biased.
    Returns an array of shape (count, dim, dim).

    Note: one batched call consumes the stream in a different order than
    ``count`` single-unitary calls; use one convention per stream.
    """
    if dim not in (2, 4):
        raise ValueError(f"unsupported unitary dimension {dim}, expected 2 or 4")
    if count < 1:
        raise ValueError("count must be positive")
    g = gen.normal(size=(count, dim, dim)) + 1j * gen.normal(size=(count, dim, dim))
    q, r = np.linalg.qr(g)
    d = np.einsum("...ii->...i", r)
    q *= (d / np.abs(d))[:, None, :]
    return q


def sample_haar_unitary(dim: int, gen: np.random.Generator) -> np.ndarray:
    """Single Haar-distributed unitary of size ``dim`` (2 or 4)."""
    return sample_haar_unitaries(dim, 1, gen)[0]


_I2 = np.eye(2, dtype=complex)
_H = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / np.sqrt(2.0)
_S = np.array([[1.0, 0.0], [0.0, 1.0j]], dtype=complex)


def _canonical_phase(u: np.ndarray) -> np.ndarray:
    # fix global phase: first clearly nonzero entry made real positive
    # (clifford entries have magnitude 0, 1/sqrt(2) or 1, so 0.5 separates)
    idx = int(np.argmax(np.abs(u) > 0.5))
    phase = u.flat[idx] / abs(u.flat[idx])
    return u / phase


def _clifford_group() -> list[np.ndarray]:
    # close {H, S} under multiplication modulo global phase; 24 elements
    def key(u):
        return tuple(np.round(_canonical_phase(u).ravel(), 9).tolist())

    seen = {key(_I2): _I2.copy()}
    frontier = [_I2.copy()]
    while frontier:
        nxt = []
        for u in frontier:
            for g in (_H, _S):
                v = _canonical_phase(g @ u)
                k = key(v)
                if k not in seen:
                    seen[k] = v
                    nxt.append(v)
        frontier = nxt
    group = list(seen.values())
    if len(group) != 24:  # group order is a hard fact, not a tolerance
        raise RuntimeError(f"clifford closure produced {len(group)} elements")
    return group


PAULI_BASES_3 = "pauli_bases_3"
CLIFFORD_24 = "clifford_24"


@dataclass(frozen=True)
class BasisEnsemble:
    """Finite set of single-qubit rotations used before a Z measurement.

    ``pauli_bases_3`` rotates Z measurements onto X, Y, Z: the minimal
    ensemble for unbiased single-qubit shadows. ``clifford_24`` is the full
    single-qubit Clifford group (a 3-design), needed when third-moment
    identities such as the shadow-entropy variance formula are used.
    """

    name: str
    unitaries: tuple[np.ndarray, ...]

    @staticmethod
    def pauli_bases() -> "BasisEnsemble":
        # measuring X <-> apply H; measuring Y <-> apply H S^dag; Z <-> identity
        return BasisEnsemble(
            PAULI_BASES_3, (_I2.copy(), _H.copy(), _H @ _S.conj().T)
        )

    @staticmethod
    def single_qubit_clifford() -> "BasisEnsemble":
        return BasisEnsemble(CLIFFORD_24, tuple(_clifford_group()))

    @staticmethod
    def from_name(name: str) -> "BasisEnsemble":
        if name == PAULI_BASES_3:
            return BasisEnsemble.pauli_bases()
        if name == CLIFFORD_24:
            return BasisEnsemble.single_qubit_clifford()
        raise ValueError(f"unknown ensemble {name!r}")

    def __len__(self) -> int:
        return len(self.unitaries)


def sample_shadow_basis(
    ensemble: BasisEnsemble, gen: np.random.Generator
) -> tuple[int, np.ndarray]:
    """Uniformly drawn (index, unitary) from the ensemble."""
    idx = int(gen.integers(len(ensemble)))
    return idx, ensemble.unitaries[idx]


def moment_check(ensemble: BasisEnsemble, n: int) -> float:
    """Worst-case deviation of first-column moments from the Haar value.

    For index tuples i, j in {0,1}^n the Haar average of
    prod_k U[i_k,0] conj(U[j_k,0]) equals C_n * sum over permutations pi of
    prod_k delta(i_k, j_pi(k)) with C_n = 1/(n+1)! for a single qubit.
    Returns max |ensemble average - Haar value| over all index tuples.
    The Clifford ensemble is a 3-design, so the deviation vanishes for
    n <= 3; the Pauli-basis ensemble matches only n = 1.
    """
    if n < 1 or n > 3:
        raise ValueError("moment order must be 1, 2, or 3")
    cols = np.stack([u[:, 0] for u in ensemble.unitaries])  # (|E|, 2)
    c_n = 1.0 / factorial(n + 1)
    worst = 0.0
    perms = list(permutations(range(n)))
    for idx in product((0, 1), repeat=n):
        for jdx in product((0, 1), repeat=n):
            terms = np.ones(len(cols), dtype=complex)
            for k in range(n):
                terms = terms * cols[:, idx[k]] * np.conj(cols[:, jdx[k]])
            avg = terms.mean()
            haar = c_n * sum(
                all(idx[k] == jdx[p[k]] for k in range(n)) for p in perms
            )
            worst = max(worst, abs(avg - haar))
    return worst


def random_density_matrix(dim: int, gen: np.random.Generator) -> np.ndarray:
    """Full-rank random density matrix (normalized Wishart of a Ginibre draw)."""
    g = gen.normal(size=(dim, dim)) + 1j * gen.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
