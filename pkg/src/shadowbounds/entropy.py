"""Entropy estimators built from cross-correlating shadows with a classical
simulation estimate.

Central quantities, for a probe state rho and a classical (possibly
truncated) estimate rho_c of it:

    S      = -Tr[rho log rho]              exact entropy
    S_QC   = -Tr[rho log rho_c]            quantum-classical cross entropy
    S_SC   = -Tr[rho_shadow log rho_c]     shadow-classical, E[S_SC] = S_QC
    S_CC   = -Tr[rho_c log rho_c]          classical self entropy

S_QC - S is a relative entropy, hence nonnegative: S_QC (and so the shadow
average) upper bounds S run by run. Monotonicity of relative entropy under
partial trace turns differences of two-site and one-site values into a
lower bound. All logs are natural.

rho_c is regularized before taking logs: eigenvalues are clamped to a
configurable floor and (by default) renormalized, keeping every estimator
finite while preserving the bound direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Sequence

import numpy as np

from .accumulators import RunningStat
from .rng import BasisEnsemble
from .shadows import ShadowRecord, multi_qubit_shadow, single_qubit_shadow

__all__ = [
    "von_neumann_entropy",
    "LogDensity",
    "safe_log_density",
    "s_qc",
    "s_sc",
    "s_cc",
    "relative_entropy",
    "conditional_bound",
    "BoundEstimate",
    "double_bound",
    "depolarize",
    "partial_trace",
    "renyi_bounds",
    "shadow_variance",
    "shadow_entropy_statistics",
    "s_sc_variance_reduced",
    "scalar_cross_correlation",
]

DEFAULT_FLOOR = 1e-6


def von_neumann_entropy(rho: np.ndarray) -> float:
    """Exact -Tr[rho log rho]; tiny negative eigenvalues are clipped."""
    w = np.linalg.eigvalsh(rho)
    if w.min() < -1e-8:
        raise ValueError(f"matrix has eigenvalue {w.min():.3e}, not a state")
    w = w[w > 1e-16]
    return float(-np.sum(w * np.log(w)))


@dataclass(frozen=True)
class LogDensity:
    """Floored classical estimate and its (negative) matrix logarithm.

    ``matrix`` is the regularized density matrix actually used in the logs:
    eigenvalues clamped to at least ``floor`` and, when ``normalized``,
    rescaled to unit trace. ``neg_log`` is -log(matrix), positive
    semidefinite whenever the floored eigenvalues stay at most 1.
    """

    matrix: np.ndarray
    neg_log: np.ndarray
    eigenvalues: np.ndarray
    floor: float
    normalized: bool

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def safe_log_density(
    rho_c: np.ndarray, floor: float = DEFAULT_FLOOR, normalize: bool = True
) -> LogDensity:
    """Regularized -log of a classical density estimate.

    Eigenvalues below ``floor`` (including rounding-induced negatives) are
    clamped to it; ``normalize`` rescales the spectrum to unit trace so the
    result stays a state. The floored estimate is itself a valid density
    matrix, so -Tr[rho log floored] keeps its upper-bound property exactly.
    """
    if floor <= 0.0 or floor >= 1.0:
        raise ValueError("floor must be in (0, 1)")
    w, v = np.linalg.eigh(rho_c)
    w = np.clip(w, floor, None)
    if normalize:
        w = w / w.sum()
    matrix = (v * w) @ v.conj().T
    neg_log = (v * (-np.log(w))) @ v.conj().T
    return LogDensity(matrix=matrix, neg_log=neg_log, eigenvalues=w,
                      floor=floor, normalized=normalize)


def s_qc(rho: np.ndarray, log_c: LogDensity) -> float:
    """-Tr[rho log rho_c] for an exact probe state."""
    if rho.shape[0] != log_c.dim:
        raise ValueError("dimension mismatch between rho and log density")
    return float(np.real(np.einsum("ij,ji->", rho, log_c.neg_log)))


def s_sc(shadow: np.ndarray, log_c: LogDensity) -> float:
    """-Tr[shadow log rho_c] for a single snapshot; unbiased for s_qc."""
    if shadow.shape[0] != log_c.dim:
        raise ValueError("dimension mismatch between shadow and log density")
    return float(np.real(np.einsum("ij,ji->", shadow, log_c.neg_log)))


def s_cc(log_c: LogDensity) -> float:
    """Entropy of the floored classical estimate itself."""
    w = log_c.eigenvalues
    return float(-np.sum(w * np.log(w)))


def relative_entropy(rho: np.ndarray, log_c: LogDensity) -> float:
    """D(rho || floored rho_c) = s_qc - S >= 0 up to eigensolver noise."""
    return s_qc(rho, log_c) - von_neumann_entropy(rho)


def conditional_bound(
    shadow_ab: np.ndarray, log_ab: LogDensity,
    shadow_a: np.ndarray, log_a: LogDensity,
) -> float:
    """Single-run conditional bound value S_SC(AB) - S_SC(A).

    Relative entropy is monotone under partial trace, so the run average
    of this difference upper bounds the conditional entropy
    E[S(AB)] - E[S(A)]; rearranged it yields the lower half of the
    two-sided bound assembled by ``double_bound``.
    """
    if log_ab.dim != 4 or log_a.dim != 2:
        raise ValueError("expected a two-site AB probe and a one-site A probe")
    return s_sc(shadow_ab, log_ab) - s_sc(shadow_a, log_a)


@dataclass(frozen=True)
class BoundEstimate:
    """Monte Carlo estimate of a bound: mean, its standard error, count."""

    mean: float
    standard_error: float
    count: int


def double_bound(
    s_sc_a: Sequence[float], s_sc_ab: Sequence[float]
) -> tuple[BoundEstimate, BoundEstimate]:
    """Two-sided entropy bounds from paired one-site and two-site snapshots.

    upper.mean  = E_r[S_SC(A)]            >= E[S(A)]
    lower.mean  = upper.mean - E_r[S_SC(AB)] <= E[S(A)]

    The pair mean subtracted in the lower bound is clamped at zero (the
    entropy it estimates is nonnegative), which keeps lower <= upper even
    when the AB statistics are pure noise. Standard errors use the paired
    per-run differences, so common shadow noise cancels.
    """
    if len(s_sc_a) != len(s_sc_ab):
        raise ValueError("paired samples required")
    if len(s_sc_a) < 2:
        raise ValueError("at least two runs required for a standard error")
    upper_stat, diff_stat, ab_stat = RunningStat(), RunningStat(), RunningStat()
    for a, ab in zip(s_sc_a, s_sc_ab):
        upper_stat.push(a)
        ab_stat.push(ab)
        diff_stat.push(a - ab)
    upper = BoundEstimate(upper_stat.mean, upper_stat.standard_error,
                          upper_stat.count)
    ab_mean = max(ab_stat.mean, 0.0)
    lower = BoundEstimate(upper_stat.mean - ab_mean,
                          diff_stat.standard_error, diff_stat.count)
    return lower, upper


def depolarize(matrix: np.ndarray, eps: float) -> np.ndarray:
    """Depolarizing channel (1-eps) M + eps Tr[M]/dim * 1.

    Trace preserving for any input; for a two-site probe, tracing out one
    site afterwards equals applying the same channel with the reduced
    dimension to the traced input, so shadow and classical estimates can be
    depolarized consistently on both AB and A.
    """
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must be in [0, 1]")
    dim = matrix.shape[0]
    tr = complex(np.trace(matrix))
    return (1.0 - eps) * matrix + (eps / dim) * tr * np.eye(dim)


def partial_trace(rho: np.ndarray, keep: int) -> np.ndarray:
    """Partial trace of a two-site 4x4 operator; keep=0 keeps the first
    (most significant) factor, keep=1 the second."""
    if rho.shape != (4, 4):
        raise ValueError("expected a 4x4 two-site operator")
    t = rho.reshape(2, 2, 2, 2)
    if keep == 0:
        return np.trace(t, axis1=1, axis2=3)
    if keep == 1:
        return np.trace(t, axis1=0, axis2=2)
    raise ValueError("keep must be 0 or 1")


def renyi_bounds(e_ssc: float, order: int) -> tuple[float, float]:
    """Corollaries for Renyi order n >= 2 from the shadow upper bound:
    returns (upper bound on the order-n entropy, lower bound on Tr[rho^n])."""
    if order < 2:
        raise ValueError("Renyi order must be at least 2")
    return e_ssc, math.exp(-(order - 1) * e_ssc)


def shadow_variance(rho: np.ndarray, log_c: LogDensity) -> float:
    """Exact per-snapshot variance of s_sc for a single qubit under a
    3-design ensemble (e.g. the 24 single-qubit Cliffords):

        var = 3/2 (v_m + v_1) + 1/2 delta^2

    with v_m, v_1 the variances of log rho_c in rho and in the maximally
    mixed state, and delta = Tr[(rho - 1/2) log rho_c]. Diverges as
    [log floor]^2 when rho_c approaches a pure state, which is the cost of
    an unbounded logarithm in the estimator.
    """
    if rho.shape != (2, 2) or log_c.dim != 2:
        raise ValueError("variance formula applies to single qubits only")
    lg = -log_c.neg_log
    lg2 = lg @ lg
    tr_l = float(np.real(np.trace(lg)))
    tr_l2 = float(np.real(np.trace(lg2)))
    v_1 = 0.5 * tr_l2 - (0.5 * tr_l) ** 2
    m_rho = float(np.real(np.einsum("ij,ji->", rho, lg)))
    v_m = float(np.real(np.einsum("ij,ji->", rho, lg2))) - m_rho**2
    delta = m_rho - 0.5 * tr_l
    return 1.5 * (v_m + v_1) + 0.5 * delta**2


def shadow_entropy_statistics(
    rho: np.ndarray, log_c: LogDensity, ensemble: BasisEnsemble
) -> tuple[float, float]:
    """Exact (mean, variance) of s_sc by enumerating bases and outcomes.

    Works for any ensemble and for one- or two-site probes; the mean always
    equals s_qc(rho, log_c), the variance is ensemble dependent (the
    closed-form ``shadow_variance`` requires a 3-design).
    """
    dim = rho.shape[0]
    if dim not in (2, 4) or log_c.dim != dim:
        raise ValueError("rho must be 2x2 or 4x4 and match the log density")
    n_sites = 1 if dim == 2 else 2
    weight = 1.0 / len(ensemble) ** n_sites
    mean = 0.0
    second = 0.0
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
            if born <= 0.0:
                continue
            value = s_sc(multi_qubit_shadow(unitaries, heads), log_c)
            mean += weight * born * value
            second += weight * born * value * value
    return mean, second - mean * mean


def s_sc_variance_reduced(
    record: ShadowRecord, replayed_outcomes: tuple[int, ...], log_c: LogDensity
) -> float:
    """Common-random-number estimator of s_qc with reduced variance.

    ``replayed_outcomes`` must be drawn from the classical estimate's Born
    distribution in the same bases and with the same uniform variates as
    the quantum snapshot (see shadows.sample_shadow_outcomes). The replica
    shadow's s_sc term is subtracted and its known mean s_cc added back:

        value = s_sc(shadow_q) - s_sc(shadow_replica) + s_cc

    an unbiased estimate of s_qc whose shadow noise cancels to the extent
    the classical estimate tracks the true state.
    """
    if len(replayed_outcomes) != len(record.unitaries):
        raise ValueError("one replayed outcome per probe site required")
    replica = multi_qubit_shadow(record.unitaries, tuple(replayed_outcomes))
    return s_sc(record.matrix, log_c) - s_sc(replica, log_c) + s_cc(log_c)


def scalar_cross_correlation(
    weights: Iterable[float], outcomes: Iterable[int]
) -> float:
    """Mean of weight * outcome over paired samples.

    With unit weights this is the dephased average of the shadow outcome;
    classical weights (e.g. the simulated <Z> or its sign) correlate the
    measured bit with the simulation run by run.
    """
    w = np.asarray(list(weights), dtype=float)
    z = np.asarray(list(outcomes), dtype=float)
    if w.shape != z.shape:
        raise ValueError("weights and outcomes must pair up")
    if w.size == 0:
        raise ValueError("empty sample")
    return float(np.mean(w * z))
