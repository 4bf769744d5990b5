"""Protocol driver: monitored brickwork circuits run in lockstep on the
exact and bond-limited engines, with shadow, direct, and decoder estimators
recorded per run and aggregated across runs.

One run: L qubits in |0...0>, depth_factor*L brick layers of Haar two-site
gates (even bonds on even layers, odd on odd). After each gate, every
touched bulk qubit is measured with probability p: the outcome is Born
sampled on the exact state and forced onto the MPS, whose gate bond is then
truncated to chi. Boundary qubits are never measured during evolution; at
the final time every bulk qubit is measured. The probe is the left boundary
qubit or the boundary pair, from which the exact state, the classical
estimate, and one shadow snapshot are extracted.

Randomness: each run consumes streams at (master_seed, run, purpose) with
separate purpose tags for gates, measurement placement, measurement
outcomes, shadow bases, and shadow outcomes. No stream depends on chi, so
trajectories are bit-identical across bond limits and paired chi
comparisons are exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from . import mps as mps_mod
from . import statevector as sv_mod
from .accumulators import RunningStat
from .decoder import bloch_vector, build_decoder, gamma_qc
from .entropy import (
    LogDensity,
    depolarize,
    partial_trace,
    s_cc,
    s_qc,
    s_sc,
    safe_log_density,
    shadow_entropy_statistics,
    von_neumann_entropy,
)
from .errors import ConfigError
from .rng import BasisEnsemble, PAULI_BASES_3, RandomStream, sample_haar_unitaries
from .shadows import build_shadow, multi_qubit_shadow, sample_shadow_outcomes

__all__ = [
    "ExperimentConfig",
    "RunRecord",
    "AggregateStats",
    "ExperimentResult",
    "trajectory_streams",
    "run_trajectory",
    "run_experiment",
    "expand_grid",
    "emit_results",
    "load_results_csv",
    "parse_config_text",
    "TABLE_SCHEMA",
    "RECORD_SCHEMA",
    "CSV_COLUMNS",
]

TABLE_SCHEMA = "sweep-table/1"
RECORD_SCHEMA = "run-record/1"

PROBE_LEFT = "left_qubit"
PROBE_PAIR = "boundary_pair"
_PROBES = (PROBE_LEFT, PROBE_PAIR)
_MODES = ("shadow", "direct_qc", "decoder")

# purpose tags for stream paths (order is part of the on-disk contract)
TAG_GATES = 0
TAG_PLACEMENT = 1
TAG_OUTCOMES = 2
TAG_SHADOW_BASIS = 3
TAG_SHADOW_OUTCOME = 4


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one experiment grid point."""

    n_qubits: int
    rate: float
    chi: int
    runs: int
    master_seed: int
    depth_factor: int = 4
    ensemble: str = PAULI_BASES_3
    eps_floor: float = 1e-6
    floor_normalize: bool = True
    eps_depolarize: float = 0.0
    probe: str = PROBE_LEFT
    modes: tuple[str, ...] = ("shadow", "direct_qc")
    fix_circuit: bool = False

    def __post_init__(self):
        if not 2 <= self.n_qubits <= sv_mod.MAX_QUBITS:
            raise ConfigError(f"n_qubits must be in [2, {sv_mod.MAX_QUBITS}]")
        if not 0.0 <= self.rate <= 1.0:
            raise ConfigError("rate must be in [0, 1]")
        if self.chi < 1:
            raise ConfigError("chi must be positive")
        if self.runs < 1:
            raise ConfigError("runs must be positive")
        if self.depth_factor < 1:
            raise ConfigError("depth_factor must be positive")
        if not 0.0 < self.eps_floor < 1.0:
            raise ConfigError("eps_floor must be in (0, 1)")
        if not 0.0 <= self.eps_depolarize <= 1.0:
            raise ConfigError("eps_depolarize must be in [0, 1]")
        if self.probe not in _PROBES:
            raise ConfigError(f"probe must be one of {_PROBES}")
        modes = tuple(self.modes)
        if not modes or any(m not in _MODES for m in modes):
            raise ConfigError(f"modes must be a nonempty subset of {_MODES}")
        if len(set(modes)) != len(modes):
            raise ConfigError("modes must not repeat")
        if "decoder" in modes and self.probe != PROBE_LEFT:
            raise ConfigError("decoder mode requires the left_qubit probe")
        try:
            BasisEnsemble.from_name(self.ensemble)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @staticmethod
    def from_mapping(mapping: dict[str, str]) -> "ExperimentConfig":
        """Build from string key=value pairs (config file or CLI overrides)."""
        converters = {
            "n_qubits": int, "rate": float, "chi": int, "runs": int,
            "master_seed": int, "depth_factor": int, "ensemble": str,
            "eps_floor": float, "floor_normalize": _parse_bool,
            "eps_depolarize": float, "probe": str,
            "modes": lambda s: tuple(m.strip() for m in s.split(",") if m.strip()),
            "fix_circuit": _parse_bool,
        }
        kwargs = {}
        for key, raw in mapping.items():
            if key not in converters:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                kwargs[key] = converters[key](raw)
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from None
        missing = {"n_qubits", "rate", "chi", "runs", "master_seed"} - kwargs.keys()
        if missing:
            raise ConfigError(f"missing required config keys: {sorted(missing)}")
        return ExperimentConfig(**kwargs)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


def _parse_bool(raw) -> bool:
    if isinstance(raw, bool):
        return raw
    text = str(raw).strip().lower()
    if text in ("true", "1", "yes", "on"):
        return True
    if text in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment."""
    mapping: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = body.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in mapping:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        mapping[key] = value.strip()
    return mapping


@dataclass
class RunRecord:
    """Everything one run produced. Optional fields stay None when the
    corresponding mode or probe is inactive; with eps_depolarize > 0 the
    entropy fields refer to the channel-applied states."""

    run: int
    outcomes: list[tuple[int, int, int, float]]  # (layer, site, z, born prob)
    log_born: float
    discarded_weight: float
    degenerate: bool
    s: float
    s_qc: float | None = None
    s_cc: float | None = None
    basis_ids: tuple[int, ...] | None = None
    shadow_outcomes: tuple[int, ...] | None = None
    s_sc: float | None = None
    s_sc_crn: float | None = None
    shadow_var: float | None = None
    gamma: float | None = None
    gamma_qc: float | None = None
    gamma_cc: float | None = None
    a_s: float | None = None
    a_s_qc: float | None = None
    a_s_cc: float | None = None
    a_s_sc: float | None = None

    def to_json(self, config: ExperimentConfig) -> str:
        payload = {
            "schema": RECORD_SCHEMA,
            "L": config.n_qubits,
            "p": config.rate,
            "chi": config.chi,
            "run": self.run,
            "outcomes": [list(e) for e in self.outcomes],
            "log_born": self.log_born,
            "discarded_weight": self.discarded_weight,
            "degenerate": self.degenerate,
            "s": self.s,
        }
        for name in ("s_qc", "s_cc", "s_sc", "s_sc_crn", "shadow_var",
                     "gamma", "gamma_qc", "gamma_cc",
                     "a_s", "a_s_qc", "a_s_cc", "a_s_sc"):
            value = getattr(self, name)
            if value is not None:
                payload[name] = value
        if self.basis_ids is not None:
            payload["basis_ids"] = list(self.basis_ids)
            payload["shadow_outcomes"] = list(self.shadow_outcomes)
        return json.dumps(payload, separators=(",", ":"))


def trajectory_streams(config: ExperimentConfig, run: int) -> dict[str, RandomStream]:
    """Named sub-streams one run consumes; paths are pairwise disjoint."""
    root = RandomStream(config.master_seed)
    gate_run = 0 if config.fix_circuit else run
    return {
        "gates": root.child(gate_run, TAG_GATES),
        "placement": root.child(run, TAG_PLACEMENT),
        "outcomes": root.child(run, TAG_OUTCOMES),
        "shadow_basis": root.child(run, TAG_SHADOW_BASIS),
        "shadow_outcome": root.child(run, TAG_SHADOW_OUTCOME),
    }


def _layer_bonds(n_qubits: int, layer: int) -> list[int]:
    parity = layer % 2
    bonds = list(range(parity, n_qubits - 1, 2))
    # sweep back and forth so the orthogonality center moves one bond per gate
    return bonds if parity == 0 else bonds[::-1]


def run_trajectory(config: ExperimentConfig, run: int) -> RunRecord:
    """Single monitored-circuit run on both engines; see the module docstring."""
    L, p, chi = config.n_qubits, config.rate, config.chi
    streams = trajectory_streams(config, run)
    gate_gen = streams["gates"].generator()
    place_gen = streams["placement"].generator()
    outcome_gen = streams["outcomes"].generator()

    n_layers = config.depth_factor * L
    layers = [_layer_bonds(L, tau) for tau in range(n_layers)]
    n_gates = sum(len(b) for b in layers)
    gates = sample_haar_unitaries(4, n_gates, gate_gen)
    worst = np.max(np.abs(
        np.matmul(gates.conj().transpose(0, 2, 1), gates) - np.eye(4)))
    if worst > 1e-8:
        raise ValueError(f"sampled gate deviates from unitarity by {worst:.3e}")
    n_candidates = sum(
        sum(1 for q in (b, b + 1) if 0 < q < L - 1)
        for bonds in layers for b in bonds
    )
    place_u = place_gen.random(n_candidates)

    psi = sv_mod.init_product_state(L)
    cls = mps_mod.init_product_mps(L, chi)
    events: list[tuple[int, int, int, float]] = []
    log_born = 0.0
    g = 0
    c = 0
    for tau, bonds in enumerate(layers):
        to_right = tau % 2 == 0
        for bond in bonds:
            gate = gates[g]
            g += 1
            sv_mod.apply_two_qubit_gate(psi, bond, gate, check_unitary=False)
            forced = []
            for q in (bond, bond + 1):
                if not 0 < q < L - 1:
                    continue
                u = place_u[c]
                c += 1
                if u < p:
                    z, prob = sv_mod.measure_qubit_born(psi, q, outcome_gen)
                    events.append((tau, q, z, prob))
                    log_born += float(np.log(prob))
                    forced.append((q, z))
            mps_mod.gate_measure_truncate(
                cls, bond, gate, forced, to_right=to_right, check_unitary=False)
    for q in range(1, L - 1):
        z, prob = sv_mod.measure_qubit_born(psi, q, outcome_gen)
        events.append((n_layers, q, z, prob))
        log_born += float(np.log(prob))
        mps_mod.force_projective_outcome(cls, q, z)

    probe_sites = [0] if config.probe == PROBE_LEFT else [0, L - 1]
    rho = sv_mod.reduced_density_matrix(psi, probe_sites)
    rho_c = mps_mod.mps_reduced_density_matrix(cls, probe_sites)
    eps = config.eps_depolarize
    rho_n = depolarize(rho, eps) if eps > 0.0 else rho
    rho_c_n = depolarize(rho_c, eps) if eps > 0.0 else rho_c
    log_c = safe_log_density(rho_c_n, config.eps_floor, config.floor_normalize)

    record = RunRecord(
        run=run,
        outcomes=events,
        log_born=log_born,
        discarded_weight=cls.discarded_weight,
        degenerate=cls.degenerate_forcing,
        s=von_neumann_entropy(rho_n),
    )
    if "direct_qc" in config.modes:
        record.s_qc = s_qc(rho_n, log_c)
        record.s_cc = s_cc(log_c)

    pair = config.probe == PROBE_PAIR
    if pair:
        rho_a_n = partial_trace(rho_n, keep=0)
        log_a = safe_log_density(partial_trace(rho_c_n, keep=0),
                                 config.eps_floor, config.floor_normalize)
        record.a_s = von_neumann_entropy(rho_a_n)
        record.a_s_qc = s_qc(rho_a_n, log_a)
        record.a_s_cc = s_cc(log_a)

    if "shadow" in config.modes:
        ensemble = BasisEnsemble.from_name(config.ensemble)
        basis_gen = streams["shadow_basis"].generator()
        shadow_gen = streams["shadow_outcome"].generator()
        n_probe = len(probe_sites)
        ids = tuple(int(i) for i in basis_gen.integers(len(ensemble), size=n_probe))
        uniforms = shadow_gen.random(n_probe)
        snap = build_shadow(rho, ensemble, ids, uniforms)
        shadow_mat = depolarize(snap.matrix, eps) if eps > 0.0 else snap.matrix
        record.basis_ids = snap.basis_ids
        record.shadow_outcomes = snap.outcomes
        record.s_sc = s_sc(shadow_mat, log_c)
        # replica coupled through the same bases and uniforms, sampled from
        # the floored classical state so the correction mean is exactly s_cc
        replay = sample_shadow_outcomes(log_c.matrix, snap.unitaries, uniforms)
        replica = multi_qubit_shadow(snap.unitaries, replay)
        record.s_sc_crn = record.s_sc - s_sc(replica, log_c) + s_cc(log_c)
        mean_raw, var_raw = shadow_entropy_statistics(rho, log_c, ensemble)
        record.shadow_var = (1.0 - eps) ** 2 * var_raw if eps > 0.0 else var_raw
        if pair:
            a_snap = single_site_shadow = multi_qubit_shadow(
                snap.unitaries[:1], snap.outcomes[:1])
            a_mat = depolarize(a_snap, eps) if eps > 0.0 else a_snap
            record.a_s_sc = s_sc(a_mat, log_a)

    if "decoder" in config.modes:
        dec = build_decoder(log_c.matrix)
        record.gamma = float(np.linalg.norm(bloch_vector(rho_n)))
        record.gamma_qc = gamma_qc(rho_n, dec)
        record.gamma_cc = dec.gamma_cc
    return record


# aggregate keys in emission order; (key, has_err) pairs
_AGG_KEYS = (
    "s", "s_qc", "s_cc", "gap", "s_sc", "sc_qc_diff", "s_sc_crn",
    "shadow_var", "discarded",
    "a_s", "a_s_qc", "a_s_cc", "a_s_sc", "lower_run", "upper_slack",
    "lower_slack", "gamma", "gamma_qc", "gamma_cc", "gamma_slack",
)


@dataclass
class AggregateStats:
    """Mergeable per-grid-point statistics (one RunningStat per quantity)."""

    stats: dict[str, RunningStat] = field(default_factory=dict)
    count: int = 0
    degenerate_count: int = 0

    def _push(self, key: str, value: float | None) -> None:
        if value is None:
            return
        self.stats.setdefault(key, RunningStat()).push(value)

    def update(self, record: RunRecord) -> None:
        self.count += 1
        if record.degenerate:
            self.degenerate_count += 1
        self._push("s", record.s)
        self._push("s_qc", record.s_qc)
        self._push("s_cc", record.s_cc)
        if record.s_qc is not None:
            self._push("gap", record.s_qc - record.s)
        self._push("s_sc", record.s_sc)
        if record.s_sc is not None and record.s_qc is not None:
            self._push("sc_qc_diff", record.s_sc - record.s_qc)
        self._push("s_sc_crn", record.s_sc_crn)
        self._push("shadow_var", record.shadow_var)
        self._push("discarded", record.discarded_weight)
        self._push("a_s", record.a_s)
        self._push("a_s_qc", record.a_s_qc)
        self._push("a_s_cc", record.a_s_cc)
        self._push("a_s_sc", record.a_s_sc)
        if record.a_s_sc is not None and record.s_sc is not None:
            self._push("lower_run", record.a_s_sc - record.s_sc)
            self._push("upper_slack", record.a_s_sc - record.a_s)
            self._push("lower_slack", record.a_s - (record.a_s_sc - record.s_sc))
        self._push("gamma", record.gamma)
        self._push("gamma_qc", record.gamma_qc)
        self._push("gamma_cc", record.gamma_cc)
        if record.gamma is not None and record.gamma_qc is not None:
            self._push("gamma_slack", record.gamma - record.gamma_qc)

    def merge(self, other: "AggregateStats") -> None:
        self.count += other.count
        self.degenerate_count += other.degenerate_count
        for key, stat in other.stats.items():
            self.stats.setdefault(key, RunningStat()).merge(stat)

    def mean(self, key: str) -> float:
        return self.stats[key].mean

    def standard_error(self, key: str) -> float:
        return self.stats[key].standard_error


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    stats: AggregateStats
    records: list[RunRecord] | None = None


def run_experiment(
    config: ExperimentConfig, keep_records: bool = False, shards: int = 1
) -> ExperimentResult:
    """All runs of one grid point.

    ``shards`` splits the run range into contiguous chunks aggregated
    independently and merged, exercising the same reduction a parallel
    deployment would use; results agree with the serial pass to float
    precision because streams are addressed by absolute run index.
    """
    if shards < 1:
        raise ConfigError("shards must be positive")
    boundaries = np.array_split(np.arange(config.runs), min(shards, config.runs))
    total = AggregateStats()
    records: list[RunRecord] = []
    for chunk in boundaries:
        part = AggregateStats()
        for run in chunk:
            record = run_trajectory(config, int(run))
            part.update(record)
            if keep_records:
                records.append(record)
        total.merge(part)
    return ExperimentResult(config, total, records if keep_records else None)


def expand_grid(
    base: ExperimentConfig,
    sizes: Iterable[int],
    rates: Iterable[float],
    chis: Iterable[int],
) -> list[ExperimentConfig]:
    """Cartesian sweep grid; base supplies every other field."""
    grid = []
    for L in sizes:
        for p in rates:
            for chi in chis:
                grid.append(replace(base, n_qubits=L, rate=p, chi=chi))
    return grid


CSV_COLUMNS = (
    "schema", "L", "p", "chi", "depth_factor", "runs", "probe", "ensemble",
    "eps_floor", "eps_depolarize", "n", "degenerate_rate",
    "s_mean", "s_err",
    "s_qc_mean", "s_qc_err", "s_cc_mean", "s_cc_err",
    "gap_mean", "gap_err",
    "s_sc_mean", "s_sc_err", "s_sc_var",
    "sc_qc_diff_mean", "sc_qc_diff_err",
    "s_sc_crn_mean", "s_sc_crn_err", "s_sc_crn_var",
    "shadow_var_mean", "discarded_mean",
    "a_s_mean", "a_s_err", "a_s_qc_mean", "a_s_qc_err",
    "a_s_cc_mean", "a_s_cc_err", "a_s_sc_mean", "a_s_sc_err",
    "lower_mean", "lower_err", "upper_mean", "upper_err",
    "gamma_mean", "gamma_err", "gamma_qc_mean", "gamma_qc_err",
    "gamma_cc_mean", "gamma_cc_err",
)


def _format_float(value: float) -> str:
    return repr(float(value))


def _table_row(config: ExperimentConfig, stats: AggregateStats) -> dict[str, str]:
    row = {c: "" for c in CSV_COLUMNS}
    row["schema"] = TABLE_SCHEMA
    row["L"] = str(config.n_qubits)
    row["p"] = _format_float(config.rate)
    row["chi"] = str(config.chi)
    row["depth_factor"] = str(config.depth_factor)
    row["runs"] = str(config.runs)
    row["probe"] = config.probe
    row["ensemble"] = config.ensemble
    row["eps_floor"] = _format_float(config.eps_floor)
    row["eps_depolarize"] = _format_float(config.eps_depolarize)
    row["n"] = str(stats.count)
    row["degenerate_rate"] = _format_float(
        stats.degenerate_count / stats.count if stats.count else 0.0)

    def put(key: str, mean_col: str, err_col: str | None) -> None:
        if key in stats.stats:
            row[mean_col] = _format_float(stats.stats[key].mean)
            if err_col is not None:
                row[err_col] = _format_float(stats.stats[key].standard_error)

    put("s", "s_mean", "s_err")
    put("s_qc", "s_qc_mean", "s_qc_err")
    put("s_cc", "s_cc_mean", "s_cc_err")
    put("gap", "gap_mean", "gap_err")
    put("s_sc", "s_sc_mean", "s_sc_err")
    if "s_sc" in stats.stats:
        row["s_sc_var"] = _format_float(stats.stats["s_sc"].variance)
    put("sc_qc_diff", "sc_qc_diff_mean", "sc_qc_diff_err")
    put("s_sc_crn", "s_sc_crn_mean", "s_sc_crn_err")
    if "s_sc_crn" in stats.stats:
        row["s_sc_crn_var"] = _format_float(stats.stats["s_sc_crn"].variance)
    put("shadow_var", "shadow_var_mean", None)
    put("discarded", "discarded_mean", None)
    put("a_s", "a_s_mean", "a_s_err")
    put("a_s_qc", "a_s_qc_mean", "a_s_qc_err")
    put("a_s_cc", "a_s_cc_mean", "a_s_cc_err")
    put("a_s_sc", "a_s_sc_mean", "a_s_sc_err")
    if "a_s_sc" in stats.stats and "lower_run" in stats.stats:
        upper = stats.stats["a_s_sc"]
        ab_mean = max(stats.stats["s_sc"].mean, 0.0)
        row["upper_mean"] = _format_float(upper.mean)
        row["upper_err"] = _format_float(upper.standard_error)
        row["lower_mean"] = _format_float(upper.mean - ab_mean)
        row["lower_err"] = _format_float(stats.stats["lower_run"].standard_error)
    put("gamma", "gamma_mean", "gamma_err")
    put("gamma_qc", "gamma_qc_mean", "gamma_qc_err")
    put("gamma_cc", "gamma_cc_mean", "gamma_cc_err")
    return row


def emit_results(
    results: Iterable[ExperimentResult], out_prefix: str | Path
) -> dict[str, Path]:
    """Write the sweep table (CSV), run records (JSONL, if kept), and a
    config sidecar next to ``out_prefix``. Floats are emitted with repr so a
    read-back reproduces them exactly."""
    results = list(results)
    if not results:
        raise ValueError("nothing to emit")
    prefix = Path(out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    csv_path = prefix.with_suffix(".csv")
    lines = [",".join(CSV_COLUMNS)]
    for result in results:
        row = _table_row(result.config, result.stats)
        lines.append(",".join(row[c] for c in CSV_COLUMNS))
    csv_path.write_text("\n".join(lines) + "\n")
    paths = {"table": csv_path}

    if any(r.records for r in results):
        jsonl_path = prefix.with_suffix(".jsonl")
        with jsonl_path.open("w") as handle:
            for result in results:
                for record in result.records or ():
                    handle.write(record.to_json(result.config) + "\n")
        paths["records"] = jsonl_path

    sidecar = prefix.with_suffix(".config.txt")
    blocks = []
    for i, result in enumerate(results):
        header = f"# grid point {i}\n" if len(results) > 1 else ""
        blocks.append(header + result.config.to_text())
    sidecar.write_text("\n".join(blocks))
    paths["config"] = sidecar
    return paths


def load_results_csv(path: str | Path) -> list[dict[str, float | str]]:
    """Read a sweep table back; numeric cells become floats, empty stay ''."""
    lines = Path(path).read_text().strip().splitlines()
    if not lines:
        raise ValueError(f"empty table {path}")
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        if len(cells) != len(header):
            raise ValueError(f"malformed row in {path}: {line!r}")
        row: dict[str, float | str] = {}
        for key, cell in zip(header, cells):
            if cell == "" or key in ("schema", "probe", "ensemble"):
                row[key] = cell
            else:
                row[key] = float(cell)
        rows.append(row)
    return rows
