"""Cohort-sequence unicity analysis.

Machines are observed over aligned, non-overlapping windows of
consecutive weeks. Every complete window becomes one sample, its weeks
relabeled to positions 1..w; samples from all windows are pooled, each
position's pooled population is clustered independently, and a sample's
signature at horizon h is its cohort ids at positions 1..h (optionally
prefixed with the machine's state). The unicity fraction is the share of
samples whose signature is unique in the pool.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .geo import UNKNOWN_STATE
from .ingest import MachineWeekTable
from .prefixlsh import CohortError, CohortMap, build_cohort_map
from .simhash import SimHashConfig


@dataclass(frozen=True)
class SequenceSample:
    """Record view of one pooled sample (mostly for tests and debugging)."""

    machine_id: int
    window_index: int
    state: str
    cohort_ids: tuple[int, ...]


@dataclass
class SequenceSet:
    """All complete windows of a table, pooled across machines and time."""

    table: MachineWeekTable
    window: int
    row_matrix: np.ndarray  # (n_samples, window) rows into table
    machine_ids: np.ndarray
    window_index: np.ndarray
    state_idx: np.ndarray
    known_state: np.ndarray

    @property
    def n_samples(self) -> int:
        return len(self.machine_ids)

    def select(self, sample_mask: np.ndarray) -> "SequenceSet":
        return SequenceSet(
            table=self.table,
            window=self.window,
            row_matrix=self.row_matrix[sample_mask],
            machine_ids=self.machine_ids[sample_mask],
            window_index=self.window_index[sample_mask],
            state_idx=self.state_idx[sample_mask],
            known_state=self.known_state[sample_mask],
        )


def build_sequences(table: MachineWeekTable, window: int = 4) -> SequenceSet:
    """Pool every machine's complete aligned windows.

    Window j covers weeks [j*window, (j+1)*window); a machine contributes
    a sample for j only when all of those weeks are present.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    n = len(table)
    weeks = table.week_indices.astype(np.int64)
    win_of_row = weeks // window
    composite = table.machine_ids * (int(weeks.max()) // window + 2 if n else 1) + win_of_row
    # Rows are sorted by (machine, week), so equal composites are adjacent
    # and their rows are already in ascending week order.
    _, starts, counts = np.unique(composite, return_index=True, return_counts=True)
    full = counts == window
    starts = starts[full]
    row_matrix = starts[:, None] + np.arange(window, dtype=np.int64)
    first = row_matrix[:, 0] if len(starts) else np.empty(0, dtype=np.int64)
    state_idx = table.state_idx[first].astype(np.int64)
    unknown = table.state_labels.index(UNKNOWN_STATE) if UNKNOWN_STATE in table.state_labels else -1
    return SequenceSet(
        table=table,
        window=window,
        row_matrix=row_matrix,
        machine_ids=table.machine_ids[first],
        window_index=win_of_row[first],
        state_idx=state_idx,
        known_state=state_idx != unknown,
    )


@dataclass
class SequenceCohorts:
    """Per-position cohort maps and the (n_samples, window) id matrix."""

    k: int
    window: int
    maps: list[CohortMap]
    cohort_ids: np.ndarray

    def cohorts_per_position(self) -> list[int]:
        return [m.num_cohorts for m in self.maps]


def assign_sequence_cohorts(
    seqs: SequenceSet, k: int, config: SimHashConfig = SimHashConfig()
) -> SequenceCohorts:
    """Cluster each relabeled position's pooled population at level k."""
    if seqs.n_samples == 0:
        raise CohortError(f"no complete {seqs.window}-week windows to cluster")
    hashes = seqs.table.hashes(config.bit_length, config.seed)
    maps: list[CohortMap] = []
    ids = np.empty((seqs.n_samples, seqs.window), dtype=np.int32)
    for p in range(seqs.window):
        position_hashes = hashes[seqs.row_matrix[:, p]]
        cmap = build_cohort_map(position_hashes, k, config.bit_length)
        maps.append(cmap)
        ids[:, p] = cmap.assign(position_hashes)
    return SequenceCohorts(k=k, window=seqs.window, maps=maps, cohort_ids=ids)


def iter_samples(seqs: SequenceSet, cohorts: SequenceCohorts):
    for i in range(seqs.n_samples):
        yield SequenceSample(
            machine_id=int(seqs.machine_ids[i]),
            window_index=int(seqs.window_index[i]),
            state=seqs.table.state_labels[seqs.state_idx[i]],
            cohort_ids=tuple(int(c) for c in cohorts.cohort_ids[i]),
        )


def _unique_fraction(keys: np.ndarray) -> float:
    if len(keys) == 0:
        return 0.0
    _, counts = np.unique(keys, axis=0, return_counts=True)
    return float((counts == 1).sum()) / len(keys)


@dataclass
class HorizonRow:
    horizon: int
    frac_sequence: float
    frac_fingerprint: float
    frac_sequence_known: float  # sequence-only, on the known-state subset


@dataclass
class UnicityReport:
    k: int
    window: int
    n_samples: int
    n_known_state: int
    n_unknown_excluded: int
    cohorts_per_position: list[int]
    rows: list[HorizonRow] = field(default_factory=list)

    def fraction(self, horizon: int, *, fingerprint: bool = False) -> float:
        row = self.rows[horizon - 1]
        return row.frac_fingerprint if fingerprint else row.frac_sequence

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "window": self.window,
            "n_samples": self.n_samples,
            "n_known_state": self.n_known_state,
            "n_unknown_excluded": self.n_unknown_excluded,
            "cohorts_per_position": self.cohorts_per_position,
            "horizons": [
                {
                    "horizon": r.horizon,
                    "frac_sequence": r.frac_sequence,
                    "frac_fingerprint": r.frac_fingerprint,
                    "frac_sequence_known": r.frac_sequence_known,
                }
                for r in self.rows
            ],
        }

    def to_csv_text(self) -> str:
        lines = ["horizon,frac_sequence,frac_fingerprint,frac_sequence_known"]
        for r in self.rows:
            lines.append(
                f"{r.horizon},{r.frac_sequence:.10g},{r.frac_fingerprint:.10g},"
                f"{r.frac_sequence_known:.10g}"
            )
        return "\n".join(lines) + "\n"


def unicity_fractions(seqs: SequenceSet, cohorts: SequenceCohorts) -> UnicityReport:
    """Unicity at every horizon, with and without the state fingerprint.

    The fingerprint column is computed over the subpopulation whose state
    is known; unknown-state samples are excluded from it and counted.
    """
    known = seqs.known_state
    n_known = int(known.sum())
    report = UnicityReport(
        k=cohorts.k,
        window=seqs.window,
        n_samples=seqs.n_samples,
        n_known_state=n_known,
        n_unknown_excluded=seqs.n_samples - n_known,
        cohorts_per_position=cohorts.cohorts_per_position(),
    )
    ids = cohorts.cohort_ids
    states = seqs.state_idx[known, None].astype(np.int32)
    for h in range(1, seqs.window + 1):
        frac_seq = _unique_fraction(ids[:, :h])
        known_ids = ids[known, :h]
        frac_fp = _unique_fraction(np.hstack([states, known_ids]))
        frac_seq_known = _unique_fraction(known_ids)
        report.rows.append(HorizonRow(h, frac_seq, frac_fp, frac_seq_known))
    return report


@dataclass
class SweepPoint:
    param: int
    n_samples: int
    frac_sequence: float
    frac_fingerprint: float


@dataclass
class SweepResult:
    param_name: str
    window: int
    horizon: int
    points: list[SweepPoint]

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "param": self.param_name,
            "window": self.window,
            "horizon": self.horizon,
            "points": [
                {
                    self.param_name: p.param,
                    "n_samples": p.n_samples,
                    "frac_sequence": p.frac_sequence,
                    "frac_fingerprint": p.frac_fingerprint,
                }
                for p in self.points
            ],
        }

    def to_csv_text(self) -> str:
        lines = [f"{self.param_name},n_samples,frac_sequence,frac_fingerprint"]
        for p in self.points:
            lines.append(
                f"{p.param},{p.n_samples},{p.frac_sequence:.10g},{p.frac_fingerprint:.10g}"
            )
        return "\n".join(lines) + "\n"


def _point(seqs: SequenceSet, k: int, config: SimHashConfig, param: int) -> SweepPoint:
    cohorts = assign_sequence_cohorts(seqs, k, config)
    report = unicity_fractions(seqs, cohorts)
    return SweepPoint(
        param=param,
        n_samples=seqs.n_samples,
        frac_sequence=report.rows[-1].frac_sequence,
        frac_fingerprint=report.rows[-1].frac_fingerprint,
    )


def sweep_population(
    seqs: SequenceSet,
    k: int,
    n_grid: Sequence[int],
    seed: int,
    config: SimHashConfig = SimHashConfig(),
) -> SweepResult:
    """Unicity at the full-window horizon versus population size.

    For each grid value, that many machines are drawn without replacement
    and cohorts are rebuilt from scratch on the reduced pool.
    """
    rng = np.random.default_rng(seed)
    machines = np.unique(seqs.machine_ids)
    points = []
    for n in n_grid:
        if n > len(machines):
            raise ValueError(f"population grid value {n} exceeds {len(machines)} machines")
        chosen = rng.choice(machines, size=n, replace=False)
        mask = np.isin(seqs.machine_ids, chosen)
        points.append(_point(seqs.select(mask), k, config, int(n)))
    return SweepResult("n_machines", seqs.window, seqs.window, points)


def sweep_k(
    seqs: SequenceSet, k_grid: Sequence[int], config: SimHashConfig = SimHashConfig()
) -> SweepResult:
    """Unicity at the full-window horizon versus the anonymity level k."""
    points = [_point(seqs, int(k), config, int(k)) for k in k_grid]
    return SweepResult("k", seqs.window, seqs.window, points)
