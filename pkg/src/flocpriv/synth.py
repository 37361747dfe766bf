"""Synthetic browsing-population generator.

Machines draw weekly domain sets from a shared Zipf-weighted vocabulary.
Each demographic cell mixes the global popularity ranking with its own
permutation of the top stratum, so subpopulations develop distinctive
domain preferences whose strength is controlled by ``skew`` (0 = all
cells browse identically). Output is a ready-made machine-week table (or
a session log in the raw ingest format), fully determined by the seed.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .geo import STATES, representative_zip
from .hashing import derive_seed
from .ingest import INCOME_GROUPS, RACE_GROUPS, MachineWeekTable
from .panels import N_CELLS, JointDistribution


@dataclass(frozen=True)
class SynthConfig:
    n_machines: int = 1000
    n_weeks: int = 4
    vocab_size: int = 20_000
    min_domains: int = 7
    max_domains: int = 20
    zipf_exponent: float = 1.0
    #: Top-ranked domains whose order each demographic cell permutes.
    top_stratum: int = 100
    #: Mixing weight of the cell-specific ranking (0 = no demographic signal).
    skew: float = 0.25
    joint: JointDistribution = field(default_factory=JointDistribution.default)
    states: tuple[str, ...] = STATES
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_machines < 1 or self.n_weeks < 1:
            raise ValueError("need at least one machine and one week")
        if not 1 <= self.min_domains <= self.max_domains:
            raise ValueError("domain count range is empty")
        if self.max_domains > self.vocab_size:
            raise ValueError("max_domains exceeds the vocabulary")
        if not 0.0 <= self.skew <= 1.0:
            raise ValueError(f"skew must be in [0, 1], got {self.skew}")
        if not 0 <= self.top_stratum <= self.vocab_size:
            raise ValueError("top_stratum must be within the vocabulary")


@dataclass
class GeneratedPopulation:
    config: SynthConfig
    table: MachineWeekTable
    machine_ids: np.ndarray
    race_idx: np.ndarray
    income_idx: np.ndarray
    state_idx: np.ndarray  # into config.states

    def demographics_json(self) -> dict:
        cells = self.race_idx.astype(np.int64) * len(INCOME_GROUPS) + self.income_idx
        counts = np.bincount(cells, minlength=N_CELLS).reshape(
            len(RACE_GROUPS), len(INCOME_GROUPS)
        )
        return {
            "n_machines": len(self.machine_ids),
            "race": list(RACE_GROUPS),
            "income": list(INCOME_GROUPS),
            "counts": counts.tolist(),
        }


def _zipf_weights(size: int, exponent: float) -> np.ndarray:
    ranks = np.arange(1, size + 1, dtype=np.float64)
    w = ranks ** (-exponent)
    return w / w.sum()


def _cell_weights(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """Per-cell sampling weights: global Zipf blended with a permuted top."""
    base = _zipf_weights(cfg.vocab_size, cfg.zipf_exponent)
    cells = np.tile(base, (N_CELLS, 1))
    if cfg.skew > 0.0 and cfg.top_stratum > 1:
        for c in range(N_CELLS):
            perm = rng.permutation(cfg.top_stratum)
            permuted = base.copy()
            permuted[: cfg.top_stratum] = base[:cfg.top_stratum][perm]
            cells[c] = (1.0 - cfg.skew) * base + cfg.skew * permuted
    return cells


def _draw_rows(weights: np.ndarray, sizes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Sequential sampling without replacement, vectorized across rows.

    Each row i receives the first ``sizes[i]`` distinct values of an
    i.i.d. stream drawn from ``weights`` (successive sampling). One wide
    vectorized round covers nearly all rows; rows whose stream had too
    many repeats keep their kept values and extend the stream one draw
    at a time.
    """
    n_rows = len(sizes)
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    need = int(sizes.max())
    width = 4 * need + 16
    out_vals = np.zeros((n_rows, need), dtype=np.int64)

    draws = np.searchsorted(cum, rng.random((n_rows, width)), side="right")
    # Mark the first occurrence of each value per row, in draw order.
    order = np.argsort(draws, axis=1, kind="stable")
    sorted_vals = np.take_along_axis(draws, order, axis=1)
    first_sorted = np.ones_like(sorted_vals, dtype=bool)
    first_sorted[:, 1:] = sorted_vals[:, 1:] != sorted_vals[:, :-1]
    first = np.zeros_like(first_sorted)
    np.put_along_axis(first, order, first_sorted, axis=1)
    rank = np.cumsum(first, axis=1)  # distinct values seen so far
    keep = first & (rank <= sizes[:, None])
    got = np.minimum(rank[:, -1], sizes)

    flat_keep = keep.ravel()
    kept_vals = draws.ravel()[flat_keep]
    kept_offsets = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(got, out=kept_offsets[1:])
    for i in range(n_rows):
        out_vals[i, : got[i]] = kept_vals[kept_offsets[i] : kept_offsets[i + 1]]

    for i in np.nonzero(got < sizes)[0]:
        seen = set(int(v) for v in out_vals[i, : got[i]])
        j = int(got[i])
        while j < sizes[i]:
            v = int(np.searchsorted(cum, rng.random(), side="right"))
            if v not in seen:
                seen.add(v)
                out_vals[i, j] = v
                j += 1
    return out_vals


def generate_population(cfg: SynthConfig) -> GeneratedPopulation:
    """Deterministically generate a population and its machine-week table."""
    rng_demo = np.random.default_rng(derive_seed(cfg.seed, "synth-demographics"))
    rng_pref = np.random.default_rng(derive_seed(cfg.seed, "synth-preferences"))
    rng_domains = np.random.default_rng(derive_seed(cfg.seed, "synth-domains"))

    machine_ids = np.arange(1, cfg.n_machines + 1, dtype=np.int64)
    cell_of_machine = rng_demo.choice(N_CELLS, size=cfg.n_machines, p=cfg.joint.flat())
    race_idx = (cell_of_machine // len(INCOME_GROUPS)).astype(np.int8)
    income_idx = (cell_of_machine % len(INCOME_GROUPS)).astype(np.int8)
    state_idx = rng_demo.integers(0, len(cfg.states), size=cfg.n_machines).astype(np.int16)

    weights = _cell_weights(cfg, rng_pref)
    vocab = [f"site{v:05d}.com" for v in range(cfg.vocab_size)]

    n_rows = cfg.n_machines * cfg.n_weeks
    sizes = rng_domains.integers(cfg.min_domains, cfg.max_domains + 1, size=n_rows)
    row_machine = np.repeat(np.arange(cfg.n_machines), cfg.n_weeks)
    row_week = np.tile(np.arange(cfg.n_weeks), cfg.n_machines)
    row_cell = cell_of_machine[row_machine]

    dom_values = np.zeros((n_rows, int(sizes.max())), dtype=np.int64)
    for cell in range(N_CELLS):
        rows = np.nonzero(row_cell == cell)[0]
        if len(rows) == 0:
            continue
        vals = _draw_rows(weights[cell], sizes[rows], rng_domains)
        dom_values[rows, : vals.shape[1]] = vals

    offsets = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    row_mask = np.arange(dom_values.shape[1]) < sizes[:, None]
    dom_indices = dom_values[row_mask].astype(np.int32)

    state_labels = list(cfg.states)
    table = MachineWeekTable(
        machine_ids[row_machine],
        row_week.astype(np.int32),
        state_labels,
        race_idx[row_machine],
        income_idx[row_machine],
        state_idx[row_machine],
        dom_indices,
        offsets,
        vocab,
    )
    return GeneratedPopulation(
        config=cfg,
        table=table,
        machine_ids=machine_ids,
        race_idx=race_idx,
        income_idx=income_idx,
        state_idx=state_idx,
    )


_RACE_TO_CODE = {"white": "1", "black": "2", "asian": "4", "other": "3"}
_INCOME_TO_CODE = {"lt25k": "4", "25k_75k": "10", "75k_150k": "14", "ge150k": "16"}


def write_sessions(
    pop: GeneratedPopulation, fh: TextIO, epoch: dt.date = dt.date(2017, 1, 1)
) -> int:
    """Emit the population as a raw session log (one row per visit).

    Returns the number of session rows written. Parsing the output back
    through the ingest pipeline reproduces ``pop.table`` exactly.
    """
    fh.write(
        "machine_id\tsession_id\tdomain\tdate\ttime\tpages\tduration\tincome\trace\tzip\n"
    )
    table = pop.table
    machine_pos = {int(m): i for i, m in enumerate(pop.machine_ids)}
    session_id = 0
    n = 0
    for i in range(len(table)):
        mid = int(table.machine_ids[i])
        pos = machine_pos[mid]
        date = (epoch + dt.timedelta(weeks=int(table.week_indices[i]))).strftime("%Y%m%d")
        income = _INCOME_TO_CODE[INCOME_GROUPS[pop.income_idx[pos]]]
        race = _RACE_TO_CODE[RACE_GROUPS[pop.race_idx[pos]]]
        zip_code = representative_zip(pop.config.states[pop.state_idx[pos]])
        lo, hi = table.offsets[i], table.offsets[i + 1]
        for j in sorted(table.vocab[v] for v in table.dom_indices[lo:hi]):
            session_id += 1
            fh.write(
                f"{mid}\t{session_id}\t{j}\t{date}\t12:00:00\t1\t60\t{income}\t{race}\t{zip_code}\n"
            )
            n += 1
    return n
