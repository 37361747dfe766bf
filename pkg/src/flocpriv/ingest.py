"""Session-log parsing and weekly per-machine domain profiles.

The pipeline is: raw session rows -> validated ``SessionRecord`` ->
one ``MachineWeek`` per (machine, epoch week) holding the set of
registrable domains visited, the machine's state (from its ZIP) and its
demographic groups. Profiles with fewer distinct domains than the cutoff
are dropped. The columnar ``MachineWeekTable`` is the working
representation for everything downstream.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence, TextIO

import numpy as np

from . import special
from .geo import UNKNOWN_STATE, state_for_zip
from .hashing import domain_hash64
from .psl import SuffixSet, registrable_domain

RACE_GROUPS: tuple[str, ...] = ("white", "black", "asian", "other")
INCOME_GROUPS: tuple[str, ...] = ("lt25k", "25k_75k", "75k_150k", "ge150k")

#: Distinct registrable domains a machine-week must reach to be kept.
MIN_WEEKLY_DOMAINS = 7


def _default_race_codes() -> dict[str, str]:
    codes = {"1": "white", "2": "black", "4": "asian"}
    for c in range(1, 27):
        codes.setdefault(str(c), "other")
    return codes


def _default_income_codes() -> dict[str, str]:
    bands = [(7, "lt25k"), (13, "25k_75k"), (15, "75k_150k"), (16, "ge150k")]
    codes: dict[str, str] = {}
    for c in range(1, 17):
        codes[str(c)] = next(band for upper, band in bands if c <= upper)
    return codes


class SchemaError(ValueError):
    """A required column is missing from the session-file header."""


_FIELDS = (
    "machine_id",
    "session_id",
    "domain",
    "date",
    "time",
    "pages",
    "duration",
    "income",
    "race",
    "zip",
)


@dataclass(frozen=True)
class FormatConfig:
    """Shape of the raw session log.

    The file carries a header row; ``columns`` maps each logical field to
    its header name (identity by default). Demographic code maps
    translate survey-style numeric codes into the four canonical groups.
    """

    delimiter: str = "\t"
    date_format: str = "%Y%m%d"
    columns: Mapping[str, str] = field(default_factory=lambda: {f: f for f in _FIELDS})
    race_code_map: Mapping[str, str] = field(default_factory=_default_race_codes)
    income_code_map: Mapping[str, str] = field(default_factory=_default_income_codes)


@dataclass(frozen=True)
class SessionRecord:
    machine_id: int
    session_id: int
    domain: str
    date: dt.date
    time: str
    pages: int
    duration: int
    income_group: str
    race_group: str
    zip_code: str


@dataclass
class RejectReport:
    """Counts of dropped rows by reason, with a few sample lines each."""

    counts: dict[str, int] = field(default_factory=dict)
    samples: dict[str, list[str]] = field(default_factory=dict)

    def add(self, reason: str, line: str) -> None:
        self.counts[reason] = self.counts.get(reason, 0) + 1
        bucket = self.samples.setdefault(reason, [])
        if len(bucket) < 5:
            bucket.append(line.rstrip("\n")[:200])

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def to_json_dict(self) -> dict:
        return {
            "total": self.total,
            "counts": dict(sorted(self.counts.items())),
            "samples": {k: v for k, v in sorted(self.samples.items())},
        }


@dataclass
class ParseResult:
    records: list[SessionRecord]
    rejects: RejectReport


def parse_sessions(source: Iterable[str] | TextIO, fmt: FormatConfig | None = None) -> ParseResult:
    """Parse raw session rows, counting (not raising on) malformed ones.

    The first line must be a header naming every configured column;
    a missing column raises ``SchemaError``.
    """
    fmt = fmt or FormatConfig()
    records: list[SessionRecord] = []
    rejects = RejectReport()
    lines = iter(source)
    header_line = next(lines, None)
    if header_line is None:
        raise SchemaError("empty stream: no header row")
    header = header_line.rstrip("\n").split(fmt.delimiter)
    positions: dict[str, int] = {}
    for logical in _FIELDS:
        name = fmt.columns.get(logical, logical)
        if name not in header:
            raise SchemaError(f"required column {name!r} ({logical}) missing from header")
        positions[logical] = header.index(name)
    n_columns = len(header)
    for line in lines:
        if not line.strip():
            continue
        parts = line.rstrip("\n").split(fmt.delimiter)
        if len(parts) != n_columns:
            rejects.add("field_count", line)
            continue
        mid, sid, domain, date_s, time_s, pages_s, dur_s, inc_s, race_s, zip_s = (
            parts[positions[f]] for f in _FIELDS
        )
        try:
            machine_id = int(mid)
            session_id = int(sid)
            pages = int(pages_s)
            duration = int(dur_s)
        except ValueError:
            rejects.add("bad_integer_field", line)
            continue
        if pages < 0 or duration < 0:
            rejects.add("negative_count", line)
            continue
        domain = domain.strip()
        if not domain:
            rejects.add("empty_domain", line)
            continue
        try:
            date = dt.datetime.strptime(date_s, fmt.date_format).date()
        except ValueError:
            rejects.add("bad_date", line)
            continue
        # strptime tolerates short month/day fields ("2017051"); require the
        # canonical rendering so truncated dates are rejected, not guessed at.
        if date.strftime(fmt.date_format) != date_s:
            rejects.add("bad_date", line)
            continue
        income = fmt.income_code_map.get(inc_s.strip())
        if income is None:
            rejects.add("bad_income_code", line)
            continue
        race = fmt.race_code_map.get(race_s.strip())
        if race is None:
            rejects.add("bad_race_code", line)
            continue
        records.append(
            SessionRecord(
                machine_id=machine_id,
                session_id=session_id,
                domain=domain,
                date=date,
                time=time_s.strip(),
                pages=pages,
                duration=duration,
                income_group=income,
                race_group=race,
                zip_code=zip_s.strip(),
            )
        )
    return ParseResult(records, rejects)


@dataclass(frozen=True)
class WeekConfig:
    """Epoch anchoring week 0 and the optional week-range clamp."""

    epoch: dt.date = dt.date(2017, 1, 1)
    n_weeks: int | None = None
    min_domains: int = MIN_WEEKLY_DOMAINS

    def week_index(self, date: dt.date) -> int:
        return (date - self.epoch).days // 7


@dataclass(frozen=True)
class MachineWeek:
    """One machine's distinct registrable domains for one epoch week."""

    machine_id: int
    week_index: int
    state: str
    race_group: str
    income_group: str
    domains: frozenset[str]


class MachineWeekTable:
    """Columnar store of machine-weeks (rows sorted by machine, week).

    Domains are interned in a vocabulary; each row's domain indices are
    kept sorted by the 64-bit domain hash so the hashing kernels can run
    straight over the CSR arrays.
    """

    def __init__(
        self,
        machine_ids: np.ndarray,
        week_indices: np.ndarray,
        state_labels: Sequence[str],
        race_idx: np.ndarray,
        income_idx: np.ndarray,
        state_idx: np.ndarray,
        dom_indices: np.ndarray,
        offsets: np.ndarray,
        vocab: Sequence[str],
    ):
        self.machine_ids = np.asarray(machine_ids, dtype=np.int64)
        self.week_indices = np.asarray(week_indices, dtype=np.int32)
        self.state_labels = tuple(state_labels)
        self.race_idx = np.asarray(race_idx, dtype=np.int8)
        self.income_idx = np.asarray(income_idx, dtype=np.int8)
        self.state_idx = np.asarray(state_idx, dtype=np.int16)
        self.dom_indices = np.asarray(dom_indices, dtype=np.int32)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.vocab = list(vocab)
        self.vocab_hashes = np.fromiter(
            (domain_hash64(d) for d in self.vocab), dtype=np.uint64, count=len(self.vocab)
        )
        self._sort_rows_and_domains()
        self._hash_cache: dict[tuple[int, int], np.ndarray] = {}

    def _sort_rows_and_domains(self) -> None:
        order = np.lexsort((self.week_indices, self.machine_ids))
        if not np.array_equal(order, np.arange(len(order))):
            lengths = np.diff(self.offsets)[order]
            new_offsets = np.zeros(len(order) + 1, dtype=np.int64)
            np.cumsum(lengths, out=new_offsets[1:])
            new_dom = np.empty_like(self.dom_indices)
            old_starts = self.offsets[:-1]
            for new_i, old_i in enumerate(order):
                lo, n = old_starts[old_i], lengths[new_i]
                new_dom[new_offsets[new_i] : new_offsets[new_i] + n] = self.dom_indices[
                    lo : lo + n
                ]
            self.machine_ids = self.machine_ids[order]
            self.week_indices = self.week_indices[order]
            self.race_idx = self.race_idx[order]
            self.income_idx = self.income_idx[order]
            self.state_idx = self.state_idx[order]
            self.dom_indices = new_dom
            self.offsets = new_offsets
        # Within each row, order domain indices by hash value (column
        # order required by the hashing kernels).
        if len(self.dom_indices):
            row_of = np.repeat(
                np.arange(len(self), dtype=np.int64), np.diff(self.offsets)
            )
            perm = np.lexsort((self.vocab_hashes[self.dom_indices], row_of))
            self.dom_indices = self.dom_indices[perm]

    def __len__(self) -> int:
        return len(self.machine_ids)

    @property
    def n_rows(self) -> int:
        return len(self)

    def week_values(self) -> np.ndarray:
        return np.unique(self.week_indices)

    def rows_for_week(self, week: int) -> np.ndarray:
        return np.nonzero(self.week_indices == week)[0]

    def hashes(self, bit_length: int, seed: int) -> np.ndarray:
        """Per-row hash bitvectors, cached per (bit_length, seed)."""
        key = (int(bit_length), int(seed))
        cached = self._hash_cache.get(key)
        if cached is None:
            from . import kernels
            from .hashing import seed_key

            values = self.vocab_hashes[self.dom_indices]
            cached = kernels.simhash_rows(values, self.offsets, bit_length, seed_key(seed))
            self._hash_cache[key] = cached
        return cached

    def row(self, i: int) -> MachineWeek:
        lo, hi = self.offsets[i], self.offsets[i + 1]
        return MachineWeek(
            machine_id=int(self.machine_ids[i]),
            week_index=int(self.week_indices[i]),
            state=self.state_labels[self.state_idx[i]],
            race_group=RACE_GROUPS[self.race_idx[i]],
            income_group=INCOME_GROUPS[self.income_idx[i]],
            domains=frozenset(self.vocab[j] for j in self.dom_indices[lo:hi]),
        )

    def __iter__(self) -> Iterator[MachineWeek]:
        return (self.row(i) for i in range(len(self)))

    def subset(self, row_indices: np.ndarray) -> "MachineWeekTable":
        """New table holding the selected rows (bool mask or index array)."""
        idx = np.asarray(row_indices)
        if idx.dtype == bool:
            idx = np.nonzero(idx)[0]
        idx = idx.astype(np.int64, copy=False)
        lengths = np.diff(self.offsets)[idx]
        new_offsets = np.zeros(len(idx) + 1, dtype=np.int64)
        np.cumsum(lengths, out=new_offsets[1:])
        new_dom = np.empty(int(new_offsets[-1]), dtype=np.int32)
        for out_i, row_i in enumerate(idx):
            lo = self.offsets[row_i]
            new_dom[new_offsets[out_i] : new_offsets[out_i + 1]] = self.dom_indices[
                lo : lo + lengths[out_i]
            ]
        return MachineWeekTable(
            self.machine_ids[idx],
            self.week_indices[idx],
            self.state_labels,
            self.race_idx[idx],
            self.income_idx[idx],
            self.state_idx[idx],
            new_dom,
            new_offsets,
            self.vocab,
        )

    @classmethod
    def from_machine_weeks(cls, rows: Iterable[MachineWeek]) -> "MachineWeekTable":
        rows = list(rows)
        vocab_index: dict[str, int] = {}
        states: dict[str, int] = {UNKNOWN_STATE: 0}
        machine_ids = np.empty(len(rows), dtype=np.int64)
        week_indices = np.empty(len(rows), dtype=np.int32)
        race_idx = np.empty(len(rows), dtype=np.int8)
        income_idx = np.empty(len(rows), dtype=np.int8)
        state_idx = np.empty(len(rows), dtype=np.int16)
        offsets = np.zeros(len(rows) + 1, dtype=np.int64)
        dom_chunks: list[list[int]] = []
        for i, mw in enumerate(rows):
            machine_ids[i] = mw.machine_id
            week_indices[i] = mw.week_index
            race_idx[i] = RACE_GROUPS.index(mw.race_group)
            income_idx[i] = INCOME_GROUPS.index(mw.income_group)
            state_idx[i] = states.setdefault(mw.state, len(states))
            chunk = [vocab_index.setdefault(d, len(vocab_index)) for d in sorted(mw.domains)]
            dom_chunks.append(chunk)
            offsets[i + 1] = offsets[i] + len(chunk)
        dom_indices = np.fromiter(
            (j for chunk in dom_chunks for j in chunk), dtype=np.int32, count=int(offsets[-1])
        )
        state_labels = [s for s, _ in sorted(states.items(), key=lambda kv: kv[1])]
        return cls(
            machine_ids,
            week_indices,
            state_labels,
            race_idx,
            income_idx,
            state_idx,
            dom_indices,
            offsets,
            list(vocab_index),
        )

    def save_text(self) -> str:
        """The table as deterministic TSV text (domains sorted, |-joined)."""
        lines = ["machine_id\tweek_index\tstate\trace_group\tincome_group\tdomains"]
        for i in range(len(self)):
            lo, hi = self.offsets[i], self.offsets[i + 1]
            domains = "|".join(sorted(self.vocab[j] for j in self.dom_indices[lo:hi]))
            lines.append(
                f"{self.machine_ids[i]}\t{self.week_indices[i]}\t"
                f"{self.state_labels[self.state_idx[i]]}\t"
                f"{RACE_GROUPS[self.race_idx[i]]}\t"
                f"{INCOME_GROUPS[self.income_idx[i]]}\t{domains}"
            )
        return "\n".join(lines) + "\n"

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.save_text())

    @classmethod
    def load(cls, path: str) -> "MachineWeekTable":
        rows: list[MachineWeek] = []
        with open(path, encoding="utf-8") as fh:
            header = fh.readline()
            if not header.startswith("machine_id\t"):
                raise ValueError(f"{path}: not a machine-week table")
            for line in fh:
                if not line.strip():
                    continue
                mid, week, state, race, income, domains = line.rstrip("\n").split("\t")
                rows.append(
                    MachineWeek(
                        machine_id=int(mid),
                        week_index=int(week),
                        state=state,
                        race_group=race,
                        income_group=income,
                        domains=frozenset(domains.split("|")) if domains else frozenset(),
                    )
                )
        return cls.from_machine_weeks(rows)


@dataclass
class BuildResult:
    table: MachineWeekTable
    report: dict


def build_machine_weeks(
    records: Sequence[SessionRecord],
    week_config: WeekConfig | None = None,
    suffixes: SuffixSet | None = None,
    *,
    implicit_star: bool = False,
) -> BuildResult:
    """Aggregate session records into the weekly domain-set table.

    Hostnames that yield no registrable domain are dropped (counted);
    machine-weeks under the distinct-domain cutoff are dropped (counted).
    A machine's demographics and ZIP come from its first record; later
    conflicting values are counted, not applied.
    """
    cfg = week_config or WeekConfig()
    domain_cache: dict[str, str | None] = {}
    machine_demo: dict[int, tuple[str, str, str]] = {}
    conflicts = 0
    bad_domains = 0
    out_of_range = 0
    weeks: dict[tuple[int, int], set[str]] = {}

    for rec in records:
        demo = (rec.race_group, rec.income_group, rec.zip_code)
        seen = machine_demo.setdefault(rec.machine_id, demo)
        if seen != demo:
            conflicts += 1
        week = cfg.week_index(rec.date)
        if week < 0 or (cfg.n_weeks is not None and week >= cfg.n_weeks):
            out_of_range += 1
            continue
        rd = domain_cache.get(rec.domain, "")
        if rd == "":
            rd = registrable_domain(rec.domain, suffixes, implicit_star=implicit_star)
            domain_cache[rec.domain] = rd
        if rd is None:
            bad_domains += 1
            continue
        weeks.setdefault((rec.machine_id, week), set()).add(rd)

    rows: list[MachineWeek] = []
    dropped_small = 0
    for (machine_id, week), domains in weeks.items():
        if len(domains) < cfg.min_domains:
            dropped_small += 1
            continue
        race, income, zip_code = machine_demo[machine_id]
        state = state_for_zip(zip_code) or UNKNOWN_STATE
        rows.append(
            MachineWeek(
                machine_id=machine_id,
                week_index=week,
                state=state,
                race_group=race,
                income_group=income,
                domains=frozenset(domains),
            )
        )
    table = MachineWeekTable.from_machine_weeks(rows)
    report = {
        "n_records": len(records),
        "n_machines": len(machine_demo),
        "n_machine_weeks": len(table),
        "rejected_domains": bad_domains,
        "weeks_out_of_range": out_of_range,
        "machine_weeks_below_cutoff": dropped_small,
        "demographic_conflicts": conflicts,
    }
    return BuildResult(table, report)


def representativeness(
    observed: Mapping[str, float], reference: Mapping[str, float]
) -> tuple[float, float]:
    """Pearson r (and two-sided p) between two categorical distributions.

    Both mappings must cover the same categories.
    """
    if set(observed) != set(reference):
        raise ValueError("distributions cover different categories")
    keys = sorted(observed)
    return special.pearson_r([observed[k] for k in keys], [reference[k] for k in keys])
