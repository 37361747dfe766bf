"""Acceptance gate: one test per shipped guarantee, at stated tolerance.

Run with ``pytest tests/test_acceptance.py -v`` for one pass/fail line
per criterion. Each test also checks its runtime budget and prints the
measured numbers (visible with ``-s`` / ``-rA`` or on failure).
"""

import filecmp
import io
import json
import time
from pathlib import Path

import numpy as np
import pytest

from flocpriv.cli import main as cli_main
from flocpriv.fixtures import (
    EXPECTED_FINGERPRINT_FRACTIONS,
    EXPECTED_SEQUENCE_FRACTIONS,
    bundled_table1_sessions,
)
from flocpriv.hashing import derive_seed
from flocpriv.ingest import FormatConfig, WeekConfig, build_machine_weeks, parse_sessions
from flocpriv.panels import JointDistribution, cluster_panel, stratified_panels
from flocpriv.prefixlsh import build_cohort_map
from flocpriv.sensitivity import (
    DEFAULT_T_GRID,
    binomial_baseline,
    chi_square_by_group,
    chi_square_test,
    cohort_category_counts,
    ot_scale_control,
    population_freqs,
    random_subsample_pvalue,
    shuffle_baseline,
    violation_curve,
)
from flocpriv.simhash import SimHashConfig
from flocpriv.special import spearman_rho
from flocpriv.synth import SynthConfig, generate_population
from flocpriv.unicity import (
    assign_sequence_cohorts,
    build_sequences,
    sweep_k,
    sweep_population,
    unicity_fractions,
)

# Frozen oracle constants (rational summation / 60-dps mpmath, computed
# and recorded before these tests were written).
BINOM_5_10_HALF = 0.376953125  # = 193/512 exactly
BINOM_690_3000_013 = 5.75911393771248113108159356e-51
CHISQ_P_10_3 = 0.067889154861829023645


def _elapsed_ok(t0: float, budget_s: float, label: str) -> None:
    wall = time.time() - t0
    print(f"{label}: {wall:.1f} s (budget {budget_s:.0f} s)")
    assert wall < budget_s, f"{label} exceeded runtime budget: {wall:.1f}s"


def test_criterion_01_worked_example_exact():
    """Bundled 6-device fixture reproduces the worked unicity fractions."""
    t0 = time.time()
    parsed = parse_sessions(io.StringIO(bundled_table1_sessions()), FormatConfig())
    table = build_machine_weeks(parsed.records, WeekConfig()).table
    seqs = build_sequences(table, window=3)
    report = unicity_fractions(seqs, assign_sequence_cohorts(seqs, 3, SimHashConfig()))
    got_seq = tuple(r.frac_sequence for r in report.rows)
    got_fp = tuple(r.frac_fingerprint for r in report.rows)
    print(f"criterion 1: sequence {got_seq} fingerprint {got_fp}")
    assert got_seq == EXPECTED_SEQUENCE_FRACTIONS  # (0/6, 2/6, 6/6)
    assert got_fp == EXPECTED_FINGERPRINT_FRACTIONS  # (2/6, 6/6, 6/6)
    _elapsed_ok(t0, 1.0, "criterion 1")


def test_criterion_02_prefixlsh_anonymity_properties():
    """1,000 random multisets: every cohort >= k, exact cover, counts sum to N."""
    t0 = time.time()
    rng = np.random.default_rng(20260826)
    for case in range(1000):
        bits = int(rng.integers(4, 65))
        n = int(rng.integers(1, 400))
        k = int(rng.integers(1, max(2, n // 2 + 1)))
        if n < k:
            continue
        # duplicate-heavy draws exercise multiplicity handling
        pool = rng.integers(0, 1 << bits, size=max(1, n // 3), dtype=np.uint64)
        hashes = pool[rng.integers(0, len(pool), size=n)]
        cmap = build_cohort_map(hashes, k, bits)  # _validate enforces exact cover
        counts = [b.count for b in cmap.buckets]
        assert min(counts) >= k, f"case {case}: cohort below k"
        assert sum(counts) == n, f"case {case}: member count not conserved"
        assigned = cmap.assign(hashes)
        assert np.bincount(assigned, minlength=len(counts)).tolist() == counts
    _elapsed_ok(t0, 30.0, "criterion 2")


def test_criterion_03_unicity_monotonicity_cases():
    """100 random populations: fractions non-decreasing, fingerprint dominates."""
    t0 = time.time()
    rng = np.random.default_rng(3)
    for case in range(100):
        window = int(rng.integers(2, 5))
        cfg = SynthConfig(
            n_machines=int(rng.integers(30, 150)),
            n_weeks=window,
            vocab_size=500,
            seed=int(rng.integers(0, 2**31)),
        )
        seqs = build_sequences(generate_population(cfg).table, window=window)
        k = int(rng.integers(2, max(3, seqs.n_samples // 5)))
        report = unicity_fractions(seqs, assign_sequence_cohorts(seqs, k, SimHashConfig()))
        seq = [r.frac_sequence for r in report.rows]
        fp = [r.frac_fingerprint for r in report.rows]
        assert seq == sorted(seq), f"case {case}: sequence column not monotone"
        assert fp == sorted(fp), f"case {case}: fingerprint column not monotone"
        for r in report.rows:
            assert r.frac_fingerprint >= r.frac_sequence_known, f"case {case}"
            assert r.frac_fingerprint >= r.frac_sequence, f"case {case}"
    _elapsed_ok(t0, 30.0, "criterion 3")


def test_criterion_04_trend_reproduction():
    """Unicity grows with N (rho >= 0.6) and falls with k (rho <= -0.6)."""
    t0 = time.time()
    n_grid = [20_000, 40_000, 60_000, 80_000, 100_000]
    k_grid = [500, 1000, 2000, 4000, 8000]
    for attempt, seed in enumerate((41, 42, 43)):
        pop = generate_population(SynthConfig(n_machines=100_000, n_weeks=3, seed=seed))
        seqs = build_sequences(pop.table, window=3)
        sn = sweep_population(
            seqs, 500, n_grid, derive_seed(seed, "sweep-n"), SimHashConfig()
        )
        rho_n = spearman_rho(n_grid, [p.frac_sequence for p in sn.points])
        sk = sweep_k(seqs, k_grid, SimHashConfig())
        rho_k = spearman_rho(k_grid, [p.frac_sequence for p in sk.points])
        print(
            f"criterion 4 (seed {seed}): rho_n={rho_n:+.2f} rho_k={rho_k:+.2f} "
            f"n-fracs={[round(p.frac_sequence, 4) for p in sn.points]} "
            f"k-fracs={[round(p.frac_sequence, 4) for p in sk.points]}"
        )
        if rho_n >= 0.6 and rho_k <= -0.6:
            # recorded-not-asserted companion number (ledger): cohort count
            # when this population is clustered at k=2000
            ck = assign_sequence_cohorts(seqs, 2000, SimHashConfig())
            print(f"criterion 4: cohorts/position at k=2000 = {ck.cohorts_per_position()}")
            break
    else:
        pytest.fail(f"trend criterion failed on all retry seeds: {rho_n=} {rho_k=}")
    assert attempt == 0, "primary seed should not need retries"
    _elapsed_ok(t0, 600.0, "criterion 4")


def test_criterion_05_binomial_baseline_exactness():
    t0 = time.time()
    a = binomial_baseline(10, 0.5, 0.0)
    b = binomial_baseline(3000, 0.13, 0.1)
    print(f"criterion 5: {a!r} vs {BINOM_5_10_HALF!r}; {b:.12e} vs {BINOM_690_3000_013:.12e}")
    assert abs(a - BINOM_5_10_HALF) < 1e-12
    assert abs(b - BINOM_690_3000_013) / BINOM_690_3000_013 < 1e-10
    _elapsed_ok(t0, 5.0, "criterion 5")


@pytest.fixture(scope="module")
def shuffle_study():
    """30k-machine population, 10 stratified panels, 100 shuffled copies."""
    pop = generate_population(SynthConfig(n_machines=30_000, n_weeks=1, seed=78))
    panels = stratified_panels(
        pop.table,
        JointDistribution.default(),
        10,
        derive_seed(78, "panels"),
        bit_length=50,
        sim_seed=7,
    )
    for p in panels:
        cluster_panel(p, 30, 50)
    shuffled = [
        shuffle_baseline(p, derive_seed(78, "shuffle", i * len(panels) + p.panel_id))
        for i in range(10)
        for p in panels
    ]
    return panels, shuffled


def test_criterion_06_shuffled_null_matches_binomial(shuffle_study):
    """Shuffled-panel violation counts within 3 SE of the binomial model."""
    t0 = time.time()
    _, shuffled = shuffle_study
    assert len(shuffled) == 100
    worst = 0.0
    for attribute in ("race", "income"):
        for t in (0.05, 0.1, 0.2):
            obs = exp = var = 0.0
            for panel in shuffled:
                counts = cohort_category_counts(panel, attribute)
                freqs = population_freqs(panel, attribute)
                sizes = counts.sum(axis=1)
                excess = counts / sizes[:, None] - freqs
                obs += float((excess > t).sum())
                for n_c in sizes:
                    for p_r in freqs:
                        q = binomial_baseline(int(n_c), float(p_r), t)
                        exp += q
                        var += q * (1.0 - q)
            z = (obs - exp) / np.sqrt(var)
            print(f"criterion 6: {attribute} t={t} obs={obs:.0f} exp={exp:.1f} z={z:+.2f}")
            worst = max(worst, abs(z))
            assert abs(z) <= 3.0, f"{attribute} at t={t}: z={z:+.2f}"
    print(f"criterion 6: worst |z| = {worst:.2f}")
    _elapsed_ok(t0, 600.0, "criterion 6")


def test_criterion_07_violation_curves_monotone(shuffle_study):
    """Violating fraction non-increasing in t, bounded in [0,1], every panel."""
    t0 = time.time()
    panels, shuffled = shuffle_study
    for panel in list(panels) + list(shuffled):
        for attribute in ("race", "income"):
            curve = violation_curve(panel, DEFAULT_T_GRID, attribute)
            assert np.all(curve >= 0.0) and np.all(curve <= 1.0)
            assert np.all(np.diff(curve) <= 0.0)
    print(f"criterion 7: {2 * (len(panels) + len(shuffled))} curves monotone")
    _elapsed_ok(t0, 120.0, "criterion 7")


def test_criterion_08_deployment_scale_control():
    """101.6M members, 33,872 cohorts of ~3000: zero t=0.1 violations."""
    t0 = time.time()
    result = ot_scale_control(
        33_872, 2000, 1.5, JointDistribution.default(), t=0.1, seed=7
    )
    print(
        f"criterion 8: n={result.n_members} violations={result.violations} "
        f"max_excess={ {k: round(v, 4) for k, v in result.max_excess.items()} }"
    )
    assert result.n_members == 101_616_000
    assert result.violations == {"race": 0, "income": 0}
    _elapsed_ok(t0, 1800.0, "criterion 8")


def test_criterion_09_chi_square_engine_and_skew():
    t0 = time.time()
    stat0, p0 = chi_square_test(np.array([10, 30, 60]), np.array([100, 300, 600]))
    assert (stat0, p0) == (0.0, 1.0)
    stat, p = chi_square_test(np.array([10, 20]), np.array([15, 15]))
    assert abs(stat - 10 / 3) < 1e-10
    assert abs(p - CHISQ_P_10_3) < 1e-4
    print(f"criterion 9: exact cases ok (stat={stat:.12f}, p={p:.6f})")

    pop = generate_population(SynthConfig(n_machines=20_000, n_weeks=1, skew=0.5, seed=13))
    rows = chi_square_by_group(pop.table, "race", [50])
    max_p = max(r.p_value for r in rows)
    print(f"criterion 9: skew=0.5 race p-values max {max_p:.3g}")
    assert max_p < 1e-4

    above = sum(
        random_subsample_pvalue(pop.table, 50, 0.25, derive_seed(13, "chisq-control", i))
        > 0.05
        for i in range(50)
    )
    print(f"criterion 9: control runs above 0.05: {above}/50")
    assert above >= 45  # >= 90% of 50
    _elapsed_ok(t0, 300.0, "criterion 9")


def test_criterion_10_cli_determinism(tmp_path):
    """Every subcommand, run twice with the same flags, is byte-identical."""
    t0 = time.time()
    sessions = tmp_path / "sessions.tsv"
    sessions.write_text(bundled_table1_sessions())
    reference = tmp_path / "reference.json"
    reference.write_text(
        json.dumps(
            {
                "race": {"white": 0.5, "black": 0.17, "asian": 0.17, "other": 0.16},
                "income": {
                    "lt25k": 0.17,
                    "25k_75k": 0.17,
                    "75k_150k": 0.5,
                    "ge150k": 0.16,
                },
            }
        )
    )

    synth0 = tmp_path / "synth_r0"
    synth_flags = ["--machines", "80", "--weeks", "4", "--vocab", "400", "--seed", "6",
                   "--emit", "both"]
    assert cli_main(["synth", "--out", str(synth0)] + synth_flags) == 0
    table = str(synth0 / "machine_weeks.tsv")

    runs = {
        "synth": synth_flags,
        "preprocess": ["--sessions", str(sessions), "--reference", str(reference)],
        "cohorts": ["--table", table, "--k", "8"],
        "unicity": ["--table", table, "--k", "8", "--window", "4"],
        "sweep-n": ["--table", table, "--k", "8", "--grid", "40,80", "--seed", "5"],
        "sweep-k": ["--table", table, "--grid", "8,16"],
        "t-closeness": ["--table", table, "--k", "10", "--panels", "2",
                        "--shuffles", "2", "--t-grid", "0:0.5:0.05",
                        "--target", "empirical", "--seed", "3"],
        "chisq": ["--table", table, "--d-grid", "10,20", "--control-runs", "5"],
        "ot-control": ["--cohorts", "12", "--k", "15", "--ratio", "1.5",
                       "--t", "0.5", "--seed", "2"],
        "report": [str(synth0)],
    }
    for name, flags in runs.items():
        dirs = []
        for rerun in ("a", "b"):
            out = tmp_path / f"{name}_{rerun}"
            code = cli_main([name, "--out", str(out)] + flags)
            assert code == 0, f"{name} rerun {rerun} failed"
            dirs.append(out)
        files = sorted(p.name for p in dirs[0].iterdir())
        assert files == sorted(p.name for p in dirs[1].iterdir())
        match, mismatch, errors = filecmp.cmpfiles(dirs[0], dirs[1], files, shallow=False)
        assert not mismatch and not errors, f"{name}: differing outputs {mismatch or errors}"
        print(f"criterion 10: {name} byte-identical across reruns ({len(files)} files)")
    _elapsed_ok(t0, 600.0, "criterion 10")
