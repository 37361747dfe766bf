"""Session parsing, machine-week aggregation, and representativeness."""

import io

import numpy as np
import pytest

from flocpriv.geo import UNKNOWN_STATE, representative_zip, state_for_zip
from flocpriv.ingest import (
    FormatConfig,
    MachineWeekTable,
    SchemaError,
    WeekConfig,
    build_machine_weeks,
    parse_sessions,
    representativeness,
)

HEADER = "machine_id\tsession_id\tdomain\tdate\ttime\tpages\tduration\tincome\trace\tzip"


def _row(machine=1, session=1, domain="example.com", date="20170101", time="10:00:00",
         pages=1, duration=5, income=14, race=1, zip_code="36832"):
    return f"{machine}\t{session}\t{domain}\t{date}\t{time}\t{pages}\t{duration}\t{income}\t{race}\t{zip_code}"


def _parse(rows, fmt=None):
    text = HEADER + "\n" + "\n".join(rows) + ("\n" if rows else "")
    return parse_sessions(io.StringIO(text), fmt or FormatConfig())


class TestStateForZip:
    def test_known_prefixes(self):
        assert state_for_zip("36832") == "AL"
        assert state_for_zip("90210") == "CA"
        assert state_for_zip("10001") == "NY"

    def test_three_digit_form(self):
        assert state_for_zip("368") == "AL"

    def test_unknown(self):
        assert state_for_zip("00000") == UNKNOWN_STATE
        assert state_for_zip("") == UNKNOWN_STATE
        assert state_for_zip("abcde") == UNKNOWN_STATE

    def test_representative_zip_round_trips(self):
        for state in ("AL", "CA", "NY", "TX", "WA"):
            assert state_for_zip(representative_zip(state)) == state


class TestParseSessions:
    def test_table2_style_row(self):
        result = _parse([_row(machine=169007206, session=27157206, domain="example.com",
                              date="20170515", time="8:36:55", pages=1, duration=5)])
        assert len(result.records) == 1
        rec = result.records[0]
        assert rec.machine_id == 169007206
        assert rec.domain == "example.com"
        assert rec.date.isoformat() == "2017-05-15"
        assert rec.income_group == "75k_150k"
        assert rec.race_group == "white"
        assert rec.zip_code == "36832"
        assert result.rejects.total == 0

    def test_empty_stream_with_header(self):
        result = _parse([])
        assert result.records == []
        assert result.rejects.total == 0

    def test_missing_header_is_fatal(self):
        with pytest.raises(SchemaError):
            parse_sessions(io.StringIO(""), FormatConfig())

    def test_missing_column_is_fatal(self):
        text = "machine_id\tdomain\n1\texample.com\n"
        with pytest.raises(SchemaError):
            parse_sessions(io.StringIO(text), FormatConfig())

    def test_non_numeric_pages_rejected_not_fatal(self):
        result = _parse([_row(pages="xx"), _row(session=2)])
        assert len(result.records) == 1
        assert result.rejects.total == 1
        assert result.rejects.counts["bad_integer_field"] == 1

    def test_negative_duration_rejected(self):
        result = _parse([_row(duration=-5)])
        assert result.rejects.counts["negative_count"] == 1

    def test_bad_date_and_codes_rejected(self):
        result = _parse([_row(date="2017051"), _row(race=99), _row(income=99)])
        assert result.rejects.total == 3
        assert set(result.rejects.counts) == {"bad_date", "bad_race_code", "bad_income_code"}

    def test_reject_report_keeps_samples(self):
        result = _parse([_row(pages="bad") for _ in range(9)])
        report = result.rejects.to_json_dict()
        assert report["total"] == 9
        assert report["counts"]["bad_integer_field"] == 9
        assert len(report["samples"]["bad_integer_field"]) == 5

    def test_custom_column_order(self):
        fmt = FormatConfig()
        text = (
            "domain\tmachine_id\tsession_id\tdate\ttime\tpages\tduration\tincome\trace\tzip\n"
            "example.com\t7\t1\t20170101\t09:00:00\t1\t5\t14\t1\t36832\n"
        )
        result = parse_sessions(io.StringIO(text), fmt)
        assert result.records[0].machine_id == 7
        assert result.records[0].domain == "example.com"


def _sessions_for(machine, domains, date="20170101", zip_code="36832", race=1, income=14):
    return [
        _row(machine=machine, session=i + 1, domain=d, date=date,
             zip_code=zip_code, race=race, income=income)
        for i, d in enumerate(domains)
    ]


DOMAINS_7 = [f"d{i}.com" for i in range(7)]


class TestBuildMachineWeeks:
    def test_seven_domain_boundary(self):
        parsed = _parse(_sessions_for(1, DOMAINS_7))
        built = build_machine_weeks(parsed.records, WeekConfig())
        assert len(built.table) == 1
        assert built.table.row(0).domains == frozenset(DOMAINS_7)

    def test_six_domains_dropped(self):
        parsed = _parse(_sessions_for(1, DOMAINS_7[:6]))
        built = build_machine_weeks(parsed.records, WeekConfig())
        assert len(built.table) == 0
        assert built.report["machine_weeks_below_cutoff"] == 1

    def test_repeat_visits_counted_once(self):
        rows = _sessions_for(1, DOMAINS_7) + _sessions_for(1, ["d0.com"] * 5)
        parsed = _parse(rows)
        built = build_machine_weeks(parsed.records, WeekConfig())
        assert built.table.row(0).domains == frozenset(DOMAINS_7)

    def test_invalid_domains_filtered(self):
        rows = _sessions_for(1, DOMAINS_7 + ["not_a_tld.nosuchtld", "192.168.0.1"])
        parsed = _parse(rows)
        built = build_machine_weeks(parsed.records, WeekConfig())
        assert built.table.row(0).domains == frozenset(DOMAINS_7)
        assert built.report["rejected_domains"] == 2

    def test_week_binning(self):
        rows = _sessions_for(1, DOMAINS_7, date="20170101") + _sessions_for(
            1, DOMAINS_7, date="20170108"
        )
        parsed = _parse(rows)
        built = build_machine_weeks(parsed.records, WeekConfig())
        assert sorted(built.table.week_indices.tolist()) == [0, 1]

    def test_pre_epoch_dates_out_of_range(self):
        parsed = _parse(_sessions_for(1, DOMAINS_7, date="20161225"))
        built = build_machine_weeks(parsed.records, WeekConfig())
        assert len(built.table) == 0
        assert built.report["weeks_out_of_range"] == len(DOMAINS_7)

    def test_unknown_zip_keeps_row_with_sentinel(self):
        parsed = _parse(_sessions_for(1, DOMAINS_7, zip_code="00000"))
        built = build_machine_weeks(parsed.records, WeekConfig())
        assert built.table.row(0).state == UNKNOWN_STATE

    def test_demographic_conflicts_first_seen_wins(self):
        rows = _sessions_for(1, DOMAINS_7[:4], race=1) + _sessions_for(1, DOMAINS_7[4:], race=2)
        parsed = _parse(rows)
        built = build_machine_weeks(parsed.records, WeekConfig())
        assert built.table.row(0).race_group == "white"
        assert built.report["demographic_conflicts"] > 0

    def test_idempotence(self):
        # Re-expanding aggregated output to one session per domain and
        # re-aggregating reproduces the identical table.
        rows = []
        rows += _sessions_for(1, [f"a{i}.com" for i in range(9)], date="20170101")
        rows += _sessions_for(2, [f"b{i}.com" for i in range(8)], date="20170103",
                              zip_code="90210", race=4, income=4)
        rows += _sessions_for(2, [f"c{i}.com" for i in range(7)], date="20170110",
                              zip_code="90210", race=4, income=4)
        parsed = _parse(rows)
        built = build_machine_weeks(parsed.records, WeekConfig())

        re_expanded = []
        code_of_race = {"white": 1, "black": 2, "asian": 4, "other": 3}
        code_of_income = {"lt25k": 4, "25k_75k": 10, "75k_150k": 14, "ge150k": 16}
        for i in range(len(built.table)):
            mw = built.table.row(i)
            date = f"201701{1 + 7 * mw.week_index:02d}"
            re_expanded += _sessions_for(
                mw.machine_id, list(mw.domains), date=date,
                zip_code=representative_zip(mw.state),
                race=code_of_race[mw.race_group], income=code_of_income[mw.income_group],
            )
        rebuilt = build_machine_weeks(_parse(re_expanded).records, WeekConfig())
        assert rebuilt.table.save_text() == built.table.save_text()


class TestMachineWeekTable:
    def test_save_load_round_trip(self, tmp_path, small_table):
        path = tmp_path / "table.tsv"
        small_table.save(path)
        loaded = MachineWeekTable.load(path)
        assert loaded.save_text() == small_table.save_text()
        assert np.array_equal(loaded.machine_ids, small_table.machine_ids)
        hashes_a = small_table.hashes(50, 7)
        hashes_b = loaded.hashes(50, 7)
        assert np.array_equal(hashes_a, hashes_b)

    def test_rows_sorted_by_machine_then_week(self, small_table):
        keys = list(zip(small_table.machine_ids.tolist(), small_table.week_indices.tolist()))
        assert keys == sorted(keys)

    def test_subset_preserves_rows(self, small_table):
        mask = np.zeros(len(small_table), dtype=bool)
        mask[10:20] = True
        sub = small_table.subset(mask)
        assert len(sub) == 10
        assert sub.row(0).domains == small_table.row(10).domains


class TestRepresentativeness:
    def test_identical_histograms(self):
        obs = {"a": 10, "b": 20, "c": 30, "d": 40}
        r, p = representativeness(obs, obs)
        assert r == pytest.approx(1.0, abs=1e-12)
        assert p == pytest.approx(0.0, abs=1e-12)

    def test_exact_reversal(self):
        obs = {"a": 0.1, "b": 0.2, "c": 0.3, "d": 0.4}
        ref = {"a": 0.4, "b": 0.3, "c": 0.2, "d": 0.1}
        r, _ = representativeness(obs, ref)
        assert r == pytest.approx(-1.0, abs=1e-12)

    def test_scale_invariance(self):
        obs = {"a": 1, "b": 2, "c": 3, "d": 4}
        ref = {"a": 2.0, "b": 1.0, "c": 4.0, "d": 3.0}
        r1, p1 = representativeness(obs, ref)
        r2, p2 = representativeness({k: 100 * v for k, v in obs.items()}, ref)
        assert r1 == pytest.approx(r2, abs=1e-12)
        assert p1 == pytest.approx(p2, abs=1e-12)

    def test_frozen_spreadsheet_case(self):
        obs = {"a": 0.1, "b": 0.2, "c": 0.3, "d": 0.4}
        ref = {"a": 0.2, "b": 0.1, "c": 0.4, "d": 0.3}
        r, p = representativeness(obs, ref)
        assert r == pytest.approx(0.6, abs=1e-12)
        assert p == pytest.approx(0.4, abs=1e-10)

    def test_category_mismatch_errors(self):
        with pytest.raises(ValueError):
            representativeness({"a": 1, "b": 2, "c": 3}, {"a": 1, "b": 2, "x": 3})

    def test_too_few_categories_errors(self):
        with pytest.raises(ValueError):
            representativeness({"a": 1, "b": 2}, {"a": 1, "b": 2})

    def test_zero_variance_errors(self):
        with pytest.raises(ValueError):
            representativeness({"a": 1, "b": 1, "c": 1}, {"a": 1, "b": 2, "c": 3})
