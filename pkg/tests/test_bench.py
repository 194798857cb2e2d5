import math
from dataclasses import replace

import jsonschema
import pytest

from psbf.bench import (
    COLUMNS,
    BenchmarkRecord,
    BenchPlan,
    parse_records,
    records_csv,
    run_bench,
    summarize,
    summary_csv,
    summary_table,
    validate_records,
)


def rec(pid="p", step=0, kl=1.0, us=(1.0, 2.0, 3.0), skipped=1, total=4, **kw):
    base = dict(process_id=pid, preset="S", passivity_pct=0.0, filter="psbf", threads=1,
                step=step, kl_bits=kl, transition_us=us[0], observation_us=us[1],
                overhead_us=us[2], factors_skipped=skipped, factors_total=total)
    base.update(kw)
    return BenchmarkRecord(**base)


class TestSummarize:
    def test_single_record(self):
        [row] = summarize([rec()])
        assert row.processes == 1 and row.kl_final_mean == 1.0 and row.kl_final_std == 0.0
        assert row.step_us_mean == 6.0 and row.skipped_fraction_mean == 0.25

    def test_identical_records_zero_std(self):
        [row] = summarize([rec("a"), rec("b")])
        assert row.kl_final_std == 0.0 and row.processes == 2

    def test_hand_computed(self):
        rs = [rec("a", 0, kl=9.0), rec("a", 1, kl=1.0), rec("b", 1, kl=2.0), rec("c", 1, kl=6.0,
              us=(0.0, 0.0, 0.0), skipped=0)]
        [row] = summarize(rs)
        # finals 1, 2, 6: mean 3, population variance (4 + 1 + 9) / 3
        assert row.kl_final_mean == pytest.approx(3.0)
        assert row.kl_final_std == pytest.approx(math.sqrt(14 / 3))
        assert row.step_us_mean == pytest.approx(18 / 4)
        assert row.skipped_fraction_mean == pytest.approx(0.75 / 4)

    def test_groups_and_missing_kl(self):
        rs = [rec(), rec(filter="bk", skipped=0), rec(passivity_pct=40.0, kl=None)]
        rows = summarize(rs)
        assert [(r.passivity_pct, r.filter) for r in rows] == [(0.0, "psbf"), (0.0, "bk"),
                                                                (40.0, "psbf")]
        assert rows[2].kl_final_mean is None and rows[2].kl_final_std is None
        assert "-" in summary_table(rows)
        assert summary_csv(rows).splitlines()[3].split(",")[5] == ""

    def test_empty(self):
        with pytest.raises(ValueError):
            summarize([])


class TestRecords:
    def test_csv_round_trip(self):
        rs = [rec(kl=0.1 + 0.2), rec(step=1, kl=None)]
        text = records_csv(rs)
        assert text.splitlines()[0] == ",".join(COLUMNS)
        assert parse_records(text) == rs

    def test_schema_rejects(self):
        with pytest.raises(jsonschema.ValidationError):
            validate_records([rec(kl=-1.0)])
        with pytest.raises(jsonschema.ValidationError):
            validate_records([rec(filter="kalman")])
        bad = records_csv([rec()]).replace(",psbf,", ",nope,")
        with pytest.raises((jsonschema.ValidationError, ValueError)):
            parse_records(bad)


class TestPlan:
    @pytest.mark.parametrize("kw", [dict(presets=()), dict(passivity=()), dict(filters=("ukf",)),
                                    dict(presets=("Q",)), dict(processes=0), dict(threads=(0,)),
                                    dict(pf_match="luck")])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            BenchPlan(**kw)


@pytest.fixture(scope="module")
def small_plan():
    return BenchPlan(presets=("S",), passivity=(0, 60), filters=("psbf", "bk"), processes=3,
                     steps=12, no_timing=True)


def test_byte_determinism(small_plan):
    a = records_csv(run_bench(small_plan))
    assert a == records_csv(run_bench(small_plan))
    validate_records(parse_records(a))


def test_parallel_workers_same_records(small_plan):
    assert run_bench(replace(small_plan, workers=2)) == run_bench(small_plan)


def test_psbf_matches_bk(small_plan):
    rs = run_bench(small_plan)
    by = {(r.passivity_pct, r.process_id, r.step, r.filter): r for r in rs}
    for (pct, pid, step, f), r in by.items():
        if f == "psbf":
            assert abs(r.kl_bits - by[(pct, pid, step, "bk")].kl_bits) <= 1e-12
    assert all(r.factors_skipped == 0 for r in rs if r.passivity_pct == 0 or r.filter == "bk")
    assert any(r.factors_skipped > 0 for r in rs if r.passivity_pct == 60 and r.filter == "psbf")


def test_threads_do_not_change_kl():
    plan = BenchPlan(presets=("S",), passivity=(40,), filters=("psbf",), processes=2, steps=8,
                     threads=(1, 2, 4), no_timing=True)
    rs = run_bench(plan)
    kl = {}
    for r in rs:
        kl.setdefault((r.process_id, r.step), set()).add(r.kl_bits)
    assert all(len(v) == 1 for v in kl.values())


def test_pf_and_exact_rows():
    plan = BenchPlan(presets=("S",), passivity=(20,), filters=("exact", "pf"), processes=1,
                     steps=5, pf_match=None, pf_particles=500, no_timing=True)
    rs = run_bench(plan)
    assert {r.filter for r in rs} == {"exact", "pf"}
    assert all(r.kl_bits == pytest.approx(0.0, abs=1e-9) for r in rs if r.filter == "exact")


def test_kl_omitted_above_cap():
    plan = BenchPlan(presets=("M",), passivity=(0,), filters=("psbf",), processes=1, steps=2,
                     no_timing=True)
    assert all(r.kl_bits is None for r in run_bench(plan))
