import json
import sqlite3
import time

import pytest

from linksql.evalx import (
    DEFAULT_TIMEOUT_MS,
    FAILURE_KINDS,
    EvalReport,
    GoldExecutionError,
    aggregate,
    em_with_detail,
    evaluate_pair,
    ex_with_detail,
    exact_set_match,
    execution_accuracy,
    report_dict,
    report_from_dict,
    report_text,
    verdict_dict,
    write_verdicts,
)
from linksql.ingest import db_file_for


@pytest.fixture
def cat(catalogs):
    return catalogs["venue_events"]


@pytest.fixture
def venue_db(fixture_paths):
    return db_file_for(fixture_paths["db_root_a"], "venue_events")


@pytest.fixture
def scratch_db(tmp_path):
    """Tiny hand-built database for directed result comparisons."""
    path = tmp_path / "scratch.sqlite"
    conn = sqlite3.connect(path)
    conn.executescript(
        """
        CREATE TABLE t (a INTEGER, b REAL, c TEXT);
        INSERT INTO t VALUES (1, 1.5, 'x');
        INSERT INTO t VALUES (2, 2.5, 'y');
        INSERT INTO t VALUES (3, NULL, 'z');
        INSERT INTO t VALUES (NULL, 0.0, 'x');
        """
    )
    conn.commit()
    conn.close()
    return path


# -- string-level EM wrapper ----------------------------------------------


def test_em_true_and_false(cat):
    assert exact_set_match(
        "SELECT City, Name FROM Venue", "SELECT Name, City FROM Venue", cat
    )
    assert not exact_set_match("SELECT City FROM Venue", "SELECT Name FROM Venue", cat)


def test_em_detail_pred_parse_error(cat):
    matched, kind = em_with_detail("SELEC nonsense", "SELECT Name FROM Venue", cat)
    assert not matched and kind == "pred_parse_error"


def test_em_detail_component_mismatch(cat):
    matched, kind = em_with_detail(
        "SELECT City FROM Venue", "SELECT Name FROM Venue", cat
    )
    assert not matched and kind == "component_mismatch"


def test_em_detail_gold_must_parse(cat):
    with pytest.raises(Exception):
        em_with_detail("SELECT Name FROM Venue", "totally not sql", cat)


# -- execution accuracy ----------------------------------------------------


def test_ex_identical_query(venue_db):
    assert execution_accuracy(
        "SELECT Name FROM Venue", "SELECT Name FROM Venue", venue_db
    )


def test_ex_row_multiset_not_set(scratch_db):
    # duplicates matter: c='x' appears twice
    assert not execution_accuracy("SELECT DISTINCT c FROM t", "SELECT c FROM t", scratch_db)


def test_ex_column_order_permutation_accepted(scratch_db):
    assert execution_accuracy(
        "SELECT c, a FROM t", "SELECT a, c FROM t", scratch_db
    )


def test_ex_column_count_mismatch(scratch_db):
    assert not execution_accuracy("SELECT a FROM t", "SELECT a, c FROM t", scratch_db)


def test_ex_null_distinct_from_zero_and_empty(scratch_db):
    assert not execution_accuracy(
        "SELECT b FROM t WHERE a = 3", "SELECT 0 WHERE 0", scratch_db
    )
    assert not execution_accuracy("SELECT 0", "SELECT NULL", scratch_db)
    assert execution_accuracy("SELECT NULL", "SELECT NULL", scratch_db)


def test_ex_int_float_unify(scratch_db):
    assert execution_accuracy("SELECT 1", "SELECT 1.0", scratch_db)
    assert execution_accuracy("SELECT a + 0.0 FROM t WHERE a = 2", "SELECT 2", scratch_db)


def test_ex_float_tolerance(scratch_db):
    # differ at the 9th significant digit: inside the relative tolerance
    assert execution_accuracy(
        "SELECT 1.000000001", "SELECT 1.0000000005", scratch_db
    )
    assert not execution_accuracy("SELECT 1.001", "SELECT 1.002", scratch_db)


def test_ex_text_number_distinct(scratch_db):
    assert not execution_accuracy("SELECT '1'", "SELECT 1", scratch_db)


def test_ex_unordered_gold_accepts_permuted_rows(scratch_db):
    assert execution_accuracy(
        "SELECT c FROM t ORDER BY c DESC", "SELECT c FROM t", scratch_db
    )


def test_ex_ordered_gold_rejects_permuted_rows(scratch_db):
    assert not execution_accuracy(
        "SELECT c FROM t ORDER BY c DESC", "SELECT c FROM t ORDER BY c ASC", scratch_db
    )
    assert execution_accuracy(
        "SELECT c FROM t ORDER BY c", "SELECT c FROM t ORDER BY c ASC", scratch_db
    )


def test_ex_order_within_sqlite_dialect_not_ours(scratch_db):
    # gold uses syntax outside the supported parse dialect; EX still works
    assert execution_accuracy(
        "SELECT a FROM t WHERE a IS NOT NULL",
        "SELECT a FROM t WHERE a IS NOT NULL",
        scratch_db,
    )


def test_ex_pred_error_detail(scratch_db):
    matched, kind = ex_with_detail("SELECT nope FROM missing", "SELECT 1", scratch_db)
    assert not matched and kind == "pred_exec_error"


def test_ex_result_mismatch_detail(scratch_db):
    matched, kind = ex_with_detail("SELECT 1", "SELECT 2", scratch_db)
    assert not matched and kind == "result_mismatch"


def test_ex_empty_statement_is_error(scratch_db):
    # sqlite accepts "" as a no-op; it must not match an empty result set
    matched, kind = ex_with_detail("", "SELECT a FROM t WHERE a > 99", scratch_db)
    assert not matched and kind == "pred_exec_error"


def test_ex_pred_timeout_detail(scratch_db):
    slow = (
        "WITH RECURSIVE r(i) AS (SELECT 1 UNION ALL SELECT i + 1 FROM r)"
        " SELECT count(*) FROM r"
    )
    start = time.monotonic()
    matched, kind = ex_with_detail(slow, "SELECT 1", scratch_db, timeout_ms=200)
    elapsed = time.monotonic() - start
    assert not matched and kind == "timeout"
    assert elapsed < 5


def test_ex_gold_error_raises(scratch_db):
    with pytest.raises(GoldExecutionError):
        ex_with_detail("SELECT 1", "SELECT broken FROM missing", scratch_db)


def test_ex_gold_timeout_raises(scratch_db):
    slow = (
        "WITH RECURSIVE r(i) AS (SELECT 1 UNION ALL SELECT i + 1 FROM r)"
        " SELECT count(*) FROM r"
    )
    with pytest.raises(GoldExecutionError):
        ex_with_detail("SELECT 1", slow, scratch_db, timeout_ms=200)


def test_ex_missing_db_is_infrastructure(tmp_path):
    with pytest.raises(OSError):
        execution_accuracy("SELECT 1", "SELECT 1", tmp_path / "none.sqlite")


def test_ex_readonly_cannot_mutate(scratch_db):
    matched, kind = ex_with_detail("DELETE FROM t", "SELECT 1", scratch_db)
    assert not matched and kind == "pred_exec_error"
    conn = sqlite3.connect(scratch_db)
    assert conn.execute("SELECT count(*) FROM t").fetchone()[0] == 4
    conn.close()


# -- combined verdicts -----------------------------------------------------


def test_evaluate_pair_perfect(cat, venue_db):
    v = evaluate_pair(
        "e:0", "SELECT Name FROM Venue", "SELECT Name FROM Venue", cat, venue_db
    )
    assert v.exact_match and v.execution_match
    assert v.failure_kind is None
    assert set(v.timings) == {"match_ms", "execution_ms"}
    assert all(t >= 0 for t in v.timings.values())


def test_evaluate_pair_em_false_ex_true(cat, venue_db):
    # equivalent but structurally different: EX true, EM component mismatch
    v = evaluate_pair(
        "e:1",
        "SELECT Name FROM Venue WHERE Capacity >= 0 OR Capacity < 0 OR Capacity IS NULL",
        "SELECT Name FROM Venue",
        cat,
        venue_db,
    )
    assert v.execution_match and not v.exact_match
    assert v.failure_kind == "pred_parse_error"  # IS NULL is outside the dialect


def test_evaluate_pair_component_mismatch_kind(cat, venue_db):
    v = evaluate_pair(
        "e:2",
        "SELECT Name FROM Venue WHERE Capacity > 0",
        "SELECT Name FROM Venue",
        cat,
        venue_db,
    )
    # fixture capacities are all positive so results agree
    assert v.execution_match and not v.exact_match
    assert v.failure_kind == "component_mismatch"


def test_evaluate_pair_execution_side_wins(cat, venue_db):
    v = evaluate_pair(
        "e:3", "SELECT Name FROM Nowhere", "SELECT Name FROM Venue", cat, venue_db
    )
    assert not v.execution_match and not v.exact_match
    assert v.failure_kind == "pred_exec_error"


def test_evaluate_pair_result_mismatch(cat, venue_db):
    v = evaluate_pair(
        "e:4", "SELECT City FROM Venue", "SELECT Name FROM Venue", cat, venue_db
    )
    assert v.failure_kind == "result_mismatch"
    assert v.failure_kind in FAILURE_KINDS


def test_aggregate_math(cat, venue_db):
    verdicts = [
        evaluate_pair("a", "SELECT Name FROM Venue", "SELECT Name FROM Venue", cat, venue_db),
        evaluate_pair("b", "SELECT City FROM Venue", "SELECT Name FROM Venue", cat, venue_db),
    ]
    report = aggregate(verdicts, mode="full", model_name="m1")
    assert report.n == 2
    assert report.ex_accuracy == 0.5
    assert report.em_accuracy == 0.5
    assert report.mode == "full"


def test_aggregate_empty_rejected():
    with pytest.raises(ValueError):
        aggregate([], mode="full")


def test_verdict_roundtrip(cat, venue_db, tmp_path):
    verdicts = [
        evaluate_pair("a", "SELECT Name FROM Venue", "SELECT Name FROM Venue", cat, venue_db)
    ]
    out = tmp_path / "verdicts.jsonl"
    write_verdicts(out, verdicts)
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert rows[0]["example_id"] == "a"
    assert rows[0] == verdict_dict(verdicts[0])


def test_report_roundtrip_and_text(cat, venue_db):
    verdicts = [
        evaluate_pair("a", "SELECT Name FROM Venue", "SELECT Name FROM Venue", cat, venue_db),
        evaluate_pair("b", "SELECT City FROM Venue", "SELECT Name FROM Venue", cat, venue_db),
    ]
    report = aggregate(
        verdicts,
        mode="dts",
        model_name="toy-7b",
        quarantined=("q:0",),
        skipped_no_database=("s:1",),
    )
    data = report_dict(report)
    back = report_from_dict(json.loads(json.dumps(data)))
    assert isinstance(back, EvalReport)
    assert back.ex_accuracy == report.ex_accuracy
    assert back.quarantined == report.quarantined
    text = report_text(report)
    assert "toy-7b" in text
    assert "two-stage" in text
    assert "50.0" in text
    assert "quarantined" in text.lower()


def test_default_timeout_is_30s():
    assert DEFAULT_TIMEOUT_MS == 30000
