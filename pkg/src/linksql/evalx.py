"""Exact set match and execution accuracy, plus corpus-level reports.

Execution accuracy compares result tables after canonicalizing every
cell to a hashable key: NULLs compare equal to each other, integers and
integral reals unify exactly, and non-integral reals are quantized to
seven significant digits (the realization of a 1e-6 relative tolerance
that keeps multiset comparison well defined). Column order is free: two
result tables count as identical when some single column permutation
aligns them, matching the set treatment of select items.
"""

from __future__ import annotations

import json
import logging
import math
import sqlite3
import time
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .catalog import DatabaseCatalog
from .linker import LinkingSummary
from .sqlast import exact_set_match as _ast_exact_set_match
from .sqlast import parse_sql
from .sqlast.lexer import SqlParseError, tokenize
from .sqlast.parser import ResolutionError

log = logging.getLogger(__name__)

FAILURE_KINDS = (
    "pred_parse_error",
    "pred_exec_error",
    "timeout",
    "result_mismatch",
    "component_mismatch",
)

DEFAULT_TIMEOUT_MS = 30000

MODES = ("full", "dts", "oracle_link")


class GoldExecutionError(Exception):
    """The gold query itself failed to execute; the example is invalid."""


@dataclass(frozen=True)
class SqlVerdict:
    example_id: str
    exact_match: bool
    execution_match: bool
    failure_kind: str | None
    timings: dict


@dataclass(frozen=True)
class EvalReport:
    mode: str
    n: int
    ex_accuracy: float
    em_accuracy: float
    linking: LinkingSummary | None
    verdicts: tuple[SqlVerdict, ...]
    model_name: str | None = None
    quarantined: tuple[str, ...] = ()  # gold outside the supported dialect
    invalid_gold: tuple[str, ...] = ()  # gold failed to execute
    skipped_no_database: tuple[str, ...] = ()


# -- exact set match -------------------------------------------------------


def exact_set_match(
    pred: str,
    gold: str,
    catalog: DatabaseCatalog,
    ignore_values: bool = False,
) -> bool:
    matched, _ = em_with_detail(pred, gold, catalog, ignore_values)
    return matched


def em_with_detail(
    pred: str,
    gold: str,
    catalog: DatabaseCatalog,
    ignore_values: bool = False,
) -> tuple[bool, str | None]:
    """(matched, failure kind) — unparseable prediction is a distinct kind."""
    gold_ast = parse_sql(gold, catalog)
    try:
        pred_ast = parse_sql(pred, catalog)
    except (SqlParseError, ResolutionError):
        return False, "pred_parse_error"
    if _ast_exact_set_match(pred_ast, gold_ast, ignore_values):
        return True, None
    return False, "component_mismatch"


# -- execution -------------------------------------------------------------


class _Timeout(Exception):
    pass


def _cell_key(value):
    if value is None:
        return ("null",)
    if isinstance(value, bool):
        value = int(value)
    if isinstance(value, int):
        return ("num", "i", value)
    if isinstance(value, float):
        if math.isfinite(value) and value == int(value) and abs(value) < 1e15:
            return ("num", "i", int(value))
        return ("num", "f", f"{value:.6e}")
    if isinstance(value, bytes):
        return ("bytes", value.hex())
    return ("text", str(value))


def _run_query(db_file: Path, sql: str, deadline: float) -> list[tuple]:
    """Execute read-only; rows come back as tuples of canonical cell keys."""
    timed_out = False

    def check() -> int:
        nonlocal timed_out
        if time.monotonic() > deadline:
            timed_out = True
            return 1
        return 0

    conn = sqlite3.connect(f"file:{db_file}?mode=ro", uri=True)
    try:
        conn.set_progress_handler(check, 1000)
        try:
            cursor = conn.execute(sql)
            rows = cursor.fetchall()
        except sqlite3.Error:
            if timed_out:
                raise _Timeout()
            raise
        if timed_out:
            raise _Timeout()
        if cursor.description is None:
            # empty or non-query statement; sqlite accepts it silently
            raise sqlite3.OperationalError("statement produced no result set")
        return [tuple(_cell_key(c) for c in row) for row in rows]
    finally:
        conn.close()


def _has_toplevel_order(sql: str) -> bool:
    try:
        tokens = tokenize(sql)
    except SqlParseError:
        return "order by" in " ".join(sql.lower().split())
    depth = 0
    for tok in tokens:
        if tok.kind == "OP" and tok.value == "(":
            depth += 1
        elif tok.kind == "OP" and tok.value == ")":
            depth -= 1
        elif depth == 0 and tok.is_kw("order"):
            return True
    return False


def _column_views(rows: list[tuple]) -> list[tuple]:
    ncols = len(rows[0])
    return [tuple(r[j] for r in rows) for j in range(ncols)]


def _tables_equal(pred_rows: list[tuple], gold_rows: list[tuple], ordered: bool) -> bool:
    """True when some column permutation makes the result tables identical,
    as sequences when ordered, as multisets otherwise."""
    if len(pred_rows) != len(gold_rows):
        return False
    if not gold_rows:
        return True
    if len(pred_rows[0]) != len(gold_rows[0]):
        return False
    ncols = len(gold_rows[0])
    pred_cols = _column_views(pred_rows)
    gold_cols = _column_views(gold_rows)

    def cols_compatible(p: tuple, g: tuple) -> bool:
        return p == g if ordered else Counter(p) == Counter(g)

    candidates = [
        [j for j in range(ncols) if cols_compatible(pred_cols[j], gold_cols[k])]
        for k in range(ncols)
    ]
    if any(not c for c in candidates):
        return False
    # Fill gold columns starting with the most constrained one.
    fill_order = sorted(range(ncols), key=lambda k: len(candidates[k]))
    assignment: dict[int, int] = {}
    used: set[int] = set()

    def verify() -> bool:
        if ordered:
            # Column-wise sequence equality already implies row equality.
            return True
        permuted = [tuple(row[assignment[k]] for k in range(ncols)) for row in pred_rows]
        return Counter(permuted) == Counter(gold_rows)

    def backtrack(i: int) -> bool:
        if i == ncols:
            return verify()
        k = fill_order[i]
        for j in candidates[k]:
            if j in used:
                continue
            used.add(j)
            assignment[k] = j
            if backtrack(i + 1):
                return True
            used.remove(j)
            del assignment[k]
        return False

    return backtrack(0)


def execution_accuracy(
    pred: str,
    gold: str,
    db_file: str | Path,
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
) -> bool:
    matched, _ = ex_with_detail(pred, gold, db_file, timeout_ms)
    return matched


def ex_with_detail(
    pred: str,
    gold: str,
    db_file: str | Path,
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
) -> tuple[bool, str | None]:
    """(matched, failure kind). Gold failures raise GoldExecutionError;
    an unreadable database file is an infrastructure error (OSError)."""
    db_file = Path(db_file)
    if not db_file.is_file():
        raise OSError(f"database file not readable: {db_file}")
    try:
        gold_rows = _run_query(db_file, gold, time.monotonic() + timeout_ms / 1000.0)
    except _Timeout as err:
        raise GoldExecutionError(f"gold query timed out: {gold!r}") from err
    except sqlite3.Error as err:
        raise GoldExecutionError(f"gold query failed: {err}") from err
    try:
        pred_rows = _run_query(db_file, pred, time.monotonic() + timeout_ms / 1000.0)
    except _Timeout:
        return False, "timeout"
    except sqlite3.Error:
        return False, "pred_exec_error"
    ordered = _has_toplevel_order(gold)
    if _tables_equal(pred_rows, gold_rows, ordered):
        return True, None
    return False, "result_mismatch"


# -- combined per-example verdict -----------------------------------------


def evaluate_pair(
    example_id: str,
    pred: str,
    gold: str,
    catalog: DatabaseCatalog,
    db_file: str | Path,
    ignore_values: bool = False,
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
) -> SqlVerdict:
    """Both metrics for one example. Execution-side failures win the
    failure_kind slot; a prediction our dialect cannot parse but that
    still executes correctly records no failure on the execution side."""
    t0 = time.monotonic()
    em, em_kind = em_with_detail(pred, gold, catalog, ignore_values)
    t1 = time.monotonic()
    ex, ex_kind = ex_with_detail(pred, gold, db_file, timeout_ms)
    t2 = time.monotonic()
    if not ex:
        kind = ex_kind
    elif not em:
        kind = em_kind
    else:
        kind = None
    timings = {
        "match_ms": round((t1 - t0) * 1000.0, 3),
        "execution_ms": round((t2 - t1) * 1000.0, 3),
    }
    return SqlVerdict(
        example_id=example_id,
        exact_match=em,
        execution_match=ex,
        failure_kind=kind,
        timings=timings,
    )


# -- aggregation and reporting --------------------------------------------


def aggregate(
    verdicts: list[SqlVerdict],
    mode: str,
    linking: LinkingSummary | None = None,
    model_name: str | None = None,
    quarantined: tuple[str, ...] = (),
    invalid_gold: tuple[str, ...] = (),
    skipped_no_database: tuple[str, ...] = (),
) -> EvalReport:
    if not verdicts:
        raise ValueError("cannot aggregate zero verdicts")
    n = len(verdicts)
    ex_acc = sum(v.execution_match for v in verdicts) / n
    em_acc = sum(v.exact_match for v in verdicts) / n
    return EvalReport(
        mode=mode,
        n=n,
        ex_accuracy=ex_acc,
        em_accuracy=em_acc,
        linking=linking,
        verdicts=tuple(verdicts),
        model_name=model_name,
        quarantined=tuple(quarantined),
        invalid_gold=tuple(invalid_gold),
        skipped_no_database=tuple(skipped_no_database),
    )


def verdict_dict(v: SqlVerdict) -> dict:
    return {
        "example_id": v.example_id,
        "exact_match": v.exact_match,
        "execution_match": v.execution_match,
        "failure_kind": v.failure_kind,
        "timings": v.timings,
    }


def write_verdicts(path: str | Path, verdicts) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for v in verdicts:
            fh.write(json.dumps(verdict_dict(v), ensure_ascii=False) + "\n")


def report_dict(report: EvalReport) -> dict:
    out = {
        "mode": report.mode,
        "model": report.model_name,
        "n": report.n,
        "ex_accuracy": report.ex_accuracy,
        "em_accuracy": report.em_accuracy,
        "quarantined": list(report.quarantined),
        "invalid_gold": list(report.invalid_gold),
        "skipped_no_database": list(report.skipped_no_database),
        "verdicts": [verdict_dict(v) for v in report.verdicts],
    }
    if report.linking is not None:
        s = report.linking
        out["linking"] = {
            "n": s.n,
            "precision": s.precision,
            "recall": s.recall,
            "exact_match_rate": s.exact_match_rate,
            "tables": list(s.tables),
            "columns": list(s.columns),
        }
    return out


def report_from_dict(data: dict) -> EvalReport:
    verdicts = tuple(
        SqlVerdict(
            example_id=v["example_id"],
            exact_match=v["exact_match"],
            execution_match=v["execution_match"],
            failure_kind=v.get("failure_kind"),
            timings=v.get("timings", {}),
        )
        for v in data.get("verdicts", [])
    )
    linking = None
    if data.get("linking"):
        s = data["linking"]
        linking = LinkingSummary(
            n=s["n"],
            precision=s["precision"],
            recall=s["recall"],
            exact_match_rate=s["exact_match_rate"],
            tables=tuple(s["tables"]),
            columns=tuple(s["columns"]),
        )
    return EvalReport(
        mode=data["mode"],
        n=data["n"],
        ex_accuracy=data["ex_accuracy"],
        em_accuracy=data["em_accuracy"],
        linking=linking,
        verdicts=verdicts,
        model_name=data.get("model"),
        quarantined=tuple(data.get("quarantined", ())),
        invalid_gold=tuple(data.get("invalid_gold", ())),
        skipped_no_database=tuple(data.get("skipped_no_database", ())),
    )


_MODE_LABELS = {
    "full": "full-schema",
    "dts": "two-stage",
    "oracle_link": "oracle-link",
}


def report_text(report: EvalReport) -> str:
    """Aligned table: one row per run, columns Model / Tuning / EX / EM."""
    headers = ("Model", "Tuning", "EX", "EM")
    row = (
        report.model_name or "-",
        _MODE_LABELS.get(report.mode, report.mode),
        f"{100.0 * report.ex_accuracy:.1f}",
        f"{100.0 * report.em_accuracy:.1f}",
    )
    widths = [max(len(h), len(c)) for h, c in zip(headers, row)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(headers, widths)),
        "  ".join("-" * w for w in widths),
        "  ".join(c.ljust(w) for c, w in zip(row, widths)),
    ]
    lines.append(f"n={report.n}")
    if report.quarantined:
        lines.append(f"quarantined (gold outside dialect): {len(report.quarantined)}")
    if report.invalid_gold:
        lines.append(f"invalid gold (execution failed): {len(report.invalid_gold)}")
    if report.skipped_no_database:
        lines.append(f"skipped (database file missing): {len(report.skipped_no_database)}")
    if report.linking is not None:
        s = report.linking
        lines.append(
            "linking: "
            f"PR={100.0 * s.precision:.1f} RE={100.0 * s.recall:.1f} "
            f"EX={100.0 * s.exact_match_rate:.1f} "
            f"(tables PR={100.0 * s.tables[0]:.1f} RE={100.0 * s.tables[1]:.1f}; "
            f"columns PR={100.0 * s.columns[0]:.1f} RE={100.0 * s.columns[1]:.1f})"
        )
    return "\n".join(lines)
