"""Normalized in-memory schema model for benchmark databases.

Ingests benchmark schema metadata (the ``tables.json`` format: per-database
table and column name lists, column types, primary keys, and foreign keys
given as column-index pairs) and, optionally, live SQLite database files
from which a few sample rows per table are captured for prompt rendering.

Catalogs are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import json
import logging
import sqlite3
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

log = logging.getLogger(__name__)

COLUMN_TYPES = ("text", "number", "time", "boolean", "others")

TEXT_CELL_LIMIT = 64


class CatalogError(Exception):
    """Malformed schema metadata file or unresolvable schema reference."""


def _normalize(name: str) -> str:
    return name.strip().lower()


@dataclass(frozen=True)
class ColumnDef:
    """One column: original spelling, lowercase normal form, type, position."""

    name: str
    data_type: str
    ordinal: int

    @property
    def normal_name(self) -> str:
        return _normalize(self.name)


@dataclass(frozen=True)
class TableDef:
    """One table with its columns, primary key, and captured sample rows."""

    name: str
    columns: tuple[ColumnDef, ...]
    primary_key: frozenset[str] = frozenset()
    sample_rows: tuple[tuple[str, ...], ...] = ()

    @property
    def normal_name(self) -> str:
        return _normalize(self.name)

    @cached_property
    def column_map(self) -> dict[str, ColumnDef]:
        return {c.normal_name: c for c in self.columns}

    def column(self, normal_name: str) -> ColumnDef:
        return self.column_map[normal_name]

    def has_column(self, normal_name: str) -> bool:
        return normal_name in self.column_map


@dataclass(frozen=True)
class ForeignKey:
    """A resolved foreign-key edge; all four identifiers are normal-form."""

    from_table: str
    from_column: str
    to_table: str
    to_column: str


@dataclass(frozen=True)
class DatabaseCatalog:
    """Full relational schema of one database.

    ``tables`` preserves metadata order, which is the canonical rendering
    order for prompts. ``db_file_path`` is set once sample rows have been
    attached from a concrete SQLite file.
    """

    db_id: str
    tables: tuple[TableDef, ...]
    foreign_keys: tuple[ForeignKey, ...] = ()
    db_file_path: Path | None = field(default=None, compare=False)

    @cached_property
    def table_map(self) -> dict[str, TableDef]:
        return {t.normal_name: t for t in self.tables}

    @property
    def table_names(self) -> tuple[str, ...]:
        """Normal-form table names in catalog order."""
        return tuple(t.normal_name for t in self.tables)

    def table(self, normal_name: str) -> TableDef:
        return self.table_map[normal_name]

    def has_table(self, normal_name: str) -> bool:
        return normal_name in self.table_map

    def resolve_fk_endpoints(self) -> None:
        """Assert that every foreign-key endpoint names a real column.

        Raises CatalogError on the first dangling endpoint.
        """
        for fk in self.foreign_keys:
            for tbl, col in ((fk.from_table, fk.from_column), (fk.to_table, fk.to_column)):
                if not self.has_table(tbl) or not self.table(tbl).has_column(col):
                    raise CatalogError(
                        f"db {self.db_id!r}: foreign key endpoint {tbl}.{col} does not resolve"
                    )


def load_catalogs(tables_metadata_file: str | Path) -> list[DatabaseCatalog]:
    """Load every database schema from a ``tables.json``-format metadata file.

    The file is a JSON array of database entries with fields ``db_id``,
    ``table_names_original``, ``column_names_original`` (pairs of
    ``[table_index, name]``), ``column_types``, ``primary_keys`` (column
    indices), and ``foreign_keys`` (pairs of column indices). The ``*``
    pseudo-column at index 0 is dropped; column-index references are
    resolved to names.

    Raises CatalogError on malformed JSON (with file offset) or on any
    out-of-range index (naming the offending db_id).
    """
    path = Path(tables_metadata_file)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CatalogError(f"{path}: invalid JSON at offset {e.pos}: {e.msg}") from e
    if not isinstance(raw, list):
        raise CatalogError(f"{path}: expected a JSON array of database entries")

    catalogs = []
    for entry in raw:
        catalogs.append(_build_catalog(entry, path))
    return catalogs


def _build_catalog(entry: dict, path: Path) -> DatabaseCatalog:
    try:
        db_id = entry["db_id"]
        table_names = entry["table_names_original"]
        column_names = entry["column_names_original"]
        column_types = entry["column_types"]
        primary_keys = entry.get("primary_keys", [])
        foreign_keys = entry.get("foreign_keys", [])
    except (KeyError, TypeError) as e:
        raise CatalogError(f"{path}: database entry missing field {e}") from e

    def schema_error(msg: str) -> CatalogError:
        return CatalogError(f"{path}: db {db_id!r}: {msg}")

    if len(column_names) != len(column_types):
        raise schema_error(
            f"{len(column_names)} column names vs {len(column_types)} column types"
        )

    # Global column index -> (table index, ColumnDef); index 0 is the "*"
    # pseudo-column and carries table index -1.
    per_table: list[list[ColumnDef]] = [[] for _ in table_names]
    col_site: dict[int, tuple[int, ColumnDef]] = {}
    for idx, pair in enumerate(column_names):
        t_idx, col_name = pair
        if t_idx == -1:
            continue
        if not 0 <= t_idx < len(table_names):
            raise schema_error(f"column {col_name!r} references table index {t_idx}")
        ctype = column_types[idx]
        if ctype not in COLUMN_TYPES:
            ctype = "others"
        cdef = ColumnDef(name=col_name, data_type=ctype, ordinal=len(per_table[t_idx]))
        per_table[t_idx].append(cdef)
        col_site[idx] = (t_idx, cdef)

    def locate(col_idx: int, what: str) -> tuple[int, ColumnDef]:
        if col_idx not in col_site:
            raise schema_error(f"{what} references column index {col_idx}")
        return col_site[col_idx]

    pk_by_table: dict[int, set[str]] = {}
    for pk in primary_keys:
        # Composite keys appear as nested index lists in some metadata variants.
        for col_idx in pk if isinstance(pk, list) else [pk]:
            t_idx, cdef = locate(col_idx, "primary key")
            pk_by_table.setdefault(t_idx, set()).add(cdef.normal_name)

    tables = tuple(
        TableDef(
            name=table_names[i],
            columns=tuple(per_table[i]),
            primary_key=frozenset(pk_by_table.get(i, set())),
        )
        for i in range(len(table_names))
    )

    fks = []
    for pair in foreign_keys:
        from_idx, to_idx = pair
        ft, fc = locate(from_idx, "foreign key")
        tt, tc = locate(to_idx, "foreign key")
        fks.append(
            ForeignKey(
                from_table=_normalize(table_names[ft]),
                from_column=fc.normal_name,
                to_table=_normalize(table_names[tt]),
                to_column=tc.normal_name,
            )
        )

    seen = set()
    for t in tables:
        if t.normal_name in seen:
            raise schema_error(f"duplicate table name {t.normal_name!r}")
        seen.add(t.normal_name)

    catalog = DatabaseCatalog(db_id=db_id, tables=tables, foreign_keys=tuple(fks))
    catalog.resolve_fk_endpoints()
    return catalog


def render_cell(value: object) -> str:
    """Render one database cell for sample-row display.

    NULL becomes "NULL", long text is truncated with an ellipsis marker,
    and numbers use their shortest round-trip decimal form.
    """
    if value is None:
        return "NULL"
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, bytes):
        text = value.hex()
    else:
        text = str(value)
    if len(text) > TEXT_CELL_LIMIT:
        return text[:TEXT_CELL_LIMIT] + "..."
    return text


def attach_samples(
    catalog: DatabaseCatalog, db_file: str | Path, max_rows: int = 3
) -> DatabaseCatalog:
    """Return a copy of the catalog with up to ``max_rows`` sample rows per table.

    Rows are the first rows in physical storage order (by rowid). Schema
    structure is never modified. A table missing from the database file
    yields a warning and an empty sample list; an unreadable file raises
    OSError.
    """
    path = Path(db_file)
    if not path.is_file():
        raise OSError(f"database file not readable: {path}")
    uri = f"file:{path}?mode=ro"
    try:
        conn = sqlite3.connect(uri, uri=True)
    except sqlite3.Error as e:
        raise OSError(f"cannot open database file {path}: {e}") from e

    try:
        conn.text_factory = lambda b: b.decode("utf-8", errors="replace")
        tables = tuple(
            replace(t, sample_rows=_fetch_samples(conn, t, max_rows, catalog.db_id))
            for t in catalog.tables
        )
    finally:
        conn.close()
    return replace(catalog, tables=tables, db_file_path=path)


def _fetch_samples(
    conn: sqlite3.Connection, table: TableDef, max_rows: int, db_id: str
) -> tuple[tuple[str, ...], ...]:
    cols = ", ".join(f'"{c.name}"' for c in table.columns)
    if not cols:
        return ()
    base = f'SELECT {cols} FROM "{table.name}"'
    try:
        try:
            rows = conn.execute(f"{base} ORDER BY rowid LIMIT ?", (max_rows,)).fetchall()
        except sqlite3.OperationalError:
            # WITHOUT ROWID tables reject the rowid ordering; fall back to
            # plain physical order.
            rows = conn.execute(f"{base} LIMIT ?", (max_rows,)).fetchall()
    except sqlite3.OperationalError as e:
        log.warning("db %s: cannot sample table %s: %s", db_id, table.name, e)
        return ()
    return tuple(tuple(render_cell(v) for v in row) for row in rows)
