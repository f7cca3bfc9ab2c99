"""Prompt rendering and supervised fine-tuning dataset emission.

Three dataset stages share one table representation:
  full — all tables of the database, completion is the gold SQL
  link — all tables, completion is the serialized gold link target
  gen  — only the tables the gold query uses, completion is the gold SQL
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .catalog import DatabaseCatalog, ForeignKey, TableDef
from .sqlast import LinkTarget, extract_link_targets, parse_sql
from .sqlast.lexer import SqlParseError
from .sqlast.parser import ResolutionError

log = logging.getLogger(__name__)

STAGES = ("full", "link", "gen")

LINK_COMPLETION_FORMAT = (
    "tables: <table1>, <table2>\ncolumns: <table1>.<col1>, <table2>.<col2>"
)

_DEFAULT_PREAMBLES = {
    "full": (
        "You are a text-to-SQL assistant. You translate natural-language"
        " questions into SQLite queries over the given database schema."
    ),
    "gen": (
        "You are a text-to-SQL assistant. You translate natural-language"
        " questions into SQLite queries over the given database schema."
    ),
    "link": (
        "You are a schema-linking assistant. You identify which tables and"
        " columns of the given database schema a question needs."
    ),
}


def _load_default(name: str) -> str:
    return resources.files("linksql.templates").joinpath(name).read_text("utf-8")


@dataclass(frozen=True)
class PromptTemplateSet:
    """The two prompt templates plus per-stage system preambles.

    Templates are plain text with {schema} and {question} placeholders.
    """

    generation_template: str
    linking_template: str
    linking_completion_format: str = LINK_COMPLETION_FORMAT
    system_preamble: dict = field(default_factory=lambda: dict(_DEFAULT_PREAMBLES))

    def __post_init__(self):
        for label, tpl in (
            ("generation", self.generation_template),
            ("linking", self.linking_template),
        ):
            for ph in ("{schema}", "{question}"):
                if ph not in tpl:
                    raise ValueError(f"{label} template is missing the {ph} placeholder")
        missing = set(STAGES) - set(self.system_preamble)
        if missing:
            raise ValueError(f"system_preamble missing stages: {sorted(missing)}")

    @classmethod
    def default(cls) -> "PromptTemplateSet":
        return cls(
            generation_template=_load_default("generation.txt"),
            linking_template=_load_default("linking.txt"),
        )

    @classmethod
    def load(
        cls,
        generation_path: str | Path | None = None,
        linking_path: str | Path | None = None,
    ) -> "PromptTemplateSet":
        """Default templates, with either one overridden from a file."""
        gen = (
            Path(generation_path).read_text("utf-8")
            if generation_path
            else _load_default("generation.txt")
        )
        link = (
            Path(linking_path).read_text("utf-8")
            if linking_path
            else _load_default("linking.txt")
        )
        return cls(generation_template=gen, linking_template=link)

    def preamble_for(self, stage: str) -> str:
        return self.system_preamble[stage]


# -- table rendering -------------------------------------------------------


def render_table(
    table: TableDef,
    fks: tuple[ForeignKey, ...] = (),
    catalog: DatabaseCatalog | None = None,
) -> str:
    """One table as a CREATE-TABLE-style block.

    Column and table names keep their original casing; the catalog, when
    given, supplies original casing for foreign-key targets. Only foreign
    keys leaving this table are rendered. The trailing comment block holds
    the attached sample rows and stays empty when none were attached.
    Output is identical regardless of which stage consumes it.
    """
    by_normal = {c.normal_name: c for c in table.columns}
    lines = [f'CREATE TABLE "{table.name}" (']
    body: list[str] = []
    for col in table.columns:
        body.append(f'\t"{col.name}" {col.data_type}')
    if table.primary_key:
        pk_cols = sorted(table.primary_key, key=lambda n: by_normal[n].ordinal)
        quoted = ", ".join(f'"{by_normal[n].name}"' for n in pk_cols)
        body.append(f"\tprimary key ({quoted})")
    for fk in fks:
        if fk.from_table != table.normal_name:
            continue
        from_name = by_normal[fk.from_column].name if fk.from_column in by_normal else fk.from_column
        to_table = fk.to_table
        to_column = fk.to_column
        if catalog is not None and catalog.has_table(fk.to_table):
            target = catalog.table(fk.to_table)
            to_table = target.name
            if target.has_column(fk.to_column):
                to_column = target.column(fk.to_column).name
        body.append(
            f'\tforeign key ("{from_name}") references "{to_table}" ("{to_column}")'
        )
    lines.extend(f"{entry}," for entry in body[:-1])
    lines.append(body[-1])
    lines.append(");")
    lines.append("/*")
    lines.append(f"Sample rows from {table.name}:")
    if table.sample_rows:
        lines.append("\t".join(c.name for c in table.columns))
        for row in table.sample_rows:
            lines.append("\t".join(row))
    lines.append("*/")
    return "\n".join(lines)


def render_schema(
    catalog: DatabaseCatalog, tables: frozenset | set | None = None
) -> str:
    """Concatenated table blocks in catalog order.

    ``tables`` (normal names) restricts the rendering; foreign keys whose
    other endpoint is outside the selection are omitted so the reduced
    schema never references an absent table.
    """
    selected = set(catalog.table_names if tables is None else tables)
    blocks = []
    for table in catalog.tables:
        norm = table.normal_name
        if norm not in selected:
            continue
        fks = tuple(
            fk
            for fk in catalog.foreign_keys
            if fk.from_table == norm and fk.to_table in selected
        )
        blocks.append(render_table(table, fks, catalog))
    return "\n\n".join(blocks)


def serialize_link_target(target: LinkTarget, catalog: DatabaseCatalog) -> str:
    """Two-line normal-form serialization, members in catalog order."""
    order = {name: i for i, name in enumerate(catalog.table_names)}

    def table_key(name: str):
        return (0, order[name]) if name in order else (1, name)

    def column_key(ref: tuple[str, str]):
        t, c = ref
        if t in order and catalog.table(t).has_column(c):
            return (0, order[t], catalog.table(t).column(c).ordinal)
        return (1, 0, (t, c))

    tables = ", ".join(sorted(target.tables, key=table_key))
    columns = ", ".join(
        f"{t}.{c}" for t, c in sorted(target.columns, key=column_key)
    )
    first = f"tables: {tables}" if tables else "tables:"
    second = f"columns: {columns}" if columns else "columns:"
    return f"{first}\n{second}"


# -- prompt assembly -------------------------------------------------------


def prompt_parts(
    stage: str,
    question: str,
    catalog: DatabaseCatalog,
    selected_tables: frozenset | set | None = None,
    templates: PromptTemplateSet | None = None,
) -> tuple[str, str]:
    """(system preamble, instantiated template body) for one request."""
    if templates is None:
        templates = PromptTemplateSet.default()
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    if stage == "gen":
        if not selected_tables:
            raise ValueError("stage=gen requires a nonempty table selection")
        unknown = {t for t in selected_tables if not catalog.has_table(t)}
        if unknown:
            raise ValueError(f"selected tables not in catalog: {sorted(unknown)}")
        schema = render_schema(catalog, selected_tables)
    else:
        schema = render_schema(catalog)
    tpl = templates.linking_template if stage == "link" else templates.generation_template
    body = tpl.replace("{schema}", schema).replace("{question}", question)
    return templates.preamble_for(stage), body


def build_prompt(
    stage: str,
    question: str,
    catalog: DatabaseCatalog,
    selected_tables: frozenset | set | None = None,
    templates: PromptTemplateSet | None = None,
) -> str:
    system, body = prompt_parts(stage, question, catalog, selected_tables, templates)
    return f"{system}\n\n{body}"


# -- dataset emission ------------------------------------------------------


def emit_sft_dataset(
    examples,
    catalogs: dict[str, DatabaseCatalog],
    stage: str,
    out: str | Path,
    templates: PromptTemplateSet | None = None,
) -> dict:
    """Write one JSONL record per example; return the manifest.

    Examples need example_id / question / gold_sql / db_id attributes. Gold
    SQL outside the supported dialect quarantines the example (id listed
    in the manifest, nothing written) and never aborts the run. The
    manifest {count, quarantined, sha256} is also written next to ``out``.
    """
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    if templates is None:
        templates = PromptTemplateSet.default()
    out = Path(out)
    quarantined: list[str] = []
    digest = hashlib.sha256()
    count = 0
    with out.open("w", encoding="utf-8") as fh:
        for ex in examples:
            if ex.db_id not in catalogs:
                raise ValueError(f"example {ex.example_id}: unknown db_id {ex.db_id!r}")
            catalog = catalogs[ex.db_id]
            try:
                ast = parse_sql(ex.gold_sql, catalog)
            except (SqlParseError, ResolutionError) as err:
                log.warning("quarantined %s: %s", ex.example_id, err)
                quarantined.append(ex.example_id)
                continue
            target = extract_link_targets(ast)
            selected = target.tables if stage == "gen" else None
            prompt = build_prompt(stage, ex.question, catalog, selected, templates)
            completion = (
                serialize_link_target(target, catalog) if stage == "link" else ex.gold_sql
            )
            record = {
                "example_id": ex.example_id,
                "stage": stage,
                "prompt": prompt,
                "completion": completion,
                "db_id": ex.db_id,
            }
            line = json.dumps(record, ensure_ascii=False) + "\n"
            data = line.encode("utf-8")
            fh.write(line)
            digest.update(data)
            count += 1
    manifest = {"count": count, "quarantined": quarantined, "sha256": digest.hexdigest()}
    manifest_path = out.with_name(out.name + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest
