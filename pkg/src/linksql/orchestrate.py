"""Inference orchestration: endpoint client, pipeline modes, trace capture.

Three modes:
  full        — one generation call with every table in the prompt
  dts         — a linking call first, then generation over the predicted tables
  oracle_link — generation over the tables extracted from the gold SQL
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import requests

from .catalog import DatabaseCatalog
from .ingest import Split
from .linker import parse_linker_output
from .promptgen import PromptTemplateSet, prompt_parts, serialize_link_target
from .sqlast import LinkTarget, extract_link_targets, parse_sql
from .sqlast.lexer import SqlParseError
from .sqlast.parser import ResolutionError

log = logging.getLogger(__name__)

MODES = ("full", "dts", "oracle_link")


class EndpointError(Exception):
    """The endpoint could not produce a completion within the retry budget."""


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model_name: str
    temperature: float = 0.0
    max_output_tokens: int = 512
    request_timeout_ms: int = 60000
    max_parallel_requests: int = 4
    max_retries: int = 2
    backoff_seconds: float = 0.5
    api_key_env: str = "LINKSQL_API_KEY"  # credential read from env, never logged

    def __post_init__(self):
        if not self.base_url:
            raise ValueError("base_url is required")
        if not self.model_name:
            raise ValueError("model_name is required")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_parallel_requests < 1:
            raise ValueError("max_parallel_requests must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class TwoStageTrace:
    example_id: str
    mode: str
    stage1_prompt: str | None
    stage1_completion: str | None
    resolved_tables: tuple[str, ...]
    resolved_columns: tuple[str, ...]  # "table.column" strings
    stage2_prompt: str
    stage2_completion: str
    extracted_sql: str
    wall_ms: dict
    fallback_full_schema: bool = False
    error: str | None = None


def complete(
    config: EndpointConfig,
    prompt: str,
    system: str | None = None,
    sleep=time.sleep,
) -> str:
    """One chat completion with retries on transient failures.

    Transient: transport errors, HTTP 5xx, 429, malformed response body.
    Other HTTP errors fail immediately. Exhausting the budget raises
    EndpointError.
    """
    url = config.base_url.rstrip("/") + "/chat/completions"
    messages = []
    if system is not None:
        messages.append({"role": "system", "content": system})
    messages.append({"role": "user", "content": prompt})
    payload = {
        "model": config.model_name,
        "messages": messages,
        "temperature": config.temperature,
        "max_tokens": config.max_output_tokens,
    }
    headers = {}
    api_key = os.environ.get(config.api_key_env)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    last_error = "no attempt made"
    for attempt in range(config.max_retries + 1):
        if attempt:
            sleep(config.backoff_seconds * (2 ** (attempt - 1)))
        try:
            resp = requests.post(
                url,
                json=payload,
                headers=headers,
                timeout=config.request_timeout_ms / 1000.0,
            )
        except requests.RequestException as err:
            last_error = f"transport error: {err}"
            log.debug("attempt %d failed: %s", attempt + 1, last_error)
            continue
        if resp.status_code >= 500 or resp.status_code == 429:
            last_error = f"HTTP {resp.status_code}"
            log.debug("attempt %d failed: %s", attempt + 1, last_error)
            continue
        if resp.status_code >= 400:
            raise EndpointError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as err:
            last_error = f"malformed response body: {err}"
            log.debug("attempt %d failed: %s", attempt + 1, last_error)
            continue
    raise EndpointError(f"retries exhausted: {last_error}")


_FENCE = re.compile(r"```(?:[A-Za-z0-9_-]+)?\s*\n?(.*?)```", re.DOTALL)


def extract_sql(completion: str) -> str:
    """First statement of a completion: fences stripped, cut at ';'."""
    text = completion.strip()
    fenced = _FENCE.search(text)
    if fenced:
        text = fenced.group(1).strip()
    if text.lower().startswith("sql:"):
        text = text[4:].strip()
    head, _, _ = text.partition(";")
    return head.strip()


def _link_serial(target: LinkTarget, catalog: DatabaseCatalog) -> tuple[tuple[str, ...], tuple[str, ...]]:
    lines = serialize_link_target(target, catalog).splitlines()
    tables = tuple(t.strip() for t in lines[0][len("tables:"):].split(",") if t.strip())
    columns = tuple(c.strip() for c in lines[1][len("columns:"):].split(",") if c.strip())
    return tables, columns


def run_pipeline(
    mode: str,
    split: Split,
    catalogs: dict[str, DatabaseCatalog],
    templates: PromptTemplateSet | None = None,
    config: EndpointConfig | None = None,
    trace_path: str | Path | None = None,
    timer=time.monotonic,
    sleep=time.sleep,
) -> list[TwoStageTrace]:
    """Run one mode over a split; traces come back in example order.

    Endpoint failures are isolated per example (empty completion, error
    recorded) and never abort the run. An empty or unusable stage-1
    prediction in dts mode falls back to the full-schema prompt.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if config is None:
        raise ValueError("an EndpointConfig is required")
    if templates is None:
        templates = PromptTemplateSet.default()

    def ask(system: str, body: str) -> tuple[str, str | None]:
        try:
            return complete(config, body, system, sleep=sleep), None
        except EndpointError as err:
            return "", str(err)

    def work(ex) -> TwoStageTrace:
        catalog = catalogs[ex.db_id]
        wall: dict[str, float] = {}
        errors: list[str] = []
        stage1_prompt = stage1_completion = None
        fallback = False

        if mode == "full":
            resolved = LinkTarget(frozenset(catalog.table_names), frozenset())
            system, body = prompt_parts("full", ex.question, catalog, None, templates)
        elif mode == "oracle_link":
            try:
                gold_target = extract_link_targets(parse_sql(ex.gold_sql, catalog))
            except (SqlParseError, ResolutionError) as err:
                errors.append(f"gold SQL unusable for linking: {err}")
                gold_target = None
            if gold_target is None or not gold_target.tables:
                resolved = LinkTarget(frozenset(catalog.table_names), frozenset())
                system, body = prompt_parts("full", ex.question, catalog, None, templates)
                fallback = True
            else:
                resolved = gold_target
                system, body = prompt_parts(
                    "gen", ex.question, catalog, gold_target.tables, templates
                )
        else:  # dts
            s1_system, s1_body = prompt_parts("link", ex.question, catalog, None, templates)
            stage1_prompt = f"{s1_system}\n\n{s1_body}"
            t0 = timer()
            stage1_completion, s1_error = ask(s1_system, s1_body)
            wall["stage1_ms"] = round((timer() - t0) * 1000.0, 3)
            if s1_error:
                errors.append(f"stage1: {s1_error}")
            resolved = parse_linker_output(stage1_completion, catalog)
            if resolved.tables:
                system, body = prompt_parts(
                    "gen", ex.question, catalog, resolved.tables, templates
                )
            else:
                # nothing usable came back; stage 2 sees every table
                resolved = LinkTarget(frozenset(catalog.table_names), frozenset())
                system, body = prompt_parts("full", ex.question, catalog, None, templates)
                fallback = True

        t0 = timer()
        stage2_completion, s2_error = ask(system, body)
        wall["stage2_ms"] = round((timer() - t0) * 1000.0, 3)
        if s2_error:
            errors.append(f"stage2: {s2_error}")
        tables, columns = _link_serial(resolved, catalog)
        return TwoStageTrace(
            example_id=ex.example_id,
            mode=mode,
            stage1_prompt=stage1_prompt,
            stage1_completion=stage1_completion,
            resolved_tables=tables,
            resolved_columns=columns,
            stage2_prompt=f"{system}\n\n{body}",
            stage2_completion=stage2_completion,
            extracted_sql=extract_sql(stage2_completion),
            wall_ms=wall,
            fallback_full_schema=fallback,
            error="; ".join(errors) if errors else None,
        )

    with ThreadPoolExecutor(max_workers=config.max_parallel_requests) as pool:
        futures = [pool.submit(work, ex) for ex in split.examples]
        traces = [f.result() for f in futures]

    if trace_path is not None:
        write_traces(trace_path, traces)
    return traces


def trace_dict(trace: TwoStageTrace) -> dict:
    return {
        "example_id": trace.example_id,
        "mode": trace.mode,
        "stage1_prompt": trace.stage1_prompt,
        "stage1_completion": trace.stage1_completion,
        "resolved_tables": list(trace.resolved_tables),
        "resolved_columns": list(trace.resolved_columns),
        "stage2_prompt": trace.stage2_prompt,
        "stage2_completion": trace.stage2_completion,
        "extracted_sql": trace.extracted_sql,
        "wall_ms": trace.wall_ms,
        "fallback_full_schema": trace.fallback_full_schema,
        "error": trace.error,
    }


def write_traces(path: str | Path, traces) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for trace in traces:
            fh.write(json.dumps(trace_dict(trace), ensure_ascii=False) + "\n")


def read_traces(path: str | Path) -> list[dict]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def run_summary(traces) -> dict:
    failures = sum(1 for t in traces if t.error is not None)
    return {"n": len(traces), "failures": failures}
