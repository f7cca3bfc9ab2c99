"""SQL parsing, analysis, and rendering for the supported SELECT dialect."""

from .analysis import clause_components, exact_set_match, extract_link_targets, render_sql
from .lexer import SqlParseError, tokenize
from .nodes import (
    AGGREGATES,
    COMPARE_OPS,
    DERIVED_PREFIX,
    PREDICATE_OPS,
    SET_OPS,
    Agg,
    Arith,
    BoolNode,
    ColumnRef,
    DerivedTable,
    JoinPair,
    LinkTarget,
    Literal,
    OrderItem,
    Predicate,
    QueryAst,
    SelectItem,
    SetOp,
    Star,
)
from .parser import ResolutionError, parse_sql

__all__ = [
    "AGGREGATES",
    "COMPARE_OPS",
    "DERIVED_PREFIX",
    "PREDICATE_OPS",
    "SET_OPS",
    "Agg",
    "Arith",
    "BoolNode",
    "ColumnRef",
    "DerivedTable",
    "JoinPair",
    "LinkTarget",
    "Literal",
    "OrderItem",
    "Predicate",
    "QueryAst",
    "ResolutionError",
    "SelectItem",
    "SetOp",
    "SqlParseError",
    "Star",
    "clause_components",
    "exact_set_match",
    "extract_link_targets",
    "parse_sql",
    "render_sql",
    "tokenize",
]
