"""AST consumers: link-target extraction, canonical clause decomposition
for exact set match, and rendering back to SQL text.
"""

from __future__ import annotations

from ..catalog import DatabaseCatalog
from .nodes import (
    Agg,
    Arith,
    BoolNode,
    ColumnRef,
    DerivedTable,
    LinkTarget,
    Literal,
    OrderItem,
    Predicate,
    QueryAst,
    SelectItem,
    Star,
)

_CLAUSE_KEYS = (
    "select",
    "from",
    "joins",
    "where",
    "group_by",
    "having",
    "order_by",
    "limit",
)


# -- link-target extraction ------------------------------------------------


def extract_link_targets(ast: QueryAst) -> LinkTarget:
    """Ground-truth schema usage of a query: every catalog table and every
    column referenced anywhere, including subqueries and set-op branches.

    Derived-table names never appear; a column of a derived table is
    accounted for by the inner query's own references. Star projections
    contribute no columns.
    """
    tables: set[str] = set()
    columns: set[tuple[str, str]] = set()
    _collect_query(ast, tables, columns)
    return LinkTarget(frozenset(tables), frozenset(columns))


def _collect_query(q: QueryAst, tables: set, columns: set) -> None:
    tables.update(q.from_tables)
    for item in q.select_items:
        _collect_expr(item.expr, tables, columns)
    for d in q.derived:
        _collect_query(d.query, tables, columns)
    for pair in q.join_conditions:
        _collect_expr(pair.left, tables, columns)
        _collect_expr(pair.right, tables, columns)
    for tree in (q.where_tree, q.having_tree):
        if tree is not None:
            _collect_tree(tree, tables, columns)
    for ref in q.group_by:
        _collect_expr(ref, tables, columns)
    for item in q.order_by:
        _collect_expr(item.expr, tables, columns)
    if q.set_op is not None:
        _collect_query(q.set_op.rhs, tables, columns)


def _collect_tree(tree, tables: set, columns: set) -> None:
    if isinstance(tree, BoolNode):
        for child in tree.children:
            _collect_tree(child, tables, columns)
        return
    pred: Predicate = tree
    if pred.lhs is not None:
        _collect_expr(pred.lhs, tables, columns)
    rhs = pred.rhs
    if isinstance(rhs, QueryAst):
        _collect_query(rhs, tables, columns)
    elif isinstance(rhs, tuple):
        for v in rhs:
            _collect_expr(v, tables, columns)
    else:
        _collect_expr(rhs, tables, columns)


def _collect_expr(expr, tables: set, columns: set) -> None:
    if isinstance(expr, ColumnRef):
        if not expr.is_derived:
            columns.add((expr.table, expr.column))
        return
    if isinstance(expr, Agg):
        _collect_expr(expr.arg, tables, columns)
        return
    if isinstance(expr, Arith):
        _collect_expr(expr.left, tables, columns)
        _collect_expr(expr.right, tables, columns)
        return
    # Star and Literal carry no column references.


# -- canonical decomposition ----------------------------------------------


def clause_components(ast: QueryAst, ignore_values: bool = False) -> dict:
    """Order-insensitive canonical form of each clause, as a dict.

    Two queries are an exact set match iff their component dicts are
    equal. Commutative structure (select items, AND/OR conjuncts, join
    pairs, group keys, UNION/INTERSECT operands) is sorted; ORDER BY and
    EXCEPT stay ordered. With ignore_values, literals compare as
    placeholders and IN value lists collapse, but LIMIT keeps its value.
    """
    cq = _canon_query(ast, ignore_values)
    if cq[0] == "compound":
        _, op, operands = cq
        core = operands[0]
        set_entry: tuple | None = (op, operands)
    else:
        core = cq
        set_entry = None
    parts = dict(zip(_CLAUSE_KEYS, core[1:]))
    parts["set_op"] = set_entry
    return parts


def exact_set_match(pred: QueryAst, gold: QueryAst, ignore_values: bool = False) -> bool:
    return clause_components(pred, ignore_values) == clause_components(gold, ignore_values)


def _canon_query(q: QueryAst, iv: bool) -> tuple:
    core = (
        "query",
        (q.select_distinct, _sorted(_canon_item(it, iv) for it in q.select_items)),
        (
            tuple(sorted(q.from_tables)),
            _sorted(_canon_query(d.query, iv) for d in q.derived),
        ),
        _sorted(
            (("col", p.left.table, p.left.column), ("col", p.right.table, p.right.column))
            for p in q.join_conditions
        ),
        _canon_tree(q.where_tree, iv),
        tuple(sorted(("col", r.table, r.column) for r in q.group_by)),
        _canon_tree(q.having_tree, iv),
        tuple((_canon_expr(o.expr, iv), o.direction) for o in q.order_by),
        q.limit,
    )
    if q.set_op is None:
        return core
    op = q.set_op.op
    rhs = _canon_query(q.set_op.rhs, iv)
    operands = [core, rhs]
    if op in ("union", "intersect"):
        operands.sort(key=repr)
    return ("compound", op, tuple(operands))


def _sorted(items) -> tuple:
    return tuple(sorted(items, key=repr))


def _canon_item(item: SelectItem, iv: bool) -> tuple:
    if item.aggregate is not None:
        return ("agg", item.aggregate, item.distinct, _canon_expr(item.expr, iv))
    return _canon_expr(item.expr, iv)


def _canon_expr(expr, iv: bool) -> tuple:
    if isinstance(expr, Star):
        return ("star", expr.table)
    if isinstance(expr, ColumnRef):
        return ("col", expr.table, expr.column)
    if isinstance(expr, Literal):
        return ("lit", "?", "?") if iv else ("lit", expr.kind, expr.text)
    if isinstance(expr, Agg):
        return ("agg", expr.func, expr.distinct, _canon_expr(expr.arg, iv))
    if isinstance(expr, Arith):
        return ("arith", expr.op, _canon_expr(expr.left, iv), _canon_expr(expr.right, iv))
    raise TypeError(f"unexpected expression node {expr!r}")


def _canon_tree(tree, iv: bool):
    if tree is None:
        return None
    if isinstance(tree, BoolNode):
        children = []
        for child in tree.children:
            c = _canon_tree(child, iv)
            # Re-flatten: nested same-op nodes merge into one level.
            if isinstance(c, tuple) and len(c) == 2 and c[0] == tree.op:
                children.extend(c[1])
            else:
                children.append(c)
        return (tree.op, _sorted(children))
    pred: Predicate = tree
    lhs = _canon_expr(pred.lhs, iv) if pred.lhs is not None else None
    rhs = pred.rhs
    if isinstance(rhs, QueryAst):
        rhs_c: object = ("subq", _canon_query(rhs, iv))
    elif isinstance(rhs, tuple) and pred.op == "between":
        rhs_c = ("range", _canon_expr(rhs[0], iv), _canon_expr(rhs[1], iv))
    elif isinstance(rhs, tuple):
        if iv:
            rhs_c = ("list", (("lit", "?", "?"),))
        else:
            rhs_c = ("list", _sorted(_canon_expr(v, False) for v in rhs))
    else:
        rhs_c = _canon_expr(rhs, iv)
    return ("pred", pred.op, lhs, rhs_c)


# -- rendering -------------------------------------------------------------


def render_sql(ast: QueryAst) -> str:
    """Serialize an AST back to executable SQL.

    Faithful for queries without self joins (the AST identifies columns
    by canonical table name, so two FROM entries of the same table cannot
    be told apart when rendering).
    """
    text = _render_core(ast)
    if ast.set_op is not None:
        text += f" {ast.set_op.op.upper()} " + render_sql(ast.set_op.rhs)
    return text


def _render_core(q: QueryAst) -> str:
    parts = ["SELECT"]
    if q.select_distinct:
        parts.append("DISTINCT")
    parts.append(", ".join(_render_item(it) for it in q.select_items))
    parts.append("FROM")
    parts.append(_render_from(q))
    if q.where_tree is not None:
        parts += ["WHERE", _render_tree(q.where_tree, top=True)]
    if q.group_by:
        parts += ["GROUP BY", ", ".join(_render_expr(r) for r in q.group_by)]
    if q.having_tree is not None:
        parts += ["HAVING", _render_tree(q.having_tree, top=True)]
    if q.order_by:
        parts += [
            "ORDER BY",
            ", ".join(f"{_render_expr(o.expr)} {o.direction.upper()}" for o in q.order_by),
        ]
    if q.limit is not None:
        parts += ["LIMIT", str(q.limit)]
    return " ".join(parts)


def _render_from(q: QueryAst) -> str:
    position = {name: idx for idx, name in enumerate(q.from_order)}
    by_join: dict[int, list] = {}
    pair_key = lambda p: (p.left.table, p.left.column, p.right.table, p.right.column)
    for pair in sorted(q.join_conditions, key=pair_key):
        idx = max(position[pair.left.table], position[pair.right.table])
        by_join.setdefault(idx, []).append(pair)
    derived = {d.name: d for d in q.derived}
    rendered = []
    for idx, name in enumerate(q.from_order):
        src = _render_source(name, derived)
        if idx == 0:
            rendered.append(src)
            continue
        conds = by_join.get(idx)
        if conds:
            on = " AND ".join(
                f"{_render_expr(p.left)} = {_render_expr(p.right)}" for p in conds
            )
            rendered.append(f"JOIN {src} ON {on}")
        else:
            rendered.append(f"JOIN {src}")
    return " ".join(rendered)


def _render_source(name: str, derived: dict[str, DerivedTable]) -> str:
    if name in derived:
        return f"({render_sql(derived[name].query)}) AS {name.lstrip('#')}"
    return name


def _render_item(item: SelectItem) -> str:
    if item.aggregate is not None:
        inner = _render_expr(item.expr)
        if item.distinct:
            inner = f"DISTINCT {inner}"
        return f"{item.aggregate}({inner})"
    return _render_expr(item.expr)


def _render_expr(expr) -> str:
    if isinstance(expr, Star):
        return "*" if expr.table is None else f"{expr.table.lstrip('#')}.*"
    if isinstance(expr, ColumnRef):
        return f"{expr.table.lstrip('#')}.{expr.column}"
    if isinstance(expr, Literal):
        if expr.kind == "str":
            escaped = expr.text.replace("'", "''")
            return f"'{escaped}'"
        return expr.text
    if isinstance(expr, Agg):
        inner = _render_expr(expr.arg)
        if expr.distinct:
            inner = f"DISTINCT {inner}"
        return f"{expr.func}({inner})"
    if isinstance(expr, Arith):
        left = _render_operand(expr.left)
        right = _render_operand(expr.right)
        return f"{left} {expr.op} {right}"
    raise TypeError(f"unexpected expression node {expr!r}")


def _render_operand(expr) -> str:
    text = _render_expr(expr)
    return f"({text})" if isinstance(expr, Arith) else text


def _render_tree(tree, top: bool = False) -> str:
    if isinstance(tree, Predicate):
        return _render_pred(tree)
    node: BoolNode = tree
    joiner = f" {node.op.upper()} "
    text = joiner.join(_render_tree(c) for c in node.children)
    return text if top else f"({text})"


def _render_pred(pred: Predicate) -> str:
    if pred.op == "exists":
        return f"EXISTS ({render_sql(pred.rhs)})"
    lhs = _render_expr(pred.lhs)
    rhs = pred.rhs
    if pred.op == "between":
        return f"{lhs} BETWEEN {_render_expr(rhs[0])} AND {_render_expr(rhs[1])}"
    if pred.op in ("in", "not in"):
        if isinstance(rhs, QueryAst):
            inner = render_sql(rhs)
        else:
            inner = ", ".join(_render_expr(v) for v in rhs)
        return f"{lhs} {pred.op.upper()} ({inner})"
    if isinstance(rhs, QueryAst):
        return f"{lhs} {pred.op.upper()} ({render_sql(rhs)})"
    return f"{lhs} {pred.op.upper()} {_render_expr(rhs)}"
