import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linksql.sqlast import (
    clause_components,
    exact_set_match,
    extract_link_targets,
    parse_sql,
)


@pytest.fixture
def cat(catalogs):
    return catalogs["venue_events"]


def em(cat, a, b, **kw):
    return exact_set_match(parse_sql(a, cat), parse_sql(b, cat), **kw)


# -- commutative positions -------------------------------------------------


def test_select_order_free(cat):
    assert em(cat, "SELECT Name, City FROM Venue", "SELECT City, Name FROM Venue")


def test_and_order_free(cat):
    assert em(
        cat,
        "SELECT Name FROM Venue WHERE City = 'a' AND Capacity > 5",
        "SELECT Name FROM Venue WHERE Capacity > 5 AND City = 'a'",
    )


def test_or_order_free(cat):
    assert em(
        cat,
        "SELECT Name FROM Venue WHERE City = 'a' OR Capacity > 5",
        "SELECT Name FROM Venue WHERE Capacity > 5 OR City = 'a'",
    )


def test_in_list_order_free(cat):
    assert em(
        cat,
        "SELECT Name FROM Venue WHERE City IN ('a', 'b', 'c')",
        "SELECT Name FROM Venue WHERE City IN ('c', 'a', 'b')",
    )


def test_join_side_order_free(cat):
    assert em(
        cat,
        "SELECT Title FROM Event JOIN Venue ON Event.Venue_ID = Venue.Venue_ID",
        "SELECT Title FROM Event JOIN Venue ON Venue.Venue_ID = Event.Venue_ID",
    )


def test_from_order_free(cat):
    assert em(
        cat,
        "SELECT Event.Title FROM Event JOIN Venue ON Event.Venue_ID = Venue.Venue_ID",
        "SELECT Event.Title FROM Venue JOIN Event ON Event.Venue_ID = Venue.Venue_ID",
    )


def test_union_operands_order_free(cat):
    assert em(
        cat,
        "SELECT Name FROM Venue UNION SELECT Name FROM Artist",
        "SELECT Name FROM Artist UNION SELECT Name FROM Venue",
    )
    assert em(
        cat,
        "SELECT Name FROM Venue INTERSECT SELECT Name FROM Artist",
        "SELECT Name FROM Artist INTERSECT SELECT Name FROM Venue",
    )


def test_aliases_do_not_matter(cat):
    assert em(
        cat,
        "SELECT Event.Title FROM Event JOIN Venue ON Event.Venue_ID = Venue.Venue_ID",
        "SELECT T1.Title FROM Event AS T1 JOIN Venue AS T2 ON T1.Venue_ID = T2.Venue_ID",
    )


def test_keyword_case_immaterial(cat):
    assert em(cat, "SELECT Name FROM Venue", "select name from venue")


# -- order-sensitive positions ---------------------------------------------


def test_order_by_sequence_matters(cat):
    assert not em(
        cat,
        "SELECT Name FROM Venue ORDER BY City, Capacity",
        "SELECT Name FROM Venue ORDER BY Capacity, City",
    )


def test_order_direction_matters(cat):
    assert not em(
        cat,
        "SELECT Name FROM Venue ORDER BY Capacity ASC",
        "SELECT Name FROM Venue ORDER BY Capacity DESC",
    )


def test_except_operands_keep_order(cat):
    assert not em(
        cat,
        "SELECT Name FROM Venue EXCEPT SELECT Name FROM Artist",
        "SELECT Name FROM Artist EXCEPT SELECT Name FROM Venue",
    )


def test_between_bounds_keep_order(cat):
    assert not em(
        cat,
        "SELECT Name FROM Venue WHERE Capacity BETWEEN 1 AND 9",
        "SELECT Name FROM Venue WHERE Capacity BETWEEN 9 AND 1",
    )


def test_where_operand_sides_matter(cat):
    assert not em(
        cat,
        "SELECT Title FROM Event, Venue WHERE Event.Venue_ID = Venue.Venue_ID",
        "SELECT Title FROM Event, Venue WHERE Venue.Venue_ID = Event.Venue_ID",
    )


def test_distinct_matters(cat):
    assert not em(cat, "SELECT City FROM Venue", "SELECT DISTINCT City FROM Venue")


def test_and_vs_or_matters(cat):
    assert not em(
        cat,
        "SELECT Name FROM Venue WHERE City = 'a' AND Capacity > 5",
        "SELECT Name FROM Venue WHERE City = 'a' OR Capacity > 5",
    )


def test_aggregate_function_matters(cat):
    assert not em(cat, "SELECT max(Capacity) FROM Venue", "SELECT min(Capacity) FROM Venue")


def test_limit_matters(cat):
    assert not em(
        cat,
        "SELECT Name FROM Venue ORDER BY Capacity LIMIT 1",
        "SELECT Name FROM Venue ORDER BY Capacity LIMIT 2",
    )
    assert not em(
        cat,
        "SELECT Name FROM Venue ORDER BY Capacity",
        "SELECT Name FROM Venue ORDER BY Capacity LIMIT 2",
    )


# -- value-insensitive mode ------------------------------------------------


def test_ignore_values_masks_literals(cat):
    assert not em(
        cat,
        "SELECT Name FROM Venue WHERE Capacity > 5",
        "SELECT Name FROM Venue WHERE Capacity > 99",
    )
    assert em(
        cat,
        "SELECT Name FROM Venue WHERE Capacity > 5",
        "SELECT Name FROM Venue WHERE Capacity > 99",
        ignore_values=True,
    )


def test_ignore_values_collapses_in_arity(cat):
    assert em(
        cat,
        "SELECT Name FROM Venue WHERE City IN ('a', 'b')",
        "SELECT Name FROM Venue WHERE City IN ('x', 'y', 'z')",
        ignore_values=True,
    )


def test_ignore_values_keeps_structure_significant(cat):
    assert not em(
        cat,
        "SELECT Name FROM Venue WHERE Capacity > 5",
        "SELECT Name FROM Venue WHERE Capacity < 5",
        ignore_values=True,
    )


def test_ignore_values_keeps_limit_verbatim(cat):
    assert not em(
        cat,
        "SELECT Name FROM Venue ORDER BY Capacity LIMIT 1",
        "SELECT Name FROM Venue ORDER BY Capacity LIMIT 3",
        ignore_values=True,
    )


def test_ignore_values_keeps_between_shape(cat):
    assert em(
        cat,
        "SELECT Name FROM Venue WHERE Capacity BETWEEN 1 AND 9",
        "SELECT Name FROM Venue WHERE Capacity BETWEEN 5 AND 20",
        ignore_values=True,
    )


# -- components dict -------------------------------------------------------


def test_component_keys_stable(cat):
    comp = clause_components(parse_sql("SELECT Name FROM Venue", cat))
    assert list(comp) == [
        "select",
        "from",
        "joins",
        "where",
        "group_by",
        "having",
        "order_by",
        "limit",
        "set_op",
    ]


def test_component_dict_equality_is_em(cat):
    a = parse_sql("SELECT Name, City FROM Venue WHERE Capacity > 3", cat)
    b = parse_sql("SELECT City, Name FROM Venue WHERE Capacity > 3", cat)
    c = parse_sql("SELECT City FROM Venue WHERE Capacity > 3", cat)
    assert clause_components(a) == clause_components(b)
    assert clause_components(a) != clause_components(c)


def test_set_op_components_stable_under_operand_swap(cat):
    a = clause_components(
        parse_sql("SELECT Name FROM Venue WHERE Capacity > 1 UNION SELECT Name FROM Artist", cat)
    )
    b = clause_components(
        parse_sql("SELECT Name FROM Artist UNION SELECT Name FROM Venue WHERE Capacity > 1", cat)
    )
    assert a["set_op"] is not None
    assert a == b
    assert a["select"] is not None


def test_nested_bool_flattening(cat):
    assert em(
        cat,
        "SELECT Name FROM Venue WHERE (City = 'a' AND Capacity > 5) AND Outdoor = 1",
        "SELECT Name FROM Venue WHERE City = 'a' AND (Capacity > 5 AND Outdoor = 1)",
    )


# -- extraction ------------------------------------------------------------


def xt(cat, sql):
    t = extract_link_targets(parse_sql(sql, cat))
    return set(t.tables), set(t.columns)


def test_extract_simple(cat):
    tables, cols = xt(cat, "SELECT Name FROM Venue WHERE Capacity > 5")
    assert tables == {"venue"}
    assert cols == {("venue", "name"), ("venue", "capacity")}


def test_extract_star_contributes_nothing(cat):
    tables, cols = xt(cat, "SELECT * FROM Venue")
    assert tables == {"venue"}
    assert cols == set()


def test_extract_join_and_subquery_tables(cat):
    tables, cols = xt(
        cat,
        "SELECT Event.Title FROM Event WHERE Event.Venue_ID IN"
        " (SELECT Venue_ID FROM Venue WHERE Capacity > 10)",
    )
    assert tables == {"event", "venue"}
    assert ("venue", "capacity") in cols


def test_extract_derived_inner_contributes(cat):
    tables, cols = xt(cat, "SELECT count(*) FROM (SELECT City FROM Venue)")
    assert tables == {"venue"}
    assert cols == {("venue", "city")}


def test_extract_derived_outer_ref_not_counted(cat):
    tables, cols = xt(cat, "SELECT City FROM (SELECT City FROM Venue)")
    assert cols == {("venue", "city")}
    assert all(not t.startswith("#") for t in tables)


def test_extract_set_op_both_sides(cat):
    tables, _ = xt(cat, "SELECT Name FROM Venue UNION SELECT Name FROM Artist")
    assert tables == {"venue", "artist"}


def test_extract_correlated_exists(cat):
    tables, cols = xt(
        cat,
        "SELECT Name FROM Venue WHERE EXISTS"
        " (SELECT * FROM Event WHERE Event.Venue_ID = Venue.Venue_ID)",
    )
    assert tables == {"venue", "event"}
    assert ("event", "venue_id") in cols and ("venue", "venue_id") in cols


def test_extract_order_group_having_columns(cat):
    _, cols = xt(
        cat,
        "SELECT City FROM Venue GROUP BY City HAVING max(Capacity) > 5 ORDER BY City",
    )
    assert cols == {("venue", "city"), ("venue", "capacity")}


# -- corpus properties -----------------------------------------------------


@settings(max_examples=200, deadline=None)
@given(data=st.data())
def test_em_reflexive_on_corpus(catalogs, corpus, data):
    q = data.draw(st.sampled_from(corpus))
    ast = parse_sql(q.sql, catalogs[q.db_id])
    assert exact_set_match(ast, ast)
    assert exact_set_match(ast, ast, ignore_values=True)


@settings(max_examples=200, deadline=None)
@given(data=st.data())
def test_em_symmetric_on_twin_and_variant(catalogs, corpus, data):
    q = data.draw(st.sampled_from(corpus))
    cat = catalogs[q.db_id]
    gold = parse_sql(q.sql, cat)
    for other_sql in (q.twin_sql, q.variant_sql):
        if other_sql is None:
            continue
        other = parse_sql(other_sql, cat)
        for iv in (False, True):
            assert exact_set_match(gold, other, ignore_values=iv) == exact_set_match(
                other, gold, ignore_values=iv
            )
