import pytest
from hypothesis import given
from hypothesis import strategies as st

from tracelink.errors import PathSyntaxError
from tracelink.paths import (
    ROOT_PATH,
    ElementPath,
    PathSegment,
    normalize_marker_path,
    parse_path,
    print_path,
)


def test_two_segment_indexed_path():
    p = parse_path("filters[0].sections[1]")
    assert p.segments == (PathSegment("filters", 0), PathSegment("sections", 1))


def test_sibling_path():
    p = parse_path("filters[1].sections[0]")
    assert p.segments == (PathSegment("filters", 1), PathSegment("sections", 0))


def test_bare_root_segment():
    assert parse_path("root") == ROOT_PATH
    assert parse_path("root").segments == (PathSegment("root", None),)


@pytest.mark.parametrize("text", [
    "filters[0].sections[1]",
    "filters[1].sections[0]",
    "root",
    "a",
    "a[0]",
    "x_1[10].y[0].z[3]",
])
def test_print_parse_round_trip(text):
    assert print_path(parse_path(text)) == text


@pytest.mark.parametrize("text,offset", [
    ("", 0),
    ("[0]", 0),
    ("a.", 2),
    ("a..b", 2),
    ("a[", 2),
    ("a[]", 2),
    ("a[1", 3),
    ("a[1].", 5),
    ("a[x]", 2),
    ("a b", 1),
    ("1a", 0),
])
def test_syntax_errors_carry_offsets(text, offset):
    with pytest.raises(PathSyntaxError) as exc:
        parse_path(text)
    assert exc.value.offset == offset


_ident = st.from_regex(r"[a-z_][a-z0-9_]{0,5}", fullmatch=True)
_segment = st.tuples(_ident, st.one_of(st.none(), st.integers(0, 50)))


@given(st.lists(_segment, min_size=1, max_size=6))
def test_path_round_trip_property(segs):
    p = ElementPath(tuple(PathSegment(n, i) for n, i in segs))
    assert parse_path(print_path(p)) == p


def test_empty_segments_rejected():
    with pytest.raises(ValueError):
        ElementPath(())


def test_normalize_drops_leading_alias():
    assert str(normalize_marker_path(parse_path("sourceModel.elements[0]"))) == "elements[0]"
    assert str(normalize_marker_path(parse_path("elements[0]"))) == "elements[0]"
    assert normalize_marker_path(parse_path("sourceModel")) == ROOT_PATH
    assert normalize_marker_path(parse_path("root")) == ROOT_PATH


def test_sort_key_orders_indices_numerically():
    a = parse_path("x[2]")
    b = parse_path("x[10]")
    assert a.sort_key() < b.sort_key()
