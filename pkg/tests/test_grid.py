import pickle

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiergrid.grid import CaseValidationError, apply_outage, connected_components, format_case, load_case, parse_case
from hiergrid.textfmt import FormatError, parse_sections

from oracles import make_case, reachability_islands

CASE6_EDGES = [(0, 1), (0, 3), (0, 4), (1, 2), (1, 3), (1, 4), (1, 5), (2, 4), (2, 5), (3, 4), (4, 5)]

SMALL = """
BUS
0 0
1 1
2 1
LINE
0 0 1 10.0 100.0 0.0005 5
1 1 2 10.0 100.0 0.0005 5
2 0 2 10.0 100.0 0.0005 5  # closing the triangle
GEN
0 0 0.0 200.0 1.0
WIND
"""


def _parse(text):
    return parse_case(parse_sections(text, {"BUS", "LINE", "GEN", "WIND", "REF"}, "t"), "t")


def test_bundled_cases_have_expected_sizes(case6, rts96):
    assert (case6.n_buses, case6.n_lines) == (6, 11)
    assert (rts96.n_buses, rts96.n_gens, rts96.n_lines, rts96.n_wind) == (73, 99, 120, 9)


def test_case6_topology_matches_textbook_network(case6):
    assert [(ln.from_bus, ln.to_bus) for ln in case6.lines] == CASE6_EDGES


def test_parse_small_case_and_default_reference():
    case = _parse(SMALL)
    assert case.n_buses == 3
    assert case.reference_bus == 0
    np.testing.assert_array_equal(case.has_load, [False, True, True])


def test_load_is_pure(case6):
    again = load_case("case6")
    assert again == case6
    assert hash(again) == hash(case6)


def test_format_round_trip(case6):
    assert _parse(format_case(case6)) == case6


def test_pickle_drops_cache(case6):
    case6.cache["x"] = 1
    clone = pickle.loads(pickle.dumps(case6))
    assert clone == case6 and clone.cache == {}
    del case6.cache["x"]


def test_self_loop_rejected():
    with pytest.raises(CaseValidationError, match="self-loop"):
        _parse(SMALL.replace("1 1 2 10.0", "1 1 1 10.0"))


def test_disconnected_base_rejected():
    text = SMALL.replace("1 1 2 10.0 100.0 0.0005 5\n", "").replace("2 0 2 10.0 100.0 0.0005 5  # closing the triangle", "")
    with pytest.raises(CaseValidationError, match="connected"):
        _parse(text)


def test_unknown_bus_rejected():
    with pytest.raises(CaseValidationError):
        _parse(SMALL.replace("0 0 0.0 200.0 1.0", "0 7 0.0 200.0 1.0"))


def test_unknown_section_rejected():
    with pytest.raises(FormatError, match="SHUNT"):
        _parse(SMALL + "SHUNT\n0 1.0\n")


def test_parse_error_reports_line():
    with pytest.raises(FormatError) as err:
        _parse(SMALL.replace("0 0 1 10.0 100.0", "0 0 1 ten 100.0"))
    assert err.value.lineno == 7  # SMALL opens with a blank line


def test_no_generator_rejected():
    with pytest.raises(CaseValidationError):
        _parse(SMALL.replace("0 0 0.0 200.0 1.0", ""))


def test_components_no_outage_is_one_island(case6):
    assert connected_components(case6) == [tuple(range(6))]


def test_components_all_lines_out(case6):
    assert connected_components(case6, range(11)) == [(i,) for i in range(6)]


def test_components_cut_set(case6):
    # cutting every line at bus 5 isolates it
    cut = [6, 8, 10]
    assert connected_components(case6, cut) == [(0, 1, 2, 3, 4), (5,)]


def test_components_bad_line():
    case = _parse(SMALL)
    with pytest.raises(IndexError):
        connected_components(case, [5])


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_components_match_reachability(data):
    n = data.draw(st.integers(2, 12))
    # a spanning path keeps the base case connected, extra edges on top
    extra = data.draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(lambda e: e[0] != e[1]), max_size=10))
    edges = [(i, i + 1) for i in range(n - 1)] + extra
    case = make_case(n, edges)
    out = data.draw(st.sets(st.integers(0, len(edges) - 1)))
    islands = connected_components(case, out)
    assert sorted(b for isl in islands for b in isl) == list(range(n))
    assert [tuple(map(int, i)) for i in reachability_islands(n, edges, out)] == sorted(islands)


def test_apply_outage_sets_countdown():
    out = apply_outage(np.zeros(6, dtype=int), 3, 5)
    np.testing.assert_array_equal(out, [0, 0, 0, 5, 0, 0])


def test_apply_outage_keeps_other_entries_and_copies():
    base = np.array([0, 2, 0, 0])
    out = apply_outage(base, 3, 5)
    np.testing.assert_array_equal(out, [0, 2, 0, 5])
    np.testing.assert_array_equal(base, [0, 2, 0, 0])


def test_apply_outage_resets_failed_line():
    np.testing.assert_array_equal(apply_outage(np.array([0, 1, 0]), 1, 5), [0, 5, 0])


def test_apply_outage_out_of_range():
    with pytest.raises(IndexError):
        apply_outage(np.zeros(3, dtype=int), 3, 5)
