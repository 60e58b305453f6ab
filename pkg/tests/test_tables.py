import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from possloc.tables import (
    FIXTURE_NAMES,
    DeterministicGrid,
    Event,
    PossibilityTable,
    ProbabilityTable,
    Scenario,
    TableFormatError,
    check_no_signalling,
    chsh_probabilities,
    coarse_grainings,
    fixture,
    grid_consistent,
    parse_table,
    possibilize,
    random_no_signalling_table,
    random_table,
    serialize_table,
)

CHSH_TEXT = """\
POSSLOC 1
ALICE 2 2
BOB 2 2
1 0 | 1 1
0 1 | 1 1
1 1 | 1 1
1 1 | 1 1
"""


def zeros(table):
    arr = table.to_array()
    return {(int(r), int(c)) for r, c in zip(*np.nonzero(arr == 0))}


def test_parse_chsh_text():
    t = parse_table(CHSH_TEXT)
    assert t.scenario == Scenario((2, 2), (2, 2))
    assert t.count_ones() == 14
    assert zeros(t) == {(0, 1), (1, 0)}
    assert t == fixture("chsh")


def test_smallest_table():
    t = parse_table("POSSLOC 1\nALICE 2\nBOB 2\n1 1\n1 1\n")
    assert t.scenario.n == t.scenario.m == 1
    assert t.count_ones() == 4


def test_row_length_error_names_line():
    text = "POSSLOC 1\nALICE 2\nBOB 2\n1 1\n1 1 1\n"
    with pytest.raises(TableFormatError) as info:
        parse_table(text)
    assert info.value.line == 5
    assert "line 5" in str(info.value)


@pytest.mark.parametrize(
    "text",
    [
        "POSSLOC 2\nALICE 2\nBOB 2\n1 1\n1 1\n",
        "POSSLOC 1\nBOB 2\nALICE 2\n1 1\n1 1\n",
        "POSSLOC 1\nALICE 2\nBOB 2\n1 2\n1 1\n",
        "POSSLOC 1\nALICE 2\nBOB 2\n1 1\n",
        "POSSLOC 1\nALICE 2\nBOB 2 2\n1 1 1 1\n1 1 | 1 1\n",
        "PROBLOC 1\nALICE 2\nBOB 2\n0.5 0.6\n0 0\n",
        "PROBLOC 1\nALICE 2\nBOB 2\n1.5 -0.5\n0 0\n",
        "",
    ],
)
def test_malformed_inputs(text):
    with pytest.raises(TableFormatError):
        parse_table(text)


def test_comments_ignored():
    t = parse_table("# a comment\nPOSSLOC 1  # header\nALICE 2\nBOB 2\n1 0 # row\n0 1\n")
    assert zeros(t) == {(0, 1), (1, 0)}


def test_fixture_gen_hardy_zeros():
    t = fixture("gen_hardy")
    assert (t.scenario.num_rows, t.scenario.num_cols) == (6, 8)
    # rows a A b B x y; columns C1 = (b, b_perp), C2 and C3 three outcomes each
    assert zeros(t) == {(1, 2), (1, 5), (2, 1), (3, 3), (3, 6), (4, 4), (5, 7)}


def test_fixture_bad_array_zeros():
    t = fixture("bad_array")
    assert zeros(t) == {(0, 0), (2, 1), (4, 2), (0, 3), (2, 4), (5, 5)}


def test_fixture_pr_box():
    t = fixture("pr_box")
    arr = t.to_array()
    for a in range(2):
        for b in range(2):
            block = arr[2 * a : 2 * a + 2, 2 * b : 2 * b + 2]
            assert block.sum() == 2
    assert arr[2, 2] == 0 and arr[3, 3] == 0 and arr[2, 3] == 1


def test_fixture_hardy_pattern():
    t = fixture("hardy_pattern")
    # (a1=0, b2=0), (a2=0, b1=0), (a2=1, b2=1); flagged one at (a1=0, b1=0)
    assert zeros(t) == {(0, 2), (2, 0), (3, 3)}


def test_unknown_fixture():
    with pytest.raises(KeyError):
        fixture("nope")


@pytest.mark.parametrize("name", FIXTURE_NAMES)
def test_fixtures_no_signalling_and_round_trip(name):
    t = fixture(name)
    assert check_no_signalling(t) == []
    back = parse_table(serialize_table(t))
    assert back == t
    assert back.row_labels == t.row_labels and back.col_labels == t.col_labels


def test_signalling_violation():
    s = Scenario((2,), (2, 2))
    t = PossibilityTable.from_array(s, [[0, 0, 1, 0], [1, 1, 0, 1]])
    v = check_no_signalling(t)
    alice = [x for x in v if x.party == "alice"]
    assert len(alice) == 1
    assert alice[0].measurement == 0 and alice[0].outcome == 0


def test_possibilize_chsh():
    assert possibilize(chsh_probabilities(), 1e-9) == fixture("chsh")


def test_possibilize_strict_boundary():
    s = Scenario((2,), (2,))
    p = ProbabilityTable(s, np.array([[0.25, 0.25], [0.25, 0.25]]))
    assert possibilize(p, 0.25).count_ones() == 0
    assert possibilize(p, 0.2499).count_ones() == 4


def test_probability_normalization_enforced():
    s = Scenario((2,), (2,))
    with pytest.raises(ValueError):
        ProbabilityTable(s, np.zeros((2, 2)))


def test_possibilize_monotone(rng):
    s = Scenario((2, 3), (3, 2))
    for _ in range(50):
        raw = rng.random((5, 5)) ** 3
        probs = np.zeros_like(raw)
        for ro, k in zip(s.alice_offsets, s.alice_outcomes):
            for co, l in zip(s.bob_offsets, s.bob_outcomes):
                block = raw[ro : ro + k, co : co + l]
                probs[ro : ro + k, co : co + l] = block / block.sum()
        p = ProbabilityTable(s, probs)
        e1, e2 = sorted(rng.random(2) * 0.1)
        hi, lo = possibilize(p, e1).to_array(), possibilize(p, e2).to_array()
        assert (lo <= hi).all()


def test_grid_consistent_examples():
    t = fixture("chsh")
    assert grid_consistent(t, DeterministicGrid((0, 0), (0, 0)))
    assert not grid_consistent(t, DeterministicGrid((0, 0), (1, 0)))
    with pytest.raises(ValueError):
        grid_consistent(t, DeterministicGrid((0,), (0, 0)))


def test_grid_consistent_all_ones_and_flip():
    s = Scenario((2, 3), (3, 2))
    t = PossibilityTable.all_ones(s)
    import itertools

    for a in itertools.product(range(2), range(3)):
        for b in itertools.product(range(3), range(2)):
            g = DeterministicGrid(a, b)
            assert grid_consistent(t, g)
            r, c = g.support(s)[0]
            assert not grid_consistent(t.with_bit(t.event_at(r, c), 0), g)


def test_coarse_grainings_gen_hardy():
    cg = coarse_grainings(fixture("gen_hardy"))
    assert len(cg) == 9
    desc, merged = cg[0]
    assert merged.scenario.bob_outcomes == (2, 2, 2)
    # merging the first two outcomes ORs row A's zero with a one
    arr = dict(cg)["bob[1]:{o1,o2}, bob[2]:{o1,o2}"].to_array()
    assert arr[1, 2] == 1 and arr[1, 4] == 1
    # merging the last two leaves it in place
    arr = dict(cg)["bob[1]:{o2,o3}, bob[2]:{o2,o3}"].to_array()
    assert arr[1, 2] == 0 and arr[1, 4] == 0


def test_coarse_grainings_two_outcome_empty():
    assert coarse_grainings(fixture("chsh")) == []


def test_coarse_grainings_rejects_four_outcomes():
    with pytest.raises(ValueError):
        coarse_grainings(PossibilityTable.all_ones(Scenario((2,), (4,))))


def test_random_round_trip_1000(rng):
    for _ in range(1000):
        s = Scenario(tuple(rng.integers(1, 4, rng.integers(1, 4))), tuple(rng.integers(1, 4, rng.integers(1, 4))))
        t = random_table(s, rng)
        assert parse_table(serialize_table(t)) == t


def test_random_no_signalling_generator(rng):
    for _ in range(200):
        s = Scenario(tuple(rng.integers(2, 4, 3)), tuple(rng.integers(2, 4, 2)))
        assert check_no_signalling(random_no_signalling_table(s, rng)) == []


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.data())
def test_problc_round_trip(n, m, data):
    s = Scenario((2,) * n, (3,) * m)
    rows = []
    raw = np.array(
        data.draw(st.lists(st.floats(0.01, 1.0), min_size=s.num_rows * s.num_cols, max_size=s.num_rows * s.num_cols))
    ).reshape(s.num_rows, s.num_cols)
    for a in range(n):
        for b in range(m):
            blk = raw[2 * a : 2 * a + 2, 3 * b : 3 * b + 3]
            raw[2 * a : 2 * a + 2, 3 * b : 3 * b + 3] = blk / blk.sum()
    p = ProbabilityTable(s, raw)
    back = parse_table(serialize_table(p))
    assert isinstance(back, ProbabilityTable)
    assert np.array_equal(back.probs, p.probs)
    del rows


def test_event_bits():
    t = fixture("chsh")
    assert t.bit(Event(0, 0, 0, 1)) == 0
    assert t.bit(Event(1, 1, 1, 1)) == 1
