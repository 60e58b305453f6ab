"""Possibility and probability tables for bipartite Bell scenarios.

Rows are (Alice measurement, outcome) pairs and columns are (Bob measurement,
outcome) pairs, both in measurement-major order.  A possibility table stores
each row as an integer bitmask over the columns.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

DEFAULT_EPS = 1e-9
NORMALIZATION_TOL = 1e-9


class TableFormatError(ValueError):
    """Raised for malformed POSSLOC/PROBLOC text."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Scenario:
    alice_outcomes: tuple[int, ...]
    bob_outcomes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "alice_outcomes", tuple(int(k) for k in self.alice_outcomes))
        object.__setattr__(self, "bob_outcomes", tuple(int(k) for k in self.bob_outcomes))
        if not self.alice_outcomes or not self.bob_outcomes:
            raise ValueError("each party needs at least one measurement")
        if min(self.alice_outcomes) < 1 or min(self.bob_outcomes) < 1:
            raise ValueError("outcome counts must be positive")

    @property
    def n(self) -> int:
        return len(self.alice_outcomes)

    @property
    def m(self) -> int:
        return len(self.bob_outcomes)

    @property
    def j(self) -> int:
        return max(self.alice_outcomes)

    @property
    def k(self) -> int:
        return max(self.bob_outcomes)

    @property
    def num_rows(self) -> int:
        return sum(self.alice_outcomes)

    @property
    def num_cols(self) -> int:
        return sum(self.bob_outcomes)

    @property
    def alice_offsets(self) -> tuple[int, ...]:
        return tuple(itertools.accumulate((0,) + self.alice_outcomes[:-1]))

    @property
    def bob_offsets(self) -> tuple[int, ...]:
        return tuple(itertools.accumulate((0,) + self.bob_outcomes[:-1]))

    def row(self, a: int, i: int) -> int:
        if not (0 <= a < self.n and 0 <= i < self.alice_outcomes[a]):
            raise IndexError(f"no Alice outcome ({a},{i})")
        return self.alice_offsets[a] + int(i)

    def col(self, b: int, l: int) -> int:
        if not (0 <= b < self.m and 0 <= l < self.bob_outcomes[b]):
            raise IndexError(f"no Bob outcome ({b},{l})")
        return self.bob_offsets[b] + int(l)

    def row_index(self) -> list[tuple[int, int]]:
        """(measurement, outcome) for every row, in row order."""
        return [(a, i) for a, k in enumerate(self.alice_outcomes) for i in range(k)]

    def col_index(self) -> list[tuple[int, int]]:
        return [(b, l) for b, k in enumerate(self.bob_outcomes) for l in range(k)]

    def events(self) -> Iterable["Event"]:
        """All events in row-major order."""
        for a, i in self.row_index():
            for b, l in self.col_index():
                yield Event(a, i, b, l)

    def num_grids(self) -> int:
        return math.prod(self.alice_outcomes) * math.prod(self.bob_outcomes)


class Event(NamedTuple):
    alice_meas: int
    alice_outcome: int
    bob_meas: int
    bob_outcome: int


class Violation(NamedTuple):
    """A no-signalling failure: the marginal possibility of `outcome` of
    `party`'s `measurement` differs between two of the other party's
    measurement choices."""

    party: str
    measurement: int
    outcome: int
    context: int
    other_context: int

    def __str__(self):
        other = "Bob" if self.party == "alice" else "Alice"
        return (
            f"{self.party} outcome ({self.measurement},{self.outcome}) is possible with "
            f"{other} measurement {self.context} but not with {self.other_context}"
        )


@dataclass(frozen=True)
class DeterministicGrid:
    alice_choice: tuple[int, ...]
    bob_choice: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "alice_choice", tuple(int(x) for x in self.alice_choice))
        object.__setattr__(self, "bob_choice", tuple(int(x) for x in self.bob_choice))

    def check_shape(self, scenario: Scenario) -> None:
        if len(self.alice_choice) != scenario.n or len(self.bob_choice) != scenario.m:
            raise ValueError("grid shape does not match scenario")
        for o, k in zip(self.alice_choice, scenario.alice_outcomes):
            if not 0 <= o < k:
                raise ValueError(f"Alice outcome {o} out of range")
        for o, k in zip(self.bob_choice, scenario.bob_outcomes):
            if not 0 <= o < k:
                raise ValueError(f"Bob outcome {o} out of range")

    def support(self, scenario: Scenario) -> list[tuple[int, int]]:
        """(row, col) positions touched by this grid."""
        rows = [scenario.row(a, o) for a, o in enumerate(self.alice_choice)]
        cols = [scenario.col(b, o) for b, o in enumerate(self.bob_choice)]
        return [(r, c) for r in rows for c in cols]

    def __str__(self):
        return "A: {} | B: {}".format(
            " ".join(map(str, self.alice_choice)), " ".join(map(str, self.bob_choice))
        )


@dataclass(frozen=True)
class PossibilityTable:
    scenario: Scenario
    rows: tuple[int, ...]
    row_labels: tuple[str, ...] | None = field(default=None, compare=False)
    col_labels: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        s = self.scenario
        if len(self.rows) != s.num_rows:
            raise ValueError(f"expected {s.num_rows} rows, got {len(self.rows)}")
        full = (1 << s.num_cols) - 1
        if any(r & ~full for r in self.rows):
            raise ValueError("row bits exceed column count")
        if self.row_labels is not None and len(self.row_labels) != s.num_rows:
            raise ValueError("row label count mismatch")
        if self.col_labels is not None and len(self.col_labels) != s.num_cols:
            raise ValueError("column label count mismatch")

    @classmethod
    def from_array(cls, scenario: Scenario, bits, row_labels=None, col_labels=None):
        arr = np.asarray(bits)
        if arr.shape != (scenario.num_rows, scenario.num_cols):
            raise ValueError(f"array shape {arr.shape} does not match scenario")
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("possibility entries must be 0 or 1")
        rows = tuple(sum(1 << int(c) for c in np.flatnonzero(r)) for r in arr)
        return cls(
            scenario,
            rows,
            tuple(row_labels) if row_labels is not None else None,
            tuple(col_labels) if col_labels is not None else None,
        )

    @classmethod
    def all_ones(cls, scenario: Scenario) -> "PossibilityTable":
        full = (1 << scenario.num_cols) - 1
        return cls(scenario, (full,) * scenario.num_rows)

    def to_array(self) -> np.ndarray:
        s = self.scenario
        out = np.zeros((s.num_rows, s.num_cols), dtype=np.uint8)
        for r, bits in enumerate(self.rows):
            for c in range(s.num_cols):
                out[r, c] = (bits >> c) & 1
        return out

    def bit(self, e: Event) -> int:
        s = self.scenario
        return (self.rows[s.row(e.alice_meas, e.alice_outcome)] >> s.col(e.bob_meas, e.bob_outcome)) & 1

    def at(self, r: int, c: int) -> int:
        return (self.rows[r] >> c) & 1

    def col_masks(self) -> tuple[int, ...]:
        """Per column, a bitmask over rows."""
        out = [0] * self.scenario.num_cols
        for r, bits in enumerate(self.rows):
            c = 0
            while bits:
                if bits & 1:
                    out[c] |= 1 << r
                bits >>= 1
                c += 1
        return tuple(out)

    def ones(self) -> list[tuple[int, int]]:
        """(row, col) of every 1-entry in row-major order."""
        nc = self.scenario.num_cols
        return [(r, c) for r, bits in enumerate(self.rows) for c in range(nc) if bits >> c & 1]

    def count_ones(self) -> int:
        return sum(r.bit_count() for r in self.rows)

    def event_at(self, r: int, c: int) -> Event:
        a, i = self.scenario.row_index()[r]
        b, l = self.scenario.col_index()[c]
        return Event(a, i, b, l)

    def with_bit(self, e: Event, value: int) -> "PossibilityTable":
        s = self.scenario
        r, c = s.row(e.alice_meas, e.alice_outcome), s.col(e.bob_meas, e.bob_outcome)
        rows = list(self.rows)
        rows[r] = rows[r] | (1 << c) if value else rows[r] & ~(1 << c)
        return PossibilityTable(s, tuple(rows), self.row_labels, self.col_labels)

    def with_labels(self, row_labels, col_labels) -> "PossibilityTable":
        return PossibilityTable(self.scenario, self.rows, tuple(row_labels), tuple(col_labels))

    def format_event(self, e: Event) -> str:
        """`(A;b_perp)` when labelled, `(a,i;b,l)` otherwise."""
        if self.row_labels and self.col_labels:
            s = self.scenario
            r = s.row(e.alice_meas, e.alice_outcome)
            c = s.col(e.bob_meas, e.bob_outcome)
            return f"({self.row_labels[r]};{self.col_labels[c]})"
        return f"({e.alice_meas},{e.alice_outcome};{e.bob_meas},{e.bob_outcome})"

    def __str__(self):
        return serialize_table(self)


@dataclass(frozen=True, eq=False)
class ProbabilityTable:
    scenario: Scenario
    probs: np.ndarray

    def __post_init__(self):
        s = self.scenario
        p = np.array(self.probs, dtype=float)
        if p.shape != (s.num_rows, s.num_cols):
            raise ValueError(f"probability array shape {p.shape} does not match scenario")
        if (p < 0).any() or (p > 1).any():
            raise ValueError("probabilities must lie in [0, 1]")
        for a, ao in zip(s.alice_offsets, s.alice_outcomes):
            for b, bo in zip(s.bob_offsets, s.bob_outcomes):
                total = p[a : a + ao, b : b + bo].sum()
                if abs(total - 1.0) > NORMALIZATION_TOL:
                    raise ValueError(
                        f"context ({s.alice_offsets.index(a)},{s.bob_offsets.index(b)}) sums to {total!r}"
                    )
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def prob(self, e: Event) -> float:
        s = self.scenario
        return float(self.probs[s.row(e.alice_meas, e.alice_outcome), s.col(e.bob_meas, e.bob_outcome)])

    def __eq__(self, other):
        if not isinstance(other, ProbabilityTable):
            return NotImplemented
        return self.scenario == other.scenario and np.array_equal(self.probs, other.probs)

    def __str__(self):
        return serialize_table(self)


# --- structural checks -------------------------------------------------------


def check_no_signalling(table: PossibilityTable) -> list[Violation]:
    s = table.scenario
    arr = table.to_array().astype(bool)
    out = []
    # Alice: OR over Bob outcomes within each Bob block
    blocks_b = [arr[:, o : o + k].any(axis=1) for o, k in zip(s.bob_offsets, s.bob_outcomes)]
    for r, (a, i) in enumerate(s.row_index()):
        ref = blocks_b[0][r]
        for b in range(1, s.m):
            if blocks_b[b][r] != ref:
                out.append(Violation("alice", a, i, 0, b) if ref else Violation("alice", a, i, b, 0))
    blocks_a = [arr[o : o + k, :].any(axis=0) for o, k in zip(s.alice_offsets, s.alice_outcomes)]
    for c, (b, l) in enumerate(s.col_index()):
        ref = blocks_a[0][c]
        for a in range(1, s.n):
            if blocks_a[a][c] != ref:
                out.append(Violation("bob", b, l, 0, a) if ref else Violation("bob", b, l, a, 0))
    return out


def possibilize(ptable: ProbabilityTable, eps: float = DEFAULT_EPS) -> PossibilityTable:
    if eps < 0:
        raise ValueError("eps must be non-negative")
    return PossibilityTable.from_array(ptable.scenario, (ptable.probs > eps).astype(np.uint8))


def grid_consistent(table: PossibilityTable, grid: DeterministicGrid) -> bool:
    s = table.scenario
    grid.check_shape(s)
    need = 0
    for b, o in enumerate(grid.bob_choice):
        need |= 1 << s.col(b, o)
    return all(table.rows[s.row(a, o)] & need == need for a, o in enumerate(grid.alice_choice))


_PAIR_MERGES = ((0, 1), (1, 2), (0, 2))


def _merge_outcomes(k: int, pair: tuple[int, int] | None) -> list[list[int]]:
    """Groups of original outcomes forming the new outcomes; merged group
    sits at the position of its smaller member."""
    if pair is None:
        return [[o] for o in range(k)]
    p, q = pair
    return [[p, q] if o == p else [o] for o in range(k) if o != q]


def coarse_grainings(table: PossibilityTable) -> list[tuple[str, PossibilityTable]]:
    """Every way of merging one pair of outcomes in each 3-outcome
    measurement (both parties), merged bits OR-ed together."""
    s = table.scenario
    if s.j > 3 or s.k > 3:
        raise ValueError("coarse-graining supports measurements with at most 3 outcomes")
    targets = [("alice", a) for a, k in enumerate(s.alice_outcomes) if k == 3]
    targets += [("bob", b) for b, k in enumerate(s.bob_outcomes) if k == 3]
    if not targets:
        return []
    arr = table.to_array()
    out = []
    for choice in itertools.product(_PAIR_MERGES, repeat=len(targets)):
        merges = dict(zip(targets, choice))
        row_groups, alice_k = [], []
        for a, k in enumerate(s.alice_outcomes):
            groups = _merge_outcomes(k, merges.get(("alice", a)))
            alice_k.append(len(groups))
            row_groups += [[s.row(a, o) for o in g] for g in groups]
        col_groups, bob_k = [], []
        for b, k in enumerate(s.bob_outcomes):
            groups = _merge_outcomes(k, merges.get(("bob", b)))
            bob_k.append(len(groups))
            col_groups += [[s.col(b, o) for o in g] for g in groups]
        merged = np.array(
            [[arr[np.ix_(rg, cg)].any() for cg in col_groups] for rg in row_groups], dtype=np.uint8
        )
        desc = ", ".join(
            f"{party}[{idx}]:{{o{p + 1},o{q + 1}}}" for (party, idx), (p, q) in merges.items()
        )
        out.append((desc, PossibilityTable.from_array(Scenario(alice_k, bob_k), merged)))
    return out


# --- text format ---------------------------------------------------------------


def _tokens(line: str) -> list[str]:
    return line.split("#", 1)[0].split()


def parse_table(text: str) -> PossibilityTable | ProbabilityTable:
    """Parse POSSLOC/PROBLOC v1 text.

    Label pragmas are carried in comments (`#: rows ...` and `#: cols ...`)
    so the data lines stay plain v1.
    """
    row_labels = col_labels = None
    content: list[tuple[int, list[str]]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("#:"):
            parts = stripped[2:].split()
            if parts and parts[0] == "rows":
                row_labels = tuple(parts[1:])
            elif parts and parts[0] == "cols":
                col_labels = tuple(p for p in parts[1:] if p != "|")
            continue
        toks = _tokens(line)
        if toks:
            content.append((lineno, toks))
    if len(content) < 3:
        raise TableFormatError("missing header lines")

    (ln, head), (la, alice), (lb, bob) = content[:3]
    if len(head) != 2 or head[0] not in ("POSSLOC", "PROBLOC") or head[1] != "1":
        raise TableFormatError("header must be 'POSSLOC 1' or 'PROBLOC 1'", ln)
    kind = head[0]
    scenario = Scenario(_parse_counts(alice, "ALICE", la), _parse_counts(bob, "BOB", lb))

    data = content[3:]
    if len(data) != scenario.num_rows:
        raise TableFormatError(
            f"expected {scenario.num_rows} data rows, found {len(data)}",
            data[-1][0] if data else lb,
        )
    values = []
    for lineno, toks in data:
        groups: list[list[str]] = [[]]
        for t in toks:
            if t == "|":
                groups.append([])
            else:
                groups[-1].append(t)
        if len(groups) != scenario.m or any(len(g) != k for g, k in zip(groups, scenario.bob_outcomes)):
            raise TableFormatError(
                f"row shape {[len(g) for g in groups]} does not match BOB {list(scenario.bob_outcomes)}",
                lineno,
            )
        flat = [t for g in groups for t in g]
        if kind == "POSSLOC":
            if any(t not in ("0", "1") for t in flat):
                raise TableFormatError("POSSLOC entries must be 0 or 1", lineno)
            values.append([int(t) for t in flat])
        else:
            try:
                row = [float(t) for t in flat]
            except ValueError:
                raise TableFormatError("non-numeric probability", lineno) from None
            if any(not (0.0 <= v <= 1.0) for v in row):
                raise TableFormatError("probability outside [0, 1]", lineno)
            values.append(row)

    if kind == "POSSLOC":
        try:
            return PossibilityTable.from_array(scenario, values, row_labels, col_labels)
        except ValueError as exc:
            raise TableFormatError(str(exc)) from None
    try:
        return ProbabilityTable(scenario, np.array(values))
    except ValueError as exc:
        raise TableFormatError(str(exc)) from None


def _parse_counts(toks: list[str], keyword: str, lineno: int) -> tuple[int, ...]:
    if toks[0] != keyword or len(toks) < 2:
        raise TableFormatError(f"expected '{keyword} k1 k2 ...'", lineno)
    try:
        counts = tuple(int(t) for t in toks[1:])
    except ValueError:
        raise TableFormatError(f"non-integer outcome count in {keyword} line", lineno) from None
    if min(counts) < 1:
        raise TableFormatError("outcome counts must be positive", lineno)
    return counts


def _format_prob(v: float) -> str:
    return repr(float(v))


def serialize_table(table: PossibilityTable | ProbabilityTable) -> str:
    s = table.scenario
    poss = isinstance(table, PossibilityTable)
    lines = [
        "POSSLOC 1" if poss else "PROBLOC 1",
        "ALICE " + " ".join(map(str, s.alice_outcomes)),
        "BOB " + " ".join(map(str, s.bob_outcomes)),
    ]
    if poss and table.row_labels and table.col_labels:
        lines.append("#: rows " + " ".join(table.row_labels))
        cols, pos = [], 0
        for k in s.bob_outcomes:
            cols.append(" ".join(table.col_labels[pos : pos + k]))
            pos += k
        lines.append("#: cols " + " | ".join(cols))
    arr = table.to_array() if poss else table.probs
    fmt = str if poss else _format_prob
    for r in range(s.num_rows):
        parts = []
        for o, k in zip(s.bob_offsets, s.bob_outcomes):
            parts.append(" ".join(fmt(int(v)) if poss else fmt(v) for v in arr[r, o : o + k]))
        lines.append(" | ".join(parts))
    return "\n".join(lines) + "\n"


# --- fixtures ------------------------------------------------------------------

_FIXTURES = {
    "chsh": (
        (2, 2),
        (2, 2),
        ["1 0 1 1", "0 1 1 1", "1 1 1 1", "1 1 1 1"],
        ("a1=0", "a1=1", "a2=0", "a2=1"),
        ("b1=0", "b1=1", "b2=0", "b2=1"),
    ),
    # three zeros around one flagged possible event, blanks filled with 1
    "hardy_pattern": (
        (2, 2),
        (2, 2),
        ["1 1 0 1", "1 1 1 1", "0 1 1 1", "1 1 1 0"],
        ("a1=0", "a1=1", "a2=0", "a2=1"),
        ("b1=0", "b1=1", "b2=0", "b2=1"),
    ),
    # control fixture: correlated in three contexts, anticorrelated in (a2, b2)
    "pr_box": (
        (2, 2),
        (2, 2),
        ["1 0 1 0", "0 1 0 1", "1 0 0 1", "0 1 1 0"],
        ("a1=0", "a1=1", "a2=0", "a2=1"),
        ("b1=0", "b1=1", "b2=0", "b2=1"),
    ),
    "gen_hardy": (
        (2, 2, 2),
        (2, 3, 3),
        [
            "1 1 1 1 1 1 1 1",
            "1 1 0 1 1 0 1 1",
            "1 0 1 1 1 1 1 1",
            "1 1 1 0 1 1 0 1",
            "1 1 1 1 0 1 1 1",
            "1 1 1 1 1 1 1 0",
        ],
        ("a", "A", "b", "B", "x", "y"),
        ("b", "b_perp", "A_perp", "B_perp", "x_perp", "A_perp", "B_perp", "y_perp"),
    ),
    "bad_array": (
        (2, 2, 2),
        (3, 3),
        [
            "0 1 1 0 1 1",
            "1 1 1 1 1 1",
            "1 0 1 1 0 1",
            "1 1 1 1 1 1",
            "1 1 0 1 1 1",
            "1 1 1 1 1 0",
        ],
        ("x1=0", "x1=1", "x2=0", "x2=1", "x3=0", "x3=1"),
        ("M1p1", "M1p2", "M1p3", "M2p1", "M2p2", "M2p3"),
    ),
}

FIXTURE_NAMES = tuple(_FIXTURES)


def fixture(name: str) -> PossibilityTable:
    try:
        alice, bob, rows, rl, cl = _FIXTURES[name]
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURE_NAMES)}") from None
    bits = [[int(t) for t in r.split()] for r in rows]
    return PossibilityTable.from_array(Scenario(alice, bob), bits, rl, cl)


def chsh_probabilities() -> ProbabilityTable:
    """The CHSH probability table whose support is `fixture("chsh")`."""
    e, t, h = 1 / 8, 3 / 8, 1 / 2
    probs = [[h, 0, t, e], [0, h, e, t], [t, e, e, t], [e, t, t, e]]
    return ProbabilityTable(Scenario((2, 2), (2, 2)), np.array(probs))


def random_table(scenario: Scenario, rng: np.random.Generator, density: float = 0.5) -> PossibilityTable:
    bits = (rng.random((scenario.num_rows, scenario.num_cols)) < density).astype(np.uint8)
    return PossibilityTable.from_array(scenario, bits)


def random_no_signalling_table(
    scenario: Scenario, rng: np.random.Generator, density: float = 0.5
) -> PossibilityTable:
    """Random table obeying possibilistic no-signalling.

    Marginal supports are drawn first; each context block is then filled at
    random on the product of supports and patched so every supported row
    and column of the block holds a one.
    """
    s = scenario
    a_supp = [_random_support(k, rng) for k in s.alice_outcomes]
    b_supp = [_random_support(k, rng) for k in s.bob_outcomes]
    arr = np.zeros((s.num_rows, s.num_cols), dtype=np.uint8)
    for a, ao in enumerate(s.alice_offsets):
        for b, bo in enumerate(s.bob_offsets):
            rs, cs = a_supp[a], b_supp[b]
            block = (rng.random((len(rs), len(cs))) < density).astype(np.uint8)
            for x in range(len(rs)):
                if not block[x].any():
                    block[x, rng.integers(len(cs))] = 1
            for y in range(len(cs)):
                if not block[:, y].any():
                    block[rng.integers(len(rs)), y] = 1
            for x, r in enumerate(rs):
                for y, c in enumerate(cs):
                    arr[ao + r, bo + c] = block[x, y]
    return PossibilityTable.from_array(s, arr)


def _random_support(k: int, rng: np.random.Generator) -> list[int]:
    while True:
        mask = rng.random(k) < 0.75
        if mask.any():
            return [int(o) for o in np.flatnonzero(mask)]


def relabel(
    table: PossibilityTable,
    alice_perm: Sequence[int],
    bob_perm: Sequence[int],
    alice_outcome_perms: Sequence[Sequence[int]],
    bob_outcome_perms: Sequence[Sequence[int]],
) -> PossibilityTable:
    """Measurement `a` of the result is measurement `alice_perm[a]` of the
    input; its outcome `i` is outcome `alice_outcome_perms[a][i]`."""
    s = table.scenario
    new_s = Scenario([s.alice_outcomes[p] for p in alice_perm], [s.bob_outcomes[p] for p in bob_perm])
    arr = table.to_array()
    rows = [s.row(alice_perm[a], alice_outcome_perms[a][i]) for a, i in new_s.row_index()]
    cols = [s.col(bob_perm[b], bob_outcome_perms[b][l]) for b, l in new_s.col_index()]
    return PossibilityTable.from_array(new_s, arr[np.ix_(rows, cols)])
