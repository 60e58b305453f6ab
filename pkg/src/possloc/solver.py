"""Possibilistic locality decisions with checkable certificates."""

from __future__ import annotations

import enum
import itertools
import re
from dataclasses import dataclass

import numpy as np

from .tables import (
    DEFAULT_EPS,
    DeterministicGrid,
    Event,
    PossibilityTable,
    ProbabilityTable,
    Scenario,
    check_no_signalling,
    grid_consistent,
    possibilize,
)


class Status(enum.Enum):
    LOCAL = "LOCAL"
    NONLOCAL = "NONLOCAL"


class CertificateError(ValueError):
    pass


@dataclass(frozen=True)
class LocalityVerdict:
    status: Status
    certificate: tuple[DeterministicGrid, ...] = ()
    witness: Event | None = None
    signalling: bool = False

    @property
    def is_local(self) -> bool:
        return self.status is Status.LOCAL


@dataclass(frozen=True)
class HardyPattern:
    """Four contexts whose flagged one at ((a1, alpha), (b1, beta)) cannot be
    completed: a1=alpha forces b2=beta', b1=beta forces a2=alpha', and
    (a2=alpha', b2=beta') is impossible."""

    a1: int
    a2: int
    b1: int
    b2: int
    alpha: int
    beta: int
    alpha_p: int
    beta_p: int

    @property
    def flagged(self) -> Event:
        return Event(self.a1, self.alpha, self.b1, self.beta)

    def zeros(self) -> tuple[Event, Event, Event]:
        return (
            Event(self.a1, self.alpha, self.b2, 1 - self.beta_p),
            Event(self.a2, 1 - self.alpha_p, self.b1, self.beta),
            Event(self.a2, self.alpha_p, self.b2, self.beta_p),
        )

    def holds_in(self, table: PossibilityTable) -> bool:
        return (
            self.a1 != self.a2
            and self.b1 != self.b2
            and table.bit(self.flagged) == 1
            and all(table.bit(z) == 0 for z in self.zeros())
        )

    def __str__(self):
        return (
            f"a1={self.a1} a2={self.a2} b1={self.b1} b2={self.b2} "
            f"alpha={self.alpha} beta={self.beta} alpha'={self.alpha_p} beta'={self.beta_p}"
        )


class _Extender:
    """Backtracking search for deterministic grids through a given entry.

    Alive sets are bitmasks: rows over Alice outcomes, cols over Bob
    outcomes.  Fixing an outcome removes every outcome of the other party
    that shares a zero with it.
    """

    def __init__(self, table: PossibilityTable):
        s = table.scenario
        self.s = s
        self.row_bits = table.rows
        self.col_bits = table.col_masks()
        self.a_blocks = [((1 << k) - 1) << o for o, k in zip(s.alice_offsets, s.alice_outcomes)]
        self.b_blocks = [((1 << k) - 1) << o for o, k in zip(s.bob_offsets, s.bob_outcomes)]
        self.all_rows = (1 << s.num_rows) - 1
        self.all_cols = (1 << s.num_cols) - 1

    def extend(self, r: int, c: int) -> tuple[int, int] | None:
        s = self.s
        a = self._meas_of_row(r)
        b = self._meas_of_col(c)
        rows = ((self.all_rows & ~self.a_blocks[a]) | (1 << r)) & self.col_bits[c]
        cols = ((self.all_cols & ~self.b_blocks[b]) | (1 << c)) & self.row_bits[r]
        a_left = tuple(x for x in range(s.n) if x != a)
        b_left = tuple(x for x in range(s.m) if x != b)
        return self._search(rows, cols, a_left, b_left)

    def _meas_of_row(self, r: int) -> int:
        for a, blk in enumerate(self.a_blocks):
            if blk >> r & 1:
                return a
        raise IndexError(r)

    def _meas_of_col(self, c: int) -> int:
        for b, blk in enumerate(self.b_blocks):
            if blk >> c & 1:
                return b
        raise IndexError(c)

    def _search(self, rows, cols, a_left, b_left):
        if not a_left and not b_left:
            return rows, cols
        # fail-first: fewest live outcomes, Alice before Bob, lower index first
        best_n, side, meas = None, None, None
        for a in a_left:
            cnt = (rows & self.a_blocks[a]).bit_count()
            if best_n is None or cnt < best_n:
                best_n, side, meas = cnt, 0, a
        for b in b_left:
            cnt = (cols & self.b_blocks[b]).bit_count()
            if best_n is None or cnt < best_n:
                best_n, side, meas = cnt, 1, b
        if best_n == 0:
            return None
        if side == 0:
            live = rows & self.a_blocks[meas]
            rest = tuple(x for x in a_left if x != meas)
            while live:
                low = live & -live
                r = low.bit_length() - 1
                found = self._search(
                    (rows & ~self.a_blocks[meas]) | low, cols & self.row_bits[r], rest, b_left
                )
                if found is not None:
                    return found
                live ^= low
        else:
            live = cols & self.b_blocks[meas]
            rest = tuple(x for x in b_left if x != meas)
            while live:
                low = live & -live
                c = low.bit_length() - 1
                found = self._search(
                    rows & self.col_bits[c], (cols & ~self.b_blocks[meas]) | low, a_left, rest
                )
                if found is not None:
                    return found
                live ^= low
        return None

    def to_grid(self, rows: int, cols: int) -> DeterministicGrid:
        s = self.s
        alice = [((rows & blk) >> o).bit_length() - 1 for blk, o in zip(self.a_blocks, s.alice_offsets)]
        bob = [((cols & blk) >> o).bit_length() - 1 for blk, o in zip(self.b_blocks, s.bob_offsets)]
        return DeterministicGrid(alice, bob)


def extend_event(table: PossibilityTable, e: Event) -> DeterministicGrid | None:
    """A consistent grid through `e`, or None when `e` has no local explanation."""
    if table.bit(e) != 1:
        raise ValueError(f"event {e} is impossible in this table")
    s = table.scenario
    ext = _Extender(table)
    found = ext.extend(s.row(e.alice_meas, e.alice_outcome), s.col(e.bob_meas, e.bob_outcome))
    return None if found is None else ext.to_grid(*found)


def _grid_cover(s: Scenario, grid: DeterministicGrid) -> tuple[list[int], int]:
    rows = [s.row(a, o) for a, o in enumerate(grid.alice_choice)]
    cols = 0
    for b, o in enumerate(grid.bob_choice):
        cols |= 1 << s.col(b, o)
    return rows, cols


def decide_local(table: PossibilityTable) -> LocalityVerdict:
    s = table.scenario
    signalling = bool(check_no_signalling(table))
    ext = _Extender(table)
    covered = [0] * s.num_rows
    certificate = []
    for r, c in table.ones():
        if covered[r] >> c & 1:
            continue
        found = ext.extend(r, c)
        if found is None:
            return LocalityVerdict(Status.NONLOCAL, (), table.event_at(r, c), signalling)
        grid = ext.to_grid(*found)
        certificate.append(grid)
        grid_rows, grid_cols = _grid_cover(s, grid)
        for gr in grid_rows:
            covered[gr] |= grid_cols
    return LocalityVerdict(Status.LOCAL, tuple(certificate), None, signalling)


def non_extendable_entries(table: PossibilityTable) -> list[tuple[int, int]]:
    """(row, col) of every 1-entry with no consistent grid, row-major."""
    s = table.scenario
    ext = _Extender(table)
    covered = [0] * s.num_rows
    bad = []
    for r, c in table.ones():
        if covered[r] >> c & 1:
            continue
        found = ext.extend(r, c)
        if found is None:
            bad.append((r, c))
            continue
        grid_rows, grid_cols = _grid_cover(s, ext.to_grid(*found))
        for gr in grid_rows:
            covered[gr] |= grid_cols
    return bad


def verify_certificate(table: PossibilityTable, verdict: LocalityVerdict) -> bool:
    if verdict.status is not Status.LOCAL:
        raise CertificateError("only LOCAL verdicts carry a certificate")
    s = table.scenario
    covered = [0] * s.num_rows
    for grid in verdict.certificate:
        try:
            if not grid_consistent(table, grid):
                return False
        except ValueError:
            return False
        grid_rows, grid_cols = _grid_cover(s, grid)
        for r in grid_rows:
            covered[r] |= grid_cols
    return all(row & ~cov == 0 for row, cov in zip(table.rows, covered))


def hardy_scan(table: PossibilityTable) -> HardyPattern | None:
    """First Hardy pattern over ordered pairs of distinct two-outcome
    measurements on each side and all 16 outcome labellings."""
    s = table.scenario
    two_a = [a for a, k in enumerate(s.alice_outcomes) if k == 2]
    two_b = [b for b, k in enumerate(s.bob_outcomes) if k == 2]
    rows = table.rows
    ro, co = s.alice_offsets, s.bob_offsets

    def t(a, i, b, l):
        return rows[ro[a] + i] >> (co[b] + l) & 1

    for a1, a2 in itertools.permutations(two_a, 2):
        for b1, b2 in itertools.permutations(two_b, 2):
            for alpha, beta in itertools.product((0, 1), repeat=2):
                if not t(a1, alpha, b1, beta):
                    continue
                for alpha_p in (0, 1):
                    if t(a2, 1 - alpha_p, b1, beta):
                        continue
                    for beta_p in (0, 1):
                        if not t(a1, alpha, b2, 1 - beta_p) and not t(a2, alpha_p, b2, beta_p):
                            return HardyPattern(a1, a2, b1, b2, alpha, beta, alpha_p, beta_p)
    return None


def paradoxical_probability(ptable: ProbabilityTable, eps: float = DEFAULT_EPS) -> float:
    """Largest probability carried by a possible event with no local explanation."""
    table = possibilize(ptable, eps)
    bad = non_extendable_entries(table)
    if not bad:
        return 0.0
    return max(float(ptable.probs[r, c]) for r, c in bad)


def paradoxical_probabilities(
    scenario: Scenario,
    probs: np.ndarray,
    eps: float = DEFAULT_EPS,
    cache: dict | None = None,
) -> np.ndarray:
    """`paradoxical_probability` over a stack of probability arrays.

    Arrays sharing a support share one locality analysis; `cache` maps packed
    supports to masks of non-extendable entries and may be reused across calls.
    """
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 3 or probs.shape[1:] != (scenario.num_rows, scenario.num_cols):
        raise ValueError("expected an (N, rows, cols) stack")
    if cache is None:
        cache = {}
    bits = probs > eps
    packed = np.packbits(bits.reshape(len(bits), -1), axis=1)
    keys, inverse = np.unique(packed, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    masks = np.zeros((len(keys),) + bits.shape[1:], dtype=bool)
    for u, key in enumerate(keys):
        k = key.tobytes()
        if k not in cache:
            example = bits[np.flatnonzero(inverse == u)[0]]
            table = PossibilityTable.from_array(scenario, example.astype(np.uint8))
            m = np.zeros(bits.shape[1:], dtype=bool)
            for r, c in non_extendable_entries(table):
                m[r, c] = True
            cache[k] = m
        masks[u] = cache[k]
    return np.where(masks[inverse], probs, 0.0).max(axis=(1, 2))


# --- certificate text ------------------------------------------------------------

_GRID_RE = re.compile(r"^A:\s*([\d\s]*)\|\s*B:\s*([\d\s]*)$")
_EVENT_RE = re.compile(r"^NONLOCAL event=\((\d+),(\d+);(\d+),(\d+)\)$")


def format_verdict(verdict: LocalityVerdict, table: PossibilityTable | None = None) -> str:
    """Verdict line, followed by one grid per line for LOCAL verdicts."""
    if verdict.status is Status.NONLOCAL:
        e = verdict.witness
        where = table.format_event(e) if table is not None else f"({e[0]},{e[1]};{e[2]},{e[3]})"
        return f"NONLOCAL event={where}\n"
    return "LOCAL\n" + "".join(f"{g}\n" for g in verdict.certificate)


def parse_certificate(text: str) -> LocalityVerdict:
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise CertificateError("empty certificate")
    head = lines[0]
    if head.startswith("NONLOCAL"):
        m = _EVENT_RE.match(head)
        witness = Event(*map(int, m.groups())) if m else None
        return LocalityVerdict(Status.NONLOCAL, (), witness)
    if head != "LOCAL":
        raise CertificateError(f"unknown verdict line {head!r}")
    grids = []
    for ln in lines[1:]:
        m = _GRID_RE.match(ln)
        if not m:
            raise CertificateError(f"malformed grid line {ln!r}")
        grids.append(DeterministicGrid(m.group(1).split(), m.group(2).split()))
    return LocalityVerdict(Status.LOCAL, tuple(grids))

