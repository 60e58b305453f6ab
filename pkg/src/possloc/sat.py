"""CNF instances, exhaustive oracles, and the two reductions:

* `harden` turns a 3-CNF into one that is 0-valid and 1-valid, and 2-robust
  exactly when the input is satisfiable;
* `encode_possloc` turns a 3-CNF into a (2,3) possibility table, one two-outcome
  row per variable and one three-outcome column per clause.
"""

from __future__ import annotations

import itertools
import random
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

from .tables import DeterministicGrid, PossibilityTable, Scenario, grid_consistent

MAX_SAT_VARS = 30
MAX_ROBUST_VARS = 20
MAX_AUDIT_VARS = 8


class DimacsError(ValueError):
    pass


class Literal(NamedTuple):
    var: int
    positive: bool

    def __neg__(self) -> "Literal":
        return Literal(self.var, not self.positive)

    @property
    def dimacs(self) -> int:
        return self.var + 1 if self.positive else -(self.var + 1)

    @classmethod
    def from_dimacs(cls, v: int) -> "Literal":
        if v == 0:
            raise ValueError("0 is not a literal")
        return cls(abs(v) - 1, v > 0)

    def true_under(self, assignment: Sequence[int]) -> bool:
        return bool(assignment[self.var]) == self.positive


class Fixing(NamedTuple):
    variable: int
    value: int


@dataclass(frozen=True)
class CnfInstance:
    num_vars: int
    clauses: tuple[tuple[Literal, ...], ...]
    names: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        clauses = tuple(tuple(Literal(int(l[0]), bool(l[1])) for l in c) for c in self.clauses)
        object.__setattr__(self, "clauses", clauses)
        for c in clauses:
            for lit in c:
                if not 0 <= lit.var < self.num_vars:
                    raise ValueError(f"variable {lit.var} out of range for {self.num_vars} variables")
        if self.names is not None and len(self.names) != self.num_vars:
            raise ValueError("one name per variable required")

    @classmethod
    def from_dimacs_lists(cls, num_vars: int, clauses: Iterable[Iterable[int]], names=None):
        return cls(num_vars, tuple(tuple(Literal.from_dimacs(v) for v in c) for c in clauses), names)

    def dimacs_lists(self) -> list[list[int]]:
        return [[lit.dimacs for lit in c] for c in self.clauses]

    def name(self, var: int) -> str:
        return self.names[var] if self.names else f"x{var + 1}"

    def format_literal(self, lit: Literal) -> str:
        return ("" if lit.positive else "~") + self.name(lit.var)

    def evaluate(self, assignment: Sequence[int]) -> bool:
        return all(any(lit.true_under(assignment) for lit in c) for c in self.clauses)

    def __str__(self):
        if not self.clauses:
            return "TRUE"
        return " & ".join(
            "(" + " | ".join(self.format_literal(l) for l in c) + ")" for c in self.clauses
        )


def cnf(num_vars: int, *clauses: Sequence[int], names=None) -> CnfInstance:
    """Shorthand: clauses as DIMACS integer lists."""
    return CnfInstance.from_dimacs_lists(num_vars, clauses, names)


def normalize(instance: CnfInstance) -> CnfInstance:
    """Drop repeated literals, tautologies and duplicate clauses (first kept)."""
    seen = set()
    out = []
    for c in instance.clauses:
        lits = list(dict.fromkeys(c))
        if any(-l in lits for l in lits):
            continue
        key = frozenset(lits)
        if key in seen:
            continue
        seen.add(key)
        out.append(tuple(lits))
    return CnfInstance(instance.num_vars, tuple(out), instance.names)


def is_normalized(instance: CnfInstance) -> bool:
    return normalize(instance).clauses == instance.clauses


# --- DIMACS ----------------------------------------------------------------------


def parse_dimacs(text: str, max_clause_len: int = 3) -> CnfInstance:
    header = None
    clauses: list[list[int]] = []
    current: list[int] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        toks = line.split()
        if not toks or toks[0] in ("c", "%"):
            continue
        if toks[0] == "p":
            if header is not None:
                raise DimacsError(f"line {lineno}: duplicate header")
            if len(toks) != 4 or toks[1] != "cnf":
                raise DimacsError(f"line {lineno}: header must be 'p cnf <vars> <clauses>'")
            try:
                header = (int(toks[2]), int(toks[3]))
            except ValueError:
                raise DimacsError(f"line {lineno}: non-integer header field") from None
            continue
        if header is None:
            raise DimacsError(f"line {lineno}: clause before header")
        for t in toks:
            try:
                v = int(t)
            except ValueError:
                raise DimacsError(f"line {lineno}: bad literal {t!r}") from None
            if v == 0:
                clauses.append(current)
                current = []
                continue
            if abs(v) > header[0]:
                raise DimacsError(f"line {lineno}: literal {v} exceeds variable count {header[0]}")
            current.append(v)
            if len(current) > max_clause_len:
                raise DimacsError(f"line {lineno}: clause too long (more than {max_clause_len} literals)")
    if header is None:
        raise DimacsError("missing 'p cnf' header")
    if current:
        raise DimacsError("last clause is not terminated by 0")
    if len(clauses) != header[1]:
        raise DimacsError(f"header announces {header[1]} clauses, found {len(clauses)}")
    return CnfInstance.from_dimacs_lists(header[0], clauses)


def serialize_dimacs(instance: CnfInstance) -> str:
    lines = [f"p cnf {instance.num_vars} {len(instance.clauses)}"]
    lines += [" ".join(str(v) for v in c + [0]) for c in instance.dimacs_lists()]
    return "\n".join(lines) + "\n"


# --- oracles -----------------------------------------------------------------------


def _dpll(clauses: list[list[int]], num_vars: int, fixed: dict[int, bool]) -> list[int] | None:
    """Backtracking search with unit propagation on DIMACS-style clauses.

    Branches try 0 before 1; variables left untouched come out 0.
    """
    value: list[bool | None] = [None] * (num_vars + 1)
    for v, b in fixed.items():
        value[v + 1] = bool(b)

    def lit_val(l):
        x = value[abs(l)]
        return None if x is None else (x if l > 0 else not x)

    def propagate(trail):
        changed = True
        while changed:
            changed = False
            for c in clauses:
                free = None
                n_free = 0
                sat = False
                for l in c:
                    lv = lit_val(l)
                    if lv is True:
                        sat = True
                        break
                    if lv is None:
                        n_free += 1
                        free = l
                if sat:
                    continue
                if n_free == 0:
                    return False
                if n_free == 1:
                    value[abs(free)] = free > 0
                    trail.append(abs(free))
                    changed = True
        return True

    def branch_var():
        for c in clauses:
            if any(lit_val(l) is True for l in c):
                continue
            for l in c:
                if value[abs(l)] is None:
                    return abs(l)
        return None

    def solve():
        trail: list[int] = []
        if not propagate(trail):
            for v in trail:
                value[v] = None
            return False
        v = branch_var()
        if v is None:
            return True
        for b in (False, True):
            value[v] = b
            if solve():
                return True
        value[v] = None
        for u in trail:
            value[u] = None
        return False

    if not solve():
        return None
    return [1 if value[v] else 0 for v in range(1, num_vars + 1)]


def satisfiable(instance: CnfInstance, fixings: Iterable[Fixing] = ()) -> tuple[int, ...] | None:
    """A satisfying total assignment (extending `fixings`) or None."""
    if instance.num_vars > MAX_SAT_VARS:
        raise ValueError(f"instance has {instance.num_vars} variables; oracle limit is {MAX_SAT_VARS}")
    fixed = {}
    for f in fixings:
        if fixed.get(f.variable, f.value) != f.value:
            return None
        fixed[f.variable] = f.value
    model = _dpll(instance.dimacs_lists(), instance.num_vars, fixed)
    return None if model is None else tuple(model)


def validity(instance: CnfInstance) -> tuple[bool, bool]:
    """(0-valid, 1-valid)."""
    zero = all(any(not l.positive for l in c) for c in instance.clauses)
    one = all(any(l.positive for l in c) for c in instance.clauses)
    return zero, one


@dataclass(frozen=True)
class Robustness:
    robust: bool
    counterexample: tuple[Fixing, ...] | None = None
    # clause/position behind an entry-robustness failure
    entry: tuple[int, int] | None = None

    def __bool__(self):
        return self.robust


class _ModelCache:
    """Satisfiability under fixings, answered from earlier models when one agrees."""

    def __init__(self, instance: CnfInstance):
        self.instance = instance
        self.clauses = instance.dimacs_lists()
        self.models: list[tuple[int, ...]] = []

    def extends(self, fixings: Sequence[Fixing]) -> bool:
        for m in self.models:
            if all(m[f.variable] == f.value for f in fixings):
                return True
        fixed = {}
        for f in fixings:
            if fixed.get(f.variable, f.value) != f.value:
                return False
            fixed[f.variable] = f.value
        model = _dpll(self.clauses, self.instance.num_vars, fixed)
        if model is None:
            return False
        self.models.append(tuple(model))
        return True


def is_r_robust(instance: CnfInstance, r: int) -> Robustness:
    if instance.num_vars > MAX_ROBUST_VARS:
        raise ValueError(f"instance has {instance.num_vars} variables; oracle limit is {MAX_ROBUST_VARS}")
    if r < 0:
        raise ValueError("r must be non-negative")
    cache = _ModelCache(instance)
    for vars_ in itertools.combinations(range(instance.num_vars), r):
        for values in itertools.product((0, 1), repeat=r):
            fixings = tuple(Fixing(v, x) for v, x in zip(vars_, values))
            if not cache.extends(fixings):
                return Robustness(False, fixings)
    return Robustness(True)


# --- validity transform ---------------------------------------------------------------


@dataclass(frozen=True)
class HardenMap:
    x_var: int
    y_var: int
    # source clause index -> bridge variable
    bridge_vars: dict[int, int]
    # per output clause: (source clause index, "whole" | "bridge" | "tail")
    provenance: tuple[tuple[int, str], ...]


def _fresh_names(names: tuple[str, ...] | None, wanted: list[str]) -> tuple[str, ...] | None:
    if names is None:
        return None
    taken = set(names)
    out = []
    for w in wanted:
        while w in taken:
            w += "'"
        taken.add(w)
        out.append(w)
    return names + tuple(out)


def _split(lits: tuple[Literal, ...], w: Literal, z: int) -> tuple[tuple[Literal, ...], tuple[Literal, ...]]:
    """(l_i | l_j | zeta) & (~zeta | l_k | w), each part holding both polarities."""
    mixed = [(i, j) for i, j in itertools.combinations(range(3), 2) if lits[i].positive != lits[j].positive]
    if mixed:
        i, j = mixed[0]
        k = 3 - i - j
        # pair already mixed; zeta's sign only has to fix the tail
        tail_pos = lits[k].positive or w.positive
        tail_neg = (not lits[k].positive) or (not w.positive)
        zeta = Literal(z, True)
        if not (tail_pos and tail_neg):
            zeta = Literal(z, lits[k].positive)
    else:
        i, j, k = 0, 1, 2
        zeta = Literal(z, not lits[0].positive)
    return (lits[i], lits[j], zeta), (-zeta, lits[k], w)


def harden(instance: CnfInstance) -> tuple[CnfInstance, HardenMap]:
    """Append ~x to clauses with two or more positive literals (or any positive
    literal, for short clauses), y otherwise; then split every four-literal
    clause with a fresh bridge variable so each part stays mixed."""
    if not is_normalized(instance):
        raise ValueError("harden expects a normalized instance")
    if any(len(c) > 3 for c in instance.clauses):
        raise ValueError("harden expects clauses of at most three literals")
    n = instance.num_vars
    x, y = n, n + 1
    next_var = n + 2
    out: list[tuple[Literal, ...]] = []
    provenance: list[tuple[int, str]] = []
    bridges: dict[int, int] = {}
    for idx, c in enumerate(instance.clauses):
        n_pos = sum(l.positive for l in c)
        if len(c) == 3:
            w = Literal(x, False) if n_pos >= 2 else Literal(y, True)
        else:
            w = Literal(x, False) if n_pos >= 1 else Literal(y, True)
        if len(c) < 3:
            out.append(c + (w,))
            provenance.append((idx, "whole"))
            continue
        z = next_var
        next_var += 1
        bridges[idx] = z
        head, tail = _split(c, w, z)
        out += [head, tail]
        provenance += [(idx, "bridge"), (idx, "tail")]
    names = _fresh_names(instance.names, ["x", "y"] + [f"z{i + 1}" for i in range(len(bridges))])
    result = CnfInstance(next_var, tuple(out), names)
    return result, HardenMap(x, y, bridges, tuple(provenance))


def restrict(instance: CnfInstance, fixings: Iterable[Fixing]) -> CnfInstance:
    """Apply fixings: satisfied clauses vanish, falsified literals drop out.
    Variable numbering is kept."""
    fixed = {f.variable: f.value for f in fixings}
    out = []
    for c in instance.clauses:
        if any(l.var in fixed and bool(fixed[l.var]) == l.positive for l in c):
            continue
        out.append(tuple(l for l in c if l.var not in fixed))
    return CnfInstance(instance.num_vars, tuple(out), instance.names)


def resolve_bridges(instance: CnfInstance, hmap: HardenMap) -> CnfInstance:
    """Resolve away every bridge variable (each occurs in exactly two clauses
    with opposite signs)."""
    clauses = list(instance.clauses)
    for z in hmap.bridge_vars.values():
        with_z = [i for i, c in enumerate(clauses) if any(l.var == z for l in c)]
        if len(with_z) != 2:
            continue
        i, j = with_z
        merged = tuple(dict.fromkeys(l for l in clauses[i] + clauses[j] if l.var != z))
        clauses = [c for k, c in enumerate(clauses) if k not in (i, j)] + [merged]
    return CnfInstance(instance.num_vars, tuple(clauses), instance.names)


# --- possibility-table encoding -----------------------------------------------------------


@dataclass(frozen=True)
class EncodingMap:
    """Variable i is Alice measurement i (outcome = value); clause c is Bob
    measurement c (outcome p = literal position p)."""

    num_vars: int
    clauses: tuple[tuple[Literal, ...], ...]
    names: tuple[str, ...] | None = None

    def literal(self, clause: int, position: int) -> Literal:
        return self.clauses[clause][position]

    @property
    def scenario(self) -> Scenario:
        return Scenario((2,) * self.num_vars, (3,) * len(self.clauses))


def _check_encodable(instance: CnfInstance) -> None:
    if instance.num_vars < 1 or not instance.clauses:
        raise ValueError("encoding needs at least one variable and one clause")
    for c in instance.clauses:
        if len(c) != 3:
            raise ValueError("every clause must have exactly three literals")
        if len({l.var for l in c}) != 3:
            raise ValueError(f"clause {c} repeats a variable; normalize first")


def _gadget_rows(emap: EncodingMap) -> list[list[int]]:
    ncols = 3 * len(emap.clauses)
    bits = [[1] * ncols for _ in range(2 * emap.num_vars)]
    for c, clause in enumerate(emap.clauses):
        for p, lit in enumerate(clause):
            # the value making this literal false cannot be combined with outcome p
            bits[2 * lit.var + (0 if lit.positive else 1)][3 * c + p] = 0
    return bits


def _encoded_table(emap: EncodingMap) -> PossibilityTable:
    names = emap.names or tuple(f"x{i + 1}" for i in range(emap.num_vars))
    row_labels = [f"{names[i]}={v}" for i in range(emap.num_vars) for v in (0, 1)]
    col_labels = [f"C{c + 1}p{p + 1}" for c in range(len(emap.clauses)) for p in range(3)]
    return PossibilityTable.from_array(emap.scenario, _gadget_rows(emap), row_labels, col_labels)


def encode_possloc(instance: CnfInstance) -> tuple[PossibilityTable, EncodingMap]:
    _check_encodable(instance)
    emap = EncodingMap(instance.num_vars, instance.clauses, instance.names)
    return _encoded_table(emap), emap


def decode_grid(emap: EncodingMap, grid: DeterministicGrid) -> tuple[int, ...]:
    if not grid_consistent(_encoded_table(emap), grid):
        raise ValueError("grid touches an impossible entry of the encoded table")
    return grid.alice_choice


def grid_from_assignment(emap: EncodingMap, assignment: Sequence[int]) -> DeterministicGrid:
    """Grid choosing, per clause, the first literal made true by `assignment`."""
    choice = []
    for c, clause in enumerate(emap.clauses):
        for p, lit in enumerate(clause):
            if lit.true_under(assignment):
                choice.append(p)
                break
        else:
            raise ValueError(f"assignment falsifies clause {c}")
    return DeterministicGrid(tuple(assignment), choice)


def is_entry_robust(instance: CnfInstance) -> Robustness:
    """2-robustness restricted to the fixing pairs a table entry induces:
    a row value for one variable and a true literal for one clause position."""
    _check_encodable(instance)
    cache = _ModelCache(instance)
    for i in range(instance.num_vars):
        for v in (0, 1):
            for c, clause in enumerate(instance.clauses):
                for p, lit in enumerate(clause):
                    need = Fixing(lit.var, 1 if lit.positive else 0)
                    if lit.var == i and need.value != v:
                        continue  # the gadget zero
                    fixings = (Fixing(i, v), need)
                    if not cache.extends(fixings):
                        return Robustness(False, fixings, (c, p))
    return Robustness(True)


def entry_pair_extends(instance: CnfInstance, variable: int, value: int, clause: int, position: int) -> bool:
    lit = instance.clauses[clause][position]
    return satisfiable(instance, (Fixing(variable, value), Fixing(lit.var, int(lit.positive)))) is not None


# --- instance generation & audit ---------------------------------------------------------------


def random_3cnf(rng: random.Random, num_vars: int, num_clauses: int) -> CnfInstance:
    """Normalized 3-CNF: each clause over three distinct variables."""
    if num_vars < 3:
        raise ValueError("need at least three variables")
    clauses = []
    for _ in range(num_clauses):
        vs = rng.sample(range(num_vars), 3)
        clauses.append(tuple(Literal(v, rng.random() < 0.5) for v in vs))
    return normalize(CnfInstance(num_vars, tuple(clauses)))


def all_3cnf(num_vars: int, max_clauses: int) -> Iterable[CnfInstance]:
    """Every set of 1..max_clauses distinct 3-clauses using all `num_vars`
    variables; literals within a clause in increasing variable order."""
    pool = [
        tuple(Literal(v, s) for v, s in zip(vs, signs))
        for vs in itertools.combinations(range(num_vars), 3)
        for signs in itertools.product((True, False), repeat=3)
    ]
    for k in range(1, max_clauses + 1):
        for clauses in itertools.combinations(pool, k):
            if len({l.var for c in clauses for l in c}) == num_vars:
                yield CnfInstance(num_vars, clauses)


@dataclass(frozen=True)
class AuditRecord:
    ordinal: int
    instance: CnfInstance
    robust2: bool
    entry_robust: bool
    local: bool

    def line(self) -> str:
        return (
            f"{self.ordinal} vars={self.instance.num_vars} clauses={self.instance.dimacs_lists()} "
            f"robust2={self.robust2} entry_robust={self.entry_robust} local={self.local}"
        )


@dataclass(frozen=True)
class AuditReport:
    records: tuple[AuditRecord, ...]

    @property
    def counts(self) -> Counter:
        """(robust2, entry_robust, local) -> number of instances."""
        return Counter((r.robust2, r.entry_robust, r.local) for r in self.records)

    @property
    def sound_violations(self) -> int:
        return sum(r.robust2 and not r.local for r in self.records)

    @property
    def semantic_violations(self) -> int:
        return sum(r.entry_robust != r.local for r in self.records)

    @property
    def divergences(self) -> list[AuditRecord]:
        return [r for r in self.records if r.local != r.robust2]

    def to_text(self) -> str:
        lines = [
            f"# instances={len(self.records)} sound_violations={self.sound_violations} "
            f"semantic_violations={self.semantic_violations} divergences={len(self.divergences)}"
        ]
        for (rob, ent, loc), n in sorted(self.counts.items()):
            lines.append(f"# robust2={rob} entry_robust={ent} local={loc}: {n}")
        lines += [r.line() for r in self.divergences]
        return "\n".join(lines) + "\n"


def _audit_one(args: tuple[int, CnfInstance]) -> AuditRecord:
    from .solver import decide_local

    ordinal, inst = args
    table, _ = encode_possloc(inst)
    return AuditRecord(
        ordinal,
        inst,
        bool(is_r_robust(inst, 2)),
        bool(is_entry_robust(inst)),
        decide_local(table).is_local,
    )


def audit_instances(
    max_vars: int, max_clauses: int, sample_count: int | None, seed: int
) -> list[CnfInstance]:
    """Exhaustive enumeration when `sample_count` is None, else a seeded sample."""
    if not 3 <= max_vars <= MAX_AUDIT_VARS:
        raise ValueError(f"max_vars must lie in [3, {MAX_AUDIT_VARS}]")
    if max_clauses < 1:
        raise ValueError("max_clauses must be positive")
    if sample_count is None:
        return [inst for n in range(3, max_vars + 1) for inst in all_3cnf(n, max_clauses)]
    rng = random.Random(seed)
    return [
        random_3cnf(rng, rng.randint(3, max_vars), rng.randint(1, max_clauses))
        for _ in range(sample_count)
    ]


def audit_equivalence(
    max_vars: int, max_clauses: int, sample_count: int | None, seed: int, jobs: int = 1
) -> AuditReport:
    instances = audit_instances(max_vars, max_clauses, sample_count, seed)
    work = list(enumerate(instances))
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_audit_one, work, chunksize=64))
    else:
        records = [_audit_one(w) for w in work]
    return AuditReport(tuple(records))
