"""Exhaustive reference implementations, kept deliberately naive."""

import itertools

from possloc.tables import DeterministicGrid


def all_grids(scenario):
    for a in itertools.product(*(range(k) for k in scenario.alice_outcomes)):
        for b in itertools.product(*(range(k) for k in scenario.bob_outcomes)):
            yield DeterministicGrid(a, b)


def grid_ok(table, grid):
    s = table.scenario
    return all(
        table.at(s.row(a, i), s.col(b, l))
        for a, i in enumerate(grid.alice_choice)
        for b, l in enumerate(grid.bob_choice)
    )


def covered_entries(table):
    cover = set()
    for g in all_grids(table.scenario):
        if grid_ok(table, g):
            cover.update(g.support(table.scenario))
    return cover


def brute_local(table):
    return set(table.ones()) <= covered_entries(table)


def brute_extendable(table, r, c):
    return (r, c) in covered_entries(table)


def brute_models(instance):
    n = instance.num_vars
    for bits in itertools.product((0, 1), repeat=n):
        if instance.evaluate(bits):
            yield bits


def brute_sat(instance):
    return next(brute_models(instance), None) is not None


def brute_r_robust(instance, r):
    models = list(brute_models(instance))
    for vars_ in itertools.combinations(range(instance.num_vars), r):
        for vals in itertools.product((0, 1), repeat=r):
            if not any(all(m[v] == x for v, x in zip(vars_, vals)) for m in models):
                return False
    return True


def brute_entry_robust(instance):
    models = list(brute_models(instance))
    for ci, clause in enumerate(instance.clauses):
        for lit in clause:
            for v in range(instance.num_vars):
                for val in (0, 1):
                    # the gadget zero sits at (var of lit, value falsifying lit)
                    if v == lit.var and val == (0 if lit.positive else 1):
                        continue
                    if not any(m[v] == val and lit.true_under(m) for m in models):
                        return False
    return True
