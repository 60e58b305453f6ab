"""Possibilistic locality: tables, decision procedures, SAT reductions and
coplanar qubit constructions."""

from .tables import (
    DeterministicGrid,
    Event,
    PossibilityTable,
    ProbabilityTable,
    Scenario,
    check_no_signalling,
    coarse_grainings,
    fixture,
    grid_consistent,
    parse_table,
    possibilize,
    serialize_table,
)
from .solver import (
    LocalityVerdict,
    Status,
    decide_local,
    extend_event,
    hardy_scan,
    paradoxical_probability,
    verify_certificate,
)
from .sat import (
    CnfInstance,
    audit_equivalence,
    encode_possloc,
    harden,
    is_entry_robust,
    is_r_robust,
    parse_dimacs,
    satisfiable,
    validity,
)

__version__ = "0.1.0"
