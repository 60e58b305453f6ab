"""Coplanar two-qubit steering on the Bloch circle.

Everything lives in the x-z plane of the Bloch sphere.  A circle point at
angle phi is the Bloch vector (x, z) = (cos phi, sin phi).  The shared state is
cos(theta)|00> + sin(theta)|11>, so Bob's reduced state sits at (0, cos 2theta).

An Alice measurement is a chord through Bob's reduced state: outcome 0 steers
Bob to the chord endpoint lying in the chord's direction, outcome 1 to the
other endpoint.  An event is impossible exactly when Bob's element points at
the antipode of the state he was steered to.
"""

from __future__ import annotations

import enum
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .sat import CnfInstance, EncodingMap, Literal, encode_possloc, harden, HardenMap, validity
from .solver import paradoxical_probabilities
from .tables import DEFAULT_EPS, PossibilityTable, ProbabilityTable, Scenario, fixture, possibilize

TWO_PI = 2 * math.pi
ANGLE_TOL = 1e-9
ZERO_PROB_TOL = 1e-12

_X = np.array([[0.0, 1.0], [1.0, 0.0]])
_Z = np.array([[1.0, 0.0], [0.0, -1.0]])


class GeometryError(ValueError):
    pass


class EmbeddingError(ValueError):
    pass


def wrap(angle: float) -> float:
    a = math.fmod(angle, TWO_PI)
    return a + TWO_PI if a < 0 else a


def unit(angle) -> np.ndarray:
    angle = np.asarray(angle, dtype=float)
    return np.stack([np.cos(angle), np.sin(angle)], axis=-1)


def angle_of(v) -> float:
    return wrap(math.atan2(v[1], v[0]))


def angular_distance(a: float, b: float) -> float:
    d = abs(wrap(a) - wrap(b))
    return min(d, TWO_PI - d)


@dataclass(frozen=True)
class CirclePoint:
    angle: float

    def __post_init__(self):
        object.__setattr__(self, "angle", wrap(float(self.angle)))

    @property
    def vector(self) -> np.ndarray:
        return unit(self.angle)

    def antipode(self) -> "CirclePoint":
        return CirclePoint(self.angle + math.pi)


def ket(angle: float) -> np.ndarray:
    """Real qubit state whose Bloch vector is the circle point `angle`."""
    x, z = math.cos(angle), math.sin(angle)
    half = math.atan2(x, z) / 2
    return np.array([math.cos(half), math.sin(half)])


def bloch_projector(angle: float) -> np.ndarray:
    x, z = math.cos(angle), math.sin(angle)
    return (np.eye(2) + x * _X + z * _Z) / 2


def povm_weights(points: Sequence[float]) -> np.ndarray | None:
    """Weights w with sum w_i n_i = 0, sum w_i = 2, all w_i > 0; None when the
    centre is outside the triangle or on its boundary."""
    pts = [wrap(p) for p in points]
    if len(pts) != 3:
        raise GeometryError("a three-outcome POVM needs three points")
    for p, q in itertools.combinations(pts, 2):
        if angular_distance(p, q) < ANGLE_TOL:
            raise GeometryError(f"coincident POVM points at {p!r}")
    v = unit(pts)
    mat = np.vstack([np.ones(3), v[:, 0], v[:, 1]])
    if abs(np.linalg.det(mat)) < 1e-14:
        return None
    w = np.linalg.solve(mat, np.array([2.0, 0.0, 0.0]))
    if (w <= ZERO_PROB_TOL).any():
        return None
    return w


@dataclass(frozen=True)
class Projective:
    point: float

    def __post_init__(self):
        object.__setattr__(self, "point", wrap(float(self.point)))

    @property
    def points(self) -> tuple[float, float]:
        return (self.point, wrap(self.point + math.pi))

    @property
    def weights(self) -> np.ndarray:
        return np.ones(2)


@dataclass(frozen=True)
class Povm3:
    points: tuple[float, float, float]

    def __post_init__(self):
        pts = tuple(wrap(float(p)) for p in self.points)
        object.__setattr__(self, "points", pts)
        if povm_weights(pts) is None:
            raise GeometryError(f"centre not strictly inside the hull of {pts}")

    @property
    def weights(self) -> np.ndarray:
        return povm_weights(self.points)


BobMeasurement = Union[Projective, Povm3]


def elements(meas: BobMeasurement) -> list[np.ndarray]:
    return [w * bloch_projector(p) for w, p in zip(meas.weights, meas.points)]


@dataclass(frozen=True)
class GeometricScenario:
    schmidt_angle: float
    alice_chords: tuple[float, ...]
    bob_measurements: tuple[BobMeasurement, ...]
    alice_labels: tuple[str, ...] | None = field(default=None, compare=False)
    bob_labels: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        th = float(self.schmidt_angle)
        if not 0 < th < math.pi / 2:
            raise GeometryError("Schmidt angle must lie strictly between 0 and pi/2")
        object.__setattr__(self, "schmidt_angle", th)
        object.__setattr__(self, "alice_chords", tuple(wrap(float(a)) for a in self.alice_chords))
        object.__setattr__(self, "bob_measurements", tuple(self.bob_measurements))
        if not self.alice_chords or not self.bob_measurements:
            raise GeometryError("need at least one measurement per party")

    @property
    def rho_b(self) -> np.ndarray:
        return np.array([0.0, math.cos(2 * self.schmidt_angle)])

    @property
    def scenario(self) -> Scenario:
        return Scenario((2,) * len(self.alice_chords), [len(m.points) for m in self.bob_measurements])

    def steering(self, chord: int) -> tuple[np.ndarray, np.ndarray, float, float]:
        """(s0, s1, q0, q1): steered points and weights, q0 s0 + q1 s1 = rho_B."""
        return chord_endpoints(self.rho_b, self.alice_chords[chord])

    def steered_points(self) -> list[tuple[float, float]]:
        return [tuple(angle_of(s) for s in self.steering(a)[:2]) for a in range(len(self.alice_chords))]


def chord_endpoints(rho: np.ndarray, direction: float) -> tuple[np.ndarray, np.ndarray, float, float]:
    d = unit(direction)
    b = float(rho @ d)
    disc = b * b - float(rho @ rho) + 1.0
    root = math.sqrt(disc)
    t_plus, t_minus = -b + root, -b - root
    s0, s1 = rho + t_plus * d, rho + t_minus * d
    s0, s1 = s0 / np.linalg.norm(s0), s1 / np.linalg.norm(s1)
    span = t_plus - t_minus
    return s0, s1, -t_minus / span, t_plus / span


def chord_through(rho: np.ndarray, point_angle: float) -> float:
    """Direction of the chord through rho whose outcome-0 endpoint is the given point."""
    return angle_of(unit(point_angle) - rho)


def chord_partner(rho: np.ndarray, point_angle: float) -> float:
    """Angle of the other endpoint of the chord through the point and rho."""
    return angle_of(chord_endpoints(rho, chord_through(rho, point_angle))[1])


def alice_projectors(geom: GeometricScenario, chord: int) -> list[np.ndarray]:
    th = geom.schmidt_angle
    d_inv = np.diag([1 / math.cos(th), 1 / math.sin(th)])
    s0, s1, q0, q1 = geom.steering(chord)
    out = []
    for s, q in ((s0, q0), (s1, q1)):
        u = math.sqrt(q) * d_inv @ ket(angle_of(s))
        out.append(np.outer(u, u))
    return out


def state_vector(theta: float) -> np.ndarray:
    psi = np.zeros(4)
    psi[0], psi[3] = math.cos(theta), math.sin(theta)
    return psi


def generate_tables(
    geom: GeometricScenario, eps: float = DEFAULT_EPS, labels: bool = True
) -> tuple[ProbabilityTable, PossibilityTable]:
    """Joint probabilities <psi| P (x) E |psi> and their support."""
    s = geom.scenario
    psi = state_vector(geom.schmidt_angle)
    bob = [elements(m) for m in geom.bob_measurements]
    probs = np.zeros((s.num_rows, s.num_cols))
    for a in range(s.n):
        for i, proj in enumerate(alice_projectors(geom, a)):
            r = s.row(a, i)
            for b, els in enumerate(bob):
                for l, el in enumerate(els):
                    probs[r, s.col(b, l)] = psi @ np.kron(proj, el) @ psi
    if probs.min() < -1e-12:
        raise GeometryError("negative probability; inconsistent geometry")
    probs = np.clip(probs, 0.0, 1.0)
    ptable = ProbabilityTable(s, probs)
    poss = possibilize(ptable, eps)
    if labels and geom.alice_labels and geom.bob_labels:
        poss = poss.with_labels(geom.alice_labels, geom.bob_labels)
    return ptable, poss


def geometric_zeros(geom: GeometricScenario, tol: float = ANGLE_TOL) -> set[tuple[int, int]]:
    """(row, col) where the steered point is the antipode of Bob's element point."""
    s = geom.scenario
    out = set()
    for a, steered in enumerate(geom.steered_points()):
        for i, sp in enumerate(steered):
            for b, meas in enumerate(geom.bob_measurements):
                for l, p in enumerate(meas.points):
                    if angular_distance(sp + math.pi, p) < tol:
                        out.add((s.row(a, i), s.col(b, l)))
    return out


# --- batch evaluation -----------------------------------------------------------------


def _batch_chords(cos2t: np.ndarray, directions: np.ndarray):
    """Vectorized chord endpoints; directions has shape (N, n)."""
    rho = np.stack([np.zeros_like(cos2t), cos2t], axis=-1)[:, None, :]
    d = unit(directions)
    b = (rho * d).sum(-1)
    root = np.sqrt(b * b - (rho * rho).sum(-1) + 1.0)
    tp, tm = -b + root, -b - root
    s0 = rho + tp[..., None] * d
    s1 = rho + tm[..., None] * d
    span = tp - tm
    return s0, s1, -tm / span, tp / span


def _batch_povm_weights(points: np.ndarray) -> np.ndarray:
    """points (N, 3) angles -> weights (N, 3); rows with a non-positive weight
    or a singular system come back as NaN."""
    v = unit(points)
    mat = np.stack([np.ones(points.shape), v[..., 0], v[..., 1]], axis=1)
    det = np.linalg.det(mat)
    ok = np.abs(det) > 1e-14
    w = np.full(points.shape, np.nan)
    if ok.any():
        rhs = np.broadcast_to(np.array([2.0, 0.0, 0.0]), (int(ok.sum()), 3))
        w[ok] = np.linalg.solve(mat[ok], rhs[..., None])[..., 0]
    w[~(w > ZERO_PROB_TOL).all(axis=1)] = np.nan
    return w


def batch_probabilities(cos2t: np.ndarray, directions: np.ndarray, bob: list[tuple[np.ndarray, np.ndarray]]):
    """Steering formula q_k * w * (1 + n . s_k) / 2 over N parameter sets.

    `bob` lists, per Bob measurement, (points (N, k), weights (N, k)).
    Returns an (N, rows, cols) array.
    """
    s0, s1, q0, q1 = _batch_chords(cos2t, directions)
    n, n_alice = directions.shape
    steered = np.stack([s0, s1], axis=2).reshape(n, 2 * n_alice, 2)
    weights = np.stack([q0, q1], axis=2).reshape(n, 2 * n_alice)
    pts = np.concatenate([p for p, _ in bob], axis=1)
    ws = np.concatenate([w for _, w in bob], axis=1)
    nvec = unit(pts)
    overlap = np.einsum("nrx,ncx->nrc", steered, nvec)
    return weights[:, :, None] * ws[:, None, :] * (1 + overlap) / 2


# --- Hardy family --------------------------------------------------------------------------


@dataclass(frozen=True)
class HardyParams:
    theta: float
    point: float  # steered point of the flagged Alice outcome


def _hardy_layout(cos2t, p):
    """Chord directions and Bob points for the Hardy family (arrays)."""
    rho = np.stack([np.zeros_like(cos2t), cos2t], axis=-1)
    s10 = unit(p)
    dir1 = np.arctan2(s10[..., 1] - rho[..., 1], s10[..., 0] - rho[..., 0])
    s21 = -s10
    dir2 = np.arctan2(rho[..., 1] - s21[..., 1], rho[..., 0] - s21[..., 0])
    s20 = _batch_chords(cos2t, dir2[:, None])[0][:, 0, :]
    c = np.arctan2(-s20[..., 1], -s20[..., 0])
    d = p + np.pi
    return np.stack([dir1, dir2], axis=1), c, d


def hardy_geometry(params: HardyParams) -> GeometricScenario:
    """Two chords and two projective Bob measurements realizing a Hardy
    pattern flagged at (a1=0, b1=0)."""
    th = float(params.theta)
    if not 0 < th < math.pi / 2:
        raise GeometryError("Schmidt angle must lie strictly between 0 and pi/2")
    dirs, c, d = _hardy_layout(np.array([math.cos(2 * th)]), np.array([float(params.point)]))
    geom = GeometricScenario(
        th,
        tuple(dirs[0]),
        (Projective(c[0]), Projective(d[0])),
        ("a1=0", "a1=1", "a2=0", "a2=1"),
        ("b1=0", "b1=1", "b2=0", "b2=1"),
    )
    ptable, _ = generate_tables(geom)
    if ptable.probs[0, 0] <= DEFAULT_EPS:
        raise GeometryError("flagged event has zero probability (degenerate parameters)")
    return geom


# --- generalized Hardy family ------------------------------------------------------------------


@dataclass(frozen=True)
class GenHardyParams:
    theta: float
    a: float
    b: float
    # None: the x-y chord runs parallel to the chord between the antipodes of A and B
    x: float | None = None


# artifact constants, chosen to reproduce the table's zero pattern
DEFAULT_GEN_HARDY = GenHardyParams(theta=0.34, a=math.radians(99.0), b=math.radians(81.0))

GEN_HARDY_ROWS = ("a", "A", "b", "B", "x", "y")
GEN_HARDY_COLS = ("b", "b_perp", "A_perp", "B_perp", "x_perp", "A_perp", "B_perp", "y_perp")


def _gen_hardy_points(cos2t, a, b, x=None):
    """Angles of A, B, x, y (arrays); x derived when not given."""
    rho = np.stack([np.zeros_like(cos2t), cos2t], axis=-1)

    def partner(p):
        s = unit(p)
        direc = np.arctan2(s[..., 1] - rho[..., 1], s[..., 0] - rho[..., 0])
        e = _batch_chords(cos2t, direc[:, None])[1][:, 0, :]
        return np.arctan2(e[..., 1], e[..., 0])

    A, B = partner(a), partner(b)
    if x is None:
        vA, vB = unit(A), unit(B)
        dvec = vB - vA
        xdir = np.arctan2(dvec[..., 1], dvec[..., 0])
        x = np.arctan2(*_batch_chords(cos2t, xdir[:, None])[0][:, 0, ::-1].T)
    y = partner(x)
    return A, B, np.asarray(x, dtype=float), y


def generalized_hardy_geometry(params: GenHardyParams = DEFAULT_GEN_HARDY) -> GeometricScenario:
    th = float(params.theta)
    if not 0 < th < math.pi / 2:
        raise GeometryError("Schmidt angle must lie strictly between 0 and pi/2")
    cos2t = np.array([math.cos(2 * th)])
    x_in = None if params.x is None else np.array([float(params.x)])
    A, B, x, y = (float(v[0]) for v in _gen_hardy_points(cos2t, np.array([params.a]), np.array([params.b]), x_in))
    pts = {"a": wrap(params.a), "A": wrap(A), "b": wrap(params.b), "B": wrap(B), "x": wrap(x), "y": wrap(y)}
    for (n1, p1), (n2, p2) in itertools.combinations(pts.items(), 2):
        if angular_distance(p1, p2) < ANGLE_TOL:
            raise GeometryError(f"points {n1} and {n2} coincide")
    elements = [pts["b"], pts["b"] + math.pi, pts["A"] + math.pi, pts["B"] + math.pi, pts["x"] + math.pi,
                pts["A"] + math.pi, pts["B"] + math.pi, pts["y"] + math.pi]
    expected = set(_zeros_of(fixture("gen_hardy")))
    for r, name in enumerate(GEN_HARDY_ROWS):
        for c, e in enumerate(elements):
            if (r, c) not in expected and angular_distance(pts[name] + math.pi, e) < ANGLE_TOL:
                raise GeometryError(
                    f"extra zero at ({name}, {GEN_HARDY_COLS[c]}): {name} is the antipode of that element"
                )
    rho = np.array([0.0, cos2t[0]])
    anti = {k: wrap(v + math.pi) for k, v in pts.items()}
    try:
        povms = (Povm3((anti["A"], anti["B"], anti["x"])), Povm3((anti["A"], anti["B"], anti["y"])))
    except GeometryError as exc:
        raise GeometryError(f"hull invalid: {exc}") from None
    geom = GeometricScenario(
        th,
        (chord_through(rho, pts["a"]), chord_through(rho, pts["b"]), chord_through(rho, pts["x"])),
        (Projective(pts["b"]),) + povms,
        GEN_HARDY_ROWS,
        GEN_HARDY_COLS,
    )
    if geometric_zeros(geom) != expected:
        raise GeometryError("zero pattern differs from the generalized Hardy table")
    return geom


def _zeros_of(table: PossibilityTable) -> list[tuple[int, int]]:
    nc = table.scenario.num_cols
    return [(r, c) for r, bits in enumerate(table.rows) for c in range(nc) if not bits >> c & 1]


def _gen_hardy_batch(theta, a, b):
    cos2t = np.cos(2 * theta)
    A, B, x, y = _gen_hardy_points(cos2t, a, b)
    rho = np.stack([np.zeros_like(cos2t), cos2t], axis=-1)

    def through(p):
        s = unit(p)
        return np.arctan2(s[..., 1] - rho[..., 1], s[..., 0] - rho[..., 0])

    dirs = np.stack([through(a), through(b), through(x)], axis=1)
    pb = np.stack([b, b + np.pi], axis=1)
    p2 = np.stack([A + np.pi, B + np.pi, x + np.pi], axis=1)
    p3 = np.stack([A + np.pi, B + np.pi, y + np.pi], axis=1)
    w2, w3 = _batch_povm_weights(p2), _batch_povm_weights(p3)
    valid = ~(np.isnan(w2).any(1) | np.isnan(w3).any(1))
    probs = batch_probabilities(cos2t, dirs, [(pb, np.ones_like(pb)), (p2, np.nan_to_num(w2)), (p3, np.nan_to_num(w3))])
    return probs, valid


def _hardy_batch(theta, p):
    cos2t = np.cos(2 * theta)
    dirs, c, d = _hardy_layout(cos2t, p)
    pc = np.stack([c, c + np.pi], axis=1)
    pd = np.stack([d, d + np.pi], axis=1)
    probs = batch_probabilities(cos2t, dirs, [(pc, np.ones_like(pc)), (pd, np.ones_like(pd))])
    return probs, np.ones(len(theta), dtype=bool)


@dataclass(frozen=True)
class _Family:
    scenario: Scenario
    # (lo, hi, periodic) per parameter
    domain: tuple[tuple[float, float, bool], ...]
    batch: object
    make: object


FAMILIES = {
    "hardy": _Family(
        Scenario((2, 2), (2, 2)),
        ((0.0, math.pi / 2, False), (0.0, TWO_PI, True)),
        _hardy_batch,
        lambda v: HardyParams(*v),
    ),
    "gen_hardy": _Family(
        Scenario((2, 2, 2), (2, 3, 3)),
        ((0.0, math.pi / 2, False), (0.0, TWO_PI, True), (0.0, TWO_PI, True)),
        _gen_hardy_batch,
        lambda v: GenHardyParams(*v),
    ),
}

REFINE_ROUNDS = 2
REFINE_FACTOR = 8
_CHUNK = 1 << 15


def family_values(family: str, params: np.ndarray, eps: float = DEFAULT_EPS, cache: dict | None = None) -> np.ndarray:
    """Paradoxical probability for each parameter row; -1 where the geometry is invalid."""
    fam = FAMILIES[family]
    params = np.atleast_2d(np.asarray(params, dtype=float))
    out = np.full(len(params), -1.0)
    cache = {} if cache is None else cache
    for start in range(0, len(params), _CHUNK):
        chunk = params[start : start + _CHUNK]
        probs, valid = fam.batch(*chunk.T)
        valid &= np.isfinite(probs).all(axis=(1, 2))
        if valid.any():
            out[start : start + _CHUNK][valid] = paradoxical_probabilities(
                fam.scenario, np.clip(probs[valid], 0.0, 1.0), eps, cache
            )
    return out


def _axis(lo, hi, periodic, centre, width, resolution):
    if centre is None:
        step = (hi - lo) / resolution
        if periodic:
            return lo + step * np.arange(resolution)
        return lo + step * (np.arange(resolution) + 0.5)
    pts = centre - width / 2 + (width / resolution) * (np.arange(resolution) + 0.5)
    if periodic:
        return np.mod(pts - lo, hi - lo) + lo
    inner = pts[(pts > lo) & (pts < hi)]
    return inner if len(inner) else np.array([centre])


@dataclass(frozen=True)
class SweepResult:
    family: str
    params: tuple[float, ...]
    value: float

    def geometry(self) -> GeometricScenario:
        fam = FAMILIES[self.family]
        maker = hardy_geometry if self.family == "hardy" else generalized_hardy_geometry
        return maker(fam.make(self.params))


def _evaluate_grid(args):
    family, axes_, eps = args
    grid = np.array(list(itertools.product(*axes_)))
    return grid, family_values(family, grid, eps)


def sweep_paradox(family: str, resolution: int = 64, eps: float = DEFAULT_EPS, jobs: int = 1) -> SweepResult:
    """Grid search over the family's angles, then REFINE_ROUNDS rounds on a
    window shrunk by REFINE_FACTOR around the incumbent.  Ties go to the
    lexicographically smallest parameter tuple."""
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")
    if resolution < 8:
        raise ValueError("resolution must be at least 8")
    fam = FAMILIES[family]
    best_p, best_v = None, -1.0
    widths = [hi - lo for lo, hi, _ in fam.domain]
    for rnd in range(REFINE_ROUNDS + 1):
        axes_ = [
            _axis(lo, hi, per, None if best_p is None else best_p[k], widths[k], resolution)
            for k, (lo, hi, per) in enumerate(fam.domain)
        ]
        if jobs > 1:
            # split along the first axis; results merge in order
            parts = np.array_split(axes_[0], jobs)
            work = [(family, [p] + axes_[1:], eps) for p in parts if len(p)]
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_evaluate_grid, work))
            grid = np.concatenate([g for g, _ in results])
            vals = np.concatenate([v for _, v in results])
        else:
            grid, vals = _evaluate_grid((family, axes_, eps))
        top = vals.max()
        if top > best_v or best_p is None:
            ties = grid[vals == top]
            cand = tuple(float(t) for t in min(map(tuple, ties)))
            if top > best_v:
                best_p, best_v = cand, float(top)
            elif best_p is None:
                best_p = cand
        widths = [w / REFINE_FACTOR for w in widths]
    return SweepResult(family, best_p, max(best_v, 0.0))


# --- GEOM text format ------------------------------------------------------------------------


def parse_geom(text: str) -> GeometricScenario:
    theta = None
    chords, bob = [], []
    seen_header = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        toks = line.split("#", 1)[0].split()
        if not toks:
            continue
        try:
            if not seen_header:
                if toks != ["GEOM", "1"]:
                    raise GeometryError("first line must be 'GEOM 1'")
                seen_header = True
            elif toks[:2] == ["STATE", "schmidt"] and len(toks) == 3:
                theta = float(toks[2])
            elif toks[:2] == ["ALICE", "chord"] and len(toks) == 3:
                chords.append(float(toks[2]))
            elif toks[:2] == ["BOB", "proj"] and len(toks) == 3:
                bob.append(Projective(float(toks[2])))
            elif toks[:2] == ["BOB", "povm"] and len(toks) == 5:
                bob.append(Povm3(tuple(float(t) for t in toks[2:])))
            else:
                raise GeometryError(f"unrecognized line {line.strip()!r}")
        except (GeometryError, ValueError) as exc:
            raise GeometryError(f"line {lineno}: {exc}") from None
    if theta is None:
        raise GeometryError("missing STATE line")
    return GeometricScenario(theta, tuple(chords), tuple(bob))


def serialize_geom(geom: GeometricScenario) -> str:
    lines = ["GEOM 1", f"STATE schmidt {geom.schmidt_angle!r}"]
    lines += [f"ALICE chord {c!r}" for c in geom.alice_chords]
    for m in geom.bob_measurements:
        if isinstance(m, Projective):
            lines.append(f"BOB proj {m.point!r}")
        else:
            lines.append("BOB povm " + " ".join(repr(p) for p in m.points))
    return "\n".join(lines) + "\n"


# --- colourings, embedding, renaming ---------------------------------------------------------


class Color(enum.Enum):
    RED = "red"
    BLUE = "blue"
    SPECIAL = "special"


Coloring = dict  # variable -> Color


def check_coloring(instance: CnfInstance, coloring: Coloring) -> bool:
    """Clauses holding a special variable are exempt.  Every other clause needs
    both colours, and a literal alone in its colour may not have the opposite
    sense to the other two when those two agree."""
    for c in instance.clauses:
        cols = [coloring[l.var] for l in c]
        if Color.SPECIAL in cols:
            continue
        if len(set(cols)) < 2:
            return False
        if len(c) == 3:
            lone = next(i for i in range(3) if cols.count(cols[i]) == 1)
            others = [c[i] for i in range(3) if i != lone]
            if others[0].positive == others[1].positive and c[lone].positive != others[0].positive:
                return False
    return True


def find_coloring(instance: CnfInstance) -> Coloring | None:
    n = instance.num_vars
    if n > 20:
        raise ValueError("brute-force colouring search is limited to 20 variables")
    for choice in itertools.product((Color.RED, Color.BLUE), repeat=n):
        col = dict(enumerate(choice))
        if check_coloring(instance, col):
            return col
    return None


@dataclass(frozen=True)
class EmbedParams:
    # Bob's reduced state sits at (0, -kappa); literal points lie on chords through (0, kappa)
    kappa: float = 0.5
    red_arc: tuple[float, float] = (math.pi / 2 + 0.15, math.pi / 2 + 0.35)
    blue_arc: tuple[float, float] = (math.pi / 2 - 0.35, math.pi / 2 - 0.15)
    eta: float = 0.02
    special_steps: int = 4
    min_separation: float = 1e-3
    min_weight: float = 1e-6


def _other_end(k_point: np.ndarray, angle: float) -> float:
    s = unit(angle)
    d = k_point - s
    d = d / np.linalg.norm(d)
    return angle_of(s - 2 * float(s @ d) * d)


def _triple_ok(angles: Sequence[float], min_weight: float) -> bool:
    try:
        w = povm_weights(angles)
    except GeometryError:
        return False
    return w is not None and w.min() > min_weight


def _lit_point(points: dict, lit: Literal) -> float:
    pos, neg = points[lit.var]
    return pos if lit.positive else neg


def embed_colored(instance: CnfInstance, coloring: Coloring, params: EmbedParams = EmbedParams()) -> GeometricScenario:
    """Place each variable's positive and negative literal points on a chord
    through (0, kappa) and build the matching steering scenario.

    Red and blue positive points are spread over their arcs; special
    variables get offsets within eta of the vertical axis, found by search.
    The result reproduces `encode_possloc(instance)` entry for entry.
    """
    if set(coloring) != set(range(instance.num_vars)):
        raise EmbeddingError("colouring must cover every variable")
    if not check_coloring(instance, coloring):
        raise EmbeddingError("colouring violates the clause colour rules")
    table, _ = encode_possloc(instance)
    if not 0 < params.kappa < 1:
        raise EmbeddingError("kappa must lie in (0, 1)")
    k_point = np.array([0.0, params.kappa])
    points: dict[int, tuple[float, float]] = {}

    def place(var, top, top_is_positive=True):
        bottom = _other_end(k_point, top)
        points[var] = (wrap(top), bottom) if top_is_positive else (bottom, wrap(top))

    for color, (lo, hi) in ((Color.RED, params.red_arc), (Color.BLUE, params.blue_arc)):
        vs = sorted(v for v, c in coloring.items() if c is color)
        tops = [(lo + hi) / 2] if len(vs) == 1 else np.linspace(lo, hi, len(vs))
        for v, t in zip(vs, tops):
            place(v, float(t))

    clauses_of = {v: [] for v in range(instance.num_vars)}
    for ci, c in enumerate(instance.clauses):
        for l in c:
            clauses_of[l.var].append(ci)

    def clause_ok(ci):
        c = instance.clauses[ci]
        if any(l.var not in points for l in c):
            return True
        return _triple_ok([_lit_point(points, l) for l in c], params.min_weight)

    def separated(var):
        mine = points[var]
        for u, other in points.items():
            for p in mine:
                for q in other if u != var else ():
                    if angular_distance(p, q) < params.min_separation:
                        return False
        return angular_distance(*mine) >= params.min_separation

    specials = sorted(
        (v for v, c in coloring.items() if c is Color.SPECIAL), key=lambda v: (-len(clauses_of[v]), v)
    )
    offsets = np.linspace(-params.eta, params.eta, 2 * params.special_steps + 1)
    candidates = [(float(o), orient) for orient in (True, False) for o in sorted(offsets, key=abs)]

    def try_candidate(var, cand):
        place(var, math.pi / 2 + cand[0], cand[1])
        if separated(var) and all(clause_ok(ci) for ci in clauses_of[var]):
            return True
        del points[var]
        return False

    # specials shared by many clauses are searched jointly, the rest first-fit
    hubs = [v for v in specials if len(clauses_of[v]) > 2][:3]
    rest = [v for v in specials if v not in hubs]
    for combo in itertools.product(candidates, repeat=len(hubs)):
        placed = []
        for v, cand in zip(hubs, combo):
            if not try_candidate(v, cand):
                break
            placed.append(v)
        else:
            for v in rest:
                if not any(try_candidate(v, cand) for cand in candidates):
                    break
                placed.append(v)
            else:
                break
        for v in placed:
            del points[v]
    else:
        raise EmbeddingError("no placement of the special variables makes every clause hull-valid")

    for v in points:
        if not separated(v):
            raise EmbeddingError(f"literal points of variable {instance.name(v)} collide")
    for ci in range(len(instance.clauses)):
        if not clause_ok(ci):
            raise EmbeddingError(f"clause {ci + 1} is not hull-valid for the chosen arcs")

    rho = -k_point
    theta = math.acos(-params.kappa) / 2
    chords = tuple(chord_through(rho, wrap(points[v][0] + math.pi)) for v in range(instance.num_vars))
    bob = tuple(Povm3(tuple(_lit_point(points, l) for l in c)) for c in instance.clauses)
    geom = GeometricScenario(theta, chords, bob, table.row_labels, table.col_labels)
    _, poss = generate_tables(geom)
    if poss != table:
        raise EmbeddingError("generated possibility table differs from the encoded table")
    return geom


def embed_hardened(
    instance: CnfInstance, coloring: Coloring, params: EmbedParams = EmbedParams()
) -> tuple[CnfInstance, HardenMap, Coloring, GeometricScenario]:
    """Harden, mark x and y special, and try bridge colours (special, red,
    blue per bridge) until the hardened instance embeds."""
    hard, hmap = harden(instance)
    bridges = sorted(hmap.bridge_vars.values())
    last_error = None
    for choice in itertools.product((Color.SPECIAL, Color.RED, Color.BLUE), repeat=len(bridges)):
        full = dict(coloring)
        full[hmap.x_var] = full[hmap.y_var] = Color.SPECIAL
        full.update(zip(bridges, choice))
        if not check_coloring(hard, full):
            continue
        try:
            return hard, hmap, full, embed_colored(hard, full, params)
        except EmbeddingError as exc:
            last_error = exc
    raise EmbeddingError(f"no bridge colouring embeds: {last_error}")


@dataclass(frozen=True)
class Renaming:
    flips: frozenset[int]
    diameter: float
    half: int

    def apply(self, instance: CnfInstance) -> CnfInstance:
        return CnfInstance(
            instance.num_vars,
            tuple(tuple(-l if l.var in self.flips else l for l in c) for c in instance.clauses),
            instance.names,
        )


def _in_open_half(angle: float, start: float) -> bool:
    d = wrap(angle - start)
    return ANGLE_TOL < d < math.pi - ANGLE_TOL


def literal_points(geom: GeometricScenario) -> list[tuple[float, float]]:
    """Per variable: (positive, negative) literal points, the antipodes of
    the states steered by outcomes 0 and 1."""
    return [(wrap(s0 + math.pi), wrap(s1 + math.pi)) for s0, s1 in geom.steered_points()]


def hemisphere_renaming(geom: GeometricScenario, emap: EncodingMap) -> Renaming | None:
    """Flip variables so positive points sit in one open half circle whose
    boundary avoids every POVM point; first renaming making the instance
    0-valid and 1-valid, or None."""
    if len(geom.alice_chords) != emap.num_vars or len(geom.bob_measurements) != len(emap.clauses):
        raise ValueError("geometry and encoding have different shapes")
    lit_pts = literal_points(geom)
    povm_pts = []
    for c, (meas, clause) in enumerate(zip(geom.bob_measurements, emap.clauses)):
        if len(meas.points) != len(clause):
            raise ValueError(f"clause {c + 1}: outcome count mismatch")
        for p, lit in zip(meas.points, clause):
            want = _lit_point(dict(enumerate(lit_pts)), lit)
            if angular_distance(p, want) > 1e-7:
                raise ValueError(f"clause {c + 1}: POVM point does not match its literal's steered state")
            povm_pts.append(p)
    instance = CnfInstance(emap.num_vars, emap.clauses, emap.names)
    pts = sorted(set(round(p, 12) for p in povm_pts))
    gaps = []
    for i, p in enumerate(pts):
        q = pts[(i + 1) % len(pts)] + (TWO_PI if i + 1 == len(pts) else 0.0)
        gaps.append((q - p, wrap((p + q) / 2)))
    gaps.sort(key=lambda g: (-g[0], g[1]))
    for _, mid in gaps:
        if any(angular_distance(p, mid) < ANGLE_TOL or angular_distance(p, mid + math.pi) < ANGLE_TOL for p in povm_pts):
            continue
        for half, start in enumerate((mid, mid + math.pi)):
            flips = set()
            for v, (pos, neg) in enumerate(lit_pts):
                if _in_open_half(pos, start):
                    continue
                if _in_open_half(neg, start):
                    flips.add(v)
            ren = Renaming(frozenset(flips), wrap(mid), half)
            if validity(ren.apply(instance)) == (True, True):
                return ren
    return None


def literal_geometry(theta: float, positive: Sequence[float], clauses: Sequence[Sequence[Literal]]) -> GeometricScenario:
    """Scenario whose variable i has positive literal point `positive[i]`;
    each clause becomes a three-outcome POVM on its literal points."""
    rho = np.array([0.0, math.cos(2 * theta)])
    chords = tuple(chord_through(rho, wrap(p + math.pi)) for p in positive)
    geom = GeometricScenario(theta, chords, (Projective(0.0),))
    lit_pts = dict(enumerate(literal_points(geom)))
    bob = tuple(Povm3(tuple(_lit_point(lit_pts, l) for l in c)) for c in clauses)
    return GeometricScenario(theta, chords, bob)


def bad_array_geometry(theta: float = math.acos(-0.9) / 2) -> GeometricScenario:
    """An explicit real two-qubit model whose possibility table is the 6x6
    array encoding (x1|x2|x3) & (x1|x2|~x3).

    Literal points sit on chords through (0, 0.9); with a non-maximally
    entangled state the two negative points are not antipodal to the
    positive ones, which is what lets both clause triples be hull-valid.
    """
    clauses = (
        (Literal(0, True), Literal(1, True), Literal(2, True)),
        (Literal(0, True), Literal(1, True), Literal(2, False)),
    )
    positive = (math.radians(240.0), math.radians(300.0), math.radians(64.2))
    return literal_geometry(theta, positive, clauses)
