"""Actuation-aware centroidal stability regions.

The feasibility test: a CoM position c is statically stable if contact forces
f_k inside their friction cones balance gravity in force and moment, while the
induced joint torques tau = g(q) - J_c^T f stay inside the actuation limits.
Boundary offsets of the region of stable CoM xy positions are computed by an
LP per query direction; 18 fixed, equally spaced directions are used at
runtime with an incremental update policy (one full solve plus fixed-basis
refreshes of the margin-critical edges per tick).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .kinematics import (
    Contact,
    ContactSet,
    GRAVITY,
    G_VEC,
    KinematicTree,
    com_and_jacobian,
    contact_jacobians,
    forward_kinematics,
    gravity_torques,
    skew,
)
from .lp import INFEASIBLE_BASIS, LPSolution, StandardFormLP, fixed_basis_resolve, solve_lp, standardize

DEFAULT_QUERY_COUNT = 18
DEFAULT_EDGE_COUNT = 4
EMPTY_MARGIN = -np.inf


def query_directions(count: int = DEFAULT_QUERY_COUNT) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(count) / count
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


@dataclass(frozen=True)
class FrictionLinearization:
    """Face form B f <= 0 of an inner friction pyramid."""

    B: np.ndarray  # (n_e, 3)
    edge_count: int
    inner: bool = True


def _tangent_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Deterministic tangents: prefer crossing with world z, fall back to x.
    ref = np.array([0.0, 0.0, 1.0]) if abs(normal[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    t1 = np.cross(normal, ref)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(normal, t1)
    return t1, t2


def linearize_friction(contact: Contact, edge_count: int = DEFAULT_EDGE_COUNT) -> FrictionLinearization:
    """Inner pyramid with rays on the cone shrunk to mu*cos(pi/n_e).

    Rays r_j = n + mu' (cos(2 pi j / n_e) t1 + sin(...) t2) lie strictly inside
    the exact cone, keeping the stability test conservative. Faces are the
    cross products of adjacent rays oriented so that B n < 0.
    """
    if edge_count < 3:
        raise ValueError("need at least 3 pyramid edges")
    n = np.asarray(contact.normal, dtype=float)
    mu_in = contact.mu * math.cos(math.pi / edge_count)
    t1, t2 = _tangent_basis(n)
    angles = 2.0 * np.pi * np.arange(edge_count) / edge_count
    rays = n[None, :] + mu_in * (np.cos(angles)[:, None] * t1[None, :] + np.sin(angles)[:, None] * t2[None, :])
    rows = np.zeros((edge_count, 3))
    for j in range(edge_count):
        face = np.cross(rays[j], rays[(j + 1) % edge_count])
        face /= np.linalg.norm(face)
        if face @ n > 0.0:
            face = -face
        rows[j] = face
    return FrictionLinearization(B=rows, edge_count=edge_count)


@dataclass(frozen=True)
class RegionProblem:
    """One tick's LP family: fixed constraints, per-direction objectives."""

    contacts: tuple[Contact, ...]
    friction: tuple[FrictionLinearization, ...]
    mass: float
    jacobian: np.ndarray  # (3 n_c, n_j)
    gravity: np.ndarray  # (n_j,)
    tau_lo: np.ndarray
    tau_hi: np.ndarray
    base_lp: StandardFormLP  # zero objective

    @property
    def n_c(self) -> int:
        return len(self.contacts)

    @property
    def n_j(self) -> int:
        return self.gravity.shape[0]

    # Original-variable layout: [f (3 n_c) | c_xy (2) | mtau+ (n_j) | mtau- (n_j)]
    @property
    def f_slice(self) -> slice:
        return slice(0, 3 * self.n_c)

    @property
    def c_slice(self) -> slice:
        return slice(3 * self.n_c, 3 * self.n_c + 2)

    @property
    def mtau_plus_slice(self) -> slice:
        return slice(3 * self.n_c + 2, 3 * self.n_c + 2 + self.n_j)

    @property
    def mtau_minus_slice(self) -> slice:
        return slice(3 * self.n_c + 2 + self.n_j, 3 * self.n_c + 2 + 2 * self.n_j)

    # Core equality rows: [force (3) | moment (3) | act+ (n_j) | act- (n_j)]
    @property
    def moment_rows(self) -> slice:
        return slice(3, 6)

    @property
    def act_plus_rows(self) -> slice:
        return slice(6, 6 + self.n_j)

    @property
    def act_minus_rows(self) -> slice:
        return slice(6 + self.n_j, 6 + 2 * self.n_j)

    @property
    def n_original(self) -> int:
        return 3 * self.n_c + 2 + 2 * self.n_j

    def objective_for(self, direction: np.ndarray) -> np.ndarray:
        c = np.zeros(self.base_lp.n)
        cols = self.base_lp.split.pos_col[self.c_slice]
        neg = self.base_lp.split.neg_col[self.c_slice]
        c[cols] = direction
        c[neg] = -np.asarray(direction, dtype=float)
        return c

    def lp_for(self, direction: np.ndarray) -> StandardFormLP:
        return self.base_lp.with_objective(self.objective_for(direction))

    def original_primal(self, sol: LPSolution) -> np.ndarray:
        return self.base_lp.split.to_original(sol.x)

    def contact_force(self, sol: LPSolution, k: int) -> np.ndarray:
        return self.original_primal(sol)[3 * k : 3 * k + 3]

    def vertex_point(self, sol: LPSolution) -> np.ndarray:
        return self.original_primal(sol)[self.c_slice]

    def torque_margins(self, sol: LPSolution) -> tuple[np.ndarray, np.ndarray]:
        x = self.original_primal(sol)
        return x[self.mtau_plus_slice], x[self.mtau_minus_slice]


def assemble_region_problem(
    contacts: Sequence[Contact],
    mass: float,
    jacobian: np.ndarray,
    gravity: np.ndarray,
    tau_lo: np.ndarray,
    tau_hi: np.ndarray,
    edge_count: int = DEFAULT_EDGE_COUNT,
) -> RegionProblem:
    """Build the LP family from explicit numeric pieces (testable core)."""
    contacts = tuple(contacts)
    n_c = len(contacts)
    if n_c == 0:
        raise ValueError("stability region needs at least one active contact")
    n_j = gravity.shape[0]
    friction = tuple(linearize_friction(c, edge_count) for c in contacts)

    n_orig = 3 * n_c + 2 + 2 * n_j
    f0 = 0
    c0 = 3 * n_c
    mp0 = c0 + 2
    mm0 = mp0 + n_j

    a_eq = np.zeros((6 + 2 * n_j, n_orig))
    b_eq = np.zeros(6 + 2 * n_j)
    # Force balance: sum_k f_k = -m g_vec.
    for k in range(n_c):
        a_eq[0:3, f0 + 3 * k : f0 + 3 * k + 3] = np.eye(3)
    b_eq[0:3] = -mass * G_VEC
    # Moment balance: sum_k [p_k]x f_k - m [g_vec]x c = 0 (c_z column is zero).
    for k, c in enumerate(contacts):
        a_eq[3:6, f0 + 3 * k : f0 + 3 * k + 3] = skew(np.asarray(c.point, dtype=float))
    a_eq[3:6, c0 : c0 + 2] = -mass * skew(G_VEC)[:, :2]
    # Actuation band: J^T f - mtau+ = g - tau+, J^T f + mtau- = g - tau-.
    if n_j:
        jt = jacobian.T
        a_eq[6 : 6 + n_j, f0 : f0 + 3 * n_c] = jt
        a_eq[6 : 6 + n_j, mp0 : mp0 + n_j] = -np.eye(n_j)
        b_eq[6 : 6 + n_j] = gravity - tau_hi
        a_eq[6 + n_j : 6 + 2 * n_j, f0 : f0 + 3 * n_c] = jt
        a_eq[6 + n_j : 6 + 2 * n_j, mm0 : mm0 + n_j] = np.eye(n_j)
        b_eq[6 + n_j : 6 + 2 * n_j] = gravity - tau_lo

    a_ub = np.zeros((edge_count * n_c, n_orig))
    for k, lin in enumerate(friction):
        a_ub[edge_count * k : edge_count * (k + 1), f0 + 3 * k : f0 + 3 * k + 3] = lin.B
    b_ub = np.zeros(edge_count * n_c)

    free = np.zeros(n_orig, dtype=bool)
    free[f0 : c0 + 2] = True  # forces and CoM xy are free; torque margins >= 0

    base_lp = standardize(np.zeros(n_orig), a_eq, b_eq, a_ub, b_ub, free_mask=free)
    return RegionProblem(
        contacts=contacts,
        friction=friction,
        mass=mass,
        jacobian=np.asarray(jacobian, dtype=float),
        gravity=np.asarray(gravity, dtype=float),
        tau_lo=np.asarray(tau_lo, dtype=float),
        tau_hi=np.asarray(tau_hi, dtype=float),
        base_lp=base_lp,
    )


def region_problem(
    tree: KinematicTree,
    q: np.ndarray,
    contacts: ContactSet,
    edge_count: int = DEFAULT_EDGE_COUNT,
    jacobian: Optional[np.ndarray] = None,
    gravity: Optional[np.ndarray] = None,
) -> RegionProblem:
    active = contacts.active_contacts()
    fd = forward_kinematics(tree, q)
    if jacobian is None:
        jacobian = contact_jacobians(tree, q, active, fd=fd)
    if gravity is None:
        gravity = gravity_torques(tree, q, fd=fd)
    tau_lo, tau_hi = tree.torque_limits
    return assemble_region_problem(active, tree.total_mass, jacobian, gravity, tau_lo, tau_hi, edge_count)


def build_region_lp(
    tree: KinematicTree,
    q: np.ndarray,
    contacts: ContactSet,
    direction: np.ndarray,
    edge_count: int = DEFAULT_EDGE_COUNT,
) -> StandardFormLP:
    """Single-direction LP: max a^T c_xy subject to static feasibility."""
    return region_problem(tree, q, contacts, edge_count).lp_for(np.asarray(direction, dtype=float))


def _clip_polygon(poly: list[np.ndarray], a: np.ndarray, offset: float) -> list[np.ndarray]:
    if not poly:
        return poly
    out: list[np.ndarray] = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        dp = a @ p - offset
        dq = a @ q - offset
        if dp <= 1e-12:
            out.append(p)
        if (dp < -1e-12 and dq > 1e-12) or (dp > 1e-12 and dq < -1e-12):
            t = dp / (dp - dq)
            out.append(p + t * (q - p))
    return out


def halfplane_polygon(directions: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Intersection of {z : a_i . z <= offset_i} clipped from a bounding box."""
    finite = np.isfinite(offsets)
    if not finite.all():
        return np.zeros((0, 2))
    bound = 4.0 * max(1.0, float(np.abs(offsets).max(initial=0.0)))
    poly = [np.array(v, dtype=float) for v in
            [(-bound, -bound), (bound, -bound), (bound, bound), (-bound, bound)]]
    for a, o in zip(directions, offsets):
        poly = _clip_polygon(poly, a, float(o))
        if not poly:
            break
    return np.array(poly) if poly else np.zeros((0, 2))


def polygon_area(poly: np.ndarray) -> float:
    if poly.shape[0] < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


@dataclass(frozen=True)
class StabilityRegion:
    """Halfplane offsets with cached per-direction LP solutions.

    Immutable snapshot; incremental updates return a new instance. ``feasible``
    is False when the scene admits no static equilibrium, in which case the
    margin is -inf and the polygon is empty.
    """

    directions: np.ndarray  # (n_d, 2)
    offsets: np.ndarray  # (n_d,)
    solutions: tuple  # per-direction LPSolution (possibly stale)
    problem: RegionProblem
    feasible: bool
    staleness: np.ndarray  # ticks since each direction's last refresh
    polygon: np.ndarray  # (V, 2) halfplane intersection

    @property
    def n_directions(self) -> int:
        return self.directions.shape[0]

    def margins(self, c_xy: np.ndarray) -> np.ndarray:
        return self.offsets - self.directions @ np.asarray(c_xy, dtype=float)

    def margin(self, c_xy: np.ndarray) -> float:
        if not self.feasible:
            return EMPTY_MARGIN
        return float(self.margins(c_xy).min())

    def min_margin_index(self, c_xy: np.ndarray) -> int:
        return int(np.argmin(self.margins(c_xy)))  # argmin: lowest index on ties

    def area(self) -> float:
        if not self.feasible:
            return 0.0
        return polygon_area(self.polygon)

    def edge_lengths(self) -> np.ndarray:
        """Boundary length contributed by each halfplane (zero if inactive)."""
        lengths = np.zeros(self.n_directions)
        poly = self.polygon
        if poly.shape[0] < 2:
            return lengths
        scale = 1.0 + float(np.abs(self.offsets).max(initial=0.0))
        for i in range(self.n_directions):
            a, o = self.directions[i], self.offsets[i]
            on_line = np.abs(poly @ a - o) <= 1e-8 * scale
            for v in range(poly.shape[0]):
                w = (v + 1) % poly.shape[0]
                if on_line[v] and on_line[w]:
                    lengths[i] += float(np.linalg.norm(poly[w] - poly[v]))
        return lengths

    def vertex_points(self) -> np.ndarray:
        pts = np.zeros((self.n_directions, 2))
        for i, sol in enumerate(self.solutions):
            if sol is not None and sol.optimal:
                pts[i] = self.problem.vertex_point(sol)
        return pts


def _empty_region(problem: RegionProblem, directions: np.ndarray) -> StabilityRegion:
    n = directions.shape[0]
    return StabilityRegion(
        directions=directions,
        offsets=np.full(n, np.nan),
        solutions=tuple([None] * n),
        problem=problem,
        feasible=False,
        staleness=np.zeros(n, dtype=int),
        polygon=np.zeros((0, 2)),
    )


def solve_region_full(
    tree: KinematicTree,
    q: np.ndarray,
    contacts: ContactSet,
    edge_count: int = DEFAULT_EDGE_COUNT,
    directions: Optional[np.ndarray] = None,
    warm_from: Optional[StabilityRegion] = None,
    problem: Optional[RegionProblem] = None,
) -> StabilityRegion:
    """Solve every query direction fresh (optionally warm-started per direction)."""
    if problem is None:
        problem = region_problem(tree, q, contacts, edge_count)
    if directions is None:
        directions = query_directions()
    offsets = np.zeros(directions.shape[0])
    solutions = []
    for i in range(directions.shape[0]):
        warm = None
        if warm_from is not None and warm_from.solutions[i] is not None:
            warm = warm_from.solutions[i].basis
        sol = solve_lp(problem.lp_for(directions[i]), warm_basis=warm)
        if not sol.optimal:
            return _empty_region(problem, directions)
        offsets[i] = sol.objective
        solutions.append(sol)
    return StabilityRegion(
        directions=directions,
        offsets=offsets,
        solutions=tuple(solutions),
        problem=problem,
        feasible=True,
        staleness=np.zeros(directions.shape[0], dtype=int),
        polygon=halfplane_polygon(directions, offsets),
    )


def stability_margin(region: StabilityRegion, c_xy: np.ndarray) -> float:
    """m = min_i (a*_i - a_i . c_xy); negative outside, -inf for empty regions."""
    return region.margin(c_xy)


def region_area(region: StabilityRegion) -> float:
    return region.area()


def select_margin_edge(region: StabilityRegion, c_xy: np.ndarray, previous: Optional[int],
                       hysteresis: float = 0.002) -> int:
    """Minimum-margin direction with hysteresis against edge chattering."""
    margins = region.margins(c_xy)
    best = int(np.argmin(margins))
    if previous is not None and 0 <= previous < margins.shape[0]:
        if margins[best] > margins[previous] - hysteresis:
            return previous
    return best


def incremental_update(
    region: StabilityRegion,
    tree: KinematicTree,
    q: np.ndarray,
    contacts: ContactSet,
    edge_count: int = DEFAULT_EDGE_COUNT,
    problem: Optional[RegionProblem] = None,
    max_basis_signals: int = 6,
) -> StabilityRegion:
    """One control-rate region refresh against updated A(p, q), b(q).

    Policy per tick: a full (warm-started) LP solve of the stalest direction,
    then fixed-basis re-solves of the margin-critical directions (the minimum
    margin edge and its runner-up), escalating to full solves when a cached
    basis is no longer primal feasible. More than ``max_basis_signals``
    escalations trigger a full region re-solve.
    """
    if not region.feasible:
        return solve_region_full(tree, q, contacts, edge_count, directions=region.directions,
                                 problem=problem)
    if problem is None:
        problem = region_problem(tree, q, contacts, edge_count)
    if problem.base_lp.n != region.problem.base_lp.n:
        # Contact topology changed; cached bases are meaningless.
        return solve_region_full(tree, q, contacts, edge_count, directions=region.directions,
                                 problem=problem)

    directions = region.directions
    offsets = region.offsets.copy()
    solutions = list(region.solutions)
    staleness = region.staleness + 1
    signals = 0

    def refresh(i: int, force_full: bool) -> bool:
        nonlocal signals
        lp_i = problem.lp_for(directions[i])
        sol = None
        if not force_full:
            res = fixed_basis_resolve(lp_i, solutions[i].basis)
            if res is INFEASIBLE_BASIS:
                signals += 1
            else:
                sol = res
        if sol is None:
            sol = solve_lp(lp_i, warm_basis=solutions[i].basis)
        if not sol.optimal:
            return False
        offsets[i] = sol.objective
        solutions[i] = sol
        staleness[i] = 0
        return True

    # (1) Full solve on the stalest direction (round-robin under ties).
    stalest = int(np.argmax(staleness))
    if not refresh(stalest, force_full=True):
        return _empty_region(problem, directions)

    # (2) Fixed-basis refreshes of the margin-determining directions, repeated
    # until the minimum-margin edge has been recomputed against fresh data.
    c_xy, _ = com_and_jacobian(tree, q)
    c_xy = c_xy[:2]
    refreshed = {stalest}
    for _ in range(directions.shape[0]):
        margins = offsets - directions @ c_xy
        order = np.argsort(margins, kind="stable")
        targets = [int(order[0])]
        if order.shape[0] > 1:
            targets.append(int(order[1]))
        todo = [i for i in targets if i not in refreshed]
        if not todo:
            break
        for i in todo:
            if signals > max_basis_signals:
                return solve_region_full(tree, q, contacts, edge_count,
                                         directions=directions, warm_from=region, problem=problem)
            if not refresh(i, force_full=False):
                return _empty_region(problem, directions)
            refreshed.add(i)

    return StabilityRegion(
        directions=directions,
        offsets=offsets,
        solutions=tuple(solutions),
        problem=problem,
        feasible=True,
        staleness=staleness,
        polygon=halfplane_polygon(directions, offsets),
    )


def solve_region_iterative_projection(
    tree: KinematicTree,
    q: np.ndarray,
    contacts: ContactSet,
    tolerance: float = 1e-4,
    edge_count: int = DEFAULT_EDGE_COUNT,
    max_queries: int = 200,
    problem: Optional[RegionProblem] = None,
) -> StabilityRegion:
    """Expansion with inner/outer polygon estimates until the area gap closes.

    Starts from three spread directions and repeatedly queries the outward
    normal of the inner-hull edge with the largest inner/outer area gap
    (lowest index on ties) until the total gap drops below ``tolerance`` m^2.
    """
    if problem is None:
        problem = region_problem(tree, q, contacts, edge_count)

    entries: list[tuple[float, np.ndarray, float, LPSolution]] = []  # (angle, dir, offset, sol)

    def query(angle: float) -> bool:
        a = np.array([math.cos(angle), math.sin(angle)])
        sol = solve_lp(problem.lp_for(a))
        if not sol.optimal:
            return False
        entries.append((angle, a, float(sol.objective), sol))
        entries.sort(key=lambda e: e[0])
        return True

    for angle in (0.0, 2.0 * math.pi / 3.0, 4.0 * math.pi / 3.0):
        if not query(angle):
            dirs = np.array([e[1] for e in entries]) if entries else query_directions(3)
            return _empty_region(problem, np.atleast_2d(dirs))

    for _ in range(max_queries):
        pts = [problem.vertex_point(e[3]) for e in entries]
        n = len(entries)
        gaps = np.zeros(n)
        normals = np.zeros(n)
        for i in range(n):
            j = (i + 1) % n
            ai, oi = entries[i][1], entries[i][2]
            aj, oj = entries[j][1], entries[j][2]
            vi, vj = pts[i], pts[j]
            den = ai[0] * aj[1] - ai[1] * aj[0]
            if abs(den) < 1e-12:
                continue  # parallel supports: no outer corner between them
            w = np.array([(oi * aj[1] - oj * ai[1]) / den, (ai[0] * oj - aj[0] * oi) / den])
            gaps[i] = 0.5 * abs((vj - vi)[0] * (w - vi)[1] - (vj - vi)[1] * (w - vi)[0])
            edge = vj - vi
            if np.linalg.norm(edge) < 1e-12:
                gaps[i] = 0.0
                continue
            normal_angle = math.atan2(-edge[0], edge[1])  # outward normal of ccw edge
            normals[i] = normal_angle
        if gaps.sum() <= tolerance:
            break
        best = int(np.argmax(gaps))  # lowest index on ties
        angle = normals[best] % (2.0 * math.pi)
        if not query(angle):
            return _empty_region(problem, np.array([e[1] for e in entries]))

    directions = np.array([e[1] for e in entries])
    offsets = np.array([e[2] for e in entries])
    sols = tuple(e[3] for e in entries)
    return StabilityRegion(
        directions=directions,
        offsets=offsets,
        solutions=sols,
        problem=problem,
        feasible=True,
        staleness=np.zeros(directions.shape[0], dtype=int),
        polygon=halfplane_polygon(directions, offsets),
    )
