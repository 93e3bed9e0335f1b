"""Analytical gradients of the stability region via LP dual sensitivity.

The region LP's constraint matrix A(p, q) varies with contact positions (skew
blocks in the moment rows) and with the configuration (J_c^T blocks in both
actuation bands); the constraint vector b(q) is treated as constant for
gradient purposes. The scalar velocity of boundary offset a*_i under a
constraint variation dA/dt is -y*^T (dA/dt) x*, and gradients are assembled
from one such evaluation per basis probe: 3 probes per contact point, n_q
probes for the whole-body configuration. Contact probes touch a single skew
block and reduce to one cross product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .kinematics import ContactSet, KinematicTree, jacobian_partial, skew
from .lp import LPSolution
from .region import RegionProblem, StabilityRegion

JOINT_LIMIT_BAND = math.radians(5.0)


@dataclass(frozen=True)
class ConstraintTimeDerivative:
    """Structured dA/dt: contact-velocity skew blocks plus J_c-dot bands.

    ``pdot`` is (n_c, 3) contact-point velocities; ``jdot`` is the (3 n_c, n_j)
    time derivative of the stacked contact Jacobian (may be None when only
    contacts move). b-dot is taken as zero throughout.
    """

    pdot: Optional[np.ndarray]
    jdot: Optional[np.ndarray]

    def dense(self, problem: RegionProblem) -> np.ndarray:
        """Materialize over the core equality rows and original variables."""
        n_rows = 6 + 2 * problem.n_j
        g = np.zeros((n_rows, problem.n_original))
        if self.pdot is not None:
            for k in range(problem.n_c):
                g[3:6, 3 * k : 3 * k + 3] = skew(self.pdot[k])
        if self.jdot is not None and problem.n_j:
            jt = self.jdot.T
            g[problem.act_plus_rows, problem.f_slice] = jt
            g[problem.act_minus_rows, problem.f_slice] = jt
        return g


def constraint_time_derivative(
    tree: KinematicTree,
    q: np.ndarray,
    contacts: ContactSet,
    pdot: Optional[np.ndarray] = None,
    v: Optional[np.ndarray] = None,
) -> ConstraintTimeDerivative:
    """Assemble dA/dt for contact velocities ``pdot`` and joint velocity ``v``."""
    jdot = None
    if v is not None and np.any(v):
        active = contacts.active_contacts()
        jdot = sum(
            v[j] * jacobian_partial(tree, q, active, j)
            for j in range(tree.n_q)
            if v[j] != 0.0
        )
    return ConstraintTimeDerivative(pdot=pdot, jdot=jdot)


def vertex_velocity(problem: RegionProblem, sol: LPSolution, da: ConstraintTimeDerivative) -> float:
    """Offset velocity of one region vertex: -y*^T (dA/dt) x*.

    Works in the original variable space; standard-form slack columns of the
    LP never vary, so they contribute nothing to the bilinear form.
    """
    if not sol.optimal:
        raise ValueError("vertex velocity needs an optimal cached solution")
    x = problem.original_primal(sol)
    f = x[problem.f_slice]
    total = 0.0
    if da.pdot is not None:
        y_mom = sol.y[problem.moment_rows]
        for k in range(problem.n_c):
            fk = f[3 * k : 3 * k + 3]
            total += float(y_mom @ np.cross(da.pdot[k], fk))
    if da.jdot is not None and problem.n_j:
        y_act = sol.y[problem.act_plus_rows] + sol.y[problem.act_minus_rows]
        total += float(y_act @ (da.jdot.T @ f))
    return -total


def contact_vertex_gradient(problem: RegionProblem, sol: LPSolution, k: int) -> np.ndarray:
    """grad of a*_i w.r.t. contact point k: three unit-velocity probes."""
    grad = np.zeros(3)
    for axis in range(3):
        pdot = np.zeros((problem.n_c, 3))
        pdot[k, axis] = 1.0
        grad[axis] = vertex_velocity(problem, sol, ConstraintTimeDerivative(pdot=pdot, jdot=None))
    return grad


def config_jacobian_partials(tree: KinematicTree, q: np.ndarray, contacts: ContactSet) -> list[np.ndarray]:
    """dJ_c/dq_j for every configuration coordinate (shared across directions)."""
    active = contacts.active_contacts()
    return [jacobian_partial(tree, q, active, j) for j in range(tree.n_q)]


def config_vertex_gradient(
    problem: RegionProblem,
    sol: LPSolution,
    partials: Sequence[np.ndarray],
) -> np.ndarray:
    """grad of a*_i w.r.t. q: one J_c-dot probe per configuration coordinate."""
    n_q = len(partials)
    grad = np.zeros(n_q)
    for j in range(n_q):
        grad[j] = vertex_velocity(problem, sol, ConstraintTimeDerivative(pdot=None, jdot=partials[j]))
    return grad


def joint_limit_gate(
    grad_q: np.ndarray,
    q: np.ndarray,
    tree: KinematicTree,
    band: float = JOINT_LIMIT_BAND,
) -> np.ndarray:
    """Zero gradient components that push a near-limit joint further in.

    Joints within ``band`` of a position limit whose gradient component points
    at that limit are treated as having no postural sensitivity.
    """
    gated = np.asarray(grad_q, dtype=float).copy()
    lo, hi = tree.position_limits
    joints = q[6:]
    for j in range(tree.n_j):
        g = gated[6 + j]
        if g > 0.0 and joints[j] >= hi[j] - band:
            gated[6 + j] = 0.0
        elif g < 0.0 and joints[j] <= lo[j] + band:
            gated[6 + j] = 0.0
    return gated


def postural_sensitivity(margin_grad_q: np.ndarray, n_h: np.ndarray) -> float:
    """s_q = || N_h grad a*_{i*}(q) ||^2."""
    return float(np.sum((n_h @ margin_grad_q) ** 2))


@dataclass(frozen=True)
class GradientBundle:
    """Per-tick gradients of the region offsets, margin and area."""

    i_star: int
    contact_grads: np.ndarray  # (n_d, n_c, 3)
    config_grads: np.ndarray  # (n_d, n_q)
    margin_grad: np.ndarray  # (n_q,), joint-limit gated grad of a*_{i*}
    area_grad: np.ndarray  # (n_c, 3)
    s_q: float  # effective sensitivity (0 when low confidence)
    s_q_raw: float
    low_confidence: bool
    valid: np.ndarray  # per-direction flags (False for degenerate LPs)


def margin_gradient(bundle: GradientBundle, n_h: np.ndarray) -> np.ndarray:
    """Null-space projected margin gradient used by posture retargeting."""
    return n_h @ bundle.margin_grad


def area_gradient(region: StabilityRegion, contact_grads: np.ndarray) -> np.ndarray:
    """grad of polygon area w.r.t. each contact: dA/da*_i is edge i's length."""
    lengths = region.edge_lengths()
    grads = np.zeros((region.problem.n_c, 3))
    for i in range(region.n_directions):
        if lengths[i] == 0.0:
            continue
        grads += lengths[i] * contact_grads[i]
    return grads


def compute_gradient_bundle(
    region: StabilityRegion,
    tree: KinematicTree,
    q: np.ndarray,
    contacts: ContactSet,
    i_star: int,
    n_h: np.ndarray,
    with_config: bool = True,
    with_area: bool = True,
    gate_band: float = JOINT_LIMIT_BAND,
) -> GradientBundle:
    """Evaluate all gradients the retargeting policy consumes this tick."""
    problem = region.problem
    n_d = region.n_directions
    n_q = tree.n_q
    contact_grads = np.zeros((n_d, problem.n_c, 3))
    config_grads = np.zeros((n_d, n_q))
    valid = np.ones(n_d, dtype=bool)

    partials = config_jacobian_partials(tree, q, contacts) if (with_config and problem.n_j) else None

    usable = np.ones(n_d, dtype=bool)
    for i in range(n_d):
        sol = region.solutions[i]
        if sol is None or not sol.optimal:
            valid[i] = False
            usable[i] = False
            continue
        if sol.degenerate:
            # Informational: duals of the terminal basis are returned anyway;
            # validation widens tolerances but the gradient remains usable.
            valid[i] = False
        if with_area:
            for k in range(problem.n_c):
                contact_grads[i, k] = contact_vertex_gradient(problem, sol, k)
        if partials is not None:
            config_grads[i] = config_vertex_gradient(problem, sol, partials)

    margin_grad = joint_limit_gate(config_grads[i_star], q, tree, gate_band)
    s_q_raw = postural_sensitivity(margin_grad, n_h)
    low_confidence = not usable[i_star]
    s_q = 0.0 if low_confidence else s_q_raw
    area = area_gradient(region, contact_grads) if with_area else np.zeros((problem.n_c, 3))

    return GradientBundle(
        i_star=i_star,
        contact_grads=contact_grads,
        config_grads=config_grads,
        margin_grad=margin_grad,
        area_grad=area,
        s_q=s_q,
        s_q_raw=s_q_raw,
        low_confidence=low_confidence,
        valid=valid,
    )
