"""Branched rigid-body kinematics with a 6-DoF floating base.

Configuration layout: q = [base_xyz (m), base yaw/pitch/roll (rad), actuated
joint angles (rad)], so n_q = 6 + n_j. The base orientation is
R = Rz(yaw) @ Ry(pitch) @ Rx(roll); its three angles behave as chained
virtual revolute joints for Jacobian purposes. All actuated joints are
revolute. Everything here is pure over (tree, q) and safe to share.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

GRAVITY = 9.81
G_VEC = np.array([0.0, 0.0, -GRAVITY])


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotx(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def roty(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotz(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rpy_matrix(rpy: Sequence[float]) -> np.ndarray:
    """Rotation from (roll, pitch, yaw): Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    roll, pitch, yaw = rpy
    return rotz(yaw) @ roty(pitch) @ rotx(roll)


def axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    k = skew(axis)
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def so3_log(r: np.ndarray) -> np.ndarray:
    """Rotation vector of R (angle * unit axis); inverse of so3_exp."""
    cos_a = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    angle = math.acos(cos_a)
    if angle < 1e-10:
        return np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]]) / 2.0
    if angle > math.pi - 1e-6:
        # Near pi, extract the axis from the symmetric part.
        m = (r + np.eye(3)) / 2.0
        axis = np.sqrt(np.maximum(np.diag(m), 0.0))
        axis[1] = math.copysign(axis[1], m[0, 1]) if axis[0] > 1e-6 else axis[1]
        axis[2] = math.copysign(axis[2], m[0, 2]) if axis[0] > 1e-6 else math.copysign(axis[2], m[1, 2])
        n = np.linalg.norm(axis)
        if n < 1e-12:
            return np.zeros(3)
        return angle * axis / n
    vee = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    return angle / (2.0 * math.sin(angle)) * vee


def so3_exp(w: np.ndarray) -> np.ndarray:
    angle = float(np.linalg.norm(w))
    if angle < 1e-12:
        return np.eye(3) + skew(w)
    return axis_angle_matrix(w / angle, angle)


@dataclass(frozen=True)
class Joint:
    name: str
    axis: np.ndarray  # unit, expressed in the link frame
    origin_pos: np.ndarray  # parent-frame offset to the joint
    origin_rpy: np.ndarray
    lo: float
    hi: float
    tau_lo: float
    tau_hi: float


@dataclass(frozen=True)
class Link:
    name: str
    mass: float
    com: np.ndarray  # link frame
    parent: Optional[str]  # None for the floating-base root
    joint: Optional[Joint]  # None for the root


@dataclass(frozen=True)
class Contact:
    point: np.ndarray  # world frame (m)
    normal: np.ndarray  # unit, pointing away from the surface into free space
    mu: float
    link: Optional[str] = None  # None: environment-fixed, zero Jacobian rows
    active: bool = True
    name: str = ""


@dataclass
class ContactSet:
    contacts: list[Contact] = field(default_factory=list)

    def __post_init__(self):
        for c in self.contacts:
            if abs(np.linalg.norm(c.normal) - 1.0) > 1e-6:
                raise ValueError(f"contact normal not unit length: {c.normal}")
            if c.mu <= 0.0:
                raise ValueError("friction coefficient must be positive")

    def active_contacts(self) -> list[Contact]:
        return [c for c in self.contacts if c.active]

    def __len__(self) -> int:
        return len(self.contacts)


class KinematicTree:
    """Immutable branched tree rooted at a floating base."""

    def __init__(self, links: Sequence[Link], end_effectors: Optional[dict] = None, name: str = ""):
        self.name = name
        self.links = list(links)
        self.index = {l.name: i for i, l in enumerate(self.links)}
        if len(self.index) != len(self.links):
            raise ValueError("duplicate link names")
        roots = [l for l in self.links if l.parent is None]
        if len(roots) != 1:
            raise ValueError(f"expected exactly one root link, found {len(roots)}")
        if roots[0].joint is not None:
            raise ValueError("root link must not carry a joint")
        self.root = roots[0].name
        for l in self.links:
            if l.parent is not None and l.parent not in self.index:
                raise ValueError(f"unknown parent link {l.parent!r} of {l.name!r}")
            if l.parent is not None and l.joint is None:
                raise ValueError(f"non-root link {l.name!r} needs a joint")
        self._check_tree()
        self.end_effectors = dict(end_effectors or {})
        for ee_name, (link, _) in self.end_effectors.items():
            if link not in self.index:
                raise ValueError(f"end effector {ee_name!r} references unknown link {link!r}")

    def _check_tree(self):
        for l in self.links:
            seen = set()
            cur = l
            while cur.parent is not None:
                if cur.name in seen:
                    raise ValueError(f"cycle through link {cur.name!r}")
                seen.add(cur.name)
                cur = self.links[self.index[cur.parent]]
        self.parent_idx = np.array(
            [self.index[l.parent] if l.parent else -1 for l in self.links], dtype=int
        )
        order = []
        placed = set()
        pending = list(range(len(self.links)))
        while pending:
            progressed = False
            for i in list(pending):
                p = self.parent_idx[i]
                if p < 0 or p in placed:
                    order.append(i)
                    placed.add(i)
                    pending.remove(i)
                    progressed = True
            if not progressed:
                raise ValueError("links do not form a tree")
        self.topo = order

        self.joint_links = [i for i in self.topo if self.links[i].joint is not None]
        self.joint_of_link = {i: k for k, i in enumerate(self.joint_links)}
        self.n_j = len(self.joint_links)
        self.n_q = 6 + self.n_j
        self.total_mass = sum(l.mass for l in self.links)
        if self.total_mass <= 0.0:
            raise ValueError("total mass must be positive")
        for i in self.joint_links:
            j = self.links[i].joint
            if not (np.isfinite([j.lo, j.hi, j.tau_lo, j.tau_hi]).all()):
                raise ValueError(f"joint {j.name!r} needs finite position and torque limits")

    # -- limit vectors over actuated joints --------------------------------
    @property
    def position_limits(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([self.links[i].joint.lo for i in self.joint_links])
        hi = np.array([self.links[i].joint.hi for i in self.joint_links])
        return lo, hi

    @property
    def torque_limits(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([self.links[i].joint.tau_lo for i in self.joint_links])
        hi = np.array([self.links[i].joint.tau_hi for i in self.joint_links])
        return lo, hi

    def joint_names(self) -> list[str]:
        return [self.links[i].joint.name for i in self.joint_links]

    def neutral_q(self) -> np.ndarray:
        return np.zeros(self.n_q)

    def frames(self, q: np.ndarray) -> "FrameData":
        return forward_kinematics(self, q)

    def end_effector_point(self, fd: "FrameData", name: str) -> np.ndarray:
        link, local = self.end_effectors[name]
        i = self.index[link]
        return fd.p[i] + fd.R[i] @ np.asarray(local, dtype=float)


@dataclass(frozen=True)
class FrameData:
    """World transforms plus per-joint axis/origin data for one configuration."""

    R: np.ndarray  # (L, 3, 3)
    p: np.ndarray  # (L, 3)
    joint_axis_world: np.ndarray  # (L, 3); rows only valid for links with joints
    joint_origin_world: np.ndarray  # (L, 3)
    base_axes: np.ndarray  # (3, 3) virtual yaw/pitch/roll axes, rows
    base_pos: np.ndarray


def forward_kinematics(tree: KinematicTree, q: np.ndarray) -> FrameData:
    q = np.asarray(q, dtype=float)
    if q.shape[0] != tree.n_q:
        raise ValueError(f"configuration length {q.shape[0]} != n_q {tree.n_q}")
    L = len(tree.links)
    R = np.zeros((L, 3, 3))
    p = np.zeros((L, 3))
    jaxis = np.zeros((L, 3))
    jorigin = np.zeros((L, 3))

    base_pos = q[:3].copy()
    yaw, pitch, roll = q[3], q[4], q[5]
    rz, ry = rotz(yaw), roty(pitch)
    base_R = rz @ ry @ rotx(roll)
    base_axes = np.stack([
        np.array([0.0, 0.0, 1.0]),  # yaw about world z
        rz @ np.array([0.0, 1.0, 0.0]),  # pitch about the yawed y
        rz @ ry @ np.array([1.0, 0.0, 0.0]),  # roll about the yawed+pitched x
    ])

    for i in tree.topo:
        link = tree.links[i]
        if link.parent is None:
            R[i] = base_R
            p[i] = base_pos
            continue
        pi = tree.index[link.parent]
        j = link.joint
        r_origin = rpy_matrix(j.origin_rpy)
        o_world = p[pi] + R[pi] @ j.origin_pos
        r_pre = R[pi] @ r_origin
        angle = q[6 + tree.joint_of_link[i]]
        R[i] = r_pre @ axis_angle_matrix(j.axis, angle)
        p[i] = o_world
        jaxis[i] = r_pre @ j.axis
        jorigin[i] = o_world

    return FrameData(R=R, p=p, joint_axis_world=jaxis, joint_origin_world=jorigin,
                     base_axes=base_axes, base_pos=base_pos)


def _ancestor_joints(tree: KinematicTree, link_idx: int) -> list[int]:
    """Link indices with joints on the chain root -> link (inclusive)."""
    chain = []
    i = link_idx
    while i >= 0:
        if tree.links[i].joint is not None:
            chain.append(i)
        i = tree.parent_idx[i]
    return chain


def point_jacobian(tree: KinematicTree, fd: FrameData, link_idx: int, point_world: np.ndarray) -> np.ndarray:
    """Linear-velocity Jacobian (3 x n_q) of a world point rigidly on a link."""
    J = np.zeros((3, tree.n_q))
    J[:, :3] = np.eye(3)
    rel_base = point_world - fd.base_pos
    for k in range(3):
        J[:, 3 + k] = np.cross(fd.base_axes[k], rel_base)
    for i in _ancestor_joints(tree, link_idx):
        col = 6 + tree.joint_of_link[i]
        J[:, col] = np.cross(fd.joint_axis_world[i], point_world - fd.joint_origin_world[i])
    return J


def link_angular_jacobian(tree: KinematicTree, fd: FrameData, link_idx: int) -> np.ndarray:
    """World angular-velocity Jacobian (3 x n_q) of a link frame."""
    J = np.zeros((3, tree.n_q))
    J[:, 3:6] = fd.base_axes.T
    for i in _ancestor_joints(tree, link_idx):
        J[:, 6 + tree.joint_of_link[i]] = fd.joint_axis_world[i]
    return J


def contact_jacobians(tree: KinematicTree, q: np.ndarray, contacts: Sequence[Contact],
                      fd: Optional[FrameData] = None) -> np.ndarray:
    """Stacked contact-point Jacobian (3 n_c x n_j), actuated columns only.

    Environment-fixed contacts (link=None) contribute zero rows; J_c^T maps
    stacked contact forces to actuated joint torques.
    """
    fd = fd if fd is not None else forward_kinematics(tree, q)
    rows = np.zeros((3 * len(contacts), tree.n_j))
    for k, c in enumerate(contacts):
        if c.link is None:
            continue
        if c.link not in tree.index:
            raise ValueError(f"contact references unknown link {c.link!r}")
        J = point_jacobian(tree, fd, tree.index[c.link], np.asarray(c.point, dtype=float))
        rows[3 * k : 3 * k + 3, :] = J[:, 6:]
    return rows


def com_and_jacobian(tree: KinematicTree, q: np.ndarray,
                     fd: Optional[FrameData] = None) -> tuple[np.ndarray, np.ndarray]:
    """Whole-body CoM (m) and its Jacobian (3 x n_q)."""
    fd = fd if fd is not None else forward_kinematics(tree, q)
    c = np.zeros(3)
    J = np.zeros((3, tree.n_q))
    for i, link in enumerate(tree.links):
        w = link.mass / tree.total_mass
        if w == 0.0:
            continue
        com_world = fd.p[i] + fd.R[i] @ link.com
        c += w * com_world
        J += w * point_jacobian(tree, fd, i, com_world)
    return c, J


def gravity_torques(tree: KinematicTree, q: np.ndarray,
                    fd: Optional[FrameData] = None) -> np.ndarray:
    """Static holding torques g(q) = dU/dq over actuated joints.

    U is the total gravitational potential; with tau = g(q) - J_c^T f the
    torque band g(q) - tau+ <= J_c^T f <= g(q) - tau- expresses the actuation
    limits tau- <= tau <= tau+.
    """
    fd = fd if fd is not None else forward_kinematics(tree, q)
    g = np.zeros(tree.n_q)
    for i, link in enumerate(tree.links):
        if link.mass == 0.0:
            continue
        com_world = fd.p[i] + fd.R[i] @ link.com
        J = point_jacobian(tree, fd, i, com_world)
        g += link.mass * GRAVITY * J[2, :]
    return g[6:]


def potential_energy(tree: KinematicTree, q: np.ndarray) -> float:
    fd = forward_kinematics(tree, q)
    return float(sum(l.mass * GRAVITY * (fd.p[i] + fd.R[i] @ l.com)[2]
                     for i, l in enumerate(tree.links)))


def jacobian_partial(tree: KinematicTree, q: np.ndarray, contacts: Sequence[Contact],
                     j: int, step: float = 1e-6) -> np.ndarray:
    """dJ_c/dq_j by central differences; equals J_c-dot for v = e_j."""
    if j >= tree.n_q:
        raise ValueError("joint index out of range")
    qp = q.copy(); qp[j] += step
    qm = q.copy(); qm[j] -= step
    return (contact_jacobians(tree, qp, contacts) - contact_jacobians(tree, qm, contacts)) / (2.0 * step)


def damped_pinv(J: np.ndarray, damping: float = 1e-6) -> np.ndarray:
    u, s, vt = np.linalg.svd(J, full_matrices=False)
    s_inv = s / (s * s + damping * damping)
    return vt.T @ np.diag(s_inv) @ u.T


def nullspace_projector(J_h: np.ndarray, damping: float = 1e-6) -> np.ndarray:
    """N_h = I - pinv(J_h) J_h with a damped pseudoinverse."""
    if J_h.size == 0:
        return np.eye(J_h.shape[1]) if J_h.ndim == 2 else np.eye(0)
    n = J_h.shape[1]
    return np.eye(n) - damped_pinv(J_h, damping) @ J_h
