"""Small hand-built trees and scene builders shared across the test suite."""

import numpy as np

from comstab.kinematics import Contact, ContactSet, Joint, KinematicTree, Link


def _joint(name, axis, origin, lo=-3.0, hi=3.0, tau=200.0):
    return Joint(
        name=name,
        axis=np.asarray(axis, dtype=float),
        origin_pos=np.asarray(origin, dtype=float),
        origin_rpy=np.zeros(3),
        lo=lo,
        hi=hi,
        tau_lo=-tau,
        tau_hi=tau,
    )


def puck_tree(mass=10.0) -> KinematicTree:
    """A single floating body: no actuated joints, pure Eq.-of-statics scenes."""
    return KinematicTree([Link("body", mass, np.zeros(3), None, None)], name="puck")


def pendulum_tree(mass=2.0, length=0.5, axis=(0.0, 1.0, 0.0), tau=50.0) -> KinematicTree:
    """Massless base with one revolute link; com at +x*length when angle is 0."""
    links = [
        Link("base", 0.0, np.zeros(3), None, None),
        Link("arm", mass, np.array([length, 0.0, 0.0]), "base",
             _joint("shoulder", axis, [0.0, 0.0, 0.0], tau=tau)),
    ]
    ee = {"tip": ("arm", np.array([length, 0.0, 0.0]))}
    return KinematicTree(links, end_effectors=ee, name="pendulum")


def planar_2r_tree(l1=0.4, l2=0.3, m1=1.0, m2=1.0) -> KinematicTree:
    """Two revolute z-joints moving in the xy plane."""
    links = [
        Link("base", 0.0, np.zeros(3), None, None),
        Link("upper", m1, np.array([l1 / 2, 0.0, 0.0]), "base",
             _joint("q1", [0, 0, 1], [0.0, 0.0, 0.0])),
        Link("lower", m2, np.array([l2 / 2, 0.0, 0.0]), "upper",
             _joint("q2", [0, 0, 1], [l1, 0.0, 0.0])),
    ]
    ee = {"tip": ("lower", np.array([l2, 0.0, 0.0]))}
    return KinematicTree(links, end_effectors=ee, name="planar2r")


def random_chain_tree(rng, n_joints=4, tau_scale=80.0) -> KinematicTree:
    """Random serial chain with mixed axes; used for randomized gradient scenes."""
    links = [Link("base", 2.0 + rng.uniform(0.0, 2.0), rng.normal(size=3) * 0.02, None, None)]
    axes = [np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0])]
    parent = "base"
    for i in range(n_joints):
        name = f"link{i}"
        axis = axes[int(rng.integers(0, 3))]
        origin = rng.uniform(-0.15, 0.15, size=3) + np.array([0.0, 0.0, -0.12])
        mass = rng.uniform(0.4, 2.0)
        tau = tau_scale * rng.uniform(0.5, 1.5)
        links.append(
            Link(name, mass, rng.uniform(-0.05, 0.05, size=3),
                 parent, _joint(f"j{i}", axis, origin, tau=tau))
        )
        parent = name
    return KinematicTree(links, name="chain")


def ground_contacts(points, mu=0.8, link=None) -> ContactSet:
    return ContactSet([
        Contact(point=np.asarray(p, dtype=float), normal=np.array([0.0, 0.0, 1.0]),
                mu=mu, link=link, name=f"c{i}")
        for i, p in enumerate(points)
    ])


def arm_brace_scene(tau=5.0, arm_mass=0.3, q_arm=None):
    """Heavy base on three supports plus a redundant 8R arm pressed on a ledge.

    The bent elbow gives the arm swivel-like self-motions that stay in the
    task null space while changing the contact Jacobian, so the arm's torque
    limits bind under load and the stability boundary moves with posture
    (s_q > 0 scenes); with tau -> inf the same scene is friction constrained.
    """
    import numpy as np
    from comstab.kinematics import forward_kinematics

    links = [Link("base", 8.0, np.array([-0.22, 0.0, 0.0]), None, None)]
    axes = [(0, 1, 0), (1, 0, 0), (0, 0, 1), (0, 1, 0), (1, 0, 0), (0, 0, 1), (0, 1, 0), (1, 0, 0)]
    parent = "base"
    for i, ax in enumerate(axes):
        origin = [0.1, 0.0, 0.1] if i == 0 else [0.11, 0.0, -0.02]
        # Distal joints are weaker, as electric wrists are weaker than shoulders;
        # deep-chain binding is what makes posture motion move the boundary.
        links.append(Link(f"arm{i}", arm_mass, np.array([0.055, 0.0, 0.0]), parent,
                          _joint(f"a{i}", ax, origin, lo=-2.6, hi=2.6, tau=tau * (1.0 - 0.09 * i))))
        parent = f"arm{i}"
    ee = {"tip": (parent, np.array([0.11, 0.0, 0.0]))}
    tree = KinematicTree(links, end_effectors=ee, name="armbrace")

    q = np.zeros(tree.n_q)
    q[:3] = [0.0, 0.0, 0.4]
    if q_arm is None:
        q_arm = [0.35, 0.15, 0.3, -0.8, 0.25, -0.3, 0.45, 0.1]
    q[6:] = q_arm

    fd = forward_kinematics(tree, q)
    tip = tree.end_effector_point(fd, "tip")
    contacts = ContactSet([
        Contact(point=np.array([-0.25, 0.15, 0.0]), normal=np.array([0, 0, 1.0]),
                mu=0.8, link="base", name="s0"),
        Contact(point=np.array([-0.25, -0.15, 0.0]), normal=np.array([0, 0, 1.0]),
                mu=0.8, link="base", name="s1"),
        Contact(point=np.array([-0.45, 0.0, 0.0]), normal=np.array([0, 0, 1.0]),
                mu=0.8, link="base", name="s2"),
        Contact(point=tip, normal=np.array([0, 0, 1.0]), mu=0.6, link=parent, name="tip"),
    ])
    return tree, q, contacts


def stance_nullspace(tree, q, contacts, include_com_xy=True, damping=1e-8):
    """Null-space projector of the high-priority rows: contact holds + CoM xy."""
    import numpy as np
    from comstab.kinematics import (
        com_and_jacobian,
        forward_kinematics,
        nullspace_projector,
        point_jacobian,
    )

    fd = forward_kinematics(tree, q)
    rows = []
    for c in contacts.active_contacts():
        if c.link is None:
            continue
        rows.append(point_jacobian(tree, fd, tree.index[c.link], np.asarray(c.point, dtype=float)))
    if include_com_xy:
        _, j_com = com_and_jacobian(tree, q, fd=fd)
        rows.append(j_com[:2])
    if not rows:
        return np.eye(tree.n_q)
    return nullspace_projector(np.vstack(rows), damping)
