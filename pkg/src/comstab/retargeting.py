"""Shared-control retargeting: grow the stability region instead of caging the CoM.

Pre-contact, the commanded bracing-hand position slides along the candidate
surface following the region-area gradient of a preview region. Post-contact,
the low-priority posture setpoints (bracing-hand orientation, chest, pelvis,
CoM height) follow the null-space-projected margin gradient. A three-mode
state machine (nominal / optimize / freeze) keyed on the postural sensitivity
s_q decides which behavior runs; freeze exists to stop chattering near the
s_q = 0 boundary.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .kinematics import so3_exp, so3_log

S_Q_ZERO = 1e-12


class Mode(enum.Enum):
    NOMINAL = "nominal"
    OPTIMIZE = "optimize"
    FREEZE = "freeze"


@dataclass(frozen=True)
class RetargetConfig:
    k_c: float = 0.4  # contact gain: m/s of setpoint motion per m^2/m of area gradient
    k_q: float = 1.5  # posture gain on the projected margin gradient
    m_min: float = 0.04  # hard CoM margin tolerance (m)
    m_plus: float = 0.15  # full-control margin (m)
    s_q_plus: float = 0.01  # sensitivity threshold for posture optimization
    t_dot_nominal: float = 0.02  # reset-to-nominal rate (task units / s)
    max_contact_adjust: float = 0.15  # accumulated hand-adjustment radius (m)
    max_orientation_dev: float = 0.3  # per orientation task (rad)
    max_com_z_dev: float = 0.1  # CoM-height task (m)
    preview_distance: float = 1.0  # candidate-surface band for previews (m)
    surface_snap_distance: float = 0.02  # project hand onto surface when this close (m)
    use_m_plus: bool = True  # the m > m+ escape is optional in the mode rule
    max_setpoint_speed: float = 0.05  # cap on commanded setpoint motion (units/s)

    def __post_init__(self):
        if min(self.k_c, self.k_q, self.t_dot_nominal) <= 0.0:
            raise ValueError("retargeting gains must be positive")
        if not self.m_min < self.m_plus:
            raise ValueError("m_min must be below m_plus")


@dataclass(frozen=True)
class PostureTask:
    """One retargetable low-priority setpoint with its nominal reference."""

    name: str
    kind: str  # "orientation" (3x3 rotation) or "scalar"
    value: object
    nominal: object

    def deviation(self) -> float:
        if self.kind == "orientation":
            return float(np.linalg.norm(so3_log(self.value @ self.nominal.T)))
        return abs(float(self.value) - float(self.nominal))

    def error_to_nominal(self) -> np.ndarray:
        if self.kind == "orientation":
            return so3_log(self.nominal @ self.value.T)
        return np.array([float(self.nominal) - float(self.value)])


def select_mode(s_q: float, margin: float, config: RetargetConfig,
                previous: Optional[Mode] = None) -> Mode:
    """Mode rule: nominal when posture cannot help (or margin is ample),
    optimize above the sensitivity threshold, freeze in between."""
    if s_q <= S_Q_ZERO or (config.use_m_plus and margin > config.m_plus):
        return Mode.NOMINAL
    if s_q > config.s_q_plus:
        return Mode.OPTIMIZE
    return Mode.FREEZE


def retarget_contact(
    adjustment: np.ndarray,
    surface_normal: np.ndarray,
    area_grad: np.ndarray,
    config: RetargetConfig,
    dt: float,
) -> np.ndarray:
    """Integrate the in-plane area-gradient step into the accumulated hand
    adjustment, clamped to the maximum radius with direction preserved."""
    n = np.asarray(surface_normal, dtype=float)
    step = config.k_c * (area_grad - n * (n @ area_grad))
    speed = float(np.linalg.norm(step))
    if speed > config.max_setpoint_speed:
        step *= config.max_setpoint_speed / speed
    new = adjustment + step * dt
    norm = float(np.linalg.norm(new))
    if norm > config.max_contact_adjust:
        new *= config.max_contact_adjust / norm
    return new


def _max_deviation(task: PostureTask, config: RetargetConfig) -> float:
    return config.max_orientation_dev if task.kind == "orientation" else config.max_com_z_dev


def _apply_rate(task: PostureTask, rate: np.ndarray, dt: float) -> PostureTask:
    if task.kind == "orientation":
        return replace(task, value=so3_exp(rate * dt) @ task.value)
    return replace(task, value=float(task.value) + float(rate[0]) * dt)


def retarget_posture(
    mode: Mode,
    task: PostureTask,
    task_rate: np.ndarray,  # J_i @ (N_h grad m), task-space velocity direction
    config: RetargetConfig,
    dt: float,
) -> PostureTask:
    """Advance one posture setpoint per the mode rule.

    Nominal: return toward the nominal reference at the fixed reset rate.
    Optimize: follow k_q * J_i N_h grad m with speed and deviation clamps.
    Freeze: hold.
    """
    if mode is Mode.FREEZE:
        return task
    if mode is Mode.NOMINAL:
        err = task.error_to_nominal()
        dist = float(np.linalg.norm(err))
        if dist <= config.t_dot_nominal * dt:
            return replace(task, value=task.nominal)  # stop exactly at nominal
        return _apply_rate(task, config.t_dot_nominal * err / dist, dt)

    rate = config.k_q * np.asarray(task_rate, dtype=float)
    speed = float(np.linalg.norm(rate))
    if speed > config.max_setpoint_speed:
        rate *= config.max_setpoint_speed / speed
    moved = _apply_rate(task, rate, dt)
    limit = _max_deviation(task, config)
    if moved.deviation() > limit:
        return task  # deviation clamp: refuse steps past the budget
    return moved


@dataclass
class RetargetState:
    """Mutable per-session retargeting state."""

    mode: Mode = Mode.NOMINAL
    contact_adjustment: np.ndarray = field(default_factory=lambda: np.zeros(3))
    posture_tasks: dict[str, PostureTask] = field(default_factory=dict)
    preview_active: bool = False

    def reset_contact(self) -> None:
        self.contact_adjustment = np.zeros(3)
