"""Robot model files: a YAML key-value tree of links, joints and end effectors.

Schema:

    name: biped22
    links:
      - name: pelvis            # exactly one link without a parent = root
        mass: 8.0
        com: [0.0, 0.0, 0.05]
      - name: l_thigh
        parent: pelvis
        mass: 3.0
        com: [0.0, 0.0, -0.2]
        joint:
          name: l_hip_pitch
          axis: [0, 1, 0]
          origin: [0.0, 0.1, -0.05]
          rpy: [0, 0, 0]          # optional
          limits: [-2.0, 2.0]
          torque: [-150, 150]
    end_effectors:
      - {name: l_foot_c0, link: l_foot, point: [0.09, 0.05, -0.07]}

Validation failures raise ModelError with the offending line number.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .kinematics import Joint, KinematicTree, Link

_LINE_KEY = "__line__"


class ModelError(ValueError):
    def __init__(self, path: str, line: int | None, message: str):
        self.path = path
        self.line = line
        where = f"{path}:{line}" if line is not None else path
        super().__init__(f"{where}: {message}")


class _LineLoader(yaml.SafeLoader):
    pass


def _mapping_with_line(loader, node, deep=False):
    mapping = yaml.SafeLoader.construct_mapping(loader, node, deep=deep)
    mapping[_LINE_KEY] = node.start_mark.line + 1
    return mapping


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _mapping_with_line)


def load_tagged_yaml(path: str | Path) -> Any:
    with open(path, "r") as f:
        return yaml.load(f, Loader=_LineLoader)


def _need(d: dict, key: str, path: str, what: str):
    if key not in d:
        raise ModelError(path, d.get(_LINE_KEY), f"{what} is missing required field {key!r}")
    return d[key]


def _vec3(value, path: str, line: int | None, what: str) -> np.ndarray:
    try:
        v = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ModelError(path, line, f"{what} must be a list of 3 numbers") from None
    if v.shape != (3,):
        raise ModelError(path, line, f"{what} must have exactly 3 entries")
    return v


def _pair(value, path: str, line: int | None, what: str) -> tuple[float, float]:
    try:
        lo, hi = float(value[0]), float(value[1])
    except (TypeError, ValueError, IndexError):
        raise ModelError(path, line, f"{what} must be a [lo, hi] pair") from None
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ModelError(path, line, f"{what} must be finite")
    if lo >= hi:
        raise ModelError(path, line, f"{what} must satisfy lo < hi")
    return lo, hi


def _parse_joint(d: dict, path: str) -> Joint:
    line = d.get(_LINE_KEY)
    name = _need(d, "name", path, "joint")
    axis = _vec3(_need(d, "axis", path, f"joint {name!r}"), path, line, "joint axis")
    norm = np.linalg.norm(axis)
    if norm < 1e-9:
        raise ModelError(path, line, f"joint {name!r} axis must be nonzero")
    axis = axis / norm
    origin = _vec3(_need(d, "origin", path, f"joint {name!r}"), path, line, "joint origin")
    rpy = _vec3(d.get("rpy", [0.0, 0.0, 0.0]), path, line, "joint rpy")
    lo, hi = _pair(_need(d, "limits", path, f"joint {name!r}"), path, line, "joint limits")
    tau_lo, tau_hi = _pair(_need(d, "torque", path, f"joint {name!r}"), path, line, "joint torque limits")
    return Joint(name=name, axis=axis, origin_pos=origin, origin_rpy=rpy,
                 lo=lo, hi=hi, tau_lo=tau_lo, tau_hi=tau_hi)


def parse_model(doc: Any, path: str = "<model>") -> KinematicTree:
    if not isinstance(doc, dict):
        raise ModelError(path, None, "model file must be a mapping")
    name = doc.get("name", "")
    raw_links = doc.get("links")
    if not isinstance(raw_links, list) or not raw_links:
        raise ModelError(path, doc.get(_LINE_KEY), "model needs a non-empty 'links' list")

    links: list[Link] = []
    for d in raw_links:
        if not isinstance(d, dict):
            raise ModelError(path, doc.get(_LINE_KEY), "each link must be a mapping")
        line = d.get(_LINE_KEY)
        lname = _need(d, "name", path, "link")
        mass = float(_need(d, "mass", path, f"link {lname!r}"))
        if mass < 0.0:
            raise ModelError(path, line, f"link {lname!r} mass must be nonnegative")
        com = _vec3(_need(d, "com", path, f"link {lname!r}"), path, line, "link com")
        parent = d.get("parent")
        joint = None
        if parent is not None:
            if "joint" not in d:
                raise ModelError(path, line, f"link {lname!r} has a parent but no joint")
            if not isinstance(d["joint"], dict):
                raise ModelError(path, line, f"link {lname!r} joint must be a mapping")
            joint = _parse_joint(d["joint"], path)
        elif "joint" in d:
            raise ModelError(path, line, f"root link {lname!r} must not carry a joint")
        links.append(Link(name=lname, mass=mass, com=com, parent=parent, joint=joint))

    end_effectors = {}
    for d in doc.get("end_effectors", []) or []:
        line = d.get(_LINE_KEY) if isinstance(d, dict) else None
        ename = _need(d, "name", path, "end effector")
        link = _need(d, "link", path, f"end effector {ename!r}")
        point = _vec3(_need(d, "point", path, f"end effector {ename!r}"), path, line, "end effector point")
        end_effectors[ename] = (link, point)

    try:
        return KinematicTree(links, end_effectors=end_effectors, name=name)
    except ValueError as exc:
        raise ModelError(path, doc.get(_LINE_KEY), str(exc)) from exc


def load_model(path: str | Path) -> KinematicTree:
    try:
        doc = load_tagged_yaml(path)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ModelError(str(path), mark.line + 1 if mark else None, f"invalid YAML: {exc}") from exc
    return parse_model(doc, path=str(path))
