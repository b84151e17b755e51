"""Rigid-body poses as position + unit quaternion.

Conventions used everywhere in this package:
  * quaternions are (w, x, y, z), Hamilton product, active rotation
  * compose(parent, child) expresses the child in the parent frame
    (rotate child position by parent orientation, then translate)
  * lengths in meters, angles in radians
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class InvalidPoseError(ValueError):
    """Raised when a pose is built from non-finite components."""


def _check_finite(values, what):
    for v in values:
        if not math.isfinite(v):
            raise InvalidPoseError(f"non-finite {what}: {values!r}")


def quat_normalize(q):
    w, x, y, z = q
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if n == 0.0 or not math.isfinite(n):
        raise InvalidPoseError(f"degenerate quaternion {q!r}")
    return (w / n, x / n, y / n, z / n)


def quat_multiply(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def quat_conjugate(q):
    w, x, y, z = q
    return (w, -x, -y, -z)


def quat_rotate(q, v):
    """Rotate 3-vector v by unit quaternion q."""
    w, x, y, z = q
    vx, vy, vz = v
    # q * (0, v) * q^-1 expanded
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    return (
        vx + w * tx + (y * tz - z * ty),
        vy + w * ty + (z * tx - x * tz),
        vz + w * tz + (x * ty - y * tx),
    )


def quat_from_axis_angle(axis, angle):
    ax, ay, az = axis
    n = math.sqrt(ax * ax + ay * ay + az * az)
    if n == 0.0:
        raise InvalidPoseError("zero rotation axis")
    half = angle / 2.0
    s = math.sin(half) / n
    return (math.cos(half), ax * s, ay * s, az * s)


def quat_from_matrix(m):
    """Unit quaternion from a 3x3 rotation matrix (row-major nested lists)."""
    tr = m[0][0] + m[1][1] + m[2][2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = (0.25 * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s)
    elif m[0][0] > m[1][1] and m[0][0] > m[2][2]:
        s = math.sqrt(1.0 + m[0][0] - m[1][1] - m[2][2]) * 2.0
        q = ((m[2][1] - m[1][2]) / s, 0.25 * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s)
    elif m[1][1] > m[2][2]:
        s = math.sqrt(1.0 + m[1][1] - m[0][0] - m[2][2]) * 2.0
        q = ((m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, 0.25 * s, (m[1][2] + m[2][1]) / s)
    else:
        s = math.sqrt(1.0 + m[2][2] - m[0][0] - m[1][1]) * 2.0
        q = ((m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, 0.25 * s)
    return quat_normalize(q)


@dataclass(frozen=True)
class Pose:
    position: tuple = (0.0, 0.0, 0.0)
    orientation: tuple = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        pos = tuple(float(v) for v in self.position)
        ori = tuple(float(v) for v in self.orientation)
        if len(pos) != 3 or len(ori) != 4:
            raise InvalidPoseError("pose needs 3 position and 4 orientation components")
        _check_finite(pos, "position")
        _check_finite(ori, "orientation")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", quat_normalize(ori))

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def from_translation(x, y, z) -> "Pose":
        return Pose(position=(x, y, z))

    @staticmethod
    def from_axis_angle(axis, angle, position=(0.0, 0.0, 0.0)) -> "Pose":
        return Pose(position=position, orientation=quat_from_axis_angle(axis, angle))

    def to_json(self):
        return {"position": list(self.position), "orientation": list(self.orientation)}

    @staticmethod
    def from_json(doc) -> "Pose":
        return Pose(position=tuple(doc["position"]), orientation=tuple(doc["orientation"]))

    def rotation_matrix(self):
        w, x, y, z = self.orientation
        return [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]


def compose(parent: Pose, child: Pose) -> Pose:
    """parent ∘ child: the child's pose expressed in the parent's parent frame."""
    pos = quat_rotate(parent.orientation, child.position)
    return Pose(
        position=(
            parent.position[0] + pos[0],
            parent.position[1] + pos[1],
            parent.position[2] + pos[2],
        ),
        orientation=quat_multiply(parent.orientation, child.orientation),
    )


def inverse(p: Pose) -> Pose:
    qi = quat_conjugate(p.orientation)
    pi = quat_rotate(qi, p.position)
    return Pose(position=(-pi[0], -pi[1], -pi[2]), orientation=qi)


def distance(a: Pose, b: Pose) -> float:
    dx = a.position[0] - b.position[0]
    dy = a.position[1] - b.position[1]
    dz = a.position[2] - b.position[2]
    return math.sqrt(dx * dx + dy * dy + dz * dz)
