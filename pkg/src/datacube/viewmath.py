"""Spatial math for the shared session frame.

Rigid transforms and quaternions, anchor-based frame alignment, menu
billboarding, cube-face selection, snapshot projection, ray picking, bar
aggregation, and subset statistics. Everything here is a pure function over
immutable values.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .dataset import Dataset, FilterState, NormalizedPoint, apply_filters, colormap

UNIT_NORM_TOL = 1e-9
COLLINEAR_TOL = 1e-9


class DegenerateAnchors(ValueError):
    pass


class LabelMismatch(ValueError):
    pass


class DegenerateDirection(ValueError):
    pass


class NoRegionColumn(ValueError):
    pass


class Vec3(NamedTuple):
    x: float
    y: float
    z: float


class Quat(NamedTuple):
    """Unit quaternion, scalar-first (w, x, y, z)."""

    w: float
    x: float
    y: float
    z: float


ZERO = Vec3(0.0, 0.0, 0.0)
IDENTITY_QUAT = Quat(1.0, 0.0, 0.0, 0.0)


def add(a: Vec3, b: Vec3) -> Vec3:
    return Vec3(a.x + b.x, a.y + b.y, a.z + b.z)


def sub(a: Vec3, b: Vec3) -> Vec3:
    return Vec3(a.x - b.x, a.y - b.y, a.z - b.z)


def scale(v: Vec3, s: float) -> Vec3:
    return Vec3(v.x * s, v.y * s, v.z * s)


def dot(a: Vec3, b: Vec3) -> float:
    return a.x * b.x + a.y * b.y + a.z * b.z


def cross(a: Vec3, b: Vec3) -> Vec3:
    return Vec3(a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x)


def norm(v: Vec3) -> float:
    return math.sqrt(dot(v, v))


def normalized(v: Vec3) -> Vec3:
    n = norm(v)
    if n == 0.0:
        raise DegenerateDirection("cannot normalize the zero vector")
    return scale(v, 1.0 / n)


def distance(a: Vec3, b: Vec3) -> float:
    return norm(sub(a, b))


def quat_norm(q: Quat) -> float:
    return math.sqrt(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z)


def quat_normalize(q: Quat) -> Quat:
    n = quat_norm(q)
    return Quat(q.w / n, q.x / n, q.y / n, q.z / n)


def is_unit(q: Quat, tol: float = UNIT_NORM_TOL) -> bool:
    return abs(quat_norm(q) - 1.0) <= tol


def quat_mul(a: Quat, b: Quat) -> Quat:
    return Quat(
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    )


def quat_conjugate(q: Quat) -> Quat:
    return Quat(q.w, -q.x, -q.y, -q.z)


def rotate(q: Quat, v: Vec3) -> Vec3:
    # v' = v + 2 q.w (u x v) + 2 u x (u x v), u = quaternion vector part
    u = Vec3(q.x, q.y, q.z)
    t = scale(cross(u, v), 2.0)
    return add(add(v, scale(t, q.w)), cross(u, t))


def axis_angle(axis: Vec3, angle: float) -> Quat:
    a = normalized(axis)
    h = angle * 0.5
    s = math.sin(h)
    return Quat(math.cos(h), a.x * s, a.y * s, a.z * s)


def quat_angle(a: Quat, b: Quat) -> float:
    """Geodesic rotation distance in radians (q and -q are the same rotation)."""
    d = abs(a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z)
    return 2.0 * math.acos(min(1.0, d))


def quat_to_matrix(q: Quat) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_matrix(m: np.ndarray) -> Quat:
    """Quaternion of a proper rotation matrix (Shepperd's method)."""
    t = m[0, 0] + m[1, 1] + m[2, 2]
    if t > 0:
        s = math.sqrt(t + 1.0) * 2.0
        q = Quat(0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = Quat((m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s)
    elif m[1, 1] >= m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = Quat((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s)
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = Quat((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s)
    q = quat_normalize(Quat(float(q.w), float(q.x), float(q.y), float(q.z)))
    # canonical sign: w >= 0
    if q.w < 0:
        q = Quat(-q.w, -q.x, -q.y, -q.z)
    return q


class RigidTransform(NamedTuple):
    rotation: Quat
    translation: Vec3


IDENTITY_TRANSFORM = RigidTransform(IDENTITY_QUAT, ZERO)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """a after b: apply(compose(a, b), p) == apply(a, apply(b, p))."""
    return RigidTransform(
        quat_mul(a.rotation, b.rotation), add(rotate(a.rotation, b.translation), a.translation)
    )


def invert(t: RigidTransform) -> RigidTransform:
    r = quat_conjugate(t.rotation)
    return RigidTransform(r, scale(rotate(r, t.translation), -1.0))


def apply(t: RigidTransform, p: Vec3) -> Vec3:
    return add(rotate(t.rotation, p), t.translation)


class ScaledTransform(NamedTuple):
    """Rigid transform plus a uniform scale (applied before rotation)."""

    rotation: Quat
    translation: Vec3
    scale: float


IDENTITY_SCALED = ScaledTransform(IDENTITY_QUAT, ZERO, 1.0)


def apply_scaled(t: ScaledTransform, p: Vec3) -> Vec3:
    return add(rotate(t.rotation, scale(p, t.scale)), t.translation)


FORWARD = Vec3(0.0, 0.0, -1.0)


class Pose(NamedTuple):
    position: Vec3
    orientation: Quat


def pose_forward(pose: Pose) -> Vec3:
    return rotate(pose.orientation, FORWARD)


class AnchorPoint(NamedTuple):
    label: str
    position: Vec3


class AnchorSet(NamedTuple):
    points: tuple[AnchorPoint, ...]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(p.label for p in self.points)


def validate_anchor_set(anchors: AnchorSet) -> None:
    """Anchors must span at least a plane, or the rotation is ambiguous."""
    if len(anchors.points) < 3:
        raise DegenerateAnchors(f"need at least 3 anchor points, got {len(anchors.points)}")
    pts = np.array([p.position for p in anchors.points], dtype=float)
    centered = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[1] <= COLLINEAR_TOL:
        raise DegenerateAnchors("anchor points are collinear")


def transform_anchors(t: RigidTransform, anchors: AnchorSet) -> AnchorSet:
    return AnchorSet(tuple(AnchorPoint(p.label, apply(t, p.position)) for p in anchors.points))


def solve_alignment(session_points: AnchorSet, local_points: AnchorSet) -> RigidTransform:
    """Least-squares rigid transform mapping local anchor points onto the
    session frame (Kabsch, no scaling, reflection guarded to det = +1).

    Points are matched by label; order within each set does not matter.
    """
    validate_anchor_set(session_points)
    validate_anchor_set(local_points)
    if len(session_points.points) != len(local_points.points):
        raise LabelMismatch(
            f"point count differs: {len(session_points.points)} vs {len(local_points.points)}"
        )
    local_by_label = {p.label: p.position for p in local_points.points}
    if len(local_by_label) != len(local_points.points):
        raise LabelMismatch("duplicate labels in local anchor set")
    if set(session_points.labels) != set(local_by_label):
        raise LabelMismatch("anchor labels differ between session and local sets")

    s = np.array([p.position for p in session_points.points], dtype=float)
    l = np.array([local_by_label[p.label] for p in session_points.points], dtype=float)
    s_c = s.mean(axis=0)
    l_c = l.mean(axis=0)
    h = (l - l_c).T @ (s - s_c)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, float(d)]) @ u.T
    t = s_c - r @ l_c
    return RigidTransform(quat_from_matrix(r), Vec3(float(t[0]), float(t[1]), float(t[2])))


def alignment_residual(
    t: RigidTransform, session_points: AnchorSet, local_points: AnchorSet
) -> float:
    """RMS distance between transformed local points and session points."""
    local_by_label = {p.label: p.position for p in local_points.points}
    sq = 0.0
    for p in session_points.points:
        sq += distance(apply(t, local_by_label[p.label]), p.position) ** 2
    return math.sqrt(sq / len(session_points.points))


def billboard_yaw(object_pos: Vec3, user_pos: Vec3) -> Quat:
    """Yaw-only rotation turning an object's forward (-Z) toward the user.

    Pitch and roll stay zero so menus remain upright.
    """
    dx = user_pos.x - object_pos.x
    dz = user_pos.z - object_pos.z
    if math.hypot(dx, dz) <= 1e-6:
        raise DegenerateDirection("user is directly above or below the object")
    yaw = math.atan2(-dx, -dz)
    return axis_angle(Vec3(0.0, 1.0, 0.0), yaw)


AXIS_X, AXIS_Y, AXIS_Z = 0, 1, 2
_AXIS_NAMES = "xyz"


class CubeFace(NamedTuple):
    axis: int  # 0=X, 1=Y, 2=Z
    sign: int  # +1 or -1

    @property
    def retained_axes(self) -> tuple[int, int]:
        return tuple(a for a in (AXIS_X, AXIS_Y, AXIS_Z) if a != self.axis)

    @property
    def name(self) -> str:
        return ("+" if self.sign > 0 else "-") + _AXIS_NAMES[self.axis]


# Tie-break order: +X, -X, +Y, -Y, +Z, -Z.
FACES = (
    CubeFace(AXIS_X, 1),
    CubeFace(AXIS_X, -1),
    CubeFace(AXIS_Y, 1),
    CubeFace(AXIS_Y, -1),
    CubeFace(AXIS_Z, 1),
    CubeFace(AXIS_Z, -1),
)


def face_from_name(name: str) -> CubeFace:
    if len(name) == 2 and name[0] in "+-" and name[1] in _AXIS_NAMES:
        return CubeFace(_AXIS_NAMES.index(name[1]), 1 if name[0] == "+" else -1)
    raise ValueError(f"not a cube face name: {name!r}")


def face_normal(face: CubeFace, cube_rotation: Quat) -> Vec3:
    n = [0.0, 0.0, 0.0]
    n[face.axis] = float(face.sign)
    return rotate(cube_rotation, Vec3(*n))


def select_face(view_dir: Vec3, cube_rotation: Quat) -> CubeFace:
    """The face most directly facing a viewer looking along view_dir.

    Minimizes dot(view_dir, outward normal); ties resolve in FACES order.
    """
    local = rotate(quat_conjugate(cube_rotation), view_dir)
    best = None
    best_dot = math.inf
    for face in FACES:
        d = face.sign * local[face.axis]
        if d < best_dot:
            best_dot = d
            best = face
    return best


class SnapshotPoint(NamedTuple):
    u: float
    v: float
    color_t: float
    size_t: float


def project_snapshot(points: Sequence[NormalizedPoint], face: CubeFace) -> list[SnapshotPoint]:
    """Flatten unit-cube points onto a face: drop the face axis, keep the two
    retained axes as (u, v). Positive faces mirror u so the 2D picture matches
    what a viewer of that face sees; negative faces keep raw components.
    """
    ua, va = face.retained_axes
    mirror = face.sign > 0
    out = []
    for p in points:
        u = p.position[ua]
        if mirror:
            u = 1.0 - u
        out.append(SnapshotPoint(u, p.position[va], p.color_t, p.size_t))
    return out


def pick_point(
    ray_origin: Vec3,
    ray_dir: Vec3,
    spheres: Sequence[tuple[Vec3, float, int]],
) -> Optional[int]:
    """Row index of the first sphere hit along the ray, or None.

    Each sphere is (center, radius, row_index); the hit with the smallest
    nonnegative ray parameter wins.
    """
    best_t = math.inf
    best_row = None
    for center, radius, row in spheres:
        oc = sub(ray_origin, center)
        b = dot(ray_dir, oc)
        c = dot(oc, oc) - radius * radius
        disc = b * b - c
        if disc < 0.0:
            continue
        sq = math.sqrt(disc)
        t = -b - sq
        if t < 0.0:
            t = -b + sq
        if 0.0 <= t < best_t:
            best_t = t
            best_row = row
    return best_row


class Bar(NamedTuple):
    region: str
    year: int
    value: float  # group mean of the value column
    height: float  # normalized over the grid
    color: tuple[int, int, int]


class BarGrid(NamedTuple):
    value_column: str
    bars: tuple[Bar, ...]  # sorted by (region, year)


def aggregate_bars(dataset: Dataset, value_column: str, filt: FilterState) -> BarGrid:
    """Group visible rows by (region, year); bar value is the group mean.

    Heights are min-max normalized over the grid (constant grid -> all 0.5)
    and colored through the shared colormap.
    """
    if not dataset.has_region:
        raise NoRegionColumn("dataset has no region column")
    vi = dataset.numeric_index(value_column)
    visible = apply_filters(dataset, filt)
    groups: dict[tuple[str, int], list[float]] = {}
    for i in visible:
        r = dataset.rows[i]
        if r.region is None:
            continue
        groups.setdefault((r.region, r.year), []).append(r.values[vi])
    means = {key: sum(vals) / len(vals) for key, vals in groups.items()}
    bars = []
    if means:
        lo, hi = min(means.values()), max(means.values())
        span = hi - lo
        for (region, year) in sorted(means):
            value = means[(region, year)]
            height = 0.5 if span == 0.0 else (value - lo) / span
            bars.append(Bar(region, year, value, height, colormap(height)))
    return BarGrid(value_column, tuple(bars))


class ColumnStats(NamedTuple):
    count: int
    mean: Optional[float]
    std: Optional[float]  # population standard deviation
    min: Optional[float]
    max: Optional[float]


def subset_statistics(
    dataset: Dataset, filt: FilterState, columns: Sequence[str]
) -> dict[str, ColumnStats]:
    """Count/mean/std/min/max per column over the filtered subset."""
    visible = apply_filters(dataset, filt)
    out: dict[str, ColumnStats] = {}
    for col in columns:
        vi = dataset.numeric_index(col)
        vals = [dataset.rows[i].values[vi] for i in visible]
        n = len(vals)
        if n == 0:
            out[col] = ColumnStats(0, None, None, None, None)
            continue
        mean = sum(vals) / n
        var = sum((v - mean) ** 2 for v in vals) / n
        out[col] = ColumnStats(n, mean, math.sqrt(var), min(vals), max(vals))
    return out
