"""Wire protocol and shared session state.

Frames are a 4-byte big-endian length followed by a UTF-8 JSON body with
canonical (sorted) field order. Server and clients evolve SessionState with
the same pure reducer, so replicas that apply the same server-ordered op
stream are bit-identical; `state_digest` certifies that.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
from dataclasses import dataclass, replace
from typing import Any, NamedTuple, Optional, Union

from .dataset import ColumnDescriptor, ColumnKind, DimensionMapping, FilterState
from .viewmath import (
    CubeFace,
    IDENTITY_SCALED,
    Pose,
    Quat,
    ScaledTransform,
    SnapshotPoint,
    Vec3,
    AnchorPoint,
    AnchorSet,
    face_from_name,
    is_unit,
)

log = logging.getLogger(__name__)

PROTOCOL_VERSION = "DATACUBE/1"
MAX_FRAME_BYTES = 16 * 1024 * 1024
SERVER_SENDER = "server"

ROLE_PARTICIPANT = "participant"
ROLE_OBSERVER = "observer"
ROLES = frozenset({ROLE_PARTICIPANT, ROLE_OBSERVER})

VIZ_SCATTER = "scatter"
VIZ_BARCHART = "barchart"
VIZ_MODES = frozenset({VIZ_SCATTER, VIZ_BARCHART})

KIND_CUBE = "cube"
KIND_WALL = "wall"
KIND_SNAPSHOT = "snapshot"
OBJECT_KINDS = frozenset({KIND_CUBE, KIND_WALL, KIND_SNAPSHOT})

CUBE_ID = "cube"
WALL_ID = "wall"

# Message kinds (closed set).
JOIN_REQUEST = "join_request"
WELCOME = "welcome"
ANCHOR_UPLOAD = "anchor_upload"
ANCHOR_INFO = "anchor_info"
SUBMIT_OP = "submit_op"
UPDATE = "update"
FULL_STATE = "full_state"
HEARTBEAT = "heartbeat"
LEAVE = "leave"
ERROR = "error"
KINDS = frozenset(
    {JOIN_REQUEST, WELCOME, ANCHOR_UPLOAD, ANCHOR_INFO, SUBMIT_OP, UPDATE, FULL_STATE,
     HEARTBEAT, LEAVE, ERROR}
)

# Error codes carried by ERROR envelopes.
ERR_VERSION_MISMATCH = "version_mismatch"
ERR_SESSION_FULL = "session_full"
ERR_ANCHOR_ALREADY_SET = "anchor_already_set"
ERR_NOT_JOINED = "not_joined"
ERR_OBSERVER_WRITE_DENIED = "observer_write_denied"
ERR_SCHEMA_VIOLATION = "schema_violation"


class ProtocolError(Exception):
    pass


class FrameTooLarge(ProtocolError):
    pass


class MalformedFrame(ProtocolError):
    pass


class UnknownKind(ProtocolError):
    pass


class SchemaViolation(ProtocolError):
    pass


class SequenceGap(ProtocolError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"expected seq {expected}, got {got}")
        self.expected = expected
        self.got = got


# ---------------------------------------------------------------------------
# Message payloads


class JoinRequest(NamedTuple):
    role: str
    version: str


class Welcome(NamedTuple):
    client_id: str
    session_id: str
    version: str
    anchor_needed: bool


class AnchorPayload(NamedTuple):
    anchor: AnchorSet


class SubmitOpPayload(NamedTuple):
    op: "Op"
    op_id: int


class UpdatePayload(NamedTuple):
    op: "Op"
    origin: str
    op_id: int


class FullStatePayload(NamedTuple):
    state: "SessionState"


class ErrorPayload(NamedTuple):
    code: str
    detail: str


@dataclass(frozen=True)
class Envelope:
    kind: str
    sender: str
    payload: Any = None
    seq: Optional[int] = None


# ---------------------------------------------------------------------------
# Operations


@dataclass(frozen=True)
class SetTransform:
    object_id: str
    transform: ScaledTransform


@dataclass(frozen=True)
class SetMapping:
    mapping: DimensionMapping


@dataclass(frozen=True)
class SetFilter:
    filter: FilterState


@dataclass(frozen=True)
class SetVizMode:
    mode: str


@dataclass(frozen=True)
class SelectRow:
    row: Optional[int]


@dataclass(frozen=True)
class WatchlistAdd:
    individual_id: str


@dataclass(frozen=True)
class WatchlistRemove:
    individual_id: str


@dataclass(frozen=True)
class CreateSnapshot:
    points: tuple[SnapshotPoint, ...]
    face: CubeFace


@dataclass(frozen=True)
class DeleteSnapshot:
    snapshot_id: str


@dataclass(frozen=True)
class SetUserPose:
    client_id: str
    pose: Optional[Pose]  # None removes the entry


class DatasetRef(NamedTuple):
    content_hash: str
    columns: tuple[ColumnDescriptor, ...]


@dataclass(frozen=True)
class LoadDataset:
    ref: DatasetRef


Op = Union[
    SetTransform, SetMapping, SetFilter, SetVizMode, SelectRow, WatchlistAdd,
    WatchlistRemove, CreateSnapshot, DeleteSnapshot, SetUserPose, LoadDataset,
]


# ---------------------------------------------------------------------------
# Shared objects and session state


class SharedWatchlistEntry(NamedTuple):
    individual_id: str
    added_seq: int  # server seq of the op that added it


@dataclass(frozen=True)
class CubeState:
    mapping: Optional[DimensionMapping] = None
    filter: FilterState = FilterState()
    viz_mode: str = VIZ_SCATTER
    selected_row: Optional[int] = None
    watchlist: tuple[SharedWatchlistEntry, ...] = ()


@dataclass(frozen=True)
class WallState:
    slots: tuple[Optional[str], ...] = ()


@dataclass(frozen=True)
class SnapshotState:
    points: tuple[SnapshotPoint, ...]
    face: CubeFace
    created_by: str


@dataclass(frozen=True)
class SharedObject:
    object_id: str
    kind: str
    transform: ScaledTransform
    state: Union[CubeState, WallState, SnapshotState]


@dataclass(frozen=True)
class SessionState:
    objects: dict[str, SharedObject]
    server_seq: int = 0
    dataset_ref: Optional[DatasetRef] = None
    snapshots: tuple[str, ...] = ()
    user_poses: dict[str, Pose] = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.user_poses is None:
            object.__setattr__(self, "user_poses", {})


# Default placement: cube on a virtual table, wall behind it.
DEFAULT_CUBE_TRANSFORM = ScaledTransform(Quat(1.0, 0.0, 0.0, 0.0), Vec3(0.0, 1.0, 0.0), 0.6)
DEFAULT_WALL_TRANSFORM = ScaledTransform(Quat(1.0, 0.0, 0.0, 0.0), Vec3(0.0, 1.5, -2.5), 2.0)


def initial_session_state() -> SessionState:
    return SessionState(
        objects={
            CUBE_ID: SharedObject(CUBE_ID, KIND_CUBE, DEFAULT_CUBE_TRANSFORM, CubeState()),
            WALL_ID: SharedObject(WALL_ID, KIND_WALL, DEFAULT_WALL_TRANSFORM, WallState()),
        },
        server_seq=0,
    )


# ---------------------------------------------------------------------------
# Reducer


def snapshot_object_id(seq: int) -> str:
    return f"snapshot-{seq}"


def _replace_cube(state: SessionState, seq: int, **changes) -> SessionState:
    cube = state.objects.get(CUBE_ID)
    if cube is None or cube.kind != KIND_CUBE:
        log.info("op targets missing cube object; applied as no-op at seq %d", seq)
        return replace(state, server_seq=seq)
    objects = dict(state.objects)
    objects[CUBE_ID] = replace(cube, state=replace(cube.state, **changes))
    return replace(state, objects=objects, server_seq=seq)


def apply_op(state: SessionState, seq: int, op: Op, origin: str = SERVER_SENDER) -> SessionState:
    """Pure, deterministic state transition; last writer wins per field.

    Ops referencing objects that no longer exist are tolerated as no-ops (a
    delete racing a move must not wedge replicas); server_seq always advances.
    `origin` attributes CreateSnapshot provenance and is otherwise unused.
    """
    if seq != state.server_seq + 1:
        raise SequenceGap(state.server_seq + 1, seq)

    if isinstance(op, SetTransform):
        obj = state.objects.get(op.object_id)
        if obj is None:
            log.info("set_transform on missing object %r; no-op at seq %d", op.object_id, seq)
            return replace(state, server_seq=seq)
        objects = dict(state.objects)
        objects[op.object_id] = replace(obj, transform=op.transform)
        return replace(state, objects=objects, server_seq=seq)

    if isinstance(op, SetMapping):
        return _replace_cube(state, seq, mapping=op.mapping)

    if isinstance(op, SetFilter):
        return _replace_cube(state, seq, filter=op.filter)

    if isinstance(op, SetVizMode):
        return _replace_cube(state, seq, viz_mode=op.mode)

    if isinstance(op, SelectRow):
        return _replace_cube(state, seq, selected_row=op.row)

    if isinstance(op, WatchlistAdd):
        cube = state.objects.get(CUBE_ID)
        if cube is None:
            log.info("watchlist_add without cube; no-op at seq %d", seq)
            return replace(state, server_seq=seq)
        if any(e.individual_id == op.individual_id for e in cube.state.watchlist):
            return replace(state, server_seq=seq)
        entry = SharedWatchlistEntry(op.individual_id, seq)
        return _replace_cube(state, seq, watchlist=cube.state.watchlist + (entry,))

    if isinstance(op, WatchlistRemove):
        cube = state.objects.get(CUBE_ID)
        if cube is None:
            log.info("watchlist_remove without cube; no-op at seq %d", seq)
            return replace(state, server_seq=seq)
        kept = tuple(e for e in cube.state.watchlist if e.individual_id != op.individual_id)
        return _replace_cube(state, seq, watchlist=kept)

    if isinstance(op, CreateSnapshot):
        snap_id = snapshot_object_id(seq)
        objects = dict(state.objects)
        objects[snap_id] = SharedObject(
            snap_id, KIND_SNAPSHOT, IDENTITY_SCALED, SnapshotState(op.points, op.face, origin)
        )
        wall = objects.get(WALL_ID)
        if wall is not None and wall.kind == KIND_WALL:
            slots = list(wall.state.slots)
            for i, slot in enumerate(slots):
                if slot is None:
                    slots[i] = snap_id
                    break
            else:
                slots.append(snap_id)
            objects[WALL_ID] = replace(wall, state=WallState(tuple(slots)))
        return replace(
            state, objects=objects, snapshots=state.snapshots + (snap_id,), server_seq=seq
        )

    if isinstance(op, DeleteSnapshot):
        if op.snapshot_id not in state.objects:
            log.info("delete of missing snapshot %r; no-op at seq %d", op.snapshot_id, seq)
            return replace(state, server_seq=seq)
        objects = dict(state.objects)
        del objects[op.snapshot_id]
        wall = objects.get(WALL_ID)
        if wall is not None and wall.kind == KIND_WALL:
            slots = tuple(None if s == op.snapshot_id else s for s in wall.state.slots)
            objects[WALL_ID] = replace(wall, state=WallState(slots))
        snapshots = tuple(s for s in state.snapshots if s != op.snapshot_id)
        return replace(state, objects=objects, snapshots=snapshots, server_seq=seq)

    if isinstance(op, SetUserPose):
        poses = dict(state.user_poses)
        if op.pose is None:
            poses.pop(op.client_id, None)
        else:
            poses[op.client_id] = op.pose
        return replace(state, user_poses=poses, server_seq=seq)

    if isinstance(op, LoadDataset):
        # A new dataset invalidates column names and individual ids, so the
        # cube's analysis state resets; snapshots are frozen points and stay.
        state = _replace_cube(
            state, seq, mapping=None, filter=FilterState(), selected_row=None, watchlist=()
        )
        return replace(state, dataset_ref=op.ref)

    raise SchemaViolation(f"unknown op type {type(op).__name__}")


# ---------------------------------------------------------------------------
# Wire serialization


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False,
                      allow_nan=False)


def _vec3_wire(v: Vec3) -> list[float]:
    return [v.x, v.y, v.z]


def _quat_wire(q: Quat) -> list[float]:
    return [q.w, q.x, q.y, q.z]


def _floats(x: Any, n: int, what: str) -> list[float]:
    if not isinstance(x, list) or len(x) != n:
        raise SchemaViolation(f"{what}: expected list of {n} numbers")
    out = []
    for item in x:
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise SchemaViolation(f"{what}: non-numeric component {item!r}")
        f = float(item)
        if not math.isfinite(f):
            raise SchemaViolation(f"{what}: non-finite component")
        out.append(f)
    return out


def _vec3_from(x: Any, what: str) -> Vec3:
    return Vec3(*_floats(x, 3, what))


def _quat_from(x: Any, what: str) -> Quat:
    q = Quat(*_floats(x, 4, what))
    if not is_unit(q):
        raise SchemaViolation(f"{what}: quaternion is not unit length")
    return q


def _str_field(d: dict, key: str, what: str, allow_empty: bool = False) -> str:
    v = d.get(key)
    if not isinstance(v, str) or (not allow_empty and v == ""):
        raise SchemaViolation(f"{what}: missing or invalid {key!r}")
    return v


def _int_field(d: dict, key: str, what: str) -> int:
    v = d.get(key)
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaViolation(f"{what}: missing or invalid {key!r}")
    return v


def _dict_field(d: dict, key: str, what: str) -> dict:
    v = d.get(key)
    if not isinstance(v, dict):
        raise SchemaViolation(f"{what}: missing or invalid {key!r}")
    return v


def _scaled_wire(t: ScaledTransform) -> dict:
    return {"rotation": _quat_wire(t.rotation), "translation": _vec3_wire(t.translation),
            "scale": t.scale}


def _scaled_from(x: Any, what: str) -> ScaledTransform:
    if not isinstance(x, dict):
        raise SchemaViolation(f"{what}: expected transform object")
    s = x.get("scale")
    if isinstance(s, bool) or not isinstance(s, (int, float)) or not math.isfinite(float(s)) \
            or float(s) <= 0.0:
        raise SchemaViolation(f"{what}: scale must be a positive finite number")
    return ScaledTransform(
        _quat_from(x.get("rotation"), f"{what}.rotation"),
        _vec3_from(x.get("translation"), f"{what}.translation"),
        float(s),
    )


def _pose_wire(p: Pose) -> dict:
    return {"position": _vec3_wire(p.position), "orientation": _quat_wire(p.orientation)}


def _pose_from(x: Any, what: str) -> Pose:
    if not isinstance(x, dict):
        raise SchemaViolation(f"{what}: expected pose object")
    return Pose(
        _vec3_from(x.get("position"), f"{what}.position"),
        _quat_from(x.get("orientation"), f"{what}.orientation"),
    )


def _anchor_wire(a: AnchorSet) -> list[dict]:
    return [{"label": p.label, "position": _vec3_wire(p.position)} for p in a.points]


def _anchor_from(x: Any, what: str) -> AnchorSet:
    if not isinstance(x, list) or len(x) < 3:
        raise SchemaViolation(f"{what}: expected a list of at least 3 anchor points")
    points = []
    for i, item in enumerate(x):
        if not isinstance(item, dict):
            raise SchemaViolation(f"{what}[{i}]: expected anchor point object")
        points.append(AnchorPoint(
            _str_field(item, "label", f"{what}[{i}]"),
            _vec3_from(item.get("position"), f"{what}[{i}].position"),
        ))
    return AnchorSet(tuple(points))


def _mapping_wire(m: DimensionMapping) -> dict:
    return {"x": m.x, "y": m.y, "z": m.z, "color": m.color, "size": m.size,
            "traces_enabled": m.traces_enabled}


def _mapping_from(x: Any, what: str) -> DimensionMapping:
    if not isinstance(x, dict):
        raise SchemaViolation(f"{what}: expected mapping object")
    traces = x.get("traces_enabled")
    if not isinstance(traces, bool):
        raise SchemaViolation(f"{what}: traces_enabled must be a boolean")
    return DimensionMapping(
        _str_field(x, "x", what), _str_field(x, "y", what), _str_field(x, "z", what),
        _str_field(x, "color", what), _str_field(x, "size", what), traces,
    )


def _filter_wire(f: FilterState) -> dict:
    return {
        "numeric_ranges": {col: [lo, hi] for col, (lo, hi) in sorted(f.numeric_ranges.items())},
        "year_range": list(f.year_range) if f.year_range is not None else None,
        "regions": sorted(f.regions) if f.regions is not None else None,
    }


def _filter_from(x: Any, what: str) -> FilterState:
    if not isinstance(x, dict):
        raise SchemaViolation(f"{what}: expected filter object")
    ranges_wire = x.get("numeric_ranges")
    if not isinstance(ranges_wire, dict):
        raise SchemaViolation(f"{what}: numeric_ranges must be an object")
    ranges = {}
    for col, pair in ranges_wire.items():
        lo, hi = _floats(pair, 2, f"{what}.numeric_ranges[{col}]")
        if lo > hi:
            raise SchemaViolation(f"{what}: empty range for {col}")
        ranges[col] = (lo, hi)
    year_wire = x.get("year_range")
    year_range = None
    if year_wire is not None:
        if (not isinstance(year_wire, list) or len(year_wire) != 2
                or any(isinstance(y, bool) or not isinstance(y, int) for y in year_wire)):
            raise SchemaViolation(f"{what}: year_range must be [lo, hi] integers")
        if year_wire[0] > year_wire[1]:
            raise SchemaViolation(f"{what}: empty year range")
        year_range = (year_wire[0], year_wire[1])
    regions_wire = x.get("regions")
    regions = None
    if regions_wire is not None:
        if not isinstance(regions_wire, list) or any(not isinstance(r, str) for r in regions_wire):
            raise SchemaViolation(f"{what}: regions must be a list of strings")
        regions = frozenset(regions_wire)
    return FilterState(ranges, year_range, regions)


def _snapshot_points_wire(points: tuple[SnapshotPoint, ...]) -> list[list[float]]:
    return [[p.u, p.v, p.color_t, p.size_t] for p in points]


def _snapshot_points_from(x: Any, what: str) -> tuple[SnapshotPoint, ...]:
    if not isinstance(x, list):
        raise SchemaViolation(f"{what}: expected a list of points")
    out = []
    for i, item in enumerate(x):
        comps = _floats(item, 4, f"{what}[{i}]")
        if any(c < 0.0 or c > 1.0 for c in comps):
            raise SchemaViolation(f"{what}[{i}]: components must lie in [0, 1]")
        out.append(SnapshotPoint(*comps))
    return tuple(out)


def _face_from(x: Any, what: str) -> CubeFace:
    if not isinstance(x, str):
        raise SchemaViolation(f"{what}: expected face name")
    try:
        return face_from_name(x)
    except ValueError as exc:
        raise SchemaViolation(f"{what}: {exc}") from None


def _columns_wire(columns: tuple[ColumnDescriptor, ...]) -> list[dict]:
    return [{"name": c.name, "kind": c.kind.value} for c in columns]


def _columns_from(x: Any, what: str) -> tuple[ColumnDescriptor, ...]:
    if not isinstance(x, list) or not x:
        raise SchemaViolation(f"{what}: expected a non-empty column list")
    cols = []
    kinds = {k.value: k for k in ColumnKind}
    for i, item in enumerate(x):
        if not isinstance(item, dict):
            raise SchemaViolation(f"{what}[{i}]: expected column object")
        name = _str_field(item, "name", f"{what}[{i}]")
        kind = item.get("kind")
        if kind not in kinds:
            raise SchemaViolation(f"{what}[{i}]: unknown column kind {kind!r}")
        cols.append(ColumnDescriptor(name, kinds[kind]))
    names = [c.name for c in cols]
    if len(set(names)) != len(names):
        raise SchemaViolation(f"{what}: duplicate column names")
    if sum(1 for c in cols if c.kind is ColumnKind.ID) != 1 \
            or sum(1 for c in cols if c.kind is ColumnKind.YEAR) != 1:
        raise SchemaViolation(f"{what}: need exactly one id and one year column")
    if sum(1 for c in cols if c.kind is ColumnKind.REGION) > 1:
        raise SchemaViolation(f"{what}: at most one region column")
    return tuple(cols)


def _ref_wire(ref: DatasetRef) -> dict:
    return {"content_hash": ref.content_hash, "columns": _columns_wire(ref.columns)}


def _ref_from(x: Any, what: str) -> DatasetRef:
    if not isinstance(x, dict):
        raise SchemaViolation(f"{what}: expected dataset ref object")
    return DatasetRef(
        _str_field(x, "content_hash", what), _columns_from(x.get("columns"), f"{what}.columns")
    )


def op_to_wire(op: Op) -> dict:
    if isinstance(op, SetTransform):
        return {"type": "set_transform", "object_id": op.object_id,
                "transform": _scaled_wire(op.transform)}
    if isinstance(op, SetMapping):
        return {"type": "set_mapping", "mapping": _mapping_wire(op.mapping)}
    if isinstance(op, SetFilter):
        return {"type": "set_filter", "filter": _filter_wire(op.filter)}
    if isinstance(op, SetVizMode):
        return {"type": "set_viz_mode", "mode": op.mode}
    if isinstance(op, SelectRow):
        return {"type": "select_row", "row": op.row}
    if isinstance(op, WatchlistAdd):
        return {"type": "watchlist_add", "individual_id": op.individual_id}
    if isinstance(op, WatchlistRemove):
        return {"type": "watchlist_remove", "individual_id": op.individual_id}
    if isinstance(op, CreateSnapshot):
        return {"type": "create_snapshot", "points": _snapshot_points_wire(op.points),
                "face": op.face.name}
    if isinstance(op, DeleteSnapshot):
        return {"type": "delete_snapshot", "snapshot_id": op.snapshot_id}
    if isinstance(op, SetUserPose):
        return {"type": "set_user_pose", "client_id": op.client_id,
                "pose": _pose_wire(op.pose) if op.pose is not None else None}
    if isinstance(op, LoadDataset):
        return {"type": "load_dataset", "ref": _ref_wire(op.ref)}
    raise SchemaViolation(f"unknown op type {type(op).__name__}")


def op_from_wire(x: Any, what: str = "op") -> Op:
    if not isinstance(x, dict):
        raise SchemaViolation(f"{what}: expected op object")
    t = x.get("type")
    if t == "set_transform":
        return SetTransform(_str_field(x, "object_id", what),
                            _scaled_from(x.get("transform"), f"{what}.transform"))
    if t == "set_mapping":
        return SetMapping(_mapping_from(x.get("mapping"), f"{what}.mapping"))
    if t == "set_filter":
        return SetFilter(_filter_from(x.get("filter"), f"{what}.filter"))
    if t == "set_viz_mode":
        mode = x.get("mode")
        if mode not in VIZ_MODES:
            raise SchemaViolation(f"{what}: unknown viz mode {mode!r}")
        return SetVizMode(mode)
    if t == "select_row":
        row = x.get("row")
        if row is not None and (isinstance(row, bool) or not isinstance(row, int) or row < 0):
            raise SchemaViolation(f"{what}: row must be null or a nonnegative integer")
        return SelectRow(row)
    if t == "watchlist_add":
        return WatchlistAdd(_str_field(x, "individual_id", what))
    if t == "watchlist_remove":
        return WatchlistRemove(_str_field(x, "individual_id", what))
    if t == "create_snapshot":
        return CreateSnapshot(_snapshot_points_from(x.get("points"), f"{what}.points"),
                              _face_from(x.get("face"), f"{what}.face"))
    if t == "delete_snapshot":
        return DeleteSnapshot(_str_field(x, "snapshot_id", what))
    if t == "set_user_pose":
        pose = x.get("pose")
        return SetUserPose(_str_field(x, "client_id", what),
                           _pose_from(pose, f"{what}.pose") if pose is not None else None)
    if t == "load_dataset":
        return LoadDataset(_ref_from(x.get("ref"), f"{what}.ref"))
    raise SchemaViolation(f"{what}: unknown op type {t!r}")


def _cube_state_wire(s: CubeState) -> dict:
    return {
        "mapping": _mapping_wire(s.mapping) if s.mapping is not None else None,
        "filter": _filter_wire(s.filter),
        "viz_mode": s.viz_mode,
        "selected_row": s.selected_row,
        "watchlist": [{"individual_id": e.individual_id, "added_seq": e.added_seq}
                      for e in s.watchlist],
    }


def _cube_state_from(x: dict, what: str) -> CubeState:
    mapping_wire = x.get("mapping")
    viz = x.get("viz_mode")
    if viz not in VIZ_MODES:
        raise SchemaViolation(f"{what}: unknown viz mode {viz!r}")
    row = x.get("selected_row")
    if row is not None and (isinstance(row, bool) or not isinstance(row, int)):
        raise SchemaViolation(f"{what}: invalid selected_row")
    wl_wire = x.get("watchlist")
    if not isinstance(wl_wire, list):
        raise SchemaViolation(f"{what}: watchlist must be a list")
    watchlist = tuple(
        SharedWatchlistEntry(_str_field(e, "individual_id", f"{what}.watchlist[{i}]"),
                             _int_field(e, "added_seq", f"{what}.watchlist[{i}]"))
        for i, e in enumerate(wl_wire)
    )
    return CubeState(
        _mapping_from(mapping_wire, f"{what}.mapping") if mapping_wire is not None else None,
        _filter_from(x.get("filter"), f"{what}.filter"),
        viz, row, watchlist,
    )


def _object_wire(o: SharedObject) -> dict:
    if o.kind == KIND_CUBE:
        state = _cube_state_wire(o.state)
    elif o.kind == KIND_WALL:
        state = {"slots": list(o.state.slots)}
    else:
        state = {"points": _snapshot_points_wire(o.state.points), "face": o.state.face.name,
                 "created_by": o.state.created_by}
    return {"object_id": o.object_id, "kind": o.kind,
            "transform": _scaled_wire(o.transform), "state": state}


def _object_from(x: Any, what: str) -> SharedObject:
    if not isinstance(x, dict):
        raise SchemaViolation(f"{what}: expected object")
    kind = x.get("kind")
    if kind not in OBJECT_KINDS:
        raise SchemaViolation(f"{what}: unknown object kind {kind!r}")
    state_wire = _dict_field(x, "state", what)
    if kind == KIND_CUBE:
        state = _cube_state_from(state_wire, f"{what}.state")
    elif kind == KIND_WALL:
        slots_wire = state_wire.get("slots")
        if not isinstance(slots_wire, list) or any(
                s is not None and not isinstance(s, str) for s in slots_wire):
            raise SchemaViolation(f"{what}: slots must be a list of ids or nulls")
        state = WallState(tuple(slots_wire))
    else:
        state = SnapshotState(
            _snapshot_points_from(state_wire.get("points"), f"{what}.state.points"),
            _face_from(state_wire.get("face"), f"{what}.state.face"),
            _str_field(state_wire, "created_by", f"{what}.state"),
        )
    return SharedObject(
        _str_field(x, "object_id", what), kind,
        _scaled_from(x.get("transform"), f"{what}.transform"), state,
    )


def state_to_wire(state: SessionState) -> dict:
    return {
        "objects": {oid: _object_wire(o) for oid, o in sorted(state.objects.items())},
        "server_seq": state.server_seq,
        "dataset_ref": _ref_wire(state.dataset_ref) if state.dataset_ref is not None else None,
        "snapshots": list(state.snapshots),
        "user_poses": {cid: _pose_wire(p) for cid, p in sorted(state.user_poses.items())},
    }


def state_from_wire(x: Any, what: str = "state") -> SessionState:
    if not isinstance(x, dict):
        raise SchemaViolation(f"{what}: expected state object")
    objects_wire = _dict_field(x, "objects", what)
    objects = {}
    for oid, ow in objects_wire.items():
        obj = _object_from(ow, f"{what}.objects[{oid}]")
        if obj.object_id != oid:
            raise SchemaViolation(f"{what}: object id mismatch for {oid!r}")
        objects[oid] = obj
    snapshots_wire = x.get("snapshots")
    if not isinstance(snapshots_wire, list) or any(not isinstance(s, str) for s in snapshots_wire):
        raise SchemaViolation(f"{what}: snapshots must be a list of ids")
    for sid in snapshots_wire:
        if sid not in objects:
            raise SchemaViolation(f"{what}: snapshot {sid!r} missing from objects")
    poses_wire = _dict_field(x, "user_poses", what)
    poses = {cid: _pose_from(pw, f"{what}.user_poses[{cid}]") for cid, pw in poses_wire.items()}
    ref_wire = x.get("dataset_ref")
    return SessionState(
        objects=objects,
        server_seq=_int_field(x, "server_seq", what),
        dataset_ref=_ref_from(ref_wire, f"{what}.dataset_ref") if ref_wire is not None else None,
        snapshots=tuple(snapshots_wire),
        user_poses=poses,
    )


def envelope_to_wire(env: Envelope) -> dict:
    if env.kind not in KINDS:
        raise UnknownKind(env.kind)
    p = env.payload
    if env.kind == JOIN_REQUEST:
        body = {"role": p.role, "version": p.version}
    elif env.kind == WELCOME:
        body = {"client_id": p.client_id, "session_id": p.session_id, "version": p.version,
                "anchor_needed": p.anchor_needed}
    elif env.kind in (ANCHOR_UPLOAD, ANCHOR_INFO):
        body = {"anchor": _anchor_wire(p.anchor)}
    elif env.kind == SUBMIT_OP:
        body = {"op": op_to_wire(p.op), "op_id": p.op_id}
    elif env.kind == UPDATE:
        body = {"op": op_to_wire(p.op), "origin": p.origin, "op_id": p.op_id}
    elif env.kind == FULL_STATE:
        body = {"state": state_to_wire(p.state)} if p is not None else None
    elif env.kind == ERROR:
        body = {"code": p.code, "detail": p.detail}
    else:  # heartbeat, leave
        body = None
    wire = {"kind": env.kind, "sender": env.sender, "payload": body}
    if env.seq is not None:
        wire["seq"] = env.seq
    return wire


def envelope_from_wire(x: Any) -> Envelope:
    if not isinstance(x, dict):
        raise MalformedFrame("frame body is not an object")
    kind = x.get("kind")
    if not isinstance(kind, str):
        raise MalformedFrame("missing message kind")
    if kind not in KINDS:
        raise UnknownKind(kind)
    sender = _str_field(x, "sender", kind)
    seq = x.get("seq")
    if seq is not None and (isinstance(seq, bool) or not isinstance(seq, int) or seq < 0):
        raise SchemaViolation(f"{kind}: invalid seq")
    body = x.get("payload")

    def _body() -> dict:
        if not isinstance(body, dict):
            raise SchemaViolation(f"{kind}: missing payload")
        return body

    if kind == JOIN_REQUEST:
        b = _body()
        role = _str_field(b, "role", kind)
        if role not in ROLES:
            raise SchemaViolation(f"{kind}: unknown role {role!r}")
        payload = JoinRequest(role, _str_field(b, "version", kind))
    elif kind == WELCOME:
        b = _body()
        anchor_needed = b.get("anchor_needed")
        if not isinstance(anchor_needed, bool):
            raise SchemaViolation(f"{kind}: anchor_needed must be boolean")
        payload = Welcome(_str_field(b, "client_id", kind), _str_field(b, "session_id", kind),
                          _str_field(b, "version", kind), anchor_needed)
    elif kind in (ANCHOR_UPLOAD, ANCHOR_INFO):
        payload = AnchorPayload(_anchor_from(_body().get("anchor"), f"{kind}.anchor"))
    elif kind == SUBMIT_OP:
        b = _body()
        payload = SubmitOpPayload(op_from_wire(b.get("op"), f"{kind}.op"),
                                  _int_field(b, "op_id", kind))
    elif kind == UPDATE:
        b = _body()
        if seq is None:
            raise SchemaViolation(f"{kind}: updates must carry a seq")
        payload = UpdatePayload(op_from_wire(b.get("op"), f"{kind}.op"),
                                _str_field(b, "origin", kind), _int_field(b, "op_id", kind))
    elif kind == FULL_STATE:
        payload = None if body is None else FullStatePayload(
            state_from_wire(_body().get("state"), f"{kind}.state"))
    elif kind == ERROR:
        b = _body()
        payload = ErrorPayload(_str_field(b, "code", kind),
                               _str_field(b, "detail", kind, allow_empty=True))
    else:  # heartbeat, leave
        payload = None
    return Envelope(kind=kind, sender=sender, payload=payload, seq=seq)


def encode_body(env: Envelope) -> bytes:
    return canonical_json(envelope_to_wire(env)).encode("utf-8")


def decode_body(data: bytes | str) -> Envelope:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedFrame(f"body is not UTF-8: {exc}") from exc
    try:
        wire = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedFrame(f"body is not valid JSON: {exc}") from exc
    return envelope_from_wire(wire)


def encode(env: Envelope) -> bytes:
    """Envelope -> length-prefixed frame."""
    body = encode_body(env)
    if len(body) > MAX_FRAME_BYTES:
        raise FrameTooLarge(f"frame body of {len(body)} bytes exceeds {MAX_FRAME_BYTES}")
    return struct.pack("!I", len(body)) + body


def decode(data: bytes) -> Envelope:
    """One complete frame -> Envelope; trailing bytes are an error."""
    if len(data) < 4:
        raise MalformedFrame("frame shorter than the length prefix")
    (n,) = struct.unpack("!I", data[:4])
    if n > MAX_FRAME_BYTES:
        raise FrameTooLarge(f"declared frame length {n} exceeds {MAX_FRAME_BYTES}")
    if len(data) - 4 != n:
        raise MalformedFrame(f"declared length {n}, got {len(data) - 4} body bytes")
    return decode_body(data[4:])


class FrameDecoder:
    """Incremental frame reassembly for a byte stream."""

    def __init__(self):
        self._buf = bytearray()

    @property
    def pending_bytes(self) -> int:
        return len(self._buf)

    def feed_bodies(self, data: bytes) -> list[bytes]:
        """Reassemble complete frame bodies without decoding them."""
        self._buf.extend(data)
        out = []
        while True:
            if len(self._buf) < 4:
                break
            (n,) = struct.unpack("!I", bytes(self._buf[:4]))
            if n > MAX_FRAME_BYTES:
                raise FrameTooLarge(f"declared frame length {n} exceeds {MAX_FRAME_BYTES}")
            if len(self._buf) < 4 + n:
                break
            out.append(bytes(self._buf[4:4 + n]))
            del self._buf[:4 + n]
        return out

    def feed(self, data: bytes) -> list[Envelope]:
        return [decode_body(body) for body in self.feed_bodies(data)]

    def close(self) -> None:
        """Signal end of stream; leftover bytes mean a truncated frame."""
        if self._buf:
            raise MalformedFrame(f"stream ended mid-frame with {len(self._buf)} buffered bytes")


# ---------------------------------------------------------------------------
# Digest


def state_digest(state: SessionState) -> str:
    """64-bit hash (hex) over the canonical serialization of the state."""
    payload = canonical_json(state_to_wire(state)).encode("utf-8")
    return hashlib.blake2b(payload, digest_size=8).hexdigest()
