"""Authoritative session host.

SessionCore is a pure state machine: hosts (the deterministic simulator or
the asyncio runtime) feed it connection events, bytes, and time, and carry
out the Send/Close actions it returns. All sequencing decisions live here,
so both hosts behave identically on the wire.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

from . import dataset as ds
from .protocol import (
    ANCHOR_INFO,
    ANCHOR_UPLOAD,
    CUBE_ID,
    ERR_ANCHOR_ALREADY_SET,
    ERR_NOT_JOINED,
    ERR_OBSERVER_WRITE_DENIED,
    ERR_SCHEMA_VIOLATION,
    ERR_SESSION_FULL,
    ERR_VERSION_MISMATCH,
    ERROR,
    FULL_STATE,
    HEARTBEAT,
    JOIN_REQUEST,
    KIND_CUBE,
    KIND_SNAPSHOT,
    LEAVE,
    PROTOCOL_VERSION,
    ROLE_PARTICIPANT,
    SERVER_SENDER,
    SUBMIT_OP,
    UPDATE,
    WELCOME,
    AnchorPayload,
    Envelope,
    ErrorPayload,
    FrameDecoder,
    FullStatePayload,
    Op,
    ProtocolError,
    SetUserPose,
    SubmitOpPayload,
    UpdatePayload,
    Welcome,
    apply_op,
    canonical_json,
    decode_body,
    encode,
    initial_session_state,
    state_digest,
)
from .viewmath import AnchorSet, DegenerateAnchors, validate_anchor_set

log = logging.getLogger(__name__)

DEFAULT_CAPACITY = 6
HEARTBEAT_TIMEOUT = 10.0
POSE_MIN_INTERVAL = 0.05  # 20 pose updates per second per client
OP_LOG_SIZE = 4096

DISCOVERY_PROBE = b"DATACUBE_DISCOVERY_V1?"
DISCOVERY_PREFIX = b"DATACUBE_DISCOVERY_V1!"


class Send(NamedTuple):
    conn_id: str
    env: Envelope
    frame: bytes


class Close(NamedTuple):
    conn_id: str


Action = Send | Close


class StorageUnavailable(OSError):
    pass


@dataclass
class _Conn:
    conn_id: str
    client_id: Optional[str] = None
    role: str = ROLE_PARTICIPANT
    last_seen: float = 0.0
    join_order: int = 0
    ready: bool = False  # has been sent FullState; receives broadcasts
    pose_last_sent: float = -math.inf
    pose_pending: Optional[SetUserPose] = None
    decoder: FrameDecoder = field(default_factory=FrameDecoder)


class SessionCore:
    def __init__(
        self,
        session_id: str,
        *,
        capacity: int = DEFAULT_CAPACITY,
        heartbeat_timeout: float = HEARTBEAT_TIMEOUT,
        pose_interval: float = POSE_MIN_INTERVAL,
        op_observer=None,
    ):
        self.session_id = session_id
        self.capacity = capacity
        self.heartbeat_timeout = heartbeat_timeout
        self.pose_interval = pose_interval
        self.op_observer = op_observer  # callable(seq, state), diagnostics only
        self.state = initial_session_state()
        self.op_log: deque[tuple[int, bytes]] = deque(maxlen=OP_LOG_SIZE)
        self.anchor: Optional[AnchorSet] = None
        self._anchor_frame: Optional[bytes] = None  # byte-identical for every joiner
        self.anchor_definer: Optional[str] = None  # client id expected to upload
        self._conns: dict[str, _Conn] = {}
        self._next_client = 1

    # -- introspection ------------------------------------------------------

    @property
    def participant_count(self) -> int:
        return sum(
            1 for c in self._conns.values()
            if c.client_id is not None and c.role == ROLE_PARTICIPANT
        )

    def client_ids(self) -> list[str]:
        return [c.client_id for c in self._conns.values() if c.client_id is not None]

    def digest(self) -> str:
        return state_digest(self.state)

    # -- connection lifecycle ----------------------------------------------

    def on_connect(self, conn_id: str, now: float) -> list[Action]:
        self._conns[conn_id] = _Conn(conn_id, last_seen=now)
        return []

    def on_disconnect(self, conn_id: str, now: float) -> list[Action]:
        conn = self._conns.pop(conn_id, None)
        if conn is None:
            return []
        return self._client_departed(conn, now)

    def on_bytes(self, conn_id: str, data: bytes, now: float) -> list[Action]:
        conn = self._conns.get(conn_id)
        if conn is None:
            return []
        try:
            bodies = conn.decoder.feed_bodies(data)
        except ProtocolError as exc:
            # Framing is broken; the stream cannot be trusted past this point.
            actions = [self._error(conn_id, ERR_SCHEMA_VIOLATION, str(exc)), Close(conn_id)]
            actions.extend(self.on_disconnect(conn_id, now))
            return actions
        actions: list[Action] = []
        for body in bodies:
            try:
                env = decode_body(body)
            except ProtocolError as exc:
                # One bad message; the frame boundary is intact, so answer the
                # sender and keep the connection.
                actions.append(self._error(conn_id, ERR_SCHEMA_VIOLATION, str(exc)))
                continue
            actions.extend(self.on_message(conn_id, env, now))
            if conn_id not in self._conns:
                break
        return actions

    def on_message(self, conn_id: str, env: Envelope, now: float) -> list[Action]:
        conn = self._conns.get(conn_id)
        if conn is None:
            return []
        conn.last_seen = now
        if env.kind == JOIN_REQUEST:
            return self._handle_join(conn, env, now)
        if env.kind == ANCHOR_UPLOAD:
            return self._handle_anchor_upload(conn, env)
        if env.kind == SUBMIT_OP:
            return self._handle_submit(conn, env.payload, now)
        if env.kind == FULL_STATE and env.payload is None:
            if conn.client_id is None:
                return [self._error(conn_id, ERR_NOT_JOINED, "join before requesting state")]
            return [self._full_state(conn_id)]
        if env.kind == HEARTBEAT:
            return []
        if env.kind == LEAVE:
            actions: list[Action] = [Close(conn_id)]
            del self._conns[conn_id]
            actions.extend(self._client_departed(conn, now))
            return actions
        if env.kind == ERROR:
            log.warning("client %s reported error: %s", conn.client_id, env.payload)
            return []
        return [self._error(conn_id, ERR_SCHEMA_VIOLATION, f"unexpected {env.kind} from client")]

    # -- timers --------------------------------------------------------------

    def sweep(self, now: float) -> tuple[list[Action], list[str]]:
        """Expire silent clients and flush coalesced pose updates."""
        actions: list[Action] = []
        expired: list[str] = []
        for conn in list(self._conns.values()):
            if now - conn.last_seen > self.heartbeat_timeout:
                if conn.client_id is not None:
                    expired.append(conn.client_id)
                actions.append(Close(conn.conn_id))
                del self._conns[conn.conn_id]
                actions.extend(self._client_departed(conn, now))
        for conn in self._conns.values():
            if conn.pose_pending is not None and now - conn.pose_last_sent >= self.pose_interval:
                op = conn.pose_pending
                conn.pose_pending = None
                conn.pose_last_sent = now
                actions.extend(self._order_and_broadcast(op, conn.client_id, 0))
        return actions, expired

    def next_deadline(self) -> Optional[float]:
        deadlines = [c.last_seen + self.heartbeat_timeout for c in self._conns.values()]
        deadlines.extend(
            c.pose_last_sent + self.pose_interval
            for c in self._conns.values() if c.pose_pending is not None
        )
        return min(deadlines) if deadlines else None

    # -- handlers ------------------------------------------------------------

    def _handle_join(self, conn: _Conn, env: Envelope, now: float) -> list[Action]:
        req = env.payload
        if conn.client_id is not None:
            return [self._error(conn.conn_id, ERR_SCHEMA_VIOLATION, "already joined")]
        if req.version != PROTOCOL_VERSION:
            return [
                self._error(conn.conn_id, ERR_VERSION_MISMATCH,
                            f"server speaks {PROTOCOL_VERSION}, client sent {req.version}"),
                Close(conn.conn_id),
            ] + self.on_disconnect(conn.conn_id, now)
        if req.role == ROLE_PARTICIPANT and self.participant_count >= self.capacity:
            return [
                self._error(conn.conn_id, ERR_SESSION_FULL,
                            f"session holds {self.capacity} participants"),
                Close(conn.conn_id),
            ] + self.on_disconnect(conn.conn_id, now)
        conn.client_id = f"c{self._next_client}"
        self._next_client += 1
        conn.role = req.role
        conn.join_order = self._next_client
        defines_anchor = (
            self.anchor is None
            and self.anchor_definer is None
            and req.role == ROLE_PARTICIPANT
        )
        if defines_anchor:
            self.anchor_definer = conn.client_id
        welcome = Envelope(WELCOME, SERVER_SENDER, Welcome(
            conn.client_id, self.session_id, PROTOCOL_VERSION, defines_anchor))
        actions: list[Action] = [self._send(conn.conn_id, welcome)]
        if self.anchor is not None:
            actions.append(Send(conn.conn_id, self._anchor_env(), self._anchor_frame))
            actions.append(self._full_state(conn.conn_id))
            conn.ready = True
        # Otherwise the client waits: the definer for its own upload, everyone
        # else for the resulting anchor_info + full_state broadcast.
        return actions

    def _handle_anchor_upload(self, conn: _Conn, env: Envelope) -> list[Action]:
        if conn.client_id is None:
            return [self._error(conn.conn_id, ERR_NOT_JOINED, "join before uploading an anchor")]
        if self.anchor is not None:
            return [self._error(conn.conn_id, ERR_ANCHOR_ALREADY_SET,
                                "the session frame is already defined")]
        if conn.client_id != self.anchor_definer:
            return [self._error(conn.conn_id, ERR_ANCHOR_ALREADY_SET,
                                "another client is defining the session frame")]
        payload: AnchorPayload = env.payload
        try:
            validate_anchor_set(payload.anchor)
        except DegenerateAnchors as exc:
            return [self._error(conn.conn_id, ERR_SCHEMA_VIOLATION, str(exc))]
        self.anchor = payload.anchor
        self.anchor_definer = None
        self._anchor_frame = encode(self._anchor_env())
        actions: list[Action] = []
        for c in self._conns.values():
            if c.client_id is None or c.ready:
                continue
            actions.append(Send(c.conn_id, self._anchor_env(), self._anchor_frame))
            actions.append(self._full_state(c.conn_id))
            c.ready = True
        return actions

    def _handle_submit(self, conn: _Conn, payload: SubmitOpPayload, now: float) -> list[Action]:
        if conn.client_id is None or not conn.ready:
            return [self._error(conn.conn_id, ERR_NOT_JOINED, "join is not complete")]
        op = payload.op
        if isinstance(op, SetUserPose):
            if op.client_id != conn.client_id:
                return [self._error(conn.conn_id, ERR_SCHEMA_VIOLATION,
                                    "pose updates may only target the sender")]
            if now - conn.pose_last_sent >= self.pose_interval:
                conn.pose_last_sent = now
                conn.pose_pending = None
                return self._order_and_broadcast(op, conn.client_id, payload.op_id)
            conn.pose_pending = op  # latest wins within the rate window
            return []
        if conn.role != ROLE_PARTICIPANT:
            return [self._error(conn.conn_id, ERR_OBSERVER_WRITE_DENIED,
                                "observers may only publish their pose")]
        return self._order_and_broadcast(op, conn.client_id, payload.op_id)

    def _client_departed(self, conn: _Conn, now: float) -> list[Action]:
        if conn.client_id is None:
            return []
        actions: list[Action] = []
        if conn.client_id in self.state.user_poses:
            actions.extend(
                self._order_and_broadcast(SetUserPose(conn.client_id, None), SERVER_SENDER, 0))
        if self.anchor is None and conn.client_id == self.anchor_definer:
            self.anchor_definer = None
            actions.extend(self._promote_definer())
        return actions

    def _promote_definer(self) -> list[Action]:
        waiting = [
            c for c in self._conns.values()
            if c.client_id is not None and c.role == ROLE_PARTICIPANT and not c.ready
        ]
        if not waiting:
            return []  # next participant to join becomes the definer
        oldest = min(waiting, key=lambda c: c.join_order)
        self.anchor_definer = oldest.client_id
        welcome = Envelope(WELCOME, SERVER_SENDER, Welcome(
            oldest.client_id, self.session_id, PROTOCOL_VERSION, True))
        return [self._send(oldest.conn_id, welcome)]

    def order_and_broadcast(self, op: Op, origin: str, op_id: int = 0) -> list[Action]:
        """Order a server-originated op (e.g. loading a dataset at startup)."""
        return self._order_and_broadcast(op, origin, op_id)

    def _order_and_broadcast(self, op: Op, origin: str, op_id: int) -> list[Action]:
        seq = self.state.server_seq + 1
        self.state = apply_op(self.state, seq, op, origin=origin)
        if self.op_observer is not None:
            self.op_observer(seq, self.state)
        env = Envelope(UPDATE, SERVER_SENDER, UpdatePayload(op, origin, op_id), seq)
        frame = encode(env)  # encoded once, shared across the fan-out
        self.op_log.append((seq, frame))
        return [
            Send(c.conn_id, env, frame)
            for c in self._conns.values() if c.client_id is not None
        ]

    # -- envelope helpers ----------------------------------------------------

    def _anchor_env(self) -> Envelope:
        return Envelope(ANCHOR_INFO, SERVER_SENDER, AnchorPayload(self.anchor))

    def _full_state(self, conn_id: str) -> Send:
        env = Envelope(FULL_STATE, SERVER_SENDER, FullStatePayload(self.state))
        return self._send(conn_id, env)

    def _error(self, conn_id: str, code: str, detail: str) -> Send:
        return self._send(conn_id, Envelope(ERROR, SERVER_SENDER, ErrorPayload(code, detail)))

    def _send(self, conn_id: str, env: Envelope) -> Send:
        return Send(conn_id, env, encode(env))


# ---------------------------------------------------------------------------
# Discovery


def handle_discovery(datagram: bytes, tcp_port: int, session_id: str) -> Optional[bytes]:
    """Respond to a LAN discovery probe; anything else is silence."""
    if datagram != DISCOVERY_PROBE:
        return None
    return DISCOVERY_PREFIX + f"{tcp_port};{session_id}".encode("utf-8")


def parse_discovery_response(datagram: bytes) -> tuple[int, str]:
    if not datagram.startswith(DISCOVERY_PREFIX):
        raise ValueError("not a discovery response")
    rest = datagram[len(DISCOVERY_PREFIX):].decode("utf-8")
    port_text, _, session_id = rest.partition(";")
    if not port_text.isdigit() or not session_id:
        raise ValueError("malformed discovery response")
    return int(port_text), session_id


# ---------------------------------------------------------------------------
# Artifact persistence


def persist_artifacts(
    state,
    session_id: str,
    base_dir: Path | str,
    *,
    clock=None,
    dataset: Optional[ds.Dataset] = None,
) -> list[Path]:
    """Write snapshot files and the watchlist export under <base>/<session-id>.

    Serialization is deterministic: re-exporting an unchanged session with the
    same clock yields byte-identical files.
    """
    now = clock() if clock is not None else 0.0
    base = Path(base_dir) / session_id
    written: list[Path] = []
    try:
        snap_dir = base / "snapshots"
        snap_dir.mkdir(parents=True, exist_ok=True)
        for snap_id in state.snapshots:
            obj = state.objects.get(snap_id)
            if obj is None or obj.kind != KIND_SNAPSHOT:
                continue
            doc = {
                "snapshot_id": snap_id,
                "face": obj.state.face.name,
                "creator": obj.state.created_by,
                "timestamp": now,
                "points": [[p.u, p.v, p.color_t, p.size_t] for p in obj.state.points],
            }
            path = snap_dir / f"{snap_id}.snap"
            path.write_text(canonical_json(doc) + "\n", encoding="utf-8")
            written.append(path)

        cube = state.objects.get(CUBE_ID)
        entries = cube.state.watchlist if cube is not None and cube.kind == KIND_CUBE else ()
        if dataset is not None:
            wl = ds.Watchlist(tuple(
                ds.WatchlistEntry(e.individual_id, float(e.added_seq)) for e in entries))
            text = ds.watchlist_export(wl, dataset)
        else:
            # No dataset loaded: nothing to resolve, emit the minimal header.
            text = f"{ds.ID_COLUMN},{ds.YEAR_COLUMN}\n"
        wl_path = base / "watchlist.csv"
        wl_path.write_text(text, encoding="utf-8")
        written.append(wl_path)
    except OSError as exc:
        raise StorageUnavailable(f"cannot write artifacts under {base}: {exc}") from exc
    return written
