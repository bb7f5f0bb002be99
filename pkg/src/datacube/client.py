"""Client replica state machine.

ClientCore is transport-agnostic: hosts deliver bytes or decoded envelopes
plus the current time, and send whatever frames come back. The replica is
only ever advanced by server-ordered updates (no optimistic application),
so convergence is a consequence of ordering, not of reconciliation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .protocol import (
    ANCHOR_INFO,
    ANCHOR_UPLOAD,
    ERR_SESSION_FULL,
    ERR_VERSION_MISMATCH,
    ERROR,
    FULL_STATE,
    HEARTBEAT,
    JOIN_REQUEST,
    PROTOCOL_VERSION,
    ROLE_PARTICIPANT,
    SUBMIT_OP,
    UPDATE,
    WELCOME,
    AnchorPayload,
    Envelope,
    ErrorPayload,
    FrameDecoder,
    JoinRequest,
    Op,
    SessionState,
    SubmitOpPayload,
    apply_op,
    encode,
    state_digest,
)
from .viewmath import (
    FORWARD,
    AnchorPoint,
    AnchorSet,
    IDENTITY_TRANSFORM,
    Pose,
    Quat,
    RigidTransform,
    Vec3,
    alignment_residual,
    apply,
    invert,
    pose_forward,
    rotate,
    solve_alignment,
    transform_anchors,
)

log = logging.getLogger(__name__)

# Phases
DISCOVERING = "discovering"
CONNECTING = "connecting"
AWAITING_WELCOME = "awaiting_welcome"
ANCHOR_DEFINING = "anchor_defining"
ALIGNING = "aligning"
SYNCED = "synced"
RECONNECTING = "reconnecting"

# Input modes
GAZE_TAP = "gaze_tap"
RAY_POINTER = "ray_pointer"

# Pointer event sources
HAND_VISIBLE = "hand_visible"
HAND_HIDDEN = "hand_hidden"
AIR_TAP = "air_tap"
CONTROLLER_BUTTON = "controller_button"
CONTROLLER_ORIENTATION = "controller_orientation"
POINTER_SOURCES = (HAND_VISIBLE, HAND_HIDDEN, AIR_TAP, CONTROLLER_BUTTON, CONTROLLER_ORIENTATION)

ALIGNMENT_RESIDUAL_LIMIT = 0.05  # meters RMS
HEARTBEAT_INTERVAL = 2.0
DISCOVERY_ATTEMPTS = 3
DISCOVERY_RETRY_INTERVAL = 1.0

# Anchor points a frame definer measures off its local space: four corners of
# the virtual table. Any non-collinear labeled set works.
DEFAULT_ANCHOR = AnchorSet((
    AnchorPoint("a0", Vec3(0.0, 0.0, 0.0)),
    AnchorPoint("a1", Vec3(1.0, 0.0, 0.0)),
    AnchorPoint("a2", Vec3(0.0, 0.0, 1.0)),
    AnchorPoint("a3", Vec3(0.0, 1.0, 0.0)),
))


class NotSynced(RuntimeError):
    pass


class AlignmentFailed(RuntimeError):
    pass


class MissingControllerOrientation(ValueError):
    pass


class NoServerFound(ConnectionError):
    pass


class PointerEvent(NamedTuple):
    source: str
    timestamp: float
    orientation: Optional[Quat] = None  # controller events carry this


def arbitrate_input(mode: str, event: PointerEvent) -> str:
    """Hand in view -> gaze+tap; controller activity -> ray pointer.

    Pure in (mode, event): hand visibility is itself an event, so the rules
    need no hidden state and switching involves no menu round trip.
    """
    if event.source == HAND_VISIBLE:
        return GAZE_TAP
    if event.source in (CONTROLLER_BUTTON, CONTROLLER_ORIENTATION):
        return RAY_POINTER
    return mode


class ClientSend(NamedTuple):
    env: Envelope
    frame: bytes


@dataclass
class ClientConfig:
    role: str = ROLE_PARTICIPANT
    language: str = "en"
    # True offset of this client's local frame (session -> local). The
    # harness uses it to fabricate local anchor measurements; a real headset
    # would measure the anchors directly.
    local_frame_offset: RigidTransform = IDENTITY_TRANSFORM
    local_anchor_points: Optional[AnchorSet] = None  # definer's own anchor
    heartbeat_interval: float = HEARTBEAT_INTERVAL


@dataclass
class LocalPrefs:
    language: str = "en"
    input_mode: str = GAZE_TAP


class ClientCore:
    def __init__(self, config: Optional[ClientConfig] = None):
        self.config = config or ClientConfig()
        self.phase = DISCOVERING
        self.connected = False
        self.client_id: Optional[str] = None
        self.session_id: Optional[str] = None
        self.replica: Optional[SessionState] = None
        self.alignment: Optional[RigidTransform] = None  # local -> session
        self.session_anchor: Optional[AnchorSet] = None
        self.local_prefs = LocalPrefs(language=self.config.language)
        self.head_pose = Pose(Vec3(0.0, 0.0, 0.0), Quat(1.0, 0.0, 0.0, 0.0))
        self.last_error: Optional[ErrorPayload] = None
        self.rejected = False  # session full / version mismatch: do not redial
        self._decoder = FrameDecoder()
        self._next_op_id = 1
        self._acks: dict[int, int] = {}
        self._resync_requested = False
        self._last_heartbeat = 0.0

    # -- lifecycle -----------------------------------------------------------

    def begin_connect(self) -> None:
        self.phase = CONNECTING

    def on_connected(self, now: float) -> list[ClientSend]:
        self.connected = True
        self.phase = AWAITING_WELCOME
        self.client_id = None
        self.alignment = None
        self.session_anchor = None
        self._decoder = FrameDecoder()
        self._resync_requested = False
        self._last_heartbeat = now
        join = Envelope(JOIN_REQUEST, "new", JoinRequest(self.config.role, PROTOCOL_VERSION))
        return [self._out(join)]

    def on_disconnected(self, now: float) -> list[ClientSend]:
        self.connected = False
        self.phase = RECONNECTING
        self._resync_requested = False
        # The replica is kept as a stale view; a rejoin replaces it wholesale.
        return []

    def on_bytes(self, data: bytes, now: float) -> list[ClientSend]:
        out: list[ClientSend] = []
        for env in self._decoder.feed(data):
            out.extend(self.on_message(env, now))
        return out

    def on_message(self, env: Envelope, now: float) -> list[ClientSend]:
        if env.kind == UPDATE:
            return self._handle_update(env)
        if env.kind == FULL_STATE and env.payload is not None:
            self.replica = env.payload.state
            self._resync_requested = False
            if self.alignment is not None:
                self.phase = SYNCED
            return []
        if env.kind == ANCHOR_INFO:
            return self._handle_anchor_info(env.payload)
        if env.kind == WELCOME:
            return self._handle_welcome(env.payload)
        if env.kind == ERROR:
            self.last_error = env.payload
            if env.payload.code in (ERR_SESSION_FULL, ERR_VERSION_MISMATCH):
                self.rejected = True
            log.warning("server error %s: %s", env.payload.code, env.payload.detail)
            return []
        return []  # heartbeat and anything else informational

    # -- join flow -----------------------------------------------------------

    def _handle_welcome(self, w) -> list[ClientSend]:
        self.client_id = w.client_id
        self.session_id = w.session_id
        if w.anchor_needed:
            # This client defines the session frame: its local frame is the
            # session frame, so alignment is the identity.
            self.phase = ANCHOR_DEFINING
            self.alignment = IDENTITY_TRANSFORM
            anchor = self.config.local_anchor_points or DEFAULT_ANCHOR
            upload = Envelope(ANCHOR_UPLOAD, self.client_id, AnchorPayload(anchor))
            return [self._out(upload)]
        self.phase = ALIGNING
        return []

    def _handle_anchor_info(self, payload: AnchorPayload) -> list[ClientSend]:
        self.session_anchor = payload.anchor
        if self.alignment is not None:
            return []  # frame definer: already identity-aligned
        session_points = payload.anchor
        # Measure the shared anchors in this client's local frame. In the
        # harness the measurement is fabricated from the configured offset.
        local_points = transform_anchors(self.config.local_frame_offset, session_points)
        self.alignment = solve_alignment(session_points, local_points)
        residual = alignment_residual(self.alignment, session_points, local_points)
        if residual > ALIGNMENT_RESIDUAL_LIMIT:
            self.alignment = None
            raise AlignmentFailed(f"RMS residual {residual:.4f} m exceeds "
                                  f"{ALIGNMENT_RESIDUAL_LIMIT} m")
        return []

    # -- replica maintenance ---------------------------------------------------

    def _handle_update(self, env: Envelope) -> list[ClientSend]:
        if self.replica is None:
            return []  # joined mid-broadcast; the coming full_state covers this
        seq = env.seq
        payload = env.payload
        if seq <= self.replica.server_seq:
            return []  # duplicate of something the full_state already included
        if seq == self.replica.server_seq + 1:
            self.replica = apply_op(self.replica, seq, payload.op, origin=payload.origin)
            if payload.origin == self.client_id and payload.op_id:
                self._acks[payload.op_id] = seq
            return []
        # Gap: some update was lost. Ask for a full snapshot once and hold
        # further application until it arrives.
        if self._resync_requested:
            return []
        self._resync_requested = True
        self.phase = RECONNECTING
        request = Envelope(FULL_STATE, self.client_id or "new", None)
        return [self._out(request)]

    # -- submissions -----------------------------------------------------------

    def submit(self, op: Op) -> tuple[int, list[ClientSend]]:
        """Send an op for ordering; the replica changes only on the echo."""
        if self.phase != SYNCED:
            raise NotSynced(f"cannot submit in phase {self.phase}")
        op_id = self._next_op_id
        self._next_op_id += 1
        env = Envelope(SUBMIT_OP, self.client_id, SubmitOpPayload(op, op_id))
        return op_id, [self._out(env)]

    def ack_of(self, op_id: int) -> Optional[int]:
        return self._acks.get(op_id)

    def digest(self) -> Optional[str]:
        return state_digest(self.replica) if self.replica is not None else None

    # -- timers ------------------------------------------------------------------

    def tick(self, now: float) -> list[ClientSend]:
        if not self.connected:
            return []
        if now - self._last_heartbeat >= self.config.heartbeat_interval:
            self._last_heartbeat = now
            hb = Envelope(HEARTBEAT, self.client_id or "new", None)
            return [self._out(hb)]
        return []

    def next_deadline(self) -> Optional[float]:
        if not self.connected:
            return None
        return self._last_heartbeat + self.config.heartbeat_interval

    # -- local-only state ----------------------------------------------------------

    def set_language(self, lang: str) -> list[ClientSend]:
        """Language is a per-client setting; changing it emits nothing."""
        self.local_prefs.language = lang
        return []

    def on_pointer(self, event: PointerEvent) -> None:
        self.local_prefs.input_mode = arbitrate_input(self.local_prefs.input_mode, event)

    def set_head_pose(self, pose: Pose) -> None:
        self.head_pose = pose

    # -- frame mapping ---------------------------------------------------------------

    def to_session(self, p: Vec3) -> Vec3:
        if self.alignment is None:
            raise NotSynced("no alignment yet")
        return apply(self.alignment, p)

    def to_local(self, p: Vec3) -> Vec3:
        if self.alignment is None:
            raise NotSynced("no alignment yet")
        return apply(invert(self.alignment), p)

    def _out(self, env: Envelope) -> ClientSend:
        return ClientSend(env, encode(env))


# Ray origin for the pointer mode: the controller reports orientation only,
# so the origin is a convention — 0.2 m right of and below the head.
RAY_ORIGIN_OFFSET = Vec3(0.2, -0.2, 0.0)


def current_ray(client: ClientCore, controller: Optional[Quat] = None) -> tuple[Vec3, Vec3]:
    """The active pointing ray (origin, unit direction) in the session frame."""
    if client.alignment is None:
        raise NotSynced("ray is undefined before alignment")
    head = client.head_pose
    if client.local_prefs.input_mode == GAZE_TAP:
        origin = head.position
        direction = pose_forward(head)
    else:
        if controller is None:
            raise MissingControllerOrientation("ray pointer mode needs a controller orientation")
        origin = apply(RigidTransform(head.orientation, head.position), RAY_ORIGIN_OFFSET)
        direction = rotate(controller, FORWARD)
    t = client.alignment
    return apply(t, origin), rotate(t.rotation, direction)


def choose_discovery(responses: list[tuple[int, str]]) -> tuple[int, str]:
    """Client policy for multiple discovery answers: first responder wins."""
    if not responses:
        raise NoServerFound("no discovery responses")
    return responses[0]
