"""Deterministic in-process network simulation.

One server core and N client cores exchange real encoded frames over an
in-memory transport with seeded random latency, so the wire format is
exercised end to end without sockets. A single event heap ordered by
(virtual time, insertion tick) makes every run a pure function of
(scenario, seed): same inputs, byte-identical report.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from functools import partial
from heapq import heappop, heappush
from typing import Callable, Optional

from .client import AlignmentFailed, ClientConfig, ClientCore, SYNCED, ClientSend
from .dataset import ColumnDescriptor, ColumnKind, DimensionMapping, FilterState
from .protocol import (
    ERROR,
    FULL_STATE,
    ROLE_OBSERVER,
    ROLE_PARTICIPANT,
    UPDATE,
    CreateSnapshot,
    DatasetRef,
    DeleteSnapshot,
    Envelope,
    LoadDataset,
    Op,
    ProtocolError,
    ScaledTransform,
    SelectRow,
    SetFilter,
    SetMapping,
    SetTransform,
    SetUserPose,
    SetVizMode,
    SnapshotPoint,
    VIZ_BARCHART,
    VIZ_SCATTER,
    WatchlistAdd,
    WatchlistRemove,
    canonical_json,
    decode_body,
    op_from_wire,
    state_digest,
)
from .protocol import FrameDecoder
from .server import Close, Send, SessionCore
from .viewmath import FACES, Pose, Quat, RigidTransform, Vec3, quat_normalize

FIXTURE_COLUMNS = ("glucose", "cholesterol", "systolic")
FIXTURE_REF_COLUMNS = (
    ColumnDescriptor("id", ColumnKind.ID),
    ColumnDescriptor("year", ColumnKind.YEAR),
    ColumnDescriptor("zipcode", ColumnKind.REGION),
    ColumnDescriptor("glucose", ColumnKind.NUMERIC),
    ColumnDescriptor("cholesterol", ColumnKind.NUMERIC),
    ColumnDescriptor("systolic", ColumnKind.NUMERIC),
)
FIXTURE_REGIONS = ("92093", "10001", "60601")

RECONNECT_DELAY = 0.25
SERVER_SWEEP_INTERVAL = 0.5
DROP_WINDOW = 1.0


class ScenarioParseError(ValueError):
    pass


class DivergenceDetected(RuntimeError):
    pass


@dataclass(frozen=True)
class Outage:
    client: int
    at: float
    duration: float


@dataclass(frozen=True)
class ScriptedOp:
    at: float
    client: int
    op_wire: dict


@dataclass(frozen=True)
class Scenario:
    name: str = "default"
    participants: int = 5
    observers: int = 0
    duration_s: float = 30.0
    random_ops: int = 1000
    script: tuple[ScriptedOp, ...] = ()
    disconnects: tuple[Outage, ...] = ()


@dataclass(frozen=True)
class SimNetConfig:
    seed: int = 42
    latency_ms: tuple[float, float] = (5.0, 50.0)
    drop_probability: float = 0.0  # per connection per 1 s window

    def __post_init__(self):
        lo, hi = self.latency_ms
        if lo < 0 or hi < lo:
            raise ScenarioParseError(f"bad latency range {self.latency_ms}")
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ScenarioParseError(f"drop_probability {self.drop_probability} outside [0,1]")


def parse_scenario(text: str) -> Scenario:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"scenario is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ScenarioParseError("scenario must be a JSON object")

    def _num(key: str, default, minimum=0):
        v = raw.get(key, default)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or v < minimum:
            raise ScenarioParseError(f"bad scenario field {key!r}: {v!r}")
        return v

    participants = int(_num("participants", 5))
    observers = int(_num("observers", 0))
    total = participants + observers
    if total == 0:
        raise ScenarioParseError("scenario needs at least one client")
    duration = float(_num("duration_s", 30.0, minimum=1))
    random_ops = int(_num("random_ops", 0))

    script = []
    for i, entry in enumerate(raw.get("script", [])):
        if not isinstance(entry, dict) or not isinstance(entry.get("op"), dict):
            raise ScenarioParseError(f"script[{i}] must be an object with an 'op'")
        at = entry.get("at")
        client = entry.get("client")
        if not isinstance(at, (int, float)) or isinstance(at, bool) or at < 0:
            raise ScenarioParseError(f"script[{i}]: bad 'at'")
        if not isinstance(client, int) or isinstance(client, bool) or not 0 <= client < total:
            raise ScenarioParseError(f"script[{i}]: bad client index")
        try:
            op_from_wire(entry["op"])
        except ProtocolError as exc:
            raise ScenarioParseError(f"script[{i}]: {exc}") from exc
        script.append(ScriptedOp(float(at), client, entry["op"]))

    disconnects = []
    for i, entry in enumerate(raw.get("disconnects", [])):
        if not isinstance(entry, dict):
            raise ScenarioParseError(f"disconnects[{i}] must be an object")
        client = entry.get("client")
        at = entry.get("at")
        duration_d = entry.get("duration")
        if not isinstance(client, int) or isinstance(client, bool) or not 0 <= client < total:
            raise ScenarioParseError(f"disconnects[{i}]: bad client index")
        for k, v in (("at", at), ("duration", duration_d)):
            if not isinstance(v, (int, float)) or isinstance(v, bool) or v < 0:
                raise ScenarioParseError(f"disconnects[{i}]: bad {k!r}")
        disconnects.append(Outage(client, float(at), float(duration_d)))

    name = raw.get("name", "scenario")
    if not isinstance(name, str):
        raise ScenarioParseError("scenario name must be a string")
    return Scenario(name, participants, observers, duration, random_ops,
                    tuple(script), tuple(disconnects))


def _random_unit_quat(rng: random.Random) -> Quat:
    while True:
        q = Quat(rng.gauss(0, 1), rng.gauss(0, 1), rng.gauss(0, 1), rng.gauss(0, 1))
        if abs(q.w) + abs(q.x) + abs(q.y) + abs(q.z) > 1e-6:
            return quat_normalize(q)


def _random_rigid(rng: random.Random) -> RigidTransform:
    return RigidTransform(
        _random_unit_quat(rng),
        Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)),
    )


@dataclass
class _Conn:
    conn_id: str
    bot: "_Bot"
    alive: bool = True
    last_to_server: float = 0.0  # FIFO floor per direction
    last_to_client: float = 0.0
    decoder: FrameDecoder = field(default_factory=FrameDecoder)


class _Bot:
    def __init__(self, sim: "Simulation", index: int, role: str, quota: int):
        self.sim = sim
        self.index = index
        self.role = role
        self.quota = quota
        self.rng = random.Random((sim.config.seed << 8) ^ (index * 0x9E3779B1 + 1))
        config = ClientConfig(
            role=role,
            local_frame_offset=_random_rigid(self.rng),
        )
        self.core = ClientCore(config)
        self.conn: Optional[_Conn] = None
        self.hb_gen = 0
        self.op_armed = False
        self.full_states = 0
        self.joins = 0
        self.alignment_failures = 0
        # Mean pacing that drains the quota comfortably before the scenario
        # ends, even under jitter and a slow join.
        if quota > 0:
            self.op_interval = (sim.scenario.duration_s * 0.75) / quota
        else:
            self.op_interval = sim.scenario.duration_s

    def jittered_interval(self) -> float:
        return self.op_interval * self.rng.uniform(0.5, 1.5)

    def random_op(self) -> Op:
        r = self.rng
        if self.role == ROLE_OBSERVER:
            return self._random_pose()
        roll = r.random()
        if roll < 0.30:
            return self._random_transform()
        if roll < 0.40:
            return SetMapping(DimensionMapping(
                r.choice(FIXTURE_COLUMNS), r.choice(FIXTURE_COLUMNS), r.choice(FIXTURE_COLUMNS),
                r.choice(FIXTURE_COLUMNS), r.choice(FIXTURE_COLUMNS), r.random() < 0.5))
        if roll < 0.50:
            return SetFilter(self._random_filter())
        if roll < 0.55:
            return SetVizMode(VIZ_BARCHART if r.random() < 0.5 else VIZ_SCATTER)
        if roll < 0.65:
            return SelectRow(None if r.random() < 0.2 else r.randrange(500))
        if roll < 0.72:
            return WatchlistAdd(f"p{r.randrange(1, 25)}")
        if roll < 0.75:
            return WatchlistRemove(f"p{r.randrange(1, 25)}")
        if roll < 0.82:
            points = tuple(
                SnapshotPoint(r.random(), r.random(), r.random(), r.random())
                for _ in range(r.randrange(0, 9)))
            return CreateSnapshot(points, r.choice(FACES))
        if roll < 0.87:
            snapshots = self.core.replica.snapshots if self.core.replica else ()
            target = r.choice(snapshots) if snapshots else "snapshot-1"
            return DeleteSnapshot(target)
        if roll < 0.97:
            return self._random_pose()
        return LoadDataset(DatasetRef(f"h{r.randrange(16 ** 8):08x}", FIXTURE_REF_COLUMNS))

    def _random_transform(self) -> SetTransform:
        r = self.rng
        roll = r.random()
        if roll < 0.70:
            target = "cube"
        elif roll < 0.85:
            target = "wall"
        else:
            snapshots = self.core.replica.snapshots if self.core.replica else ()
            target = r.choice(snapshots) if snapshots else "snapshot-1"
        return SetTransform(target, ScaledTransform(
            _random_unit_quat(r),
            Vec3(r.uniform(-3, 3), r.uniform(-3, 3), r.uniform(-3, 3)),
            r.uniform(0.2, 3.0),
        ))

    def _random_filter(self) -> FilterState:
        r = self.rng
        ranges = {}
        for col in FIXTURE_COLUMNS:
            if r.random() < 0.4:
                lo = r.uniform(0, 120)
                ranges[col] = (lo, lo + r.uniform(0, 120))
        year_range = None
        if r.random() < 0.5:
            lo = r.randrange(1990, 2060)
            year_range = (lo, lo + r.randrange(0, 40))
        regions = None
        if r.random() < 0.3:
            regions = frozenset(
                reg for reg in FIXTURE_REGIONS if r.random() < 0.6) or None
        return FilterState(ranges, year_range, regions)

    def _random_pose(self) -> SetUserPose:
        r = self.rng
        if r.random() < 0.08:
            return SetUserPose(self.core.client_id, None)
        pose = Pose(
            Vec3(r.uniform(-4, 4), r.uniform(0, 2.5), r.uniform(-4, 4)),
            _random_unit_quat(r),
        )
        return SetUserPose(self.core.client_id, pose)


class Simulation:
    def __init__(self, scenario: Scenario, config: SimNetConfig, *, trace: bool = False):
        self.scenario = scenario
        self.config = config
        self.now = 0.0
        self._heap: list[tuple[float, int, Callable[[], None]]] = []
        self._tick = 0
        self.rng = random.Random(config.seed)
        self.end_time = scenario.duration_s
        self.lat = (config.latency_ms[0] / 1000.0, config.latency_ms[1] / 1000.0)
        self.trace_server: Optional[dict[int, str]] = {} if trace else None
        self.trace_clients: Optional[dict[tuple[int, int], str]] = {} if trace else None
        self.server = SessionCore(
            f"sim-{config.seed}",
            op_observer=self._observe_op if trace else None,
        )
        quotas = self._split_quota(scenario.random_ops, scenario.participants)
        self.bots: list[_Bot] = []
        for i in range(scenario.participants + scenario.observers):
            role = ROLE_PARTICIPANT if i < scenario.participants else ROLE_OBSERVER
            quota = quotas[i] if i < scenario.participants else 0
            self.bots.append(_Bot(self, i, role, quota))
        self._conns: dict[str, _Conn] = {}
        self._next_conn = 1
        self._decode_cache: dict[bytes, Envelope] = {}
        self.ops_submitted = 0
        self.scripted_skipped = 0
        self.rejections: list[dict] = []
        self._outage_until = [0.0] * len(self.bots)

    @staticmethod
    def _split_quota(total: int, n: int) -> list[int]:
        if n == 0:
            return []
        base, extra = divmod(total, n)
        return [base + (1 if i < extra else 0) for i in range(n)]

    def _observe_op(self, seq: int, state) -> None:
        self.trace_server[seq] = state_digest(state)

    # -- event plumbing ------------------------------------------------------

    def schedule(self, at: float, fn: Callable[[], None]) -> None:
        heappush(self._heap, (at, self._tick, fn))
        self._tick += 1

    def run(self) -> dict:
        for bot in self.bots:
            self.schedule(0.0, partial(self._connect, bot))
        for outage in self.scenario.disconnects:
            self.schedule(outage.at, partial(self._forced_outage, outage))
        for entry in self.scenario.script:
            self.schedule(entry.at, partial(self._scripted, entry))
        if self.config.drop_probability > 0.0:
            self.schedule(DROP_WINDOW, self._drop_window)
        self.schedule(SERVER_SWEEP_INTERVAL, self._server_sweep)
        while self._heap:
            at, _, fn = heappop(self._heap)
            self.now = at
            fn()
        return self._report()

    def _latency(self) -> float:
        return self.rng.uniform(*self.lat)

    # -- connection management -------------------------------------------------

    def _connect(self, bot: _Bot) -> None:
        if bot.conn is not None or bot.core.rejected:
            return
        if self.now < self._outage_until[bot.index]:
            return
        conn = _Conn(f"conn-{self._next_conn}", bot)
        self._next_conn += 1
        self._conns[conn.conn_id] = conn
        bot.conn = conn
        self.server.on_connect(conn.conn_id, self.now)
        bot.joins += 1
        for send in bot.core.on_connected(self.now):
            self._client_send(bot, send)
        bot.hb_gen += 1
        self._arm_heartbeat(bot, bot.hb_gen)

    def _forced_outage(self, outage: Outage) -> None:
        bot = self.bots[outage.client]
        self._outage_until[bot.index] = self.now + outage.duration
        self._client_close(bot)
        self.schedule(self.now + outage.duration, partial(self._connect, bot))

    def _client_close(self, bot: _Bot) -> None:
        """Client-side loss: the client knows now; the server notices later."""
        conn = bot.conn
        if conn is None:
            return
        conn.alive = False
        self._conns.pop(conn.conn_id, None)
        bot.conn = None
        bot.core.on_disconnected(self.now)
        bot.op_armed = False
        self.schedule(self.now + self._latency(), partial(self._server_notice_close, conn))

    def _server_notice_close(self, conn: _Conn) -> None:
        self._server_actions(self.server.on_disconnect(conn.conn_id, self.now))

    def _server_close(self, conn_id: str) -> None:
        """Server-side close action: the client notices after the wire delay.

        Frames written before the close (e.g. a rejection error) are already
        scheduled; the close notice queues behind them like a FIN would.
        """
        conn = self._conns.pop(conn_id, None)
        if conn is None:
            return
        arrival = max(self.now + self._latency(), conn.last_to_client)
        conn.last_to_client = arrival
        self.schedule(arrival, partial(self._client_notice_close, conn))

    def _client_notice_close(self, conn: _Conn) -> None:
        conn.alive = False
        bot = conn.bot
        if bot.conn is not conn:
            return
        bot.conn = None
        bot.core.on_disconnected(self.now)
        bot.op_armed = False
        self._schedule_reconnect(bot)

    def _schedule_reconnect(self, bot: _Bot) -> None:
        if bot.core.rejected:
            return
        at = max(self.now + RECONNECT_DELAY, self._outage_until[bot.index])
        if at < self.end_time:
            self.schedule(at, partial(self._connect, bot))

    def _drop_window(self) -> None:
        for conn_id in sorted(self._conns):
            conn = self._conns.get(conn_id)
            if conn is None:
                continue
            if self.rng.random() < self.config.drop_probability:
                bot = conn.bot
                self._client_close(bot)
                self._schedule_reconnect(bot)
        if self.now + DROP_WINDOW < self.end_time:
            self.schedule(self.now + DROP_WINDOW, self._drop_window)

    # -- traffic -----------------------------------------------------------------

    def _client_send(self, bot: _Bot, send: ClientSend) -> None:
        conn = bot.conn
        if conn is None or not conn.alive:
            return
        arrival = max(self.now + self._latency(), conn.last_to_server)
        conn.last_to_server = arrival
        self.schedule(arrival, partial(self._server_recv, conn, send.frame))

    def _server_recv(self, conn: _Conn, data: bytes) -> None:
        if not conn.alive:
            return
        self._server_actions(self.server.on_bytes(conn.conn_id, data, self.now))

    def _server_actions(self, actions) -> None:
        for action in actions:
            if isinstance(action, Send):
                self._server_send(action.conn_id, action.frame)
            elif isinstance(action, Close):
                self._server_close(action.conn_id)

    def _server_send(self, conn_id: str, frame: bytes) -> None:
        conn = self._conns.get(conn_id)
        if conn is None or not conn.alive:
            return
        arrival = max(self.now + self._latency(), conn.last_to_client)
        conn.last_to_client = arrival
        if len(frame) > 8 and self.rng.random() < 0.05:
            # Split the frame so stream reassembly is exercised.
            cut = self.rng.randrange(1, len(frame))
            self.schedule(arrival, partial(self._client_recv, conn, frame[:cut]))
            self.schedule(arrival, partial(self._client_recv, conn, frame[cut:]))
        else:
            self.schedule(arrival, partial(self._client_recv, conn, frame))

    def _client_recv(self, conn: _Conn, data: bytes) -> None:
        bot = conn.bot
        if not conn.alive or bot.conn is not conn:
            return
        for body in conn.decoder.feed_bodies(data):
            env = self._decode(body)
            if env.kind == FULL_STATE and env.payload is not None:
                bot.full_states += 1
            try:
                sends = bot.core.on_message(env, self.now)
            except AlignmentFailed:
                bot.alignment_failures += 1
                continue
            for send in sends:
                self._client_send(bot, send)
            if env.kind == ERROR and bot.core.rejected:
                self.rejections.append({
                    "client_index": bot.index,
                    "code": env.payload.code,
                    "at": round(self.now, 6),
                })
            if (self.trace_clients is not None and env.kind == UPDATE
                    and bot.core.replica is not None
                    and bot.core.replica.server_seq == env.seq):
                self.trace_clients[(bot.index, env.seq)] = state_digest(bot.core.replica)
        self._maybe_arm_ops(bot)

    def _decode(self, body: bytes) -> Envelope:
        env = self._decode_cache.get(body)
        if env is None:
            env = decode_body(body)
            if len(self._decode_cache) > 256:
                self._decode_cache.clear()
            self._decode_cache[body] = env
        return env

    # -- timers ---------------------------------------------------------------------

    def _arm_heartbeat(self, bot: _Bot, gen: int) -> None:
        interval = bot.core.config.heartbeat_interval
        if self.now + interval < self.end_time:
            self.schedule(self.now + interval, partial(self._bot_heartbeat, bot, gen))

    def _bot_heartbeat(self, bot: _Bot, gen: int) -> None:
        if gen != bot.hb_gen or bot.conn is None:
            return
        for send in bot.core.tick(self.now):
            self._client_send(bot, send)
        self._arm_heartbeat(bot, gen)

    def _server_sweep(self) -> None:
        actions, _expired = self.server.sweep(self.now)
        self._server_actions(actions)
        if self.now + SERVER_SWEEP_INTERVAL < self.end_time + 2.0:
            self.schedule(self.now + SERVER_SWEEP_INTERVAL, self._server_sweep)

    def _maybe_arm_ops(self, bot: _Bot) -> None:
        if bot.op_armed or bot.quota <= 0 or bot.core.phase != SYNCED:
            return
        if self.now >= self.end_time:
            return
        bot.op_armed = True
        self.schedule(self.now + bot.jittered_interval(), partial(self._bot_op, bot))

    def _bot_op(self, bot: _Bot) -> None:
        if bot.conn is None or bot.core.phase != SYNCED or self.now >= self.end_time:
            bot.op_armed = False
            return
        if bot.quota <= 0:
            bot.op_armed = False
            return
        op = bot.random_op()
        _op_id, sends = bot.core.submit(op)
        bot.quota -= 1
        self.ops_submitted += 1
        for send in sends:
            self._client_send(bot, send)
        self.schedule(self.now + bot.jittered_interval(), partial(self._bot_op, bot))

    def _scripted(self, entry: ScriptedOp) -> None:
        bot = self.bots[entry.client]
        if bot.core.phase != SYNCED:
            self.scripted_skipped += 1
            return
        op = op_from_wire(entry.op_wire)
        _op_id, sends = bot.core.submit(op)
        self.ops_submitted += 1
        for send in sends:
            self._client_send(bot, send)

    # -- results ------------------------------------------------------------------------

    def _report(self) -> dict:
        canonical = self.server.digest()
        clients = []
        converged = True
        for bot in self.bots:
            digest = bot.core.digest()
            connected = bot.conn is not None
            synced = bot.core.phase == SYNCED
            if connected and synced and digest != canonical:
                converged = False
            clients.append({
                "index": bot.index,
                "client_id": bot.core.client_id,
                "role": bot.role,
                "connected": connected,
                "synced": synced,
                "digest": digest,
                "full_states": bot.full_states,
                "joins": bot.joins,
                "alignment_failures": bot.alignment_failures,
                "ops_left": bot.quota,
            })
        sim_time = round(self.now, 6)
        applied = self.server.state.server_seq
        return {
            "scenario": {
                "name": self.scenario.name,
                "participants": self.scenario.participants,
                "observers": self.scenario.observers,
                "duration_s": self.scenario.duration_s,
                "random_ops": self.scenario.random_ops,
            },
            "seed": self.config.seed,
            "latency_ms": list(self.config.latency_ms),
            "drop_probability": self.config.drop_probability,
            "converged": converged,
            "canonical_digest": canonical,
            "server_seq": applied,
            "ops_submitted": self.ops_submitted,
            "ops_applied": applied,
            "scripted_skipped": self.scripted_skipped,
            "rejections": self.rejections,
            "clients": clients,
            "sim_time_s": sim_time,
            "throughput_ops_per_s": round(applied / sim_time, 3) if sim_time > 0 else 0.0,
            "first_divergence_seq": None,
        }


def find_first_divergence(scenario: Scenario, config: SimNetConfig) -> Optional[int]:
    """Deterministic rerun with per-seq digests; the first mismatching seq."""
    sim = Simulation(scenario, config, trace=True)
    sim.run()
    diverging = [
        seq for (index, seq), digest in sim.trace_clients.items()
        if seq in sim.trace_server and digest != sim.trace_server[seq]
    ]
    return min(diverging) if diverging else None


def run_scenario(scenario: Scenario, config: SimNetConfig) -> dict:
    report = Simulation(scenario, config).run()
    if not report["converged"]:
        report["first_divergence_seq"] = find_first_divergence(scenario, config)
    return report


def report_to_json(report: dict) -> str:
    return canonical_json(report)
