"""Asyncio server runtime around SessionCore.

Three listeners share one core on one event loop (the loop is the
serializer): length-prefixed TCP for native clients, WebSocket for the
browser UI (one envelope body per message), and UDP for LAN discovery.
Also serves the UI bundle, translation table, and loaded datasets over HTTP.
"""

from __future__ import annotations

import asyncio
import hashlib
import logging
import socket
import time
import uuid
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

import uvicorn
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import HTMLResponse, PlainTextResponse, Response
from fastapi.staticfiles import StaticFiles

from . import dataset as ds
from .protocol import (
    ERR_SCHEMA_VIOLATION,
    ERROR,
    MAX_FRAME_BYTES,
    SERVER_SENDER,
    DatasetRef,
    Envelope,
    ErrorPayload,
    LoadDataset,
    ProtocolError,
    decode_body,
    encode_body,
)
from .server import Close, Send, SessionCore, handle_discovery, persist_artifacts

log = logging.getLogger(__name__)

DEFAULT_DISCOVERY_PORT = 47799
DEFAULT_TCP_PORT = 47800
DEFAULT_WS_PORT = 47801


class PortInUse(OSError):
    pass


class BadConfig(ValueError):
    pass


@dataclass
class ServerConfig:
    host: str = "0.0.0.0"
    tcp_port: int = DEFAULT_TCP_PORT
    ws_port: int = DEFAULT_WS_PORT
    discovery_port: int = DEFAULT_DISCOVERY_PORT
    data_dir: Path = field(default_factory=lambda: Path("datacube-data"))
    capacity: int = 6
    session_id: Optional[str] = None
    dataset_path: Optional[Path] = None  # CSV loaded into the session at start
    lang_table: Optional[Path] = None
    ui_dir: Optional[Path] = None


def content_hash(data: bytes) -> str:
    return hashlib.blake2b(data, digest_size=8).hexdigest()


class _DiscoveryProtocol(asyncio.DatagramProtocol):
    def __init__(self, tcp_port: int, session_id: str):
        self.tcp_port = tcp_port
        self.session_id = session_id
        self.transport: Optional[asyncio.DatagramTransport] = None

    def connection_made(self, transport):
        self.transport = transport

    def datagram_received(self, data, addr):
        response = handle_discovery(data, self.tcp_port, self.session_id)
        if response is not None:
            self.transport.sendto(response, addr)


class ServerRuntime:
    def __init__(self, config: Optional[ServerConfig] = None):
        self.config = config or ServerConfig()
        self.session_id = self.config.session_id or f"dc-{uuid.uuid4().hex[:12]}"
        self.core = SessionCore(self.session_id, capacity=self.config.capacity)
        self.clock = time.monotonic
        self.datasets: dict[str, bytes] = {}
        self.dataset: Optional[ds.Dataset] = None
        # Effective ports after binding (real values when configured as 0).
        self.tcp_port = self.config.tcp_port
        self.ws_port = self.config.ws_port
        self.discovery_port = self.config.discovery_port
        self._senders: dict[str, Callable[[bytes], None]] = {}
        self._closers: dict[str, Callable[[], None]] = {}
        self._next_conn = 1
        self._tcp_server: Optional[asyncio.AbstractServer] = None
        self._udp_transport = None
        self._uvicorn: Optional[uvicorn.Server] = None
        self._tasks: list[asyncio.Task] = []
        self.app = build_app(self)

    # -- core plumbing -------------------------------------------------------

    def dispatch(self, actions) -> None:
        for action in actions:
            if isinstance(action, Send):
                sender = self._senders.get(action.conn_id)
                if sender is not None:
                    sender(action.frame)
            elif isinstance(action, Close):
                closer = self._closers.get(action.conn_id)
                if closer is not None:
                    closer()

    def _register(self, conn_id: str, sender, closer) -> None:
        self._senders[conn_id] = sender
        self._closers[conn_id] = closer
        self.dispatch(self.core.on_connect(conn_id, self.clock()))

    def _unregister(self, conn_id: str) -> None:
        self._senders.pop(conn_id, None)
        self._closers.pop(conn_id, None)
        self.dispatch(self.core.on_disconnect(conn_id, self.clock()))

    def load_dataset(self, csv_bytes: bytes) -> DatasetRef:
        """Parse, store for HTTP download, and order a LoadDataset op."""
        parsed = ds.parse_csv(csv_bytes)
        ref = DatasetRef(content_hash(csv_bytes), parsed.columns)
        self.datasets[ref.content_hash] = csv_bytes
        self.dataset = parsed
        self.dispatch(self.core.order_and_broadcast(LoadDataset(ref), SERVER_SENDER))
        return ref

    # -- TCP -----------------------------------------------------------------

    async def _tcp_conn(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        conn_id = f"tcp-{self._next_conn}"
        self._next_conn += 1

        def sender(frame: bytes) -> None:
            if not writer.is_closing():
                writer.write(frame)

        def closer() -> None:
            if not writer.is_closing():
                writer.close()

        self._register(conn_id, sender, closer)
        try:
            while True:
                data = await reader.read(65536)
                if not data:
                    break
                self.dispatch(self.core.on_bytes(conn_id, data, self.clock()))
                await writer.drain()
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            self._unregister(conn_id)
            closer()

    # -- lifecycle -------------------------------------------------------------

    async def start(self) -> None:
        cfg = self.config
        loop = asyncio.get_running_loop()
        try:
            self._tcp_server = await asyncio.start_server(
                self._tcp_conn, cfg.host, cfg.tcp_port)
        except OSError as exc:
            raise PortInUse(f"TCP port {cfg.tcp_port}: {exc}") from exc
        self.tcp_port = self._tcp_server.sockets[0].getsockname()[1]

        try:
            self._udp_transport, _ = await loop.create_datagram_endpoint(
                lambda: _DiscoveryProtocol(self.tcp_port, self.session_id),
                local_addr=(cfg.host, cfg.discovery_port),
            )
        except OSError as exc:
            raise PortInUse(f"UDP port {cfg.discovery_port}: {exc}") from exc
        self.discovery_port = self._udp_transport.get_extra_info("sockname")[1]

        ws_sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        ws_sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            ws_sock.bind((cfg.host, cfg.ws_port))
        except OSError as exc:
            ws_sock.close()
            raise PortInUse(f"WS port {cfg.ws_port}: {exc}") from exc
        # Listen before handing off so connections made between start()
        # returning and uvicorn attaching queue up instead of being refused.
        ws_sock.listen(128)
        self.ws_port = ws_sock.getsockname()[1]
        uv_config = uvicorn.Config(self.app, log_level="warning", lifespan="off")
        self._uvicorn = uvicorn.Server(uv_config)
        self._tasks.append(asyncio.create_task(self._uvicorn.serve(sockets=[ws_sock])))
        self._tasks.append(asyncio.create_task(self._sweep_loop()))

        if cfg.dataset_path is not None:
            self.load_dataset(Path(cfg.dataset_path).read_bytes())
        log.info("session %s: tcp=%d ws=%d discovery=%d",
                 self.session_id, self.tcp_port, self.ws_port, self.discovery_port)

    async def _sweep_loop(self) -> None:
        while True:
            now = self.clock()
            deadline = self.core.next_deadline()
            delay = 0.5 if deadline is None else min(max(deadline - now, 0.02), 0.5)
            await asyncio.sleep(delay)
            actions, _ = self.core.sweep(self.clock())
            self.dispatch(actions)

    async def stop(self) -> None:
        self.persist()
        for task in self._tasks:
            task.cancel()
        if self._uvicorn is not None:
            self._uvicorn.should_exit = True
        for task in self._tasks:
            try:
                await task
            except (asyncio.CancelledError, Exception):  # noqa: BLE001
                pass
        if self._tcp_server is not None:
            self._tcp_server.close()
            await self._tcp_server.wait_closed()
        if self._udp_transport is not None:
            self._udp_transport.close()

    def persist(self) -> list[Path]:
        # Wall clock for artifact timestamps; self.clock is monotonic and
        # only meaningful for timeouts.
        return persist_artifacts(
            self.core.state, self.session_id, self.config.data_dir,
            clock=time.time, dataset=self.dataset,
        )

    async def serve_forever(self) -> None:
        await self.start()
        try:
            await asyncio.Event().wait()
        finally:
            await self.stop()


# ---------------------------------------------------------------------------
# HTTP/WebSocket application


def _lang_table_text(config: ServerConfig) -> str:
    if config.lang_table is not None:
        return Path(config.lang_table).read_text(encoding="utf-8")
    return resources.files("datacube").joinpath("data/strings.tsv").read_text(encoding="utf-8")


def build_app(runtime: ServerRuntime) -> FastAPI:
    app = FastAPI(title="datacube", docs_url=None, redoc_url=None)

    @app.get("/health")
    def health():
        return {
            "session_id": runtime.session_id,
            "server_seq": runtime.core.state.server_seq,
            "participants": runtime.core.participant_count,
        }

    @app.get("/strings.tsv")
    def strings():
        return PlainTextResponse(_lang_table_text(runtime.config),
                                 media_type="text/tab-separated-values")

    @app.get("/data/{content_hash}")
    def dataset_csv(content_hash: str):
        data = runtime.datasets.get(content_hash)
        if data is None:
            return Response(status_code=404)
        return Response(content=data, media_type="text/csv")

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        conn_id = f"ws-{runtime._next_conn}"
        runtime._next_conn += 1
        queue: asyncio.Queue[Optional[bytes]] = asyncio.Queue()

        async def pump():
            while True:
                frame = await queue.get()
                if frame is None:
                    await ws.close()
                    return
                # Strip the length prefix: WS already frames messages.
                await ws.send_text(frame[4:].decode("utf-8"))

        pump_task = asyncio.create_task(pump())
        runtime._register(conn_id, queue.put_nowait, lambda: queue.put_nowait(None))
        try:
            while True:
                text = await ws.receive_text()
                if len(text) > MAX_FRAME_BYTES:
                    break
                try:
                    env = decode_body(text)
                except ProtocolError as exc:
                    err = Envelope(ERROR, SERVER_SENDER,
                                   ErrorPayload(ERR_SCHEMA_VIOLATION, str(exc)))
                    await ws.send_text(encode_body(err).decode("utf-8"))
                    continue
                runtime.dispatch(runtime.core.on_message(conn_id, env, runtime.clock()))
        except WebSocketDisconnect:
            pass
        finally:
            runtime._unregister(conn_id)
            pump_task.cancel()

    ui_dir = runtime.config.ui_dir
    if ui_dir is None:
        packaged = Path(__file__).parent / "webui_static"
        if packaged.is_dir():
            ui_dir = packaged
    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    else:
        @app.get("/ui")
        def ui_missing():
            return HTMLResponse("<h1>UI bundle not installed</h1>", status_code=404)

    return app
