"""Asyncio TCP client wrapping ClientCore, plus UDP LAN discovery.

ClientCore stays sans-io; this module owns the socket, the reader task, and
the heartbeat timer, and turns the core's phase changes into awaitables.
"""

from __future__ import annotations

import asyncio
import socket
import time
from typing import Optional

from .client import SYNCED, ClientConfig, ClientCore, NoServerFound
from .protocol import LEAVE, Envelope, Op, encode
from .server import DISCOVERY_PROBE, parse_discovery_response

DISCOVERY_ATTEMPTS = 3
DISCOVERY_INTERVAL = 1.0


class _ProbeProtocol(asyncio.DatagramProtocol):
    def __init__(self):
        self.found: asyncio.Future = asyncio.get_running_loop().create_future()

    def datagram_received(self, data, addr):
        try:
            port, session_id = parse_discovery_response(data)
        except ValueError:
            return
        if not self.found.done():
            self.found.set_result((addr[0], port, session_id))


async def discover(
    *,
    port: int = 47799,
    host: str = "255.255.255.255",
    attempts: int = DISCOVERY_ATTEMPTS,
    interval: float = DISCOVERY_INTERVAL,
) -> tuple[str, int, str]:
    """Probe the LAN for a session server.

    Returns (host, tcp_port, session_id) of the first responder. Probes
    `attempts` times, one second apart, then raises NoServerFound.
    """
    loop = asyncio.get_running_loop()
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_BROADCAST, 1)
    sock.bind(("0.0.0.0", 0))
    transport, proto = await loop.create_datagram_endpoint(_ProbeProtocol, sock=sock)
    try:
        for _ in range(attempts):
            transport.sendto(DISCOVERY_PROBE, (host, port))
            try:
                return await asyncio.wait_for(asyncio.shield(proto.found), interval)
            except asyncio.TimeoutError:
                continue
        raise NoServerFound(f"no discovery response after {attempts} probes")
    finally:
        transport.close()


class SessionRejected(ConnectionError):
    pass


class NetClient:
    """One live connection to a session server."""

    def __init__(self, config: Optional[ClientConfig] = None):
        self.core = ClientCore(config)
        self.clock = time.monotonic
        self._writer: Optional[asyncio.StreamWriter] = None
        self._tasks: list[asyncio.Task] = []
        self._synced = asyncio.Event()
        self._done = asyncio.Event()
        self._changed: list[asyncio.Event] = []

    async def connect(self, host: str, port: int) -> None:
        self.core.begin_connect()
        reader, writer = await asyncio.open_connection(host, port)
        self._writer = writer
        for send in self.core.on_connected(self.clock()):
            writer.write(send.frame)
        await writer.drain()
        self._tasks.append(asyncio.create_task(self._read_loop(reader)))
        self._tasks.append(asyncio.create_task(self._heartbeat_loop()))

    async def _read_loop(self, reader: asyncio.StreamReader) -> None:
        try:
            while True:
                data = await reader.read(65536)
                if not data:
                    break
                for send in self.core.on_bytes(data, self.clock()):
                    self._writer.write(send.frame)
                self._notify()
        except ConnectionError:
            pass
        finally:
            self.core.on_disconnected(self.clock())
            self._done.set()
            self._notify()

    def _notify(self) -> None:
        if self.core.phase == SYNCED:
            self._synced.set()
        if self.core.rejected:
            self._done.set()
        for event in self._changed:
            event.set()

    async def _heartbeat_loop(self) -> None:
        while True:
            deadline = self.core.next_deadline()
            now = self.clock()
            await asyncio.sleep(0.2 if deadline is None else max(deadline - now, 0.05))
            for send in self.core.tick(self.clock()):
                self._writer.write(send.frame)

    async def wait_synced(self, timeout: float = 10.0) -> None:
        done = asyncio.ensure_future(self._done.wait())
        synced = asyncio.ensure_future(self._synced.wait())
        try:
            await asyncio.wait_for(
                asyncio.wait([synced, done], return_when=asyncio.FIRST_COMPLETED),
                timeout,
            )
        finally:
            done.cancel()
            synced.cancel()
        if not self._synced.is_set():
            detail = self.core.last_error.detail if self.core.last_error else "connection closed"
            raise SessionRejected(detail)

    async def submit(self, op: Op) -> int:
        op_id, sends = self.core.submit(op)
        for send in sends:
            self._writer.write(send.frame)
        await self._writer.drain()
        return op_id

    async def wait_ack(self, op_id: int, timeout: float = 10.0) -> int:
        """Block until the server's echo of op_id arrives; returns its seq."""
        event = asyncio.Event()
        self._changed.append(event)
        try:
            deadline = self.clock() + timeout
            while True:
                seq = self.core.ack_of(op_id)
                if seq is not None:
                    return seq
                remaining = deadline - self.clock()
                if remaining <= 0 or self._done.is_set():
                    raise TimeoutError(f"no ack for op {op_id}")
                event.clear()
                try:
                    await asyncio.wait_for(event.wait(), remaining)
                except asyncio.TimeoutError:
                    pass
        finally:
            self._changed.remove(event)

    async def close(self) -> None:
        for task in self._tasks:
            task.cancel()
        if self._writer is not None and not self._writer.is_closing():
            if self.core.client_id is not None:
                self._writer.write(encode(Envelope(LEAVE, self.core.client_id)))
                try:
                    await self._writer.drain()
                except ConnectionError:
                    pass
            self._writer.close()
