"""Shared test drivers.

Loop wires ClientCores to a SessionCore through a zero-latency in-memory
pump: every Send is delivered immediately, so tests control only the clock.
"""

from __future__ import annotations

from typing import Optional

from datacube.client import ClientConfig, ClientCore
from datacube.protocol import Op
from datacube.server import Send, SessionCore


class Loop:
    def __init__(self, session_id: str = "test", **core_kwargs):
        self.server = SessionCore(session_id, **core_kwargs)
        self.clients: dict[str, ClientCore] = {}
        self.now = 0.0
        self._next_conn = 1

    def add_client(self, config: Optional[ClientConfig] = None) -> tuple[str, ClientCore]:
        conn_id = f"conn{self._next_conn}"
        self._next_conn += 1
        core = ClientCore(config)
        self.clients[conn_id] = core
        core.begin_connect()
        sends = core.on_connected(self.now)
        self.dispatch(self.server.on_connect(conn_id, self.now))
        self.client_to_server(conn_id, sends)
        return conn_id, core

    def client_to_server(self, conn_id: str, sends) -> None:
        for s in sends:
            self.dispatch(self.server.on_bytes(conn_id, s.frame, self.now))

    def dispatch(self, actions) -> None:
        for a in actions:
            if isinstance(a, Send):
                core = self.clients.get(a.conn_id)
                if core is not None:
                    self.client_to_server(a.conn_id, core.on_bytes(a.frame, self.now))
            else:
                self.drop(a.conn_id)

    def drop(self, conn_id: str) -> None:
        core = self.clients.pop(conn_id, None)
        if core is not None:
            core.on_disconnected(self.now)
            self.dispatch(self.server.on_disconnect(conn_id, self.now))

    def submit(self, conn_id: str, op: Op) -> int:
        op_id, sends = self.clients[conn_id].submit(op)
        self.client_to_server(conn_id, sends)
        return op_id

    def sweep(self) -> list[str]:
        actions, expired = self.server.sweep(self.now)
        self.dispatch(actions)
        return expired

    def digests(self) -> set[str]:
        out = {self.server.digest()}
        for core in self.clients.values():
            out.add(core.digest())
        return out
