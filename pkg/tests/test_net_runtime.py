"""Real transports: TCP loopback, WebSocket endpoint, discovery, HTTP routes."""

import asyncio
import json
import socket

import pytest
from starlette.testclient import TestClient

from datacube import localization as loc
from datacube import netclient as nc
from datacube import protocol as proto
from datacube import viewmath as vm
from datacube.client import ClientConfig, SYNCED
from datacube.runtime import PortInUse, ServerConfig, ServerRuntime, content_hash
from conftest import SAMPLE_CSV

LOCAL = "127.0.0.1"


def local_config(**kw):
    defaults = dict(host=LOCAL, tcp_port=0, ws_port=0, discovery_port=0,
                    session_id="net-test")
    defaults.update(kw)
    return ServerConfig(**defaults)


async def started(tmp_path, **kw):
    runtime = ServerRuntime(local_config(data_dir=tmp_path / "artifacts", **kw))
    await runtime.start()
    return runtime


# -- TCP ---------------------------------------------------------------------


def test_tcp_join_submit_converge(tmp_path):
    async def main():
        runtime = await started(tmp_path)
        a, b = nc.NetClient(), nc.NetClient()
        try:
            await a.connect(LOCAL, runtime.tcp_port)
            await a.wait_synced()
            await b.connect(LOCAL, runtime.tcp_port)
            await b.wait_synced()
            assert a.core.client_id == "c1"
            assert b.core.client_id == "c2"

            op_id = await b.submit(proto.WatchlistAdd("p2"))
            await b.wait_ack(op_id)
            # a sees the same update after one wire hop
            for _ in range(100):
                if a.core.digest() == runtime.core.digest():
                    break
                await asyncio.sleep(0.01)
            assert a.core.digest() == b.core.digest() == runtime.core.digest()
        finally:
            await a.close()
            await b.close()
            await runtime.stop()

    asyncio.run(main())


def test_tcp_late_joiner_receives_full_history(tmp_path):
    async def main():
        runtime = await started(tmp_path)
        a = nc.NetClient()
        try:
            await a.connect(LOCAL, runtime.tcp_port)
            await a.wait_synced()
            for i in range(50):
                await a.wait_ack(await a.submit(proto.WatchlistAdd(f"p{i}")))
            b = nc.NetClient()
            try:
                await b.connect(LOCAL, runtime.tcp_port)
                await b.wait_synced()
                assert b.core.replica.server_seq == runtime.core.state.server_seq
                assert b.core.digest() == runtime.core.digest()
            finally:
                await b.close()
        finally:
            await a.close()
            await runtime.stop()

    asyncio.run(main())


def test_tcp_session_full_rejection(tmp_path):
    async def main():
        runtime = await started(tmp_path, capacity=1)
        a, b = nc.NetClient(), nc.NetClient()
        try:
            await a.connect(LOCAL, runtime.tcp_port)
            await a.wait_synced()
            await b.connect(LOCAL, runtime.tcp_port)
            with pytest.raises(nc.SessionRejected):
                await b.wait_synced(timeout=5)
            assert b.core.rejected is True
        finally:
            await a.close()
            await b.close()
            await runtime.stop()

    asyncio.run(main())


def test_tcp_leave_frees_capacity(tmp_path):
    async def main():
        runtime = await started(tmp_path, capacity=1)
        a = nc.NetClient()
        await a.connect(LOCAL, runtime.tcp_port)
        await a.wait_synced()
        await a.close()
        for _ in range(100):
            if runtime.core.participant_count == 0:
                break
            await asyncio.sleep(0.01)
        b = nc.NetClient()
        try:
            await b.connect(LOCAL, runtime.tcp_port)
            await b.wait_synced()
            assert b.core.phase == SYNCED
        finally:
            await b.close()
            await runtime.stop()

    asyncio.run(main())


def test_load_dataset_broadcast_and_download(tmp_path):
    async def main():
        runtime = await started(tmp_path)
        a = nc.NetClient()
        try:
            await a.connect(LOCAL, runtime.tcp_port)
            await a.wait_synced()
            ref = runtime.load_dataset(SAMPLE_CSV.encode())
            for _ in range(100):
                if a.core.replica.dataset_ref == ref:
                    break
                await asyncio.sleep(0.01)
            assert a.core.replica.dataset_ref == ref
            assert runtime.datasets[ref.content_hash] == SAMPLE_CSV.encode()
            assert ref.content_hash == content_hash(SAMPLE_CSV.encode())
        finally:
            await a.close()
            await runtime.stop()

    asyncio.run(main())


def test_port_in_use(tmp_path):
    async def main():
        blocker = socket.socket()
        blocker.bind((LOCAL, 0))
        blocker.listen(1)
        port = blocker.getsockname()[1]
        try:
            runtime = ServerRuntime(local_config(tcp_port=port,
                                                 data_dir=tmp_path / "artifacts"))
            with pytest.raises(PortInUse):
                await runtime.start()
        finally:
            blocker.close()

    asyncio.run(main())


def test_artifacts_written_on_stop(tmp_path):
    async def main():
        runtime = await started(tmp_path)
        a = nc.NetClient()
        try:
            await a.connect(LOCAL, runtime.tcp_port)
            await a.wait_synced()
            op = proto.CreateSnapshot(
                (vm.SnapshotPoint(0.5, 0.5, 0.5, 1.0),), vm.FACES[0])
            await a.wait_ack(await a.submit(op))
        finally:
            await a.close()
            await runtime.stop()
        snap = tmp_path / "artifacts" / "net-test" / "snapshots" / "snapshot-1.snap"
        assert snap.is_file()
        doc = json.loads(snap.read_text())
        assert doc["creator"] == "c1"

    asyncio.run(main())


# -- discovery ------------------------------------------------------------------


def test_discovery_round_trip(tmp_path):
    async def main():
        runtime = await started(tmp_path)
        try:
            host, port, session_id = await nc.discover(
                port=runtime.discovery_port, host=LOCAL, attempts=2, interval=0.5)
            assert host == LOCAL
            assert port == runtime.tcp_port
            assert session_id == "net-test"
        finally:
            await runtime.stop()

    asyncio.run(main())


def test_discovery_no_server(tmp_path):
    async def main():
        probe = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        probe.bind((LOCAL, 0))
        dead_port = probe.getsockname()[1]
        probe.close()
        with pytest.raises(nc.NoServerFound):
            await nc.discover(port=dead_port, host=LOCAL, attempts=2, interval=0.1)

    asyncio.run(main())


# -- WebSocket -----------------------------------------------------------------------


ANCHOR_WIRE = [
    {"label": "a0", "position": [0.0, 0.0, 0.0]},
    {"label": "a1", "position": [1.0, 0.0, 0.0]},
    {"label": "a2", "position": [0.0, 0.0, 1.0]},
    {"label": "a3", "position": [0.0, 1.0, 0.0]},
]


def ws_join(ws, role="participant"):
    ws.send_text(json.dumps({
        "kind": "join_request", "sender": "new",
        "payload": {"role": role, "version": proto.PROTOCOL_VERSION},
    }))


def ws_upload_anchor(ws, sender="c1"):
    ws.send_text(json.dumps({
        "kind": "anchor_upload", "sender": sender,
        "payload": {"anchor": ANCHOR_WIRE},
    }))


def recv_env(ws):
    text = ws.receive_text()
    doc = json.loads(text)
    # one complete envelope per message, no framing prefix
    assert isinstance(doc, dict) and "kind" in doc
    return doc


def test_ws_join_flow(tmp_path):
    runtime = ServerRuntime(local_config(data_dir=tmp_path))
    with TestClient(runtime.app) as http:
        with http.websocket_connect("/ws") as ws:
            ws_join(ws)
            welcome = recv_env(ws)
            assert welcome["kind"] == "welcome"
            assert welcome["payload"]["client_id"] == "c1"
            assert welcome["payload"]["anchor_needed"] is True
            ws_upload_anchor(ws)
            anchor_info = recv_env(ws)
            assert anchor_info["kind"] == "anchor_info"
            full = recv_env(ws)
            assert full["kind"] == "full_state"
            assert full["payload"]["state"]["server_seq"] == 0

            ws.send_text(json.dumps({
                "kind": "submit_op", "sender": "c1",
                "payload": {"op": {"type": "set_viz_mode", "mode": "barchart"},
                            "op_id": 1},
            }))
            update = recv_env(ws)
            assert update["kind"] == "update"
            assert update["seq"] == 1
            assert update["payload"]["origin"] == "c1"
    assert runtime.core.state.objects[proto.CUBE_ID].state.viz_mode == proto.VIZ_BARCHART


def test_ws_observer_join_and_broadcast(tmp_path):
    runtime = ServerRuntime(local_config(data_dir=tmp_path))
    with TestClient(runtime.app) as http:
        with http.websocket_connect("/ws") as definer:
            ws_join(definer)
            recv_env(definer)  # welcome
            ws_upload_anchor(definer)
            recv_env(definer)  # anchor_info
            recv_env(definer)  # full_state
            with http.websocket_connect("/ws") as obs:
                ws_join(obs, role="observer")
                assert recv_env(obs)["kind"] == "welcome"
                assert recv_env(obs)["kind"] == "anchor_info"
                assert recv_env(obs)["kind"] == "full_state"
                # observer writes are refused over WS too
                obs.send_text(json.dumps({
                    "kind": "submit_op", "sender": "c2",
                    "payload": {"op": {"type": "watchlist_add", "individual_id": "p1"},
                                "op_id": 1},
                }))
                err = recv_env(obs)
                assert err["kind"] == "error"
                assert err["payload"]["code"] == "observer_write_denied"


def test_ws_malformed_message_keeps_connection(tmp_path):
    runtime = ServerRuntime(local_config(data_dir=tmp_path))
    with TestClient(runtime.app) as http:
        with http.websocket_connect("/ws") as ws:
            ws.send_text("this is not an envelope")
            err = recv_env(ws)
            assert err["kind"] == "error"
            assert err["payload"]["code"] == "schema_violation"
            ws_join(ws)
            assert recv_env(ws)["kind"] == "welcome"


# -- HTTP routes ---------------------------------------------------------------------


def test_http_health_and_strings(tmp_path):
    runtime = ServerRuntime(local_config(data_dir=tmp_path))
    with TestClient(runtime.app) as http:
        health = http.get("/health").json()
        assert health["session_id"] == "net-test"
        assert health["server_seq"] == 0
        assert health["participants"] == 0

        r = http.get("/strings.tsv")
        assert r.status_code == 200
        assert "tab-separated-values" in r.headers["content-type"]
        table = loc.parse_table(r.text)
        assert table.completeness_check() == []


def test_http_lang_table_override(tmp_path):
    custom = tmp_path / "strings.tsv"
    custom.write_text("greeting\ten\tHello\ngreeting\tja\tこんにちは\n", encoding="utf-8")
    runtime = ServerRuntime(local_config(data_dir=tmp_path, lang_table=custom))
    with TestClient(runtime.app) as http:
        table = loc.parse_table(http.get("/strings.tsv").text)
        assert table.translate("greeting", "ja") == "こんにちは"
        assert table.keys == {"greeting"}


def test_http_dataset_route(tmp_path):
    runtime = ServerRuntime(local_config(data_dir=tmp_path))
    ref = runtime.load_dataset(SAMPLE_CSV.encode())
    with TestClient(runtime.app) as http:
        r = http.get(f"/data/{ref.content_hash}")
        assert r.status_code == 200
        assert r.content == SAMPLE_CSV.encode()
        assert "text/csv" in r.headers["content-type"]
        assert http.get("/data/0000000000000000").status_code == 404


def test_http_ui_placeholder(tmp_path):
    runtime = ServerRuntime(local_config(data_dir=tmp_path))
    with TestClient(runtime.app) as http:
        r = http.get("/ui/")
        assert r.status_code == 200


def test_http_ui_custom_bundle(tmp_path):
    bundle = tmp_path / "bundle"
    bundle.mkdir()
    (bundle / "index.html").write_text("<h1>custom build</h1>")
    runtime = ServerRuntime(local_config(data_dir=tmp_path, ui_dir=bundle))
    with TestClient(runtime.app) as http:
        r = http.get("/ui/")
        assert r.status_code == 200
        assert "custom build" in r.text
