"""Command-line entry points.

`datacube serve`     run a session server until interrupted
`datacube simulate`  deterministic multi-client run, report to stdout
`datacube validate`  schema-check a CSV file
`datacube export`    watchlist rows from a CSV to a new CSV

Exit codes: 0 ok, 1 validation failure or divergence, 2 usage error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import random
import signal
import sys
from pathlib import Path
from typing import Optional

from . import dataset as ds
from .client import ClientConfig
from .protocol import SetFilter, SetVizMode, VIZ_BARCHART, VIZ_SCATTER, state_digest
from .sim import (
    Scenario,
    ScenarioParseError,
    SimNetConfig,
    parse_scenario,
    report_to_json,
    run_scenario,
)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="datacube")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run a session server")
    serve.add_argument("--port", type=int, default=47800,
                       help="TCP port; WebSocket uses port+1, discovery port-1")
    serve.add_argument("--host", default="0.0.0.0")
    serve.add_argument("--data-dir", type=Path, default=Path("datacube-data"))
    serve.add_argument("--data", type=Path, help="CSV dataset to load at startup")
    serve.add_argument("--lang-table", type=Path, help="override the bundled strings.tsv")
    serve.add_argument("--session-id")
    serve.add_argument("--capacity", type=int, default=6)
    serve.add_argument("--ui-dir", type=Path, help="serve this directory at /ui")

    simulate = sub.add_parser("simulate", help="run a simulated multi-client session")
    simulate.add_argument("--scenario", type=Path, help="scenario JSON file")
    simulate.add_argument("--seed", type=int, default=42)
    simulate.add_argument("--latency", default="5,50", metavar="MIN,MAX",
                          help="one-way latency range in ms")
    simulate.add_argument("--drop", type=float, default=0.0,
                          help="per-connection drop probability per 1s window")
    simulate.add_argument("--real-sockets", action="store_true",
                          help="run over loopback TCP instead of the virtual network")

    validate = sub.add_parser("validate", help="schema-check a CSV file")
    validate.add_argument("path", type=Path)

    export = sub.add_parser("export", help="export watchlist rows from a CSV")
    export.add_argument("--data", type=Path, required=True, help="source CSV")
    export.add_argument("--ids", required=True, help="comma-separated individual ids")
    export.add_argument("--out", type=Path, help="output file (default: stdout)")

    return parser


# -- serve ---------------------------------------------------------------


def cmd_serve(args: argparse.Namespace) -> int:
    from .runtime import PortInUse, ServerConfig, ServerRuntime

    config = ServerConfig(
        host=args.host,
        tcp_port=args.port,
        ws_port=args.port + 1,
        discovery_port=args.port - 1,
        data_dir=args.data_dir,
        capacity=args.capacity,
        session_id=args.session_id,
        dataset_path=args.data,
        lang_table=args.lang_table,
        ui_dir=args.ui_dir,
    )

    async def run() -> int:
        runtime = ServerRuntime(config)
        try:
            await runtime.start()
        except PortInUse as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAIL
        stop = asyncio.Event()
        loop = asyncio.get_running_loop()
        for sig in (signal.SIGINT, signal.SIGTERM):
            loop.add_signal_handler(sig, stop.set)
        # Flush so wrappers watching the pipe see the ports immediately.
        print(f"session {runtime.session_id}: tcp={runtime.tcp_port} "
              f"ws={runtime.ws_port} discovery={runtime.discovery_port}", flush=True)
        await stop.wait()
        await runtime.stop()
        print(f"artifacts persisted under {config.data_dir / runtime.session_id}",
              flush=True)
        return EXIT_OK

    return asyncio.run(run())


# -- simulate ------------------------------------------------------------


def _load_scenario(path: Optional[Path]) -> Scenario:
    if path is None:
        return Scenario()
    return parse_scenario(path.read_text(encoding="utf-8"))


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        lo, hi = (float(v) for v in args.latency.split(","))
    except ValueError:
        print("error: --latency expects MIN,MAX in ms", file=sys.stderr)
        return EXIT_USAGE
    try:
        scenario = _load_scenario(args.scenario)
        config = SimNetConfig(seed=args.seed, latency_ms=(lo, hi),
                              drop_probability=args.drop)
    except (ScenarioParseError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL

    if args.real_sockets:
        report = asyncio.run(_simulate_real_sockets(scenario, config))
        print(json.dumps(report, indent=2, sort_keys=True))
        return EXIT_OK if report["converged"] else EXIT_FAIL

    report = run_scenario(scenario, config)
    print(report_to_json(report))
    return EXIT_OK if report["converged"] else EXIT_FAIL


async def _simulate_real_sockets(scenario: Scenario, config: SimNetConfig) -> dict:
    """Loopback-TCP variant: same convergence check, real clocks and sockets.

    Smaller op budgets than the virtual network (each op waits for its ack),
    and the report carries wall-clock values, so byte-identical reruns are
    not promised here.
    """
    from .netclient import NetClient
    from .runtime import ServerConfig, ServerRuntime

    runtime = ServerRuntime(ServerConfig(
        host="127.0.0.1", tcp_port=0, ws_port=0, discovery_port=0,
        data_dir=Path("datacube-data"),
    ))
    await runtime.start()
    clients: list[NetClient] = []
    try:
        for i in range(scenario.participants):
            client = NetClient(ClientConfig())
            await client.connect("127.0.0.1", runtime.tcp_port)
            await client.wait_synced()
            clients.append(client)

        quota = max(1, scenario.random_ops // max(1, scenario.participants))
        quota = min(quota, 50)  # acked one-by-one; keep wall time short
        for index, client in enumerate(clients):
            rng = random.Random((config.seed << 8) ^ index)
            for _ in range(quota):
                if rng.random() < 0.5:
                    op = SetFilter(ds.FilterState(
                        year_range=(2000 + rng.randrange(10), 2015 + rng.randrange(10))))
                else:
                    op = SetVizMode(rng.choice((VIZ_SCATTER, VIZ_BARCHART)))
                op_id = await client.submit(op)
                await client.wait_ack(op_id)

        await asyncio.sleep(0.2)  # drain broadcasts to the other replicas
        digests = sorted({c.core.digest() for c in clients})
        server_digest = state_digest(runtime.core.state)
        return {
            "converged": digests == [server_digest],
            "client_digests": digests,
            "canonical_digest": server_digest,
            "participants": scenario.participants,
            "ops_per_client": quota,
            "real_sockets": True,
            "server_seq": runtime.core.state.server_seq,
        }
    finally:
        for client in clients:
            await client.close()
        await runtime.stop()


# -- validate ------------------------------------------------------------


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        data = args.path.read_bytes()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL

    dataset, errors = ds.validate_csv(data)
    if dataset is not None:
        print("columns:")
        for col in dataset.columns:
            print(f"  {col.name}: {col.kind.value}")
        print(f"rows: {len(dataset.rows)}")
        print(f"individuals: {len(dataset.individuals)}")
    if errors:
        print(f"errors: {len(errors)}")
        for err in errors:
            where = "header" if err.row == 0 else f"line {err.row + 1}"
            print(f"  {where}: {type(err).__name__}: {err}")
        return EXIT_FAIL
    return EXIT_OK


# -- export --------------------------------------------------------------


def cmd_export(args: argparse.Namespace) -> int:
    try:
        data = args.data.read_bytes()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    try:
        dataset = ds.parse_csv(data)
    except ds.CsvFormatError as exc:
        print(f"error: {args.data}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL

    watchlist = ds.Watchlist()
    for i, individual_id in enumerate(args.ids.split(",")):
        try:
            watchlist = ds.watchlist_add(
                watchlist, dataset, individual_id.strip(), created_at=float(i))
        except ds.UnknownIndividual:
            print(f"error: unknown individual {individual_id.strip()!r}", file=sys.stderr)
            return EXIT_FAIL

    text = ds.watchlist_export(watchlist, dataset)
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {
        "serve": cmd_serve,
        "simulate": cmd_simulate,
        "validate": cmd_validate,
        "export": cmd_export,
    }[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
