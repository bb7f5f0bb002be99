/**
 * Live two-client check against a running session server. Connects two
 * replicas over real WebSockets, moves the cube from one, and verifies the
 * other converges to the identical digest within the interaction budget;
 * then round-trips the dataset and pins a snapshot.
 *
 * Usage:
 *   datacube serve --port 8799 --ui-dir dist --data some.csv &
 *   npm run live-check            # defaults to 127.0.0.1:8800
 *   npm run live-check -- host:port
 */

import { ClientCore, SYNCED } from "../src/client.js";
import { blake2bHex } from "../src/blake2b.js";
import { applyFilters, parseCsv, projectPoints } from "../src/dataset.js";
import { faceFromName, projectSnapshot } from "../src/viewmath.js";
import {
  cubeState,
  wallState,
  type EnvelopeW,
  type MappingW,
  type OpW,
  type TransformW,
} from "../src/wire.js";

const host = process.argv[2] ?? "127.0.0.1:8800";
const SYNC_BUDGET_MS = 250;

function log(line: string): void {
  process.stdout.write(line + "\n");
}

async function until(label: string, cond: () => boolean, ms = 5000): Promise<void> {
  const t0 = Date.now();
  while (!cond()) {
    if (Date.now() - t0 > ms) throw new Error(`timeout waiting for ${label}`);
    await new Promise((r) => setTimeout(r, 2));
  }
}

function connect(core: ClientCore): Promise<(envs: EnvelopeW[]) => void> {
  return new Promise((resolve, reject) => {
    const ws = new WebSocket(`ws://${host}/ws`);
    const sendAll = (envs: EnvelopeW[]): void => {
      for (const env of envs) ws.send(JSON.stringify(env));
    };
    ws.onopen = () => {
      core.beginConnect();
      sendAll(core.onConnected(Date.now() / 1000));
      resolve(sendAll);
    };
    ws.onerror = () => reject(new Error(`cannot reach ws://${host}/ws`));
    ws.onmessage = (ev: MessageEvent) => {
      sendAll(core.onMessage(JSON.parse(String(ev.data)) as EnvelopeW, Date.now() / 1000));
    };
  });
}

async function main(): Promise<void> {
  const a = new ClientCore();
  const sendA = await connect(a);
  await until("client A synced", () => a.phase === SYNCED);
  log(`A synced as ${a.clientId} (digest ${a.digest()})`);

  const b = new ClientCore();
  const sendB = await connect(b);
  await until("client B synced", () => b.phase === SYNCED);
  log(`B synced as ${b.clientId} (digest ${b.digest()})`);

  if (a.digest() !== b.digest()) {
    await until("initial digests agree", () => a.digest() === b.digest(), 1000);
  }
  log("initial digests agree");

  // Move the cube from A; B must apply the echo within the budget.
  const lifted: TransformW = {
    rotation: [1, 0, 0, 0],
    translation: [0.25, 1.25, -0.5],
    scale: 1.5,
  };
  const move: OpW = { type: "set_transform", object_id: "cube", transform: lifted };
  const sameTransform = (t: TransformW | undefined): boolean =>
    t !== undefined &&
    t.scale === lifted.scale &&
    t.rotation.every((v, i) => v === lifted.rotation[i]) &&
    t.translation.every((v, i) => v === lifted.translation[i]);
  const { out } = a.submit(move);
  const t0 = Date.now();
  sendA(out);
  await until(
    "B sees the moved cube",
    () => sameTransform(b.replica?.objects.cube?.transform),
    SYNC_BUDGET_MS,
  );
  const dt = Date.now() - t0;
  log(`cube move visible on B after ${dt}ms (budget ${SYNC_BUDGET_MS}ms)`);
  await until("digests agree after move", () => a.digest() === b.digest(), 1000);

  // Round-trip the dataset exactly as the browser does.
  const ref = b.replica?.dataset_ref ?? null;
  if (ref === null) throw new Error("server has no dataset loaded; pass --data to serve");
  const resp = await fetch(`http://${host}/data/${ref.content_hash}`);
  if (!resp.ok) throw new Error(`GET /data/${ref.content_hash} -> ${resp.status}`);
  const csv = await resp.text();
  const gotHash = blake2bHex(new TextEncoder().encode(csv), 8);
  if (gotHash !== ref.content_hash) {
    throw new Error(`content hash mismatch: ${gotHash} != ${ref.content_hash}`);
  }
  const ds = parseCsv(csv);
  log(`dataset fetched and verified (${ds.rows.length} rows, hash ${gotHash})`);

  // Snapshot: A maps channels, projects through a face, pins it to the wall.
  const numeric = ds.columns.filter((c) => c.kind === "numeric").map((c) => c.name);
  if (numeric.length === 0) throw new Error("dataset has no numeric columns");
  const pick = (i: number): string => numeric[i % numeric.length];
  const mapping: MappingW = {
    x: pick(0),
    y: pick(1),
    z: pick(2),
    color: pick(3),
    size: pick(4),
    traces_enabled: false,
  };
  sendA(a.submit({ type: "set_mapping", mapping }).out);
  await until("mapping applied on B", () => {
    const cube = b.replica ? cubeState(b.replica) : null;
    return cube?.mapping?.x === mapping.x;
  });

  const cube = cubeState(b.replica!)!;
  const points = projectPoints(ds, cube.mapping!, applyFilters(ds, cube.filter));
  const snap = projectSnapshot(points, faceFromName("+z"));
  sendB(
    b.submit({
      type: "create_snapshot",
      points: snap.map((p) => [p.u, p.v, p.colorT, p.sizeT] as [number, number, number, number]),
      face: "+z",
    }).out,
  );
  await until("snapshot pinned on A's wall", () => {
    const wall = a.replica ? wallState(a.replica) : null;
    return (wall?.slots ?? []).some((s) => s !== null);
  });
  await until("digests agree after snapshot", () => a.digest() === b.digest(), 1000);
  log(`snapshot pinned (${snap.length} points); final shared digest ${a.digest()}`);

  log("LIVE CHECK PASSED");
  process.exit(0);
}

main().catch((err) => {
  console.error(String(err));
  process.exit(1);
});
