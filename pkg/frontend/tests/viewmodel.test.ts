import { describe, expect, it } from "vitest";
import { ClientCore, RECONNECTING, SYNCED } from "../src/client.js";
import { parseCsv } from "../src/dataset.js";
import { parseTable } from "../src/i18n.js";
import type { Connection } from "../src/net.js";
import {
  cameraForward,
  DEFAULT_CAMERA,
  ViewModel,
} from "../src/viewmodel.js";
import { faceName, selectFace } from "../src/viewmath.js";
import {
  CUBE_ID,
  cubeState,
  FULL_STATE,
  ROLE_OBSERVER,
  UPDATE,
  WELCOME,
  type EnvelopeW,
  type OpW,
  type SessionStateW,
  type TransformW,
} from "../src/wire.js";
import { expectSameFloat, loadFixture, loadText } from "./helpers.js";

interface ScriptStep {
  seq: number;
  origin: string;
  op: OpW;
  canonical: string;
  digest: string;
}

interface Script {
  initial_canonical: string;
  steps: ScriptStep[];
}

interface Cases {
  csv: string;
  content_hash: string;
  projected: {
    row_index: number;
    position_bits: [string, string, string];
    color_bits: string;
    size_bits: string;
  }[];
  snapshot_faces: Record<
    string,
    { u_bits: string; v_bits: string; color_bits: string; size_bits: string }[]
  >;
}

const script = loadFixture<Script>("state_script.json");
const cases = loadFixture<Cases>("dataset_cases.json");
const table = parseTable(loadText("strings.tsv"));

interface Rig {
  vm: ViewModel;
  core: ClientCore;
  sent: EnvelopeW[];
  feed: (op: OpW, origin?: string, opId?: number) => void;
}

/** A synced viewmodel over the scripted session: dataset loaded, mapping and
 * filter applied, cube rotated (script steps 1-4), connection stubbed. */
function rig(options: { role?: string; steps?: number } = {}): Rig {
  const core = new ClientCore({ role: options.role });
  core.beginConnect();
  core.onConnected(0);
  core.onMessage(
    {
      kind: WELCOME,
      sender: "server",
      payload: { client_id: "c1", session_id: "s1", anchor_needed: true },
    },
    0,
  );
  core.onMessage(
    {
      kind: FULL_STATE,
      sender: "server",
      payload: { state: JSON.parse(script.initial_canonical) as SessionStateW },
    },
    0,
  );

  const vm = new ViewModel(core, table, "en");
  const sent: EnvelopeW[] = [];
  vm.conn = {
    submit(op: OpW): number {
      const { opId, out } = core.submit(op);
      sent.push(...out);
      return opId;
    },
  } as unknown as Connection;

  const feed = (op: OpW, origin = "server", opId = 0): void => {
    const seq = core.replica!.server_seq + 1;
    core.onMessage(
      { kind: UPDATE, sender: "server", seq, payload: { op, origin, op_id: opId } },
      0,
    );
    vm.notify();
  };

  for (const step of script.steps.slice(0, options.steps ?? 4)) {
    feed(step.op, step.origin);
  }

  vm.dataset = parseCsv(cases.csv);
  vm.datasetHash = cases.content_hash;
  return { vm, core, sent, feed };
}

describe("scatter pipeline", () => {
  it("projects the replica's mapping and filter exactly like the server", () => {
    const { vm } = rig();
    const points = vm.scatterPoints();
    expect(points.length).toBe(cases.projected.length);
    cases.projected.forEach((want, i) => {
      expect(points[i].rowIndex).toBe(want.row_index);
      want.position_bits.forEach((b, axis) =>
        expectSameFloat(points[i].position[axis], b, `point ${i} axis ${axis}`),
      );
    });
  });

  it("gates traces on scatter mode", () => {
    const { vm, feed } = rig();
    expect(vm.traces().length).toBeGreaterThan(0);
    feed({ type: "set_viz_mode", mode: "barchart" });
    expect(vm.traces()).toEqual([]);
  });
});

describe("takeSnapshot", () => {
  it("submits the oracle projection for the gaze-selected face", () => {
    const { vm, sent } = rig();
    vm.takeSnapshot();
    expect(sent).toHaveLength(1);
    const op = (sent[0].payload as { op: OpW }).op;
    expect(op.type).toBe("create_snapshot");
    if (op.type !== "create_snapshot") return;

    const cube = vm.object(CUBE_ID)!;
    const face = selectFace(cameraForward(vm.camera), cube.transform.rotation);
    expect(op.face).toBe(faceName(face));

    const want = cases.snapshot_faces[op.face];
    expect(op.points.length).toBe(want.length);
    want.forEach((w, i) => {
      expectSameFloat(op.points[i][0], w.u_bits, `point ${i} u`);
      expectSameFloat(op.points[i][1], w.v_bits, `point ${i} v`);
      expectSameFloat(op.points[i][2], w.color_bits, `point ${i} color`);
      expectSameFloat(op.points[i][3], w.size_bits, `point ${i} size`);
    });
  });

  it("does nothing without a mapping", () => {
    const { vm, sent } = rig({ steps: 1 }); // dataset loaded, no mapping yet
    vm.takeSnapshot();
    expect(sent).toHaveLength(0);
  });
});

describe("drag ghosting", () => {
  const lifted: TransformW = {
    rotation: [1, 0, 0, 0],
    translation: [0.5, 1.5, -0.5],
    scale: 0.9,
  };

  it("previews locally, submits on release, reconciles on the echo", () => {
    const { vm, core, sent, feed } = rig();
    const canonicalBefore = vm.object(CUBE_ID)!.transform;

    expect(vm.beginDrag(CUBE_ID)).toBe(true);
    vm.updateDrag(lifted);
    expect(vm.renderTransform(CUBE_ID)).toBe(lifted);
    // The replica is untouched while the ghost is live.
    expect(vm.object(CUBE_ID)!.transform).toEqual(canonicalBefore);
    expect(sent).toHaveLength(0);

    vm.endDrag();
    expect(sent).toHaveLength(1);
    const payload = sent[0].payload as { op: OpW; op_id: number };
    expect(payload.op).toEqual({
      type: "set_transform",
      object_id: CUBE_ID,
      transform: lifted,
    });
    // Held until the echo: the ghost still wins.
    expect(vm.renderTransform(CUBE_ID)).toBe(lifted);

    feed(payload.op, "c1", payload.op_id);
    expect(core.ackOf(payload.op_id)).toBeDefined();
    expect(vm.ghost).toBeNull();
    expect(vm.renderTransform(CUBE_ID)).toEqual(lifted);
    expect(vm.object(CUBE_ID)!.transform).toEqual(lifted);
  });

  it("ignores a second grab while a drag is live", () => {
    const { vm } = rig();
    expect(vm.beginDrag(CUBE_ID)).toBe(true);
    expect(vm.beginDrag("wall")).toBe(false);
  });

  it("reverts on cancel without sending anything", () => {
    const { vm, sent } = rig();
    const canonical = vm.object(CUBE_ID)!.transform;
    vm.beginDrag(CUBE_ID);
    vm.updateDrag(lifted);
    vm.cancelDrag();
    expect(vm.ghost).toBeNull();
    expect(vm.renderTransform(CUBE_ID)).toEqual(canonical);
    expect(sent).toHaveLength(0);
  });

  it("reverts when the release cannot be submitted", () => {
    const { vm, core, sent } = rig();
    const canonical = vm.object(CUBE_ID)!.transform;
    vm.beginDrag(CUBE_ID);
    vm.updateDrag(lifted);
    core.onDisconnected();
    expect(core.phase).toBe(RECONNECTING);
    vm.endDrag();
    expect(vm.ghost).toBeNull();
    expect(vm.renderTransform(CUBE_ID)).toEqual(canonical);
    expect(sent).toHaveLength(0);
  });
});

describe("edit gating", () => {
  it("blocks observers from every mutation", () => {
    const { vm, sent } = rig({ role: ROLE_OBSERVER });
    expect(vm.isObserver).toBe(true);
    expect(vm.canEdit).toBe(false);
    expect(vm.beginDrag(CUBE_ID)).toBe(false);
    vm.setVizMode("barchart");
    vm.selectRow(1);
    vm.watchlistAdd("p1");
    vm.takeSnapshot();
    expect(sent).toHaveLength(0);
  });

  it("allows participants", () => {
    const { vm, core } = rig();
    expect(vm.canEdit).toBe(true);
    expect(core.phase).toBe(SYNCED);
  });
});

describe("local state", () => {
  it("switches languages locally, falling back to en for unknown codes", () => {
    const { vm, sent } = rig();
    const en = table.translate("app.title", "en");
    const ja = table.translate("app.title", "ja");
    expect(vm.t("app.title")).toBe(en);
    vm.setLanguage("ja");
    expect(vm.language).toBe("ja");
    expect(vm.t("app.title")).toBe(ja);
    vm.setLanguage("xx");
    expect(vm.language).toBe("en");
    // Language changes never touch the wire.
    expect(sent).toHaveLength(0);
  });

  it("derives the default mapping by cycling numeric columns", () => {
    const { vm } = rig();
    expect(vm.defaultMapping()).toEqual({
      x: "alpha",
      y: "beta",
      z: "gamma",
      color: "alpha",
      size: "beta",
      traces_enabled: false,
    });
  });

  it("notifies subscribers and stops after unsubscribe", () => {
    const { vm } = rig();
    let calls = 0;
    const off = vm.subscribe(() => {
      calls += 1;
    });
    vm.notify();
    expect(calls).toBe(1);
    off();
    vm.notify();
    expect(calls).toBe(1);
  });

  it("keeps the default camera stable", () => {
    expect(DEFAULT_CAMERA.distance).toBeGreaterThan(0);
    const fwd = cameraForward(DEFAULT_CAMERA);
    const len = Math.hypot(...fwd);
    expect(len).toBeCloseTo(1, 12);
  });
});
