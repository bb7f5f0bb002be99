/**
 * The shared-state reducer, the same pure transition the server applies.
 * Replicas that fold the identical server-ordered op stream are equal down
 * to their canonical bytes; the vitest suite checks that against digests
 * produced by the reference implementation.
 */

import {
  CUBE_ID,
  CubeStateW,
  OpW,
  SERVER_SENDER,
  SessionStateW,
  SharedObjectW,
  SnapshotStateW,
  WALL_ID,
  WallStateW,
  emptyFilter,
  IDENTITY_TRANSFORM_W,
} from "./wire.js";

export class SequenceGapError extends Error {
  constructor(
    readonly expected: number,
    readonly got: number,
  ) {
    super(`expected seq ${expected}, got ${got}`);
  }
}

export function snapshotObjectId(seq: number): string {
  return `snapshot-${seq}`;
}

function replaceCube(
  state: SessionStateW,
  seq: number,
  changes: Partial<CubeStateW>,
): SessionStateW {
  const cube = state.objects[CUBE_ID];
  if (!cube || cube.kind !== "cube") {
    return { ...state, server_seq: seq };
  }
  const nextCube: SharedObjectW = {
    ...cube,
    state: { ...(cube.state as CubeStateW), ...changes },
  };
  return { ...state, objects: { ...state.objects, [CUBE_ID]: nextCube }, server_seq: seq };
}

/** Pure, deterministic transition; ops on missing objects are tolerated as
 * no-ops so a delete racing a move cannot wedge the replica. */
export function applyOp(
  state: SessionStateW,
  seq: number,
  op: OpW,
  origin: string = SERVER_SENDER,
): SessionStateW {
  if (seq !== state.server_seq + 1) {
    throw new SequenceGapError(state.server_seq + 1, seq);
  }

  switch (op.type) {
    case "set_transform": {
      const obj = state.objects[op.object_id];
      if (!obj) return { ...state, server_seq: seq };
      const next: SharedObjectW = { ...obj, transform: op.transform };
      return {
        ...state,
        objects: { ...state.objects, [op.object_id]: next },
        server_seq: seq,
      };
    }
    case "set_mapping":
      return replaceCube(state, seq, { mapping: op.mapping });
    case "set_filter":
      return replaceCube(state, seq, { filter: op.filter });
    case "set_viz_mode":
      return replaceCube(state, seq, { viz_mode: op.mode });
    case "select_row":
      return replaceCube(state, seq, { selected_row: op.row });
    case "watchlist_add": {
      const cube = state.objects[CUBE_ID];
      if (!cube || cube.kind !== "cube") return { ...state, server_seq: seq };
      const wl = (cube.state as CubeStateW).watchlist;
      if (wl.some((e) => e.individual_id === op.individual_id)) {
        return { ...state, server_seq: seq };
      }
      return replaceCube(state, seq, {
        watchlist: [...wl, { individual_id: op.individual_id, added_seq: seq }],
      });
    }
    case "watchlist_remove": {
      const cube = state.objects[CUBE_ID];
      if (!cube || cube.kind !== "cube") return { ...state, server_seq: seq };
      const wl = (cube.state as CubeStateW).watchlist;
      return replaceCube(state, seq, {
        watchlist: wl.filter((e) => e.individual_id !== op.individual_id),
      });
    }
    case "create_snapshot": {
      const snapId = snapshotObjectId(seq);
      const objects = { ...state.objects };
      const snapState: SnapshotStateW = {
        points: op.points,
        face: op.face,
        created_by: origin,
      };
      objects[snapId] = {
        object_id: snapId,
        kind: "snapshot",
        transform: IDENTITY_TRANSFORM_W,
        state: snapState,
      };
      const wall = objects[WALL_ID];
      if (wall && wall.kind === "wall") {
        const slots = [...(wall.state as WallStateW).slots];
        const free = slots.indexOf(null);
        if (free >= 0) slots[free] = snapId;
        else slots.push(snapId);
        objects[WALL_ID] = { ...wall, state: { slots } };
      }
      return {
        ...state,
        objects,
        snapshots: [...state.snapshots, snapId],
        server_seq: seq,
      };
    }
    case "delete_snapshot": {
      if (!(op.snapshot_id in state.objects)) return { ...state, server_seq: seq };
      const objects = { ...state.objects };
      delete objects[op.snapshot_id];
      const wall = objects[WALL_ID];
      if (wall && wall.kind === "wall") {
        const slots = (wall.state as WallStateW).slots.map((s) =>
          s === op.snapshot_id ? null : s,
        );
        objects[WALL_ID] = { ...wall, state: { slots } };
      }
      return {
        ...state,
        objects,
        snapshots: state.snapshots.filter((s) => s !== op.snapshot_id),
        server_seq: seq,
      };
    }
    case "set_user_pose": {
      const poses = { ...state.user_poses };
      if (op.pose === null) delete poses[op.client_id];
      else poses[op.client_id] = op.pose;
      return { ...state, user_poses: poses, server_seq: seq };
    }
    case "load_dataset": {
      // A new dataset invalidates column names and individual ids, so the
      // cube's analysis state resets; snapshots are frozen points and stay.
      const reset = replaceCube(state, seq, {
        mapping: null,
        filter: emptyFilter(),
        selected_row: null,
        watchlist: [],
      });
      return { ...reset, dataset_ref: op.ref };
    }
  }
}
