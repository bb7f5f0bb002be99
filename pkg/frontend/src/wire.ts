/**
 * Wire-level protocol types and the canonical state serialization.
 *
 * The browser keeps its replica in exactly the JSON shape the server sends,
 * so messages apply without a conversion layer. Because JSON.parse collapses
 * the server's float/int distinction, canonical text (and therefore the state
 * digest) is produced by a schema-directed writer that knows which fields are
 * floats: `1` parsed from a `scale` is still rendered `1.0`.
 */

import {
  JSON_NULL,
  codePointCompare,
  floatRepr,
  intRepr,
  jsonArray,
  jsonBool,
  jsonObject,
  jsonString,
} from "./canonical.js";
import { blake2bHex } from "./blake2b.js";

export const PROTOCOL_VERSION = "DATACUBE/1";
export const SERVER_SENDER = "server";

export const ROLE_PARTICIPANT = "participant";
export const ROLE_OBSERVER = "observer";

export const VIZ_SCATTER = "scatter";
export const VIZ_BARCHART = "barchart";
export const VIZ_MODES = [VIZ_SCATTER, VIZ_BARCHART] as const;

export const CUBE_ID = "cube";
export const WALL_ID = "wall";

// Message kinds.
export const JOIN_REQUEST = "join_request";
export const WELCOME = "welcome";
export const ANCHOR_UPLOAD = "anchor_upload";
export const ANCHOR_INFO = "anchor_info";
export const SUBMIT_OP = "submit_op";
export const UPDATE = "update";
export const FULL_STATE = "full_state";
export const HEARTBEAT = "heartbeat";
export const LEAVE = "leave";
export const ERROR = "error";

// Error codes.
export const ERR_VERSION_MISMATCH = "version_mismatch";
export const ERR_SESSION_FULL = "session_full";
export const ERR_NOT_JOINED = "not_joined";
export const ERR_OBSERVER_WRITE_DENIED = "observer_write_denied";
export const ERR_SCHEMA_VIOLATION = "schema_violation";

export type Vec3W = [number, number, number];
export type QuatW = [number, number, number, number]; // scalar-first: w, x, y, z

export interface TransformW {
  rotation: QuatW;
  translation: Vec3W;
  scale: number;
}

export interface PoseW {
  position: Vec3W;
  orientation: QuatW;
}

export interface MappingW {
  x: string;
  y: string;
  z: string;
  color: string;
  size: string;
  traces_enabled: boolean;
}

export interface FilterW {
  numeric_ranges: Record<string, [number, number]>;
  year_range: [number, number] | null;
  regions: string[] | null;
}

export interface WatchlistEntryW {
  individual_id: string;
  added_seq: number;
}

export interface CubeStateW {
  mapping: MappingW | null;
  filter: FilterW;
  viz_mode: string;
  selected_row: number | null;
  watchlist: WatchlistEntryW[];
}

export interface WallStateW {
  slots: (string | null)[];
}

/** [u, v, color_t, size_t], each in [0, 1]. */
export type SnapshotPointW = [number, number, number, number];

export interface SnapshotStateW {
  points: SnapshotPointW[];
  face: string;
  created_by: string;
}

export type ObjectKind = "cube" | "wall" | "snapshot";

export interface SharedObjectW {
  object_id: string;
  kind: ObjectKind;
  transform: TransformW;
  state: CubeStateW | WallStateW | SnapshotStateW;
}

export interface ColumnW {
  name: string;
  kind: "id" | "year" | "region" | "numeric";
}

export interface DatasetRefW {
  content_hash: string;
  columns: ColumnW[];
}

export interface SessionStateW {
  objects: Record<string, SharedObjectW>;
  server_seq: number;
  dataset_ref: DatasetRefW | null;
  snapshots: string[];
  user_poses: Record<string, PoseW>;
}

export interface AnchorPointW {
  label: string;
  position: Vec3W;
}

export type OpW =
  | { type: "set_transform"; object_id: string; transform: TransformW }
  | { type: "set_mapping"; mapping: MappingW }
  | { type: "set_filter"; filter: FilterW }
  | { type: "set_viz_mode"; mode: string }
  | { type: "select_row"; row: number | null }
  | { type: "watchlist_add"; individual_id: string }
  | { type: "watchlist_remove"; individual_id: string }
  | { type: "create_snapshot"; points: SnapshotPointW[]; face: string }
  | { type: "delete_snapshot"; snapshot_id: string }
  | { type: "set_user_pose"; client_id: string; pose: PoseW | null }
  | { type: "load_dataset"; ref: DatasetRefW };

export interface EnvelopeW {
  kind: string;
  sender: string;
  payload: unknown;
  seq?: number;
}

export function emptyFilter(): FilterW {
  return { numeric_ranges: {}, year_range: null, regions: null };
}

export const IDENTITY_TRANSFORM_W: TransformW = {
  rotation: [1.0, 0.0, 0.0, 0.0],
  translation: [0.0, 0.0, 0.0],
  scale: 1.0,
};

/** Default placement: cube on a virtual table, wall behind it. */
export function initialSessionState(): SessionStateW {
  return {
    objects: {
      [CUBE_ID]: {
        object_id: CUBE_ID,
        kind: "cube",
        transform: { rotation: [1, 0, 0, 0], translation: [0, 1, 0], scale: 0.6 },
        state: {
          mapping: null,
          filter: emptyFilter(),
          viz_mode: VIZ_SCATTER,
          selected_row: null,
          watchlist: [],
        },
      },
      [WALL_ID]: {
        object_id: WALL_ID,
        kind: "wall",
        transform: { rotation: [1, 0, 0, 0], translation: [0, 1.5, -2.5], scale: 2.0 },
        state: { slots: [] },
      },
    },
    server_seq: 0,
    dataset_ref: null,
    snapshots: [],
    user_poses: {},
  };
}

export function isCubeState(o: SharedObjectW): o is SharedObjectW & { state: CubeStateW } {
  return o.kind === "cube";
}

export function cubeState(state: SessionStateW): CubeStateW | null {
  const cube = state.objects[CUBE_ID];
  return cube && cube.kind === "cube" ? (cube.state as CubeStateW) : null;
}

export function wallState(state: SessionStateW): WallStateW | null {
  const wall = state.objects[WALL_ID];
  return wall && wall.kind === "wall" ? (wall.state as WallStateW) : null;
}

// ---------------------------------------------------------------------------
// Canonical serialization (must match the server byte for byte)

function canonVec3(v: Vec3W): string {
  return jsonArray(v.map(floatRepr));
}

function canonQuat(q: QuatW): string {
  return jsonArray(q.map(floatRepr));
}

function canonTransform(t: TransformW): string {
  return jsonObject([
    ["rotation", canonQuat(t.rotation)],
    ["translation", canonVec3(t.translation)],
    ["scale", floatRepr(t.scale)],
  ]);
}

function canonPose(p: PoseW): string {
  return jsonObject([
    ["position", canonVec3(p.position)],
    ["orientation", canonQuat(p.orientation)],
  ]);
}

function canonMapping(m: MappingW): string {
  return jsonObject([
    ["x", jsonString(m.x)],
    ["y", jsonString(m.y)],
    ["z", jsonString(m.z)],
    ["color", jsonString(m.color)],
    ["size", jsonString(m.size)],
    ["traces_enabled", jsonBool(m.traces_enabled)],
  ]);
}

function canonFilter(f: FilterW): string {
  const ranges = Object.keys(f.numeric_ranges)
    .sort(codePointCompare)
    .map((col): [string, string] => [
      col,
      jsonArray(f.numeric_ranges[col].map(floatRepr)),
    ]);
  return jsonObject([
    ["numeric_ranges", jsonObject(ranges)],
    ["year_range", f.year_range === null ? JSON_NULL : jsonArray(f.year_range.map(intRepr))],
    [
      "regions",
      f.regions === null
        ? JSON_NULL
        : jsonArray([...f.regions].sort(codePointCompare).map(jsonString)),
    ],
  ]);
}

function canonSnapshotPoints(points: SnapshotPointW[]): string {
  return jsonArray(points.map((p) => jsonArray(p.map(floatRepr))));
}

function canonCubeState(s: CubeStateW): string {
  return jsonObject([
    ["mapping", s.mapping === null ? JSON_NULL : canonMapping(s.mapping)],
    ["filter", canonFilter(s.filter)],
    ["viz_mode", jsonString(s.viz_mode)],
    ["selected_row", s.selected_row === null ? JSON_NULL : intRepr(s.selected_row)],
    [
      "watchlist",
      jsonArray(
        s.watchlist.map((e) =>
          jsonObject([
            ["individual_id", jsonString(e.individual_id)],
            ["added_seq", intRepr(e.added_seq)],
          ]),
        ),
      ),
    ],
  ]);
}

function canonObject(o: SharedObjectW): string {
  let state: string;
  if (o.kind === "cube") {
    state = canonCubeState(o.state as CubeStateW);
  } else if (o.kind === "wall") {
    const slots = (o.state as WallStateW).slots;
    state = jsonObject([
      ["slots", jsonArray(slots.map((s) => (s === null ? JSON_NULL : jsonString(s))))],
    ]);
  } else {
    const s = o.state as SnapshotStateW;
    state = jsonObject([
      ["points", canonSnapshotPoints(s.points)],
      ["face", jsonString(s.face)],
      ["created_by", jsonString(s.created_by)],
    ]);
  }
  return jsonObject([
    ["object_id", jsonString(o.object_id)],
    ["kind", jsonString(o.kind)],
    ["transform", canonTransform(o.transform)],
    ["state", state],
  ]);
}

function canonRef(ref: DatasetRefW): string {
  return jsonObject([
    ["content_hash", jsonString(ref.content_hash)],
    [
      "columns",
      jsonArray(
        ref.columns.map((c) =>
          jsonObject([
            ["name", jsonString(c.name)],
            ["kind", jsonString(c.kind)],
          ]),
        ),
      ),
    ],
  ]);
}

export function canonicalState(state: SessionStateW): string {
  const objects = Object.keys(state.objects)
    .sort(codePointCompare)
    .map((oid): [string, string] => [oid, canonObject(state.objects[oid])]);
  const poses = Object.keys(state.user_poses)
    .sort(codePointCompare)
    .map((cid): [string, string] => [cid, canonPose(state.user_poses[cid])]);
  return jsonObject([
    ["objects", jsonObject(objects)],
    ["server_seq", intRepr(state.server_seq)],
    ["dataset_ref", state.dataset_ref === null ? JSON_NULL : canonRef(state.dataset_ref)],
    ["snapshots", jsonArray(state.snapshots.map(jsonString))],
    ["user_poses", jsonObject(poses)],
  ]);
}

/** 64-bit BLAKE2b hex over the canonical serialization, as the server computes it. */
export function stateDigest(state: SessionStateW): string {
  return blake2bHex(new TextEncoder().encode(canonicalState(state)), 8);
}
