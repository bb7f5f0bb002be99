/**
 * Application view model: the synced replica plus everything local to this
 * tab — orbit camera, hovered row, ghost transform during drags, language,
 * and the parsed dataset. Pure of DOM and three.js so tests can drive it.
 */

import { ClientCore, NotSyncedError, SYNCED } from "./client.js";
import type { Connection } from "./net.js";
import {
  CUBE_ID,
  ROLE_OBSERVER,
  VIZ_SCATTER,
  cubeState,
  wallState,
  type FilterW,
  type MappingW,
  type OpW,
  type SessionStateW,
  type SharedObjectW,
  type TransformW,
} from "./wire.js";
import {
  applyFilters,
  buildTraces,
  numericColumns,
  parseCsv,
  projectPoints,
  type Dataset,
} from "./dataset.js";
import {
  axisAngle,
  faceName,
  normalized,
  quatMul,
  selectFace,
  projectSnapshot,
  type NormPoint,
  type V3,
} from "./viewmath.js";
import { StringTable, resolveLanguage } from "./i18n.js";

export interface OrbitCamera {
  azimuth: number; // radians around +y
  elevation: number; // radians above horizon
  distance: number;
  target: V3;
}

export const DEFAULT_CAMERA: OrbitCamera = {
  azimuth: 0,
  elevation: 0.35,
  distance: 3.2,
  target: [0, 1, 0],
};

export function cameraPosition(cam: OrbitCamera): V3 {
  const ce = Math.cos(cam.elevation);
  return [
    cam.target[0] + cam.distance * ce * Math.sin(cam.azimuth),
    cam.target[1] + cam.distance * Math.sin(cam.elevation),
    cam.target[2] + cam.distance * ce * Math.cos(cam.azimuth),
  ];
}

/** The gaze direction: from the camera toward its orbit target. */
export function cameraForward(cam: OrbitCamera): V3 {
  const pos = cameraPosition(cam);
  return normalized([
    cam.target[0] - pos[0],
    cam.target[1] - pos[1],
    cam.target[2] - pos[2],
  ]);
}

/** Orientation quaternion turning -z into the camera forward (yaw/pitch). */
export function cameraOrientation(cam: OrbitCamera): [number, number, number, number] {
  const yaw = axisAngle([0, 1, 0], cam.azimuth + Math.PI);
  const pitch = axisAngle([1, 0, 0], cam.elevation);
  return quatMul(yaw, pitch);
}

export interface Ghost {
  objectId: string;
  transform: TransformW;
  opId: number | null; // set once the release op is submitted
}

export class ViewModel {
  readonly core: ClientCore;
  readonly table: StringTable;
  conn: Connection | null = null;

  camera: OrbitCamera = { ...DEFAULT_CAMERA, target: [...DEFAULT_CAMERA.target] as V3 };
  hoveredRow: number | null = null;
  ghost: Ghost | null = null;

  dataset: Dataset | null = null;
  datasetHash: string | null = null;
  datasetError: string | null = null;
  private fetchingHash: string | null = null;

  private listeners = new Set<() => void>();

  constructor(core: ClientCore, table: StringTable, requestedLanguage: string) {
    this.core = core;
    this.table = table;
    core.localPrefs.language = resolveLanguage(requestedLanguage, table);
  }

  // -- change propagation -----------------------------------------------------

  subscribe(fn: () => void): () => void {
    this.listeners.add(fn);
    return () => this.listeners.delete(fn);
  }

  notify(): void {
    this.reconcileGhost();
    for (const fn of this.listeners) fn();
  }

  /** Drop the ghost as soon as its op is acknowledged (the echoed update has
   * already been applied, so the canonical transform has caught up). */
  private reconcileGhost(): void {
    if (this.ghost && this.ghost.opId !== null && this.core.ackOf(this.ghost.opId) !== undefined) {
      this.ghost = null;
    }
  }

  // -- derived state ------------------------------------------------------

  get replica(): SessionStateW | null {
    return this.core.replica;
  }

  get language(): string {
    return this.core.localPrefs.language;
  }

  get isObserver(): boolean {
    return this.core.role === ROLE_OBSERVER;
  }

  get canEdit(): boolean {
    return !this.isObserver && this.core.phase === SYNCED;
  }

  t(key: string): string {
    return this.table.translate(key, this.language);
  }

  object(objectId: string): SharedObjectW | null {
    return this.replica?.objects[objectId] ?? null;
  }

  /** Transform to render an object at: the ghost wins while a drag is live. */
  renderTransform(objectId: string): TransformW | null {
    if (this.ghost && this.ghost.objectId === objectId) return this.ghost.transform;
    return this.object(objectId)?.transform ?? null;
  }

  visibleRows(): number[] {
    const cube = this.replica ? cubeState(this.replica) : null;
    if (!cube || !this.dataset) return [];
    return applyFilters(this.dataset, cube.filter);
  }

  scatterPoints(): NormPoint[] {
    const cube = this.replica ? cubeState(this.replica) : null;
    if (!cube || !cube.mapping || !this.dataset) return [];
    return projectPoints(this.dataset, cube.mapping, this.visibleRows());
  }

  traces() {
    const cube = this.replica ? cubeState(this.replica) : null;
    if (!cube || !cube.mapping || !cube.mapping.traces_enabled || !this.dataset) return [];
    if (cube.viz_mode !== VIZ_SCATTER) return [];
    return buildTraces(this.dataset, cube.mapping, this.visibleRows());
  }

  /** Default mapping once a dataset arrives: first numeric columns, cycled. */
  defaultMapping(): MappingW | null {
    if (!this.dataset) return null;
    const cols = numericColumns(this.dataset);
    if (cols.length === 0) return null;
    const pick = (i: number) => cols[i % cols.length];
    return {
      x: pick(0),
      y: pick(1),
      z: pick(2),
      color: pick(3),
      size: pick(4),
      traces_enabled: false,
    };
  }

  // -- dataset loading ------------------------------------------------------

  /** Fetch and parse the session dataset when the replica's ref changes. */
  async ensureDataset(httpBase: string): Promise<void> {
    const ref = this.replica?.dataset_ref ?? null;
    if (ref === null) {
      if (this.dataset !== null || this.datasetHash !== null) {
        this.dataset = null;
        this.datasetHash = null;
        this.notify();
      }
      return;
    }
    if (ref.content_hash === this.datasetHash || ref.content_hash === this.fetchingHash) return;
    this.fetchingHash = ref.content_hash;
    try {
      const resp = await fetch(`${httpBase}/data/${ref.content_hash}`);
      if (!resp.ok) throw new Error(`dataset fetch failed: ${resp.status}`);
      const text = await resp.text();
      const ds = parseCsv(text);
      // A newer ref may have superseded this fetch.
      if (this.replica?.dataset_ref?.content_hash !== ref.content_hash) return;
      this.dataset = ds;
      this.datasetHash = ref.content_hash;
      this.datasetError = null;
    } catch (err) {
      this.datasetError = err instanceof Error ? err.message : String(err);
    } finally {
      if (this.fetchingHash === ref.content_hash) this.fetchingHash = null;
    }
    this.notify();
  }

  // -- actions ------------------------------------------------------

  private submit(op: OpW): number | null {
    if (!this.conn || !this.canEdit) return null;
    try {
      return this.conn.submit(op);
    } catch (err) {
      if (err instanceof NotSyncedError) return null;
      throw err;
    }
  }

  setVizMode(mode: string): void {
    this.submit({ type: "set_viz_mode", mode });
  }

  setMapping(mapping: MappingW): void {
    this.submit({ type: "set_mapping", mapping });
  }

  setFilter(filter: FilterW): void {
    this.submit({ type: "set_filter", filter });
  }

  selectRow(row: number | null): void {
    this.submit({ type: "select_row", row });
  }

  watchlistAdd(individualId: string): void {
    this.submit({ type: "watchlist_add", individual_id: individualId });
  }

  watchlistRemove(individualId: string): void {
    this.submit({ type: "watchlist_remove", individual_id: individualId });
  }

  deleteSnapshot(snapshotId: string): void {
    this.submit({ type: "delete_snapshot", snapshot_id: snapshotId });
  }

  /** Flatten the live scatter through the face best aligned with the current
   * gaze and pin it to the wall. */
  takeSnapshot(): void {
    const cube = this.object(CUBE_ID);
    const state = this.replica ? cubeState(this.replica) : null;
    if (!cube || !state || !state.mapping || !this.dataset) return;
    const points = this.scatterPoints();
    const face = selectFace(cameraForward(this.camera), cube.transform.rotation);
    const snap = projectSnapshot(points, face);
    this.submit({
      type: "create_snapshot",
      points: snap.map((p) => [p.u, p.v, p.colorT, p.sizeT] as [number, number, number, number]),
      face: faceName(face),
    });
  }

  // -- drag lifecycle ------------------------------------------------------

  beginDrag(objectId: string): boolean {
    const obj = this.object(objectId);
    if (!obj || !this.canEdit || this.ghost) return false;
    this.ghost = {
      objectId,
      transform: {
        rotation: [...obj.transform.rotation] as TransformW["rotation"],
        translation: [...obj.transform.translation] as TransformW["translation"],
        scale: obj.transform.scale,
      },
      opId: null,
    };
    return true;
  }

  updateDrag(transform: TransformW): void {
    if (!this.ghost || this.ghost.opId !== null) return;
    this.ghost.transform = transform;
    this.notify();
  }

  endDrag(): void {
    if (!this.ghost || this.ghost.opId !== null) return;
    const opId = this.submit({
      type: "set_transform",
      object_id: this.ghost.objectId,
      transform: this.ghost.transform,
    });
    if (opId === null) {
      this.ghost = null; // nothing sent; revert to canonical
      this.notify();
      return;
    }
    this.ghost.opId = opId;
  }

  cancelDrag(): void {
    if (!this.ghost || this.ghost.opId !== null) return;
    this.ghost = null;
    this.notify();
  }

  // -- local preferences ------------------------------------------------------

  setLanguage(lang: string): void {
    this.core.setLanguage(resolveLanguage(lang, this.table));
    this.notify();
  }

  onPointerSource(source: string): void {
    this.core.onPointer(source);
    this.notify();
  }
}
