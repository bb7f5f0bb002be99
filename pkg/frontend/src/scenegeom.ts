/**
 * Pure scene geometry: turns replica state + dataset projections into plain
 * placement data (centers, radii, boxes, tile rectangles) that the renderer
 * draws and tests can assert on. No three.js types here.
 *
 * Conventions: the cube's data volume is the unit cube [0,1]^3 centered on
 * the cube transform's origin, so a normalized point p sits at local
 * (p - 0.5) before rotation/scale/translation. The cube edge length in
 * world units equals the transform's scale.
 */

import type { TransformW, PoseW } from "./wire.js";
import type { NormPoint, PickSphere, V3 } from "./viewmath.js";
import { applyScaled, poseForward } from "./viewmath.js";
import type { Bar, BarGrid, TraceLine } from "./dataset.js";
import { colormap } from "./dataset.js";

// Sphere radii span this fraction of the cube edge, linearly in size_t.
export const MIN_RADIUS_FRAC = 0.004;
export const MAX_RADIUS_FRAC = 0.02;

export function sphereRadius(sizeT: number, edge: number): number {
  return (MIN_RADIUS_FRAC + sizeT * (MAX_RADIUS_FRAC - MIN_RADIUS_FRAC)) * edge;
}

const centered = (p: V3): V3 => [p[0] - 0.5, p[1] - 0.5, p[2] - 0.5];

export interface SphereInstance {
  rowIndex: number;
  center: V3;
  radius: number;
  color: [number, number, number]; // 0-255 channels
}

export function buildSpheres(points: readonly NormPoint[], cube: TransformW): SphereInstance[] {
  return points.map((p) => ({
    rowIndex: p.rowIndex,
    center: applyScaled(cube, centered(p.position)),
    radius: sphereRadius(p.sizeT, cube.scale),
    color: colormap(p.colorT),
  }));
}

export function pickSpheresOf(spheres: readonly SphereInstance[]): PickSphere[] {
  return spheres.map((s) => ({ row: s.rowIndex, center: s.center, radius: s.radius }));
}

export interface TracePolyline {
  individualId: string;
  vertices: V3[];
}

export function buildTracePolylines(
  traces: readonly TraceLine[],
  cube: TransformW,
): TracePolyline[] {
  return traces.map((t) => ({
    individualId: t.individualId,
    vertices: t.points.map((p) => applyScaled(cube, centered(p.position))),
  }));
}

// ---------------------------------------------------------------------------
// Bar chart layout
//
// Years advance along the cube's local x axis, regions along local z; each
// (region, year) cell holds one square-footprint box rising from the cube
// floor. Heights use the grid's normalized value; a floor keeps zero-height
// bars visible.

export const BAR_FOOTPRINT = 0.7; // fraction of the smaller cell dimension
export const BAR_MIN_HEIGHT = 0.02;

export interface BarBox {
  region: string;
  year: number;
  value: number;
  center: V3; // world
  halfExtents: V3; // local (pre-rotation) half sizes in world units
  color: [number, number, number];
}

export function buildBarBoxes(grid: BarGrid, cube: TransformW): BarBox[] {
  const years = [...new Set(grid.bars.map((b) => b.year))].sort((a, b) => a - b);
  const regions = [...new Set(grid.bars.map((b) => b.region))].sort();
  const yearIx = new Map(years.map((y, i) => [y, i]));
  const regionIx = new Map(regions.map((r, i) => [r, i]));
  const nx = Math.max(1, years.length);
  const nz = Math.max(1, regions.length);
  const cell = Math.min(1 / nx, 1 / nz);
  const half = (BAR_FOOTPRINT * cell) / 2;
  return grid.bars.map((b: Bar) => {
    const u = (yearIx.get(b.year)! + 0.5) / nx;
    const w = (regionIx.get(b.region)! + 0.5) / nz;
    const h = Math.max(b.height, BAR_MIN_HEIGHT);
    return {
      region: b.region,
      year: b.year,
      value: b.value,
      center: applyScaled(cube, centered([u, h / 2, w])),
      halfExtents: [half * cube.scale, (h / 2) * cube.scale, half * cube.scale],
      color: b.color,
    };
  });
}

// ---------------------------------------------------------------------------
// Analysis wall layout
//
// The wall is a unit plane in its transform's local x/y, facing local +z.
// Tiles fill a fixed-width grid left-to-right, top-to-bottom; rows extend
// downward when the wall overflows its unit height.

export const WALL_COLUMNS = 4;
export const TILE_STEP = 1 / WALL_COLUMNS;
export const TILE_HALF = TILE_STEP * 0.46;

export interface WallTile {
  slotIndex: number;
  objectId: string; // snapshot object id occupying the slot
  center: [number, number]; // wall-local x/y of the tile center
  half: number; // wall-local half size (square)
}

export function layoutWallTiles(slots: readonly (string | null)[]): WallTile[] {
  const tiles: WallTile[] = [];
  slots.forEach((objectId, i) => {
    if (objectId === null) return;
    const col = i % WALL_COLUMNS;
    const row = Math.floor(i / WALL_COLUMNS);
    tiles.push({
      slotIndex: i,
      objectId,
      center: [-0.5 + (col + 0.5) * TILE_STEP, 0.5 - (row + 0.5) * TILE_STEP],
      half: TILE_HALF,
    });
  });
  return tiles;
}

export function tileWorldCenter(tile: WallTile, wall: TransformW): V3 {
  return applyScaled(wall, [tile.center[0], tile.center[1], 0]);
}

// ---------------------------------------------------------------------------
// Presence markers

export interface PoseMarker {
  clientId: string;
  position: V3;
  forward: V3;
}

export function buildPoseMarkers(
  poses: Readonly<Record<string, PoseW | null | undefined>>,
  excludeClientId: string | null,
): PoseMarker[] {
  const out: PoseMarker[] = [];
  for (const clientId of Object.keys(poses).sort()) {
    if (clientId === excludeClientId) continue;
    const pose = poses[clientId];
    if (!pose) continue;
    out.push({
      clientId,
      position: pose.position,
      forward: poseForward({ position: pose.position, orientation: pose.orientation }),
    });
  }
  return out;
}
