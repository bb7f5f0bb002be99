/**
 * Spatial math over plain tuples: quaternion rotation, cube-face selection,
 * snapshot projection, and ray picking. Pure functions only; the formulas
 * match the session server's so selections and projections agree across
 * clients to the last bit.
 */

import type { QuatW, TransformW, Vec3W } from "./wire.js";

export type V3 = Vec3W;
export type Q4 = QuatW;

export const FORWARD: V3 = [0, 0, -1];
export const IDENTITY_QUAT: Q4 = [1, 0, 0, 0];

export const add = (a: V3, b: V3): V3 => [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
export const sub = (a: V3, b: V3): V3 => [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
export const scale = (v: V3, s: number): V3 => [v[0] * s, v[1] * s, v[2] * s];
export const dot = (a: V3, b: V3): number => a[0] * b[0] + a[1] * b[1] + a[2] * b[2];

export const cross = (a: V3, b: V3): V3 => [
  a[1] * b[2] - a[2] * b[1],
  a[2] * b[0] - a[0] * b[2],
  a[0] * b[1] - a[1] * b[0],
];

export const norm = (v: V3): number => Math.sqrt(dot(v, v));

export function normalized(v: V3): V3 {
  const n = norm(v);
  if (n === 0) throw new Error("cannot normalize the zero vector");
  return scale(v, 1 / n);
}

export function quatMul(a: Q4, b: Q4): Q4 {
  return [
    a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
    a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
    a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
    a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
  ];
}

export const quatConjugate = (q: Q4): Q4 => [q[0], -q[1], -q[2], -q[3]];

export function quatNormalize(q: Q4): Q4 {
  const n = Math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  return [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
}

/** v' = v + 2 q.w (u x v) + 2 u x (u x v), u = quaternion vector part. */
export function rotate(q: Q4, v: V3): V3 {
  const u: V3 = [q[1], q[2], q[3]];
  const t = scale(cross(u, v), 2);
  return add(add(v, scale(t, q[0])), cross(u, t));
}

export function axisAngle(axis: V3, angle: number): Q4 {
  const a = normalized(axis);
  const h = angle * 0.5;
  const s = Math.sin(h);
  return [Math.cos(h), a[0] * s, a[1] * s, a[2] * s];
}

export interface PoseV {
  position: V3;
  orientation: Q4;
}

export const poseForward = (pose: PoseV): V3 => rotate(pose.orientation, FORWARD);

/** Uniform scale, then rotation, then translation. */
export function applyScaled(t: TransformW, p: V3): V3 {
  return add(rotate(t.rotation, scale(p, t.scale)), t.translation);
}

// ---------------------------------------------------------------------------
// Cube faces

export const AXIS_X = 0;
export const AXIS_Y = 1;
export const AXIS_Z = 2;
const AXIS_NAMES = "xyz";

export interface CubeFace {
  axis: 0 | 1 | 2;
  sign: 1 | -1;
}

export function faceName(face: CubeFace): string {
  return (face.sign > 0 ? "+" : "-") + AXIS_NAMES[face.axis];
}

export function faceRetainedAxes(face: CubeFace): [number, number] {
  const axes = [AXIS_X, AXIS_Y, AXIS_Z].filter((a) => a !== face.axis);
  return [axes[0], axes[1]];
}

// Tie-break order: +X, -X, +Y, -Y, +Z, -Z.
export const FACES: readonly CubeFace[] = [
  { axis: 0, sign: 1 },
  { axis: 0, sign: -1 },
  { axis: 1, sign: 1 },
  { axis: 1, sign: -1 },
  { axis: 2, sign: 1 },
  { axis: 2, sign: -1 },
];

export function faceFromName(name: string): CubeFace {
  if (name.length === 2 && (name[0] === "+" || name[0] === "-")) {
    const axis = AXIS_NAMES.indexOf(name[1]);
    if (axis >= 0) {
      return { axis: axis as 0 | 1 | 2, sign: name[0] === "+" ? 1 : -1 };
    }
  }
  throw new Error(`not a cube face name: ${name}`);
}

/**
 * The face most directly facing a viewer looking along view_dir: minimizes
 * dot(view_dir, outward normal), ties resolving in FACES order.
 */
export function selectFace(viewDir: V3, cubeRotation: Q4): CubeFace {
  const local = rotate(quatConjugate(cubeRotation), viewDir);
  let best = FACES[0];
  let bestDot = Infinity;
  for (const face of FACES) {
    const d = face.sign * local[face.axis];
    if (d < bestDot) {
      bestDot = d;
      best = face;
    }
  }
  return best;
}

export function faceNormal(face: CubeFace, cubeRotation: Q4): V3 {
  const n: V3 = [0, 0, 0];
  n[face.axis] = face.sign;
  return rotate(cubeRotation, n);
}

// ---------------------------------------------------------------------------
// Snapshot projection

export interface NormPoint {
  rowIndex: number;
  position: [number, number, number]; // unit-cube coordinates
  colorT: number;
  sizeT: number;
}

export interface SnapPoint {
  u: number;
  v: number;
  colorT: number;
  sizeT: number;
}

/**
 * Flatten unit-cube points onto a face: drop the face axis, keep the two
 * retained axes as (u, v). Positive faces mirror u so the 2D picture matches
 * what a viewer of that face sees; negative faces keep raw components.
 */
export function projectSnapshot(points: readonly NormPoint[], face: CubeFace): SnapPoint[] {
  const [ua, va] = faceRetainedAxes(face);
  const mirror = face.sign > 0;
  return points.map((p) => {
    let u = p.position[ua];
    if (mirror) u = 1.0 - u;
    return { u, v: p.position[va], colorT: p.colorT, sizeT: p.sizeT };
  });
}

// ---------------------------------------------------------------------------
// Ray picking

export interface PickSphere {
  center: V3;
  radius: number;
  row: number;
}

/** Row index of the first sphere hit along the ray, or null. */
export function pickPoint(rayOrigin: V3, rayDir: V3, spheres: readonly PickSphere[]): number | null {
  let bestT = Infinity;
  let bestRow: number | null = null;
  for (const { center, radius, row } of spheres) {
    const oc = sub(rayOrigin, center);
    const b = dot(rayDir, oc);
    const c = dot(oc, oc) - radius * radius;
    const disc = b * b - c;
    if (disc < 0) continue;
    const sq = Math.sqrt(disc);
    let t = -b - sq;
    if (t < 0) t = -b + sq;
    if (t >= 0 && t < bestT) {
      bestT = t;
      bestRow = row;
    }
  }
  return bestRow;
}
