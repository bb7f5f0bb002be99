/**
 * three.js adapter: draws the shared scene (cube, points, traces, bars, wall,
 * presence markers) from the view model and feeds pointer gestures back into
 * it. All placement math comes from scenegeom/viewmath; this file only moves
 * meshes.
 */

import * as THREE from "three";
import { ViewModel, cameraPosition } from "./viewmodel.js";
import { CUBE_ID, WALL_ID, VIZ_BARCHART, cubeState, wallState, type TransformW } from "./wire.js";
import {
  buildBarBoxes,
  buildPoseMarkers,
  buildSpheres,
  buildTracePolylines,
  layoutWallTiles,
  pickSpheresOf,
  tileWorldCenter,
  type SphereInstance,
} from "./scenegeom.js";
import { aggregateBars, colormap, type TraceLine } from "./dataset.js";
import { pickPoint, type V3 } from "./viewmath.js";
import { AIR_TAP, CONTROLLER_BUTTON, CONTROLLER_ORIENTATION, HAND_HIDDEN, HAND_VISIBLE } from "./client.js";

const BACKGROUND = 0x10141c;
const CUBE_EDGE_COLOR = 0x8899bb;
const WALL_COLOR = 0x222a38;
const TILE_BG = "#e8ecf4";
const SELECT_COLOR = 0xffffff;
const HOVER_COLOR = 0xffcc33;

function toVec3(v: V3): THREE.Vector3 {
  return new THREE.Vector3(v[0], v[1], v[2]);
}

function toQuat(q: [number, number, number, number]): THREE.Quaternion {
  return new THREE.Quaternion(q[1], q[2], q[3], q[0]);
}

function applyTransform(obj: THREE.Object3D, t: TransformW, scale = true): void {
  obj.position.set(t.translation[0], t.translation[1], t.translation[2]);
  obj.quaternion.copy(toQuat(t.rotation));
  if (scale) obj.scale.setScalar(t.scale);
}

interface DragState {
  objectId: string;
  mode: "translate" | "rotate";
  plane: THREE.Plane;
  grabOffset: THREE.Vector3;
  startPointer: { x: number; y: number };
  startTransform: TransformW;
}

export class SceneRenderer {
  private readonly renderer: THREE.WebGLRenderer;
  private readonly scene = new THREE.Scene();
  private readonly camera: THREE.PerspectiveCamera;
  private readonly raycaster = new THREE.Raycaster();

  private readonly cubeGroup = new THREE.Group();
  private readonly cubeEdges: THREE.LineSegments;
  private readonly cubeProxy: THREE.Mesh; // invisible grab target
  private readonly traceGroup = new THREE.Group();
  private readonly wallGroup = new THREE.Group();
  private readonly wallPlane: THREE.Mesh;
  private readonly tileGroup = new THREE.Group();
  private readonly poseGroup = new THREE.Group();
  private readonly selectMarker: THREE.Mesh;
  private readonly hoverMarker: THREE.Mesh;

  private spheresMesh: THREE.InstancedMesh | null = null;
  private barsMesh: THREE.InstancedMesh | null = null;
  private spheres: SphereInstance[] = [];
  private tileTextures = new Map<string, THREE.CanvasTexture>();

  private dirty = true;
  private drag: DragState | null = null;
  private orbit: { startAz: number; startEl: number; x: number; y: number } | null = null;
  private pointerNdc = new THREE.Vector2();
  private lastGamepadButtons = 0;
  private disposed = false;

  onCameraMoved: (() => void) | null = null;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly vm: ViewModel,
  ) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.renderer.setPixelRatio(Math.min(window.devicePixelRatio, 2));
    this.scene.background = new THREE.Color(BACKGROUND);

    this.camera = new THREE.PerspectiveCamera(60, 1, 0.01, 100);

    this.scene.add(new THREE.AmbientLight(0xffffff, 0.7));
    const sun = new THREE.DirectionalLight(0xffffff, 1.1);
    sun.position.set(2, 4, 3);
    this.scene.add(sun);

    const grid = new THREE.GridHelper(8, 16, 0x334, 0x223);
    this.scene.add(grid);

    this.cubeEdges = new THREE.LineSegments(
      new THREE.EdgesGeometry(new THREE.BoxGeometry(1, 1, 1)),
      new THREE.LineBasicMaterial({ color: CUBE_EDGE_COLOR }),
    );
    this.cubeProxy = new THREE.Mesh(
      new THREE.BoxGeometry(1, 1, 1),
      new THREE.MeshBasicMaterial({ visible: false }),
    );
    this.cubeGroup.add(this.cubeEdges, this.cubeProxy);
    // Points, traces, and bars carry world-space placement already, so they
    // live at scene level rather than under the cube transform.
    this.scene.add(this.cubeGroup, this.traceGroup);

    this.wallPlane = new THREE.Mesh(
      new THREE.PlaneGeometry(1, 1),
      new THREE.MeshBasicMaterial({ color: WALL_COLOR, side: THREE.DoubleSide }),
    );
    this.wallGroup.add(this.wallPlane);
    this.scene.add(this.wallGroup, this.tileGroup, this.poseGroup);

    this.selectMarker = new THREE.Mesh(
      new THREE.SphereGeometry(1, 16, 12),
      new THREE.MeshBasicMaterial({ color: SELECT_COLOR, wireframe: true }),
    );
    this.hoverMarker = new THREE.Mesh(
      new THREE.SphereGeometry(1, 16, 12),
      new THREE.MeshBasicMaterial({ color: HOVER_COLOR, wireframe: true }),
    );
    this.selectMarker.visible = false;
    this.hoverMarker.visible = false;
    this.scene.add(this.selectMarker, this.hoverMarker);

    vm.subscribe(() => {
      this.dirty = true;
    });
    this.bindInput();
    this.resize();
    this.loop();
  }

  dispose(): void {
    this.disposed = true;
    this.renderer.dispose();
  }

  resize(): void {
    const w = this.canvas.clientWidth || this.canvas.parentElement?.clientWidth || 800;
    const h = this.canvas.clientHeight || this.canvas.parentElement?.clientHeight || 600;
    this.renderer.setSize(w, h, false);
    this.camera.aspect = w / Math.max(1, h);
    this.camera.updateProjectionMatrix();
  }

  // -- frame loop ------------------------------------------------------------

  private loop = (): void => {
    if (this.disposed) return;
    this.pollGamepad();
    if (this.dirty) {
      this.rebuild();
      this.dirty = false;
    }
    this.updateCamera();
    this.renderer.render(this.scene, this.camera);
    requestAnimationFrame(this.loop);
  };

  private updateCamera(): void {
    const cam = this.vm.camera;
    const pos = cameraPosition(cam);
    this.camera.position.set(pos[0], pos[1], pos[2]);
    this.camera.lookAt(cam.target[0], cam.target[1], cam.target[2]);
  }

  // -- scene rebuild -----------------------------------------------------------

  private rebuild(): void {
    const vm = this.vm;
    const replica = vm.replica;
    this.cubeGroup.visible = replica !== null;
    this.wallGroup.visible = replica !== null;
    if (!replica) return;

    const cubeT = vm.renderTransform(CUBE_ID);
    if (cubeT) applyTransform(this.cubeGroup, cubeT);
    const wallT = vm.renderTransform(WALL_ID);
    if (wallT) {
      applyTransform(this.wallGroup, wallT);
      this.wallGroup.scale.set(wallT.scale, wallT.scale, 1);
    }

    this.rebuildPoints(cubeT);
    this.rebuildWall(wallT);
    this.rebuildPoses();
    this.rebuildMarkers();
  }

  private clearGroup(group: THREE.Group): void {
    for (const child of [...group.children]) {
      group.remove(child);
      const mesh = child as THREE.Mesh;
      mesh.geometry?.dispose();
    }
  }

  private rebuildPoints(cubeT: TransformW | null): void {
    const vm = this.vm;
    const cube = vm.replica ? cubeState(vm.replica) : null;
    this.clearGroup(this.traceGroup);
    const showBars = cube?.viz_mode === VIZ_BARCHART;

    // Scatter spheres (world space; the instanced mesh lives outside the
    // cube group so matrices already include the cube transform).
    const points = !showBars ? vm.scatterPoints() : [];
    this.spheres = cubeT && points.length > 0 ? buildSpheres(points, cubeT) : [];
    this.syncSpheres();

    // Traces
    if (!showBars && cubeT) {
      const traces: TraceLine[] = vm.traces();
      for (const line of buildTracePolylines(traces, cubeT)) {
        const geo = new THREE.BufferGeometry().setFromPoints(line.vertices.map(toVec3));
        const mat = new THREE.LineBasicMaterial({ color: 0xb0b8cc, transparent: true, opacity: 0.55 });
        this.traceGroup.add(new THREE.Line(geo, mat));
      }
    }

    this.rebuildBars(showBars, cubeT);
  }

  private rebuildBars(showBars: boolean, cubeT: TransformW | null): void {
    const vm = this.vm;
    const cube = vm.replica ? cubeState(vm.replica) : null;
    if (this.barsMesh) {
      this.scene.remove(this.barsMesh);
      this.barsMesh.geometry.dispose();
      this.barsMesh.dispose();
      this.barsMesh = null;
    }
    if (!showBars || !cube || !cube.mapping || !vm.dataset || !cubeT) return;
    let boxes;
    try {
      boxes = buildBarBoxes(aggregateBars(vm.dataset, cube.mapping.y, cube.filter), cubeT);
    } catch {
      return; // no region column: bar mode renders nothing
    }
    if (boxes.length === 0) return;
    const mesh = new THREE.InstancedMesh(
      new THREE.BoxGeometry(1, 1, 1),
      new THREE.MeshLambertMaterial(),
      boxes.length,
    );
    const m = new THREE.Matrix4();
    const q = toQuat(cubeT.rotation);
    const color = new THREE.Color();
    boxes.forEach((b, i) => {
      m.compose(
        toVec3(b.center),
        q,
        new THREE.Vector3(b.halfExtents[0] * 2, b.halfExtents[1] * 2, b.halfExtents[2] * 2),
      );
      mesh.setMatrixAt(i, m);
      color.setRGB(b.color[0] / 255, b.color[1] / 255, b.color[2] / 255);
      mesh.setColorAt(i, color);
    });
    mesh.instanceMatrix.needsUpdate = true;
    if (mesh.instanceColor) mesh.instanceColor.needsUpdate = true;
    this.scene.add(mesh);
    this.barsMesh = mesh;
  }

  private syncSpheres(): void {
    const n = this.spheres.length;
    if (this.spheresMesh && this.spheresMesh.count !== n) {
      this.scene.remove(this.spheresMesh);
      this.spheresMesh.geometry.dispose();
      this.spheresMesh.dispose();
      this.spheresMesh = null;
    }
    if (n === 0) return;
    if (!this.spheresMesh) {
      this.spheresMesh = new THREE.InstancedMesh(
        new THREE.SphereGeometry(1, 12, 8),
        new THREE.MeshLambertMaterial(),
        n,
      );
      this.scene.add(this.spheresMesh);
    }
    const m = new THREE.Matrix4();
    const color = new THREE.Color();
    this.spheres.forEach((s, i) => {
      m.makeScale(s.radius, s.radius, s.radius);
      m.setPosition(s.center[0], s.center[1], s.center[2]);
      this.spheresMesh!.setMatrixAt(i, m);
      color.setRGB(s.color[0] / 255, s.color[1] / 255, s.color[2] / 255);
      this.spheresMesh!.setColorAt(i, color);
    });
    this.spheresMesh.instanceMatrix.needsUpdate = true;
    if (this.spheresMesh.instanceColor) this.spheresMesh.instanceColor.needsUpdate = true;
  }

  private rebuildWall(wallT: TransformW | null): void {
    const vm = this.vm;
    this.clearGroup(this.tileGroup);
    const wall = vm.replica ? wallState(vm.replica) : null;
    if (!wall || !wallT) return;
    const liveIds = new Set<string>();
    for (const tile of layoutWallTiles(wall.slots)) {
      const snap = vm.replica!.objects[tile.objectId];
      if (!snap || snap.kind !== "snapshot") continue;
      liveIds.add(tile.objectId);
      const tex = this.tileTexture(tile.objectId);
      const size = tile.half * 2 * wallT.scale;
      const mesh = new THREE.Mesh(
        new THREE.PlaneGeometry(size, size),
        new THREE.MeshBasicMaterial({ map: tex, side: THREE.DoubleSide }),
      );
      const center = tileWorldCenter(tile, wallT);
      mesh.position.set(center[0], center[1], center[2]);
      mesh.quaternion.copy(toQuat(wallT.rotation));
      mesh.translateZ(0.005); // sit just in front of the wall plane
      this.tileGroup.add(mesh);
    }
    for (const [id, tex] of [...this.tileTextures]) {
      if (!liveIds.has(id)) {
        tex.dispose();
        this.tileTextures.delete(id);
      }
    }
  }

  /** Snapshots are immutable, so each gets one lazily painted texture. */
  private tileTexture(objectId: string): THREE.CanvasTexture {
    let tex = this.tileTextures.get(objectId);
    if (tex) return tex;
    const obj = this.vm.replica!.objects[objectId];
    const canvas = document.createElement("canvas");
    canvas.width = canvas.height = 256;
    const ctx = canvas.getContext("2d")!;
    ctx.fillStyle = TILE_BG;
    ctx.fillRect(0, 0, 256, 256);
    if (obj && obj.kind === "snapshot") {
      const state = obj.state as { points: [number, number, number, number][]; face: string };
      for (const [u, v, c, s] of state.points) {
        const [r, g, b] = colormap(c);
        ctx.fillStyle = `rgb(${r},${g},${b})`;
        ctx.beginPath();
        ctx.arc(u * 256, (1 - v) * 256, 2 + s * 6, 0, Math.PI * 2);
        ctx.fill();
      }
      ctx.fillStyle = "#333";
      ctx.font = "20px sans-serif";
      ctx.fillText(state.face, 8, 26);
    }
    tex = new THREE.CanvasTexture(canvas);
    this.tileTextures.set(objectId, tex);
    return tex;
  }

  private rebuildPoses(): void {
    this.clearGroup(this.poseGroup);
    const replica = this.vm.replica;
    if (!replica) return;
    for (const marker of buildPoseMarkers(replica.user_poses, this.vm.core.clientId)) {
      const cone = new THREE.Mesh(
        new THREE.ConeGeometry(0.06, 0.16, 12),
        new THREE.MeshLambertMaterial({ color: 0x66ccff }),
      );
      cone.position.set(marker.position[0], marker.position[1], marker.position[2]);
      const dir = toVec3(marker.forward);
      const target = cone.position.clone().add(dir);
      cone.lookAt(target);
      cone.rotateX(Math.PI / 2); // cone points +y by default; aim it down the gaze
      this.poseGroup.add(cone);
    }
  }

  private rebuildMarkers(): void {
    const vm = this.vm;
    const cube = vm.replica ? cubeState(vm.replica) : null;
    const bySelected = cube?.selected_row ?? null;
    this.selectMarker.visible = false;
    this.hoverMarker.visible = false;
    for (const s of this.spheres) {
      if (bySelected !== null && s.rowIndex === bySelected) {
        this.selectMarker.position.set(s.center[0], s.center[1], s.center[2]);
        this.selectMarker.scale.setScalar(s.radius * 1.8);
        this.selectMarker.visible = true;
      }
      if (vm.hoveredRow !== null && s.rowIndex === vm.hoveredRow && s.rowIndex !== bySelected) {
        this.hoverMarker.position.set(s.center[0], s.center[1], s.center[2]);
        this.hoverMarker.scale.setScalar(s.radius * 1.6);
        this.hoverMarker.visible = true;
      }
    }
  }

  // -- input ------------------------------------------------------------------

  private bindInput(): void {
    const canvas = this.canvas;
    canvas.addEventListener("pointerenter", () => this.vm.onPointerSource(HAND_VISIBLE));
    canvas.addEventListener("pointerleave", () => {
      this.vm.onPointerSource(HAND_HIDDEN);
      this.setHover(null);
    });
    canvas.addEventListener("pointerdown", (ev) => this.onPointerDown(ev));
    canvas.addEventListener("pointermove", (ev) => this.onPointerMove(ev));
    window.addEventListener("pointerup", (ev) => this.onPointerUp(ev));
    canvas.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      const cam = this.vm.camera;
      cam.distance = Math.min(12, Math.max(0.5, cam.distance * (1 + Math.sign(ev.deltaY) * 0.1)));
      this.onCameraMoved?.();
    }, { passive: false });
    window.addEventListener("resize", () => this.resize());
  }

  private updateNdc(ev: PointerEvent): void {
    const rect = this.canvas.getBoundingClientRect();
    this.pointerNdc.set(
      ((ev.clientX - rect.left) / rect.width) * 2 - 1,
      -(((ev.clientY - rect.top) / rect.height) * 2 - 1),
    );
  }

  private castRay(): THREE.Raycaster {
    this.raycaster.setFromCamera(this.pointerNdc, this.camera);
    return this.raycaster;
  }

  private pickRow(): number | null {
    if (this.spheres.length === 0) return null;
    const ray = this.castRay().ray;
    return pickPoint(
      [ray.origin.x, ray.origin.y, ray.origin.z],
      [ray.direction.x, ray.direction.y, ray.direction.z],
      pickSpheresOf(this.spheres),
    );
  }

  private grabbable(): { objectId: string; point: THREE.Vector3 } | null {
    const ray = this.castRay();
    const hits = ray.intersectObjects([this.cubeProxy, this.wallPlane], false);
    if (hits.length === 0) return null;
    const hit = hits[0];
    return {
      objectId: hit.object === this.cubeProxy ? CUBE_ID : WALL_ID,
      point: hit.point.clone(),
    };
  }

  private onPointerDown(ev: PointerEvent): void {
    this.updateNdc(ev);
    if (ev.button !== 0) return;

    const row = this.pickRow();
    if (row !== null) {
      this.vm.onPointerSource(AIR_TAP);
      this.vm.selectRow(row);
      return;
    }

    const grab = this.grabbable();
    if (grab && this.vm.canEdit && this.vm.beginDrag(grab.objectId)) {
      const t = this.vm.renderTransform(grab.objectId)!;
      const mode = ev.shiftKey ? "rotate" : "translate";
      // Drag in the horizontal plane through the grab point.
      const plane = new THREE.Plane(new THREE.Vector3(0, 1, 0), -grab.point.y);
      this.drag = {
        objectId: grab.objectId,
        mode,
        plane,
        grabOffset: grab.point.clone().sub(toVec3(t.translation)),
        startPointer: { x: ev.clientX, y: ev.clientY },
        startTransform: {
          rotation: [...t.rotation] as TransformW["rotation"],
          translation: [...t.translation] as TransformW["translation"],
          scale: t.scale,
        },
      };
      this.canvas.setPointerCapture(ev.pointerId);
      return;
    }

    // Empty space: orbit.
    this.orbit = {
      startAz: this.vm.camera.azimuth,
      startEl: this.vm.camera.elevation,
      x: ev.clientX,
      y: ev.clientY,
    };
  }

  private onPointerMove(ev: PointerEvent): void {
    this.updateNdc(ev);
    if (this.drag) {
      this.moveDrag(ev);
      return;
    }
    if (this.orbit) {
      const cam = this.vm.camera;
      cam.azimuth = this.orbit.startAz - (ev.clientX - this.orbit.x) * 0.006;
      cam.elevation = Math.min(
        1.45,
        Math.max(-1.45, this.orbit.startEl + (ev.clientY - this.orbit.y) * 0.006),
      );
      this.onCameraMoved?.();
      return;
    }
    this.setHover(this.pickRow());
  }

  private moveDrag(ev: PointerEvent): void {
    const drag = this.drag!;
    if (drag.mode === "rotate") {
      const deltaYaw = (ev.clientX - drag.startPointer.x) * 0.01;
      const yaw = new THREE.Quaternion().setFromAxisAngle(new THREE.Vector3(0, 1, 0), deltaYaw);
      const start = toQuat(drag.startTransform.rotation);
      const q = yaw.multiply(start);
      this.vm.updateDrag({
        rotation: [q.w, q.x, q.y, q.z],
        translation: drag.startTransform.translation,
        scale: drag.startTransform.scale,
      });
      return;
    }
    const ray = this.castRay().ray;
    const hit = new THREE.Vector3();
    if (!ray.intersectPlane(drag.plane, hit)) return;
    const translation = hit.sub(drag.grabOffset);
    const dy = ev.altKey ? -(ev.clientY - drag.startPointer.y) * 0.004 : 0;
    this.vm.updateDrag({
      rotation: drag.startTransform.rotation,
      translation: [translation.x, drag.startTransform.translation[1] + dy, translation.z],
      scale: drag.startTransform.scale,
    });
  }

  private onPointerUp(ev: PointerEvent): void {
    if (this.drag) {
      this.vm.endDrag();
      this.drag = null;
      try {
        this.canvas.releasePointerCapture(ev.pointerId);
      } catch {
        // capture may already be gone
      }
    }
    this.orbit = null;
  }

  private setHover(row: number | null): void {
    if (row !== this.vm.hoveredRow) {
      this.vm.hoveredRow = row;
      this.vm.notify();
    }
  }

  private pollGamepad(): void {
    const pads = typeof navigator !== "undefined" && navigator.getGamepads ? navigator.getGamepads() : [];
    for (const pad of pads) {
      if (!pad) continue;
      const pressed = pad.buttons.filter((b) => b.pressed).length;
      if (pressed > 0 && this.lastGamepadButtons === 0) {
        this.vm.onPointerSource(CONTROLLER_BUTTON);
      } else if (pad.axes.some((a) => Math.abs(a) > 0.5)) {
        this.vm.onPointerSource(CONTROLLER_ORIENTATION);
      }
      this.lastGamepadButtons = pressed;
    }
  }
}
