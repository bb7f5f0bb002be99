import { describe, expect, it } from "vitest";
import {
  aggregateBars,
  applyFilters,
  colormap,
  parseCsv,
  projectPoints,
} from "../src/dataset.js";
import {
  BAR_MIN_HEIGHT,
  buildBarBoxes,
  buildPoseMarkers,
  buildSpheres,
  buildTracePolylines,
  layoutWallTiles,
  MAX_RADIUS_FRAC,
  MIN_RADIUS_FRAC,
  pickSpheresOf,
  sphereRadius,
  TILE_HALF,
  TILE_STEP,
  tileWorldCenter,
  WALL_COLUMNS,
} from "../src/scenegeom.js";
import { applyScaled, rotate } from "../src/viewmath.js";
import type { MappingW, TransformW } from "../src/wire.js";
import { loadFixture } from "./helpers.js";

const cases = loadFixture<{ csv: string; mapping: MappingW }>("dataset_cases.json");
const ds = parseCsv(cases.csv);
const emptyFilter = { numeric_ranges: {}, year_range: null, regions: null };

const identity: TransformW = { rotation: [1, 0, 0, 0], translation: [0, 0, 0], scale: 1 };
const placed: TransformW = {
  rotation: [Math.SQRT1_2, 0, Math.SQRT1_2, 0], // 90 degrees about +y
  translation: [1, 2, 3],
  scale: 2,
};

describe("sphereRadius", () => {
  it("is linear in size over the configured fraction band", () => {
    expect(sphereRadius(0, 1)).toBeCloseTo(MIN_RADIUS_FRAC, 15);
    expect(sphereRadius(1, 1)).toBeCloseTo(MAX_RADIUS_FRAC, 15);
    expect(sphereRadius(0.5, 2)).toBeCloseTo((MIN_RADIUS_FRAC + MAX_RADIUS_FRAC), 15);
  });
});

describe("buildSpheres", () => {
  const visible = applyFilters(ds, emptyFilter);
  const points = projectPoints(ds, cases.mapping, visible);

  it("creates one sphere per visible row", () => {
    const spheres = buildSpheres(points, identity);
    expect(spheres.length).toBe(visible.length);
    expect(spheres.map((s) => s.rowIndex)).toEqual(visible);
  });

  it("centers the unit cube on the transform origin", () => {
    const spheres = buildSpheres(points, placed);
    points.forEach((p, i) => {
      const local: [number, number, number] = [
        p.position[0] - 0.5,
        p.position[1] - 0.5,
        p.position[2] - 0.5,
      ];
      expect(spheres[i].center).toEqual(applyScaled(placed, local));
      expect(spheres[i].radius).toBeCloseTo(sphereRadius(p.sizeT, placed.scale), 15);
      expect(spheres[i].color).toEqual(colormap(p.colorT));
    });
  });

  it("feeds picking with the same rows and geometry", () => {
    const spheres = buildSpheres(points, placed);
    const picks = pickSpheresOf(spheres);
    picks.forEach((pk, i) => {
      expect(pk.row).toBe(spheres[i].rowIndex);
      expect(pk.center).toBe(spheres[i].center);
      expect(pk.radius).toBe(spheres[i].radius);
    });
  });
});

describe("buildTracePolylines", () => {
  it("transforms every trace vertex into world space", () => {
    const visible = applyFilters(ds, emptyFilter);
    const traceMapping = { ...cases.mapping, traces_enabled: true };
    const points = projectPoints(ds, traceMapping, visible);
    const byRow = new Map(points.map((p) => [p.rowIndex, p]));
    const lines = buildTracePolylines(
      [
        {
          individualId: "p1",
          points: [byRow.get(0)!, byRow.get(1)!, byRow.get(2)!],
        },
      ],
      placed,
    );
    expect(lines).toHaveLength(1);
    expect(lines[0].vertices).toHaveLength(3);
    const first = byRow.get(0)!;
    expect(lines[0].vertices[0]).toEqual(
      applyScaled(placed, [
        first.position[0] - 0.5,
        first.position[1] - 0.5,
        first.position[2] - 0.5,
      ]),
    );
  });
});

describe("buildBarBoxes", () => {
  const grid = aggregateBars(ds, "beta", emptyFilter);

  it("lays years along x ascending and regions along z in sorted order", () => {
    const boxes = buildBarBoxes(grid, identity);
    expect(boxes.length).toBe(grid.bars.length);

    const years = [...new Set(grid.bars.map((b) => b.year))].sort((a, b) => a - b);
    const regions = [...new Set(grid.bars.map((b) => b.region))].sort();
    boxes.forEach((box, i) => {
      const bar = grid.bars[i];
      const u = (years.indexOf(bar.year) + 0.5) / years.length;
      const w = (regions.indexOf(bar.region) + 0.5) / regions.length;
      const h = Math.max(bar.height, BAR_MIN_HEIGHT);
      expect(box.center).toEqual([u - 0.5, h / 2 - 0.5, w - 0.5]);
      expect(box.halfExtents[1]).toBeCloseTo(h / 2, 15);
      expect(box.color).toEqual(bar.color);
    });
  });

  it("keeps every box inside the unit footprint and above the floor", () => {
    const boxes = buildBarBoxes(grid, identity);
    for (const box of boxes) {
      expect(Math.abs(box.center[0]) + box.halfExtents[0]).toBeLessThanOrEqual(0.5);
      expect(Math.abs(box.center[2]) + box.halfExtents[2]).toBeLessThanOrEqual(0.5);
      // Boxes rest on the cube floor (local y = -0.5).
      expect(box.center[1] - box.halfExtents[1]).toBeCloseTo(-0.5, 15);
      expect(box.halfExtents[1]).toBeGreaterThanOrEqual(BAR_MIN_HEIGHT / 2);
    }
  });

  it("scales with the cube transform", () => {
    const boxes = buildBarBoxes(grid, placed);
    const plain = buildBarBoxes(grid, identity);
    boxes.forEach((box, i) => {
      expect(box.halfExtents[0]).toBeCloseTo(plain[i].halfExtents[0] * placed.scale, 15);
      const rotated = rotate(placed.rotation, [
        plain[i].center[0] * placed.scale,
        plain[i].center[1] * placed.scale,
        plain[i].center[2] * placed.scale,
      ]);
      expect(box.center[0]).toBeCloseTo(rotated[0] + placed.translation[0], 12);
      expect(box.center[1]).toBeCloseTo(rotated[1] + placed.translation[1], 12);
      expect(box.center[2]).toBeCloseTo(rotated[2] + placed.translation[2], 12);
    });
  });
});

describe("layoutWallTiles", () => {
  it("skips empty slots and wraps rows after the column limit", () => {
    const slots = ["s1", null, "s2", "s3", "s4", "s5"];
    const tiles = layoutWallTiles(slots);
    expect(tiles.map((t) => t.objectId)).toEqual(["s1", "s2", "s3", "s4", "s5"]);
    expect(tiles.map((t) => t.slotIndex)).toEqual([0, 2, 3, 4, 5]);

    // Slot 0: first column of the first row, top-left corner region.
    expect(tiles[0].center[0]).toBeCloseTo(-0.5 + TILE_STEP / 2, 15);
    expect(tiles[0].center[1]).toBeCloseTo(0.5 - TILE_STEP / 2, 15);

    // Slot 4 starts the second row.
    const t4 = tiles.find((t) => t.slotIndex === WALL_COLUMNS)!;
    expect(t4.center[0]).toBeCloseTo(-0.5 + TILE_STEP / 2, 15);
    expect(t4.center[1]).toBeCloseTo(0.5 - 1.5 * TILE_STEP, 15);

    for (const t of tiles) expect(t.half).toBe(TILE_HALF);
  });

  it("places a full first row left to right", () => {
    const tiles = layoutWallTiles(["a", "b", "c", "d"]);
    const xs = tiles.map((t) => t.center[0]);
    expect([...xs].sort((a, b) => a - b)).toEqual(xs);
    expect(new Set(tiles.map((t) => t.center[1])).size).toBe(1);
  });
});

describe("tileWorldCenter", () => {
  it("maps wall-local tile centers through the wall transform", () => {
    const tiles = layoutWallTiles(["a"]);
    const world = tileWorldCenter(tiles[0], placed);
    expect(world).toEqual(applyScaled(placed, [tiles[0].center[0], tiles[0].center[1], 0]));
  });
});

describe("buildPoseMarkers", () => {
  const poses = {
    c3: { position: [1, 1, 1] as [number, number, number], orientation: [1, 0, 0, 0] as [number, number, number, number] },
    c1: { position: [0, 1.6, 2] as [number, number, number], orientation: [0, 0, 1, 0] as [number, number, number, number] },
    c2: null,
  };

  it("excludes the local client and empty poses, sorted by client id", () => {
    const markers = buildPoseMarkers(poses, "c1");
    expect(markers.map((m) => m.clientId)).toEqual(["c3"]);
    const all = buildPoseMarkers(poses, null);
    expect(all.map((m) => m.clientId)).toEqual(["c1", "c3"]);
  });

  it("derives the forward vector from the pose orientation", () => {
    const markers = buildPoseMarkers(poses, null);
    // c1 faces along +z: its orientation is a half-turn about +y.
    const c1 = markers[0];
    expect(c1.forward[0]).toBeCloseTo(0, 12);
    expect(c1.forward[2]).toBeCloseTo(1, 12);
    // c3 has the identity orientation: forward is -z.
    const c3 = markers[1];
    expect(c3.forward[2]).toBeCloseTo(-1, 12);
  });
});
