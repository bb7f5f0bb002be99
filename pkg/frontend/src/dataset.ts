/**
 * Dataset handling: parsing the session's CSV interchange format, filtering,
 * channel normalization, statistics, and bar aggregation.
 *
 * The arithmetic (fold order included) mirrors the session server exactly so
 * statistics, normalized channels, and exports agree byte for byte; the
 * vitest suite pins that against reference fixtures.
 */

import { codePointCompare, floatRepr } from "./canonical.js";
import type { FilterW, MappingW, WatchlistEntryW } from "./wire.js";
import type { NormPoint } from "./viewmath.js";

export class CsvError extends Error {
  constructor(
    message: string,
    readonly row: number | null = null, // 1-based data row, 0 for the header
    readonly column: string | null = null,
  ) {
    super(message);
  }
}

export type ColumnKind = "id" | "year" | "region" | "numeric";

export interface ColumnDesc {
  name: string;
  kind: ColumnKind;
}

export interface RecordRow {
  individualId: string;
  year: number;
  region: string | null;
  values: number[]; // one per numeric column, in schema order
}

export interface Dataset {
  columns: ColumnDesc[];
  rows: RecordRow[];
  individuals: Map<string, number[]>; // id -> row indices, ascending year
}

export const ID_COLUMN = "id";
export const YEAR_COLUMN = "year";
export const REGION_COLUMN = "zipcode";
export const YEAR_MIN = 1900;
export const YEAR_MAX = 2200;

export function numericColumns(ds: Dataset): string[] {
  return ds.columns.filter((c) => c.kind === "numeric").map((c) => c.name);
}

export function hasRegion(ds: Dataset): boolean {
  return ds.columns.some((c) => c.kind === "region");
}

export function numericIndex(ds: Dataset, name: string): number {
  const i = numericColumns(ds).indexOf(name);
  if (i < 0) throw new CsvError(`unknown numeric column ${name}`, null, name);
  return i;
}

// Decimal grammar matching the server's parser: optional sign, digits with
// single underscores between them, optional fraction and exponent. Number()
// alone is too lax ("" and "0x10" pass) and too strict (no underscores).
const FLOAT_RE = /^[+-]?(\d(_?\d)*(\.(\d(_?\d)*)?)?|\.\d(_?\d)*)([eE][+-]?\d(_?\d)*)?$/;
const INT_RE = /^[+-]?\d(_?\d)*$/;
const NONFINITE_RE = /^[+-]?(inf(inity)?|nan)$/i;

function parseNumeric(field: string, column: string, row: number): number {
  const s = field.trim();
  if (NONFINITE_RE.test(s)) {
    throw new CsvError(`value ${field} in column ${column} is not finite`, row, column);
  }
  if (!FLOAT_RE.test(s)) {
    throw new CsvError(`value ${field} in column ${column} is not numeric`, row, column);
  }
  const v = Number(s.replace(/_/g, ""));
  if (!Number.isFinite(v)) {
    throw new CsvError(`value ${field} in column ${column} is not finite`, row, column);
  }
  return v;
}

function splitRow(line: string, row: number): string[] {
  if (line.includes('"')) {
    throw new CsvError("quoted values are not supported", row);
  }
  return line.split(",");
}

export function parseCsv(text: string): Dataset {
  let body = text;
  if (body.startsWith("﻿")) body = body.slice(1);
  const lines = body.split("\n");
  while (lines.length > 0 && lines[lines.length - 1].replace(/\r+$/, "") === "") {
    lines.pop();
  }
  if (lines.length === 0) throw new CsvError("input has no header line");
  const stripped = lines.map((l) => (l.endsWith("\r") ? l.slice(0, -1) : l));

  const names = splitRow(stripped[0], 0);
  if (names.some((n) => n === "")) throw new CsvError("empty column name in header", 0);
  if (new Set(names).size !== names.length) {
    const dup = names.find((n) => names.indexOf(n) !== names.lastIndexOf(n))!;
    throw new CsvError(`duplicate column ${dup}`, 0, dup);
  }
  if (!names.includes(ID_COLUMN) || !names.includes(YEAR_COLUMN)) {
    throw new CsvError(`header must contain ${ID_COLUMN} and ${YEAR_COLUMN}`, 0);
  }
  const columns: ColumnDesc[] = names.map((n) => ({
    name: n,
    kind:
      n === ID_COLUMN ? "id" : n === YEAR_COLUMN ? "year" : n === REGION_COLUMN ? "region" : "numeric",
  }));

  const rows: RecordRow[] = [];
  const seen = new Set<string>();
  for (let rowNo = 1; rowNo < stripped.length; rowNo++) {
    const fields = splitRow(stripped[rowNo], rowNo);
    if (fields.length !== columns.length) {
      throw new CsvError(
        `row has ${fields.length} fields for ${columns.length} columns`,
        rowNo,
      );
    }
    let individualId = "";
    let year = 0;
    let region: string | null = null;
    const values: number[] = [];
    for (let c = 0; c < columns.length; c++) {
      const col = columns[c];
      const field = fields[c];
      if (col.kind === "id") {
        if (field === "") throw new CsvError("empty id", rowNo, col.name);
        individualId = field;
      } else if (col.kind === "year") {
        const yt = field.trim();
        if (!INT_RE.test(yt)) {
          throw new CsvError(`year value ${field} is not an integer`, rowNo, col.name);
        }
        year = parseInt(yt.replace(/_/g, ""), 10);
        if (year < YEAR_MIN || year > YEAR_MAX) {
          throw new CsvError(`year ${year} outside [${YEAR_MIN}, ${YEAR_MAX}]`, rowNo, col.name);
        }
      } else if (col.kind === "region") {
        region = field || null;
      } else {
        values.push(parseNumeric(field, col.name, rowNo));
      }
    }
    const key = `${individualId}\u0000${year}`;
    if (seen.has(key)) {
      throw new CsvError(`duplicate (id, year) pair (${individualId}, ${year})`, rowNo);
    }
    seen.add(key);
    rows.push({ individualId, year, region, values });
  }

  const byIndividual = new Map<string, number[]>();
  rows.forEach((r, i) => {
    const list = byIndividual.get(r.individualId);
    if (list) list.push(i);
    else byIndividual.set(r.individualId, [i]);
  });
  const individuals = new Map<string, number[]>();
  for (const [ind, ixs] of byIndividual) {
    individuals.set(
      ind,
      [...ixs].sort((a, b) => rows[a].year - rows[b].year),
    );
  }
  return { columns, rows, individuals };
}

/** Shortest decimal that round-trips back to the same float. */
export const formatNumber = floatRepr;

export function exportCsv(ds: Dataset, rowIndices: readonly number[]): string {
  for (const i of rowIndices) {
    if (!(i >= 0 && i < ds.rows.length)) {
      throw new CsvError(`row index ${i} out of range (0..${ds.rows.length - 1})`);
    }
  }
  const lines = [ds.columns.map((c) => c.name).join(",")];
  for (const i of rowIndices) {
    const r = ds.rows[i];
    const fields: string[] = [];
    let vi = 0;
    for (const col of ds.columns) {
      if (col.kind === "id") fields.push(r.individualId);
      else if (col.kind === "year") fields.push(String(r.year));
      else if (col.kind === "region") fields.push(r.region ?? "");
      else fields.push(formatNumber(r.values[vi++]));
    }
    for (const f of fields) {
      if (/[",\n\r]/.test(f)) {
        throw new CsvError(`value ${f} cannot be represented without quoting`, i);
      }
    }
    lines.push(fields.join(","));
  }
  return lines.join("\n") + "\n";
}

/** All rows of every listed individual, entry order then year order; ids the
 * dataset no longer knows (stale after a dataset switch) are skipped. */
export function watchlistExport(ds: Dataset, entries: readonly WatchlistEntryW[]): string {
  const rows: number[] = [];
  for (const entry of entries) {
    rows.push(...(ds.individuals.get(entry.individual_id) ?? []));
  }
  return exportCsv(ds, rows);
}

// ---------------------------------------------------------------------------
// Filtering and channel normalization

/** Indices of rows passing every active constraint, in ascending order. */
export function applyFilters(ds: Dataset, filt: FilterW): number[] {
  const numericIx = new Map<number, [number, number]>();
  for (const [col, rng] of Object.entries(filt.numeric_ranges)) {
    numericIx.set(numericIndex(ds, col), rng);
  }
  const regions = filt.regions === null ? null : new Set(filt.regions);
  const out: number[] = [];
  for (let i = 0; i < ds.rows.length; i++) {
    const r = ds.rows[i];
    if (filt.year_range !== null && !(filt.year_range[0] <= r.year && r.year <= filt.year_range[1])) {
      continue;
    }
    if (regions !== null && (r.region === null || !regions.has(r.region))) continue;
    let ok = true;
    for (const [vi, [lo, hi]] of numericIx) {
      const v = r.values[vi];
      if (!(lo <= v && v <= hi)) {
        ok = false;
        break;
      }
    }
    if (ok) out.push(i);
  }
  return out;
}

/**
 * Min-max normalize a numeric column over the full dataset. Constant columns
 * map to 0.5 so the points sit at the cube center instead of collapsing onto
 * a face.
 */
export function normalizeChannel(ds: Dataset, column: string): number[] {
  const vi = numericIndex(ds, column);
  const values = ds.rows.map((r) => r.values[vi]);
  if (values.length === 0) return [];
  let lo = values[0];
  let hi = values[0];
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (lo === hi) return values.map(() => 0.5);
  const span = hi - lo;
  return values.map((v) => (v - lo) / span);
}

/** One unit-cube point per visible row, channels per the mapping. */
export function projectPoints(ds: Dataset, mapping: MappingW, visible: readonly number[]): NormPoint[] {
  const cache = new Map<string, number[]>();
  const channel = (col: string): number[] => {
    let got = cache.get(col);
    if (!got) {
      got = normalizeChannel(ds, col);
      cache.set(col, got);
    }
    return got;
  };
  const xs = channel(mapping.x);
  const ys = channel(mapping.y);
  const zs = channel(mapping.z);
  const cs = channel(mapping.color);
  const ss = channel(mapping.size);
  return visible.map((i) => ({
    rowIndex: i,
    position: [xs[i], ys[i], zs[i]] as [number, number, number],
    colorT: cs[i],
    sizeT: ss[i],
  }));
}

export interface TraceLine {
  individualId: string;
  points: NormPoint[]; // ascending year order
}

/** Per-individual polylines over visible rows; fewer than two visible rows
 * yields no polyline. */
export function buildTraces(
  ds: Dataset,
  mapping: MappingW,
  visible: readonly number[],
): TraceLine[] {
  const byRow = new Map<number, NormPoint>();
  for (const p of projectPoints(ds, mapping, visible)) byRow.set(p.rowIndex, p);
  const traces: TraceLine[] = [];
  for (const [ind, rowIxs] of ds.individuals) {
    const verts = rowIxs.filter((i) => byRow.has(i)).map((i) => byRow.get(i)!);
    if (verts.length >= 2) traces.push({ individualId: ind, points: verts });
  }
  return traces;
}

// ---------------------------------------------------------------------------
// Statistics and bars

export interface ColumnStats {
  count: number;
  mean: number | null;
  std: number | null; // population standard deviation
  min: number | null;
  max: number | null;
}

/** Count/mean/std/min/max per column over the filtered subset. */
export function subsetStatistics(
  ds: Dataset,
  filt: FilterW,
  columns: readonly string[],
): Map<string, ColumnStats> {
  const visible = applyFilters(ds, filt);
  const out = new Map<string, ColumnStats>();
  for (const col of columns) {
    const vi = numericIndex(ds, col);
    const vals = visible.map((i) => ds.rows[i].values[vi]);
    const n = vals.length;
    if (n === 0) {
      out.set(col, { count: 0, mean: null, std: null, min: null, max: null });
      continue;
    }
    let sum = 0;
    for (const v of vals) sum += v;
    const mean = sum / n;
    let sq = 0;
    for (const v of vals) sq += (v - mean) ** 2;
    let mn = vals[0];
    let mx = vals[0];
    for (const v of vals) {
      if (v < mn) mn = v;
      if (v > mx) mx = v;
    }
    out.set(col, { count: n, mean, std: Math.sqrt(sq / n), min: mn, max: mx });
  }
  return out;
}

export interface Bar {
  region: string;
  year: number;
  value: number; // group mean of the value column
  height: number; // min-max normalized over the grid
  color: [number, number, number];
}

export interface BarGrid {
  valueColumn: string;
  bars: Bar[]; // sorted by (region, year)
}

export class NoRegionColumnError extends Error {}

/** Group visible rows by (region, year); bar value is the group mean, heights
 * min-max normalized over the grid (constant grid -> all 0.5). */
export function aggregateBars(ds: Dataset, valueColumn: string, filt: FilterW): BarGrid {
  if (!hasRegion(ds)) throw new NoRegionColumnError("dataset has no region column");
  const vi = numericIndex(ds, valueColumn);
  const visible = applyFilters(ds, filt);
  const groups = new Map<string, { region: string; year: number; vals: number[] }>();
  for (const i of visible) {
    const r = ds.rows[i];
    if (r.region === null) continue;
    const key = `${r.region}\u0000${r.year}`;
    const g = groups.get(key);
    if (g) g.vals.push(r.values[vi]);
    else groups.set(key, { region: r.region, year: r.year, vals: [r.values[vi]] });
  }
  const bars: Bar[] = [];
  if (groups.size > 0) {
    const means = [...groups.values()].map((g) => {
      let sum = 0;
      for (const v of g.vals) sum += v;
      return { region: g.region, year: g.year, value: sum / g.vals.length };
    });
    let lo = means[0].value;
    let hi = means[0].value;
    for (const m of means) {
      if (m.value < lo) lo = m.value;
      if (m.value > hi) hi = m.value;
    }
    const span = hi - lo;
    means.sort((a, b) => codePointCompare(a.region, b.region) || a.year - b.year);
    for (const m of means) {
      const height = span === 0 ? 0.5 : (m.value - lo) / span;
      bars.push({ ...m, height, color: colormap(height) });
    }
  }
  return { valueColumn, bars };
}

// Cool-to-warm gradient control points at t = 0, 1/3, 2/3, 1.
const COLOR_STOPS: readonly [number, number, number][] = [
  [0, 0, 255],
  [0, 255, 0],
  [255, 255, 0],
  [255, 0, 0],
];

/** Piecewise-linear blue -> green -> yellow -> red, rounded half-up. */
export function colormap(t: number): [number, number, number] {
  const tt = Math.min(1, Math.max(0, t));
  const scaled = tt * 3;
  const seg = Math.min(2, Math.floor(scaled));
  const frac = scaled - seg;
  const a = COLOR_STOPS[seg];
  const b = COLOR_STOPS[seg + 1];
  return [0, 1, 2].map((c) => Math.floor(a[c] + (b[c] - a[c]) * frac + 0.5)) as [
    number,
    number,
    number,
  ];
}

/** Exact 6-significant-digit decimal of |v| with round-half-even, as the
 * digit string plus decimal exponent. Uses the double's integer mantissa and
 * binary exponent so tie rounding matches IEEE-exact reference formatting
 * (string rounding helpers round ties away from zero instead). */
function sixSignificantDigits(v: number): { digits: string; exp10: number } {
  const buf = new DataView(new ArrayBuffer(8));
  buf.setFloat64(0, Math.abs(v));
  const bits = buf.getBigUint64(0);
  const expBits = Number((bits >> 52n) & 0x7ffn);
  const mantBits = bits & 0xfffffffffffffn;
  let m = expBits === 0 ? mantBits : mantBits | (1n << 52n);
  let e = (expBits === 0 ? 1 : expBits) - 1075;
  while (m !== 0n && (m & 1n) === 0n) {
    m >>= 1n;
    e += 1;
  }

  // Decimal exponent: largest E with 10^E <= |v|, found by exact comparison.
  let exp10 = Math.floor(Math.log10(Math.abs(v)));
  const atLeast = (E: number): boolean => {
    // m * 2^e >= 10^E, cross-multiplied into integers
    let lhs = m;
    let rhs = 1n;
    if (E >= 0) rhs = 10n ** BigInt(E);
    else lhs *= 10n ** BigInt(-E);
    if (e >= 0) lhs <<= BigInt(e);
    else rhs <<= BigInt(-e);
    return lhs >= rhs;
  };
  if (atLeast(exp10 + 1)) exp10 += 1;
  else if (!atLeast(exp10)) exp10 -= 1;

  // Round m * 2^e / 10^(exp10 - 5) to an integer, half to even.
  const k = 5 - exp10;
  let num = m;
  let den = 1n;
  if (e >= 0) num <<= BigInt(e);
  else den <<= BigInt(-e);
  if (k >= 0) num *= 10n ** BigInt(k);
  else den *= 10n ** BigInt(-k);
  let q = num / den;
  const r2 = (num % den) * 2n;
  if (r2 > den || (r2 === den && (q & 1n) === 1n)) q += 1n;
  if (q === 1000000n) {
    q = 100000n;
    exp10 += 1;
  }
  return { digits: q.toString(), exp10 };
}

/** Numeric rendering for detail panels: 6 significant digits, trailing zeros
 * kept, exponent form outside [1e-4, 1e6). */
export function displayValue(v: number): string {
  if (!Number.isFinite(v)) return String(v);
  if (v === 0) return Object.is(v, -0) ? "-0.00000" : "0.00000";
  const neg = v < 0;
  const { digits, exp10 } = sixSignificantDigits(v);
  let out: string;
  if (exp10 < -4 || exp10 >= 6) {
    const sign = exp10 < 0 ? "-" : "+";
    out =
      digits[0] +
      "." +
      digits.slice(1) +
      "e" +
      sign +
      String(Math.abs(exp10)).padStart(2, "0");
  } else if (exp10 >= 0) {
    out = digits.slice(0, exp10 + 1) + "." + digits.slice(exp10 + 1);
  } else {
    out = "0." + "0".repeat(-exp10 - 1) + digits;
  }
  return neg ? "-" + out : out;
}

/** (column, display value) pairs for one row, in schema order. */
export function recordDetail(ds: Dataset, rowIndex: number): [string, string][] {
  if (!(rowIndex >= 0 && rowIndex < ds.rows.length)) {
    throw new CsvError(`row index ${rowIndex} out of range`);
  }
  const r = ds.rows[rowIndex];
  const out: [string, string][] = [];
  let vi = 0;
  for (const col of ds.columns) {
    if (col.kind === "id") out.push([col.name, r.individualId]);
    else if (col.kind === "year") out.push([col.name, String(r.year)]);
    else if (col.kind === "region") out.push([col.name, r.region ?? ""]);
    else out.push([col.name, displayValue(r.values[vi++])]);
  }
  return out;
}
