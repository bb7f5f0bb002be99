/** Shared fixture loading for the parity suites. Floats travel as hex-encoded
 * IEEE-754 bit patterns so JSON cannot blur them. */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "fixtures");

export function loadFixture<T>(name: string): T {
  return JSON.parse(readFileSync(join(FIXTURES, name), "utf-8")) as T;
}

export function loadText(name: string): string {
  return readFileSync(join(FIXTURES, name), "utf-8");
}

export function bitsToFloat(hex: string): number {
  const view = new DataView(new ArrayBuffer(8));
  view.setBigUint64(0, BigInt("0x" + hex));
  return view.getFloat64(0);
}

export function floatToBits(v: number): string {
  const view = new DataView(new ArrayBuffer(8));
  view.setFloat64(0, v);
  return view.getBigUint64(0).toString(16).padStart(16, "0");
}

export function hexToBytes(hex: string): Uint8Array {
  const out = new Uint8Array(hex.length / 2);
  for (let i = 0; i < out.length; i++) {
    out[i] = parseInt(hex.slice(i * 2, i * 2 + 2), 16);
  }
  return out;
}

/** Compare floats by bit pattern, so NaN payloads and -0 count too. */
export function expectSameFloat(actual: number, expectedBits: string, label: string): void {
  const actualBits = floatToBits(actual);
  if (actualBits !== expectedBits) {
    throw new Error(
      `${label}: expected bits ${expectedBits} (${bitsToFloat(expectedBits)}), ` +
        `got ${actualBits} (${actual})`,
    );
  }
}
