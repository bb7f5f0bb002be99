import { describe, expect, it } from "vitest";
import { blake2bHex } from "../src/blake2b.js";
import { hexToBytes, loadFixture } from "./helpers.js";

interface HashCase {
  msg_hex: string;
  outlen: number;
  hex: string;
}

describe("blake2b", () => {
  it("matches the reference digests for all lengths and output sizes", () => {
    const cases = loadFixture<HashCase[]>("blake2b.json");
    expect(cases.length).toBeGreaterThan(60);
    for (const c of cases) {
      const msg = hexToBytes(c.msg_hex);
      expect(blake2bHex(msg, c.outlen), `msg len ${msg.length} outlen ${c.outlen}`).toBe(c.hex);
    }
  });

  it("defaults to the 8-byte digest used for state digests", () => {
    const empty = blake2bHex(new Uint8Array(0));
    expect(empty).toHaveLength(16);
    const reference = loadFixture<HashCase[]>("blake2b.json").find(
      (c) => c.msg_hex === "" && c.outlen === 8,
    );
    expect(empty).toBe(reference!.hex);
  });
});
