import { describe, expect, it } from "vitest";
import {
  codePointCompare,
  floatRepr,
  intRepr,
  jsonArray,
  jsonObject,
  jsonString,
  sortedKeys,
} from "../src/canonical.js";
import { DEFAULT_ANCHOR } from "../src/client.js";
import { bitsToFloat, loadFixture } from "./helpers.js";

interface FloatCase {
  bits: string;
  repr: string;
}

describe("floatRepr", () => {
  it("matches the server's float formatting across the corpus", () => {
    const cases = loadFixture<FloatCase[]>("floats.json");
    expect(cases.length).toBeGreaterThan(3000);
    for (const c of cases) {
      const v = bitsToFloat(c.bits);
      expect(floatRepr(v), `bits ${c.bits}`).toBe(c.repr);
    }
  });

  it("keeps the trailing .0 on integral floats", () => {
    expect(floatRepr(1)).toBe("1.0");
    expect(floatRepr(-3)).toBe("-3.0");
    expect(floatRepr(1e16)).toBe("1e+16");
  });
});

describe("intRepr", () => {
  it("formats integers without a decimal point", () => {
    expect(intRepr(0)).toBe("0");
    expect(intRepr(-17)).toBe("-17");
    expect(intRepr(2200)).toBe("2200");
  });
});

describe("jsonString", () => {
  it("escapes like the server's canonical encoder", () => {
    expect(jsonString("plain")).toBe('"plain"');
    expect(jsonString('a"b')).toBe('"a\\"b"');
    expect(jsonString("a\\b")).toBe('"a\\\\b"');
    expect(jsonString("\n\t\r")).toBe('"\\n\\t\\r"');
    expect(jsonString("")).toBe('"\\u0001"');
    expect(jsonString("")).toBe('"\\u001f"');
  });

  it("leaves non-ASCII text unescaped", () => {
    expect(jsonString("データ")).toBe('"データ"');
    expect(jsonString("\u{1f600}")).toBe('"\u{1f600}"');
  });
});

describe("codePointCompare", () => {
  it("orders by code point, not UTF-16 units", () => {
    // In UTF-16 unit order "\u{10000}" (surrogate pair starting 0xD800)
    // sorts before "￿"; in code-point order it sorts after.
    expect("\u{10000}" < "￿").toBe(true);
    expect(codePointCompare("\u{10000}", "￿")).toBeGreaterThan(0);
    expect(codePointCompare("a", "b")).toBeLessThan(0);
    expect(codePointCompare("a", "a")).toBe(0);
    expect(codePointCompare("a", "ab")).toBeLessThan(0);
  });

  it("drives sortedKeys", () => {
    expect(sortedKeys({ b: 1, a: 2, "￿": 3, "\u{10000}": 4 })).toEqual([
      "a",
      "b",
      "￿",
      "\u{10000}",
    ]);
  });
});

describe("canonical composition", () => {
  it("reproduces the server's anchor_upload envelope byte for byte", () => {
    const fixture = loadFixture<{ anchor_upload_canonical: string }>("protocol_misc.json");
    const points = DEFAULT_ANCHOR.map((p) =>
      jsonObject([
        ["label", jsonString(p.label)],
        ["position", jsonArray(p.position.map(floatRepr))],
      ]),
    );
    const envelope = jsonObject([
      ["kind", jsonString("anchor_upload")],
      ["payload", jsonObject([["anchor", jsonArray(points)]])],
      ["sender", jsonString("c1")],
    ]);
    expect(envelope).toBe(fixture.anchor_upload_canonical);
  });
});
