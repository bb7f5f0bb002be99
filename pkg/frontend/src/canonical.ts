/**
 * Canonical JSON text, byte-compatible with the session server's form:
 * keys sorted by code point, compact separators, raw non-ASCII, and floats
 * rendered as the shortest decimal that round-trips (CPython repr rules).
 *
 * JSON.stringify cannot be used for this: it prints integral floats without
 * a trailing ".0" and places the positional/exponent switch differently, so
 * digests would disagree across implementations.
 */

/** Shortest round-trip decimal for a finite double, repr-style. */
export function floatRepr(v: number): string {
  if (!Number.isFinite(v)) {
    throw new Error(`non-finite float ${v} has no canonical form`);
  }
  if (v === 0) return Object.is(v, -0) ? "-0.0" : "0.0";
  const neg = v < 0;
  // toExponential() with no argument yields the shortest uniquely
  // identifying mantissa, the same digits repr would pick.
  const m = Math.abs(v)
    .toExponential()
    .match(/^(\d)(?:\.(\d+))?e([+-]\d+)$/);
  if (!m) throw new Error(`unexpected exponential form for ${v}`);
  const digits = m[1] + (m[2] ?? "");
  const exp = parseInt(m[3], 10);
  let out: string;
  if (exp >= -4 && exp < 16) {
    if (exp >= digits.length - 1) {
      out = digits + "0".repeat(exp - (digits.length - 1)) + ".0";
    } else if (exp >= 0) {
      out = digits.slice(0, exp + 1) + "." + digits.slice(exp + 1);
    } else {
      out = "0." + "0".repeat(-exp - 1) + digits;
    }
  } else {
    const mantissa = m[2] ? `${m[1]}.${m[2]}` : m[1];
    const sign = exp < 0 ? "-" : "+";
    out = mantissa + "e" + sign + String(Math.abs(exp)).padStart(2, "0");
  }
  return neg ? "-" + out : out;
}

export function intRepr(v: number): string {
  if (!Number.isSafeInteger(v)) throw new Error(`not a safe integer: ${v}`);
  return String(v);
}

/** Escape exactly like json.dumps(ensure_ascii=False): only what JSON requires. */
export function jsonString(s: string): string {
  let out = '"';
  for (const ch of s) {
    const c = ch.codePointAt(0)!;
    if (ch === '"') out += '\\"';
    else if (ch === "\\") out += "\\\\";
    else if (c < 0x20) {
      if (ch === "\b") out += "\\b";
      else if (ch === "\t") out += "\\t";
      else if (ch === "\n") out += "\\n";
      else if (ch === "\f") out += "\\f";
      else if (ch === "\r") out += "\\r";
      else out += "\\u" + c.toString(16).padStart(4, "0");
    } else out += ch;
  }
  return out + '"';
}

/** Code-point string order (what sorted() uses), not UTF-16 unit order. */
export function codePointCompare(a: string, b: string): number {
  const ai = Array.from(a);
  const bi = Array.from(b);
  const n = Math.min(ai.length, bi.length);
  for (let i = 0; i < n; i++) {
    const d = ai[i].codePointAt(0)! - bi[i].codePointAt(0)!;
    if (d !== 0) return d;
  }
  return ai.length - bi.length;
}

export function sortedKeys(obj: Record<string, unknown>): string[] {
  return Object.keys(obj).sort(codePointCompare);
}

/** `{"k":v,...}` from already-serialized parts, keys in code-point order. */
export function jsonObject(entries: Array<[string, string]>): string {
  const sorted = [...entries].sort((a, b) => codePointCompare(a[0], b[0]));
  return "{" + sorted.map(([k, v]) => jsonString(k) + ":" + v).join(",") + "}";
}

export function jsonArray(parts: string[]): string {
  return "[" + parts.join(",") + "]";
}

export const jsonBool = (b: boolean): string => (b ? "true" : "false");
export const JSON_NULL = "null";
