/**
 * Per-user label translation. Lookups fall back key -> en -> the key itself,
 * and the chosen language never leaves this client: switching it emits no
 * protocol traffic, so two users can read the same session in different
 * languages. The table is fetched from the server's /strings.tsv.
 */

export const REFERENCE_LANGUAGE = "en";

export interface MissingTranslation {
  key: string;
  language: string;
}

export class StringTable {
  readonly languages = new Set<string>([REFERENCE_LANGUAGE]);
  readonly diagnostics: MissingTranslation[] = [];
  private entries = new Map<string, string>();

  private static slot(key: string, language: string): string {
    return `${key}\u0000${language}`;
  }

  add(key: string, language: string, text: string): void {
    this.languages.add(language);
    this.entries.set(StringTable.slot(key, language), text);
  }

  /** Total lookup: never throws, worst case returns the key itself. */
  translate(key: string, language: string): string {
    const hit = this.entries.get(StringTable.slot(key, language));
    if (hit !== undefined) return hit;
    const fallback = this.entries.get(StringTable.slot(key, REFERENCE_LANGUAGE));
    if (fallback !== undefined) {
      if (language !== REFERENCE_LANGUAGE) this.diagnostics.push({ key, language });
      return fallback;
    }
    this.diagnostics.push({ key, language });
    return key;
  }

  get keys(): string[] {
    const out: string[] = [];
    for (const slot of this.entries.keys()) {
      const [key, lang] = slot.split("\u0000");
      if (lang === REFERENCE_LANGUAGE) out.push(key);
    }
    return out;
  }
}

/**
 * Parse the tab-separated table format: `key<TAB>lang<TAB>text` per line.
 * Blank lines and lines starting with `#` are skipped.
 */
export function parseTable(text: string): StringTable {
  const table = new StringTable();
  const lines = text.split(/\r?\n/);
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i];
    if (line.trim() === "" || line.startsWith("#")) continue;
    const parts = line.split("\t");
    if (parts.length !== 3) {
      throw new Error(`line ${i + 1}: expected key<TAB>lang<TAB>text, got ${JSON.stringify(line)}`);
    }
    table.add(parts[0], parts[1], parts[2]);
  }
  return table;
}

/** The language a session starts in: the URL's ?lang= if the table knows it,
 * otherwise the reference language. */
export function resolveLanguage(requested: string | null, table: StringTable): string {
  if (requested !== null && table.languages.has(requested)) return requested;
  return REFERENCE_LANGUAGE;
}
