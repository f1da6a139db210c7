/** Minimal reader for the simulator's plain CSV output (no quoting). */

export interface Table {
  header: string[];
  rows: string[][];
}

export function parseCsv(text: string): Table {
  const lines = text.split("\n").map((l) => l.replace(/\r$/, "")).filter((l) => l.length > 0);
  if (lines.length === 0) throw new Error("empty CSV");
  const header = lines[0].split(",");
  const width = header.length;
  const rows: string[][] = [];
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i].split(",");
    if (cells.length !== width) {
      throw new Error(`line ${i + 1}: expected ${width} columns, got ${cells.length}`);
    }
    rows.push(cells);
  }
  return { header, rows };
}

/** Numeric column by name; non-finite cells (e.g. "inf") become NaN. */
export function column(t: Table, name: string): number[] {
  const j = t.header.indexOf(name);
  if (j < 0) throw new Error(`missing column ${name}`);
  return t.rows.map((r) => Number(r[j]));
}

export function textColumn(t: Table, name: string): string[] {
  const j = t.header.indexOf(name);
  if (j < 0) throw new Error(`missing column ${name}`);
  return t.rows.map((r) => r[j]);
}

/** Distinct values of a column, in first-seen order. */
export function distinct(values: string[]): string[] {
  const seen: string[] = [];
  for (const v of values) if (!seen.includes(v)) seen.push(v);
  return seen;
}

/** Keep (x, y) pairs whose y (and x) are finite, preserving order. */
export function finitePairs(xs: number[], ys: number[]): { x: number[]; y: number[] } {
  const x: number[] = [];
  const y: number[] = [];
  for (let i = 0; i < ys.length; i++) {
    if (Number.isFinite(xs[i]) && Number.isFinite(ys[i])) {
      x.push(xs[i]);
      y.push(ys[i]);
    }
  }
  return { x, y };
}
