import * as fs from "node:fs";
import * as path from "node:path";

import { parseCsv } from "./csv.js";
import { FIGURE_KINDS } from "./figures.js";

export class NoInputError extends Error {}

export interface RenderReport {
  rendered: string[];
  skipped: string[];
  errors: string[];
}

/** MANIFEST.txt -> file name to declared column list. Absent file is fine. */
function readManifest(dir: string): Map<string, string[]> {
  const out = new Map<string, string[]>();
  const p = path.join(dir, "MANIFEST.txt");
  if (!fs.existsSync(p)) return out;
  for (const line of fs.readFileSync(p, "utf8").split("\n").slice(1)) {
    const m = line.match(/^(\S+)\s+columns=(\S+)/);
    if (m) out.set(m[1], m[2].split(","));
  }
  return out;
}

const sameList = (a: string[], b: string[]) =>
  a.length === b.length && a.every((v, i) => v === b[i]);

/**
 * Render every requested figure kind whose CSV exists under inputDir.
 *
 * Inputs are never modified. Missing CSVs are skipped with a warning;
 * a malformed CSV fails only its own figure. Throws NoInputError when
 * none of the requested kinds has a CSV at all.
 */
export function renderFigures(
  inputDir: string,
  outputDir: string,
  kinds?: string[],
  warn: (msg: string) => void = (msg) => console.error(msg),
): RenderReport {
  const names = kinds ?? Object.keys(FIGURE_KINDS);
  for (const name of names) {
    if (!(name in FIGURE_KINDS)) {
      throw new Error(`unknown figure kind ${name} (have: ${Object.keys(FIGURE_KINDS).join(", ")})`);
    }
  }
  if (!fs.existsSync(inputDir) || !fs.statSync(inputDir).isDirectory()) {
    throw new NoInputError(`no experiment CSVs found: ${inputDir} is not a directory`);
  }
  const manifest = readManifest(inputDir);
  const report: RenderReport = { rendered: [], skipped: [], errors: [] };

  for (const name of names) {
    const kind = FIGURE_KINDS[name];
    const csvPath = path.join(inputDir, kind.file);
    if (!fs.existsSync(csvPath)) {
      report.skipped.push(name);
      warn(`warning: ${kind.file} not found, skipping ${name}`);
      continue;
    }
    try {
      const table = parseCsv(fs.readFileSync(csvPath, "utf8"));
      if (!sameList(table.header, kind.columns)) {
        throw new Error(`header is [${table.header}], expected [${kind.columns}]`);
      }
      const declared = manifest.get(kind.file);
      if (declared && !sameList(declared, kind.columns)) {
        throw new Error(`MANIFEST declares [${declared}] for ${kind.file}`);
      }
      const svg = kind.build(table);
      fs.mkdirSync(outputDir, { recursive: true });
      fs.writeFileSync(path.join(outputDir, `${name}.svg`), svg);
      report.rendered.push(name);
    } catch (err) {
      report.errors.push(name);
      warn(`error: ${kind.file}: ${err instanceof Error ? err.message : err}`);
    }
  }

  if (report.rendered.length === 0 && report.errors.length === 0) {
    throw new NoInputError("no experiment CSVs found");
  }
  return report;
}
