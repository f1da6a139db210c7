#!/usr/bin/env node
import { NoInputError, renderFigures } from "./render.js";

const USAGE = "usage: hapsim-render render --in <dir> --out <dir> [--kinds k1,k2,...]";

/** Returns the process exit code. */
export function main(argv: string[]): number {
  if (argv[0] !== "render") {
    console.error(USAGE);
    return 2;
  }
  let inDir: string | undefined;
  let outDir: string | undefined;
  let kinds: string[] | undefined;
  for (let i = 1; i < argv.length; i += 2) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (value === undefined) {
      console.error(`missing value for ${flag}\n${USAGE}`);
      return 2;
    }
    if (flag === "--in") inDir = value;
    else if (flag === "--out") outDir = value;
    else if (flag === "--kinds") kinds = value.split(",").map((s) => s.trim()).filter(Boolean);
    else {
      console.error(`unknown flag ${flag}\n${USAGE}`);
      return 2;
    }
  }
  if (!inDir || !outDir) {
    console.error(USAGE);
    return 2;
  }

  try {
    const report = renderFigures(inDir, outDir, kinds);
    console.error(
      `rendered ${report.rendered.length} figure(s)` +
        (report.skipped.length ? `, skipped ${report.skipped.length}` : "") +
        (report.errors.length ? `, ${report.errors.length} failed` : ""),
    );
    return report.rendered.length > 0 ? 0 : 1;
  } catch (err) {
    if (err instanceof NoInputError) {
      console.error(err.message);
      return 1;
    }
    if (err instanceof Error) {
      console.error(err.message);
      return 2;
    }
    throw err;
  }
}

if (process.argv[1] && /cli\.[cm]?js$/.test(process.argv[1])) {
  process.exit(main(process.argv.slice(2)));
}
