import { describe, expect, it, vi } from "vitest";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

import { main } from "../src/cli.js";
import { NoInputError, renderFigures } from "../src/render.js";

const HERE = path.dirname(fileURLToPath(import.meta.url));
const FIXTURES = path.join(HERE, "fixtures", "experiments");
const SEVEN = [
  "burst",
  "capacity",
  "coverage",
  "force_dynamics",
  "min_snr",
  "rolling_mse",
  "threshold_sweep",
];

const tmpdir = () => fs.mkdtempSync(path.join(os.tmpdir(), "hapfig-"));

function copyFixtures(except: string[] = []): string {
  const dir = tmpdir();
  for (const f of fs.readdirSync(FIXTURES)) {
    if (!except.includes(f)) fs.copyFileSync(path.join(FIXTURES, f), path.join(dir, f));
  }
  return dir;
}

/** Tag-stack well-formedness check, enough for the SVG we emit. */
function assertWellFormed(svg: string) {
  expect(svg.startsWith("<?xml")).toBe(true);
  const tag = /<(\/?)([A-Za-z][\w:-]*)((?:[^<>"]|"[^"]*")*?)(\/?)>/g;
  const stack: string[] = [];
  let seen = 0;
  for (const m of svg.matchAll(tag)) {
    seen += 1;
    if (m[4]) continue;
    if (m[1]) expect(stack.pop()).toBe(m[2]);
    else stack.push(m[2]);
  }
  expect(seen).toBeGreaterThan(10);
  expect(stack).toEqual([]);
  expect(svg).toContain("</svg>");
}

function mainQuiet(argv: string[]): { code: number; stderr: string } {
  const lines: string[] = [];
  const spy = vi.spyOn(console, "error").mockImplementation((...a: unknown[]) => {
    lines.push(a.map(String).join(" "));
  });
  try {
    return { code: main(argv), stderr: lines.join("\n") };
  } finally {
    spy.mockRestore();
  }
}

describe("renderFigures", () => {
  it("renders every figure present in a canned experiment run", () => {
    const out = tmpdir();
    const warnings: string[] = [];
    const report = renderFigures(FIXTURES, out, undefined, (m) => warnings.push(m));
    expect(report.errors).toEqual([]);
    expect([...report.rendered].sort()).toEqual(SEVEN);
    expect(report.skipped).toEqual(["estimates"]);
    expect(warnings.join("\n")).toContain("estimates.csv not found");
    for (const kind of SEVEN) {
      const svg = fs.readFileSync(path.join(out, `${kind}.svg`), "utf8");
      assertWellFormed(svg);
      expect(/<polyline points=|<rect x=/.test(svg)).toBe(true);
    }
  });

  it("skips a missing CSV with a warning and renders the rest", () => {
    const dir = copyFixtures(["coverage.csv"]);
    const warnings: string[] = [];
    const report = renderFigures(dir, tmpdir(), undefined, (m) => warnings.push(m));
    expect(report.skipped.sort()).toEqual(["coverage", "estimates"]);
    expect(report.rendered).toHaveLength(6);
    expect(report.errors).toEqual([]);
    expect(warnings.join("\n")).toContain("coverage.csv not found");
  });

  it("confines a malformed CSV to its own figure", () => {
    const dir = copyFixtures();
    fs.appendFileSync(path.join(dir, "min_snr.csv"), "stray,row\n");
    const warnings: string[] = [];
    const report = renderFigures(dir, tmpdir(), undefined, (m) => warnings.push(m));
    expect(report.errors).toEqual(["min_snr"]);
    expect(report.rendered).toHaveLength(6);
    expect(warnings.join("\n")).toMatch(/min_snr\.csv.*expected 5 columns/);
  });

  it("rejects a CSV whose header drifted from the known layout", () => {
    const dir = tmpdir();
    fs.writeFileSync(path.join(dir, "burst.csv"), "model,whoops\nxhap,1\n");
    const report = renderFigures(dir, tmpdir(), undefined, () => {});
    expect(report.errors).toEqual(["burst"]);
    expect(report.rendered).toEqual([]);
  });

  it("flags a MANIFEST that disagrees with the known columns", () => {
    const dir = copyFixtures();
    const manifest = fs
      .readFileSync(path.join(dir, "MANIFEST.txt"), "utf8")
      .replace(/^burst\.csv columns=\S+/m, "burst.csv columns=model,oops");
    fs.writeFileSync(path.join(dir, "MANIFEST.txt"), manifest);
    const warnings: string[] = [];
    const report = renderFigures(dir, tmpdir(), undefined, (m) => warnings.push(m));
    expect(report.errors).toEqual(["burst"]);
    expect(report.rendered).toHaveLength(6);
    expect(warnings.join("\n")).toContain("MANIFEST declares");
  });

  it("throws when the input directory holds no experiment CSVs", () => {
    expect(() => renderFigures(tmpdir(), tmpdir(), undefined, () => {})).toThrow(NoInputError);
    expect(() => renderFigures(tmpdir(), tmpdir(), undefined, () => {})).toThrow(
      /no experiment CSVs found/,
    );
  });

  it("rejects an unknown figure kind by name", () => {
    expect(() => renderFigures(FIXTURES, tmpdir(), ["volume"], () => {})).toThrow(
      /unknown figure kind volume/,
    );
  });

  it("draws restoration rate rising with the acceptance threshold", () => {
    const out = tmpdir();
    renderFigures(FIXTURES, out, ["threshold_sweep"], () => {});
    const svg = fs.readFileSync(path.join(out, "threshold_sweep.svg"), "utf8");
    const polys = [...svg.matchAll(/<polyline points="([^"]+)"/g)].map((m) => m[1]);
    expect(polys).toHaveLength(9); // three models at three MCS points each
    for (const pts of polys) {
      const coords = pts.split(" ").map((p) => p.split(",").map(Number));
      expect(coords.length).toBe(3);
      for (let i = 1; i < coords.length; i++) {
        expect(coords[i][0]).toBeGreaterThan(coords[i - 1][0]);
        // SVG y grows downward, so a nondecreasing rate means nonincreasing y
        expect(coords[i][1]).toBeLessThanOrEqual(coords[i - 1][1] + 1e-9);
      }
    }
  });

  it("re-renders byte-identically and leaves the inputs untouched", () => {
    const before = new Map(
      fs.readdirSync(FIXTURES).map((f) => [f, fs.readFileSync(path.join(FIXTURES, f))]),
    );
    const out = tmpdir();
    renderFigures(FIXTURES, out, undefined, () => {});
    const first = new Map(SEVEN.map((k) => [k, fs.readFileSync(path.join(out, `${k}.svg`))]));
    renderFigures(FIXTURES, out, undefined, () => {});
    for (const k of SEVEN) {
      expect(fs.readFileSync(path.join(out, `${k}.svg`)).equals(first.get(k)!)).toBe(true);
    }
    for (const [f, bytes] of before) {
      expect(fs.readFileSync(path.join(FIXTURES, f)).equals(bytes)).toBe(true);
    }
  });

  it("renders the restored-trace overlay from its own CSV", () => {
    const dir = tmpdir();
    const rows = ["step,truth,xhap,hold_last"];
    for (let i = 0; i < 60; i++) {
      const truth = 2 * Math.sin(i / 9);
      rows.push(`${i},${truth.toFixed(6)},${(truth + 0.05).toFixed(6)},${(truth - 0.1).toFixed(6)}`);
    }
    fs.writeFileSync(path.join(dir, "estimates.csv"), rows.join("\n") + "\n");
    const out = tmpdir();
    const report = renderFigures(dir, out, ["estimates"], () => {});
    expect(report.rendered).toEqual(["estimates"]);
    assertWellFormed(fs.readFileSync(path.join(out, "estimates.svg"), "utf8"));
  });
});

describe("cli", () => {
  it("renders the full set and exits zero", () => {
    const out = tmpdir();
    const { code } = mainQuiet(["render", "--in", FIXTURES, "--out", out]);
    expect(code).toBe(0);
    expect(fs.readdirSync(out).filter((f) => f.endsWith(".svg"))).toHaveLength(7);
  });

  it("exits nonzero on an empty input directory", () => {
    const out = tmpdir();
    const { code, stderr } = mainQuiet(["render", "--in", tmpdir(), "--out", out]);
    expect(code).toBe(1);
    expect(stderr).toContain("no experiment CSVs found");
    expect(fs.readdirSync(out)).toEqual([]);
  });

  it("exits nonzero when every figure fails", () => {
    const dir = tmpdir();
    fs.writeFileSync(path.join(dir, "burst.csv"), "model,whoops\nxhap,1\n");
    const { code } = mainQuiet(["render", "--in", dir, "--out", tmpdir()]);
    expect(code).toBe(1);
  });

  it("honours a kinds filter and rejects unknown names", () => {
    const out = tmpdir();
    const ok = mainQuiet(["render", "--in", FIXTURES, "--out", out, "--kinds", "burst,capacity"]);
    expect(ok.code).toBe(0);
    expect(fs.readdirSync(out).sort()).toEqual(["burst.svg", "capacity.svg"]);
    const bad = mainQuiet(["render", "--in", FIXTURES, "--out", tmpdir(), "--kinds", "volume"]);
    expect(bad.code).toBe(2);
    expect(bad.stderr).toContain("unknown figure kind");
  });

  it("prints usage for malformed invocations", () => {
    expect(mainQuiet([]).code).toBe(2);
    expect(mainQuiet(["paint"]).code).toBe(2);
    expect(mainQuiet(["render", "--in", FIXTURES]).code).toBe(2);
    expect(mainQuiet(["render", "--in", FIXTURES, "--out"]).code).toBe(2);
    expect(mainQuiet(["render", "--wat", "x", "--out", "y"]).stderr).toContain("unknown flag");
  });
});
