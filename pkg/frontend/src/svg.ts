/** Hand-rolled SVG charts: enough for line/bar figures, no dependencies. */

export interface Series {
  label: string;
  x: number[];
  y: number[];
}

export interface ChartOptions {
  title: string;
  xLabel: string;
  yLabel: string;
  /** Draw point markers on top of each line (default when a series is short). */
  markers?: boolean;
}

const W = 640;
const H = 420;
const M = { left: 66, right: 18, top: 38, bottom: 50 };
const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const FONT = "font-family=\"Helvetica, Arial, sans-serif\"";

export function escapeXml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

const fmtCoord = (v: number) => (Math.round(v * 100) / 100).toString();

/** Compact tick label: trims float noise, keeps scientific heads readable. */
export function fmtTick(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e5 || a < 1e-3) return v.toExponential(1).replace("e+", "e");
  return Number(v.toPrecision(6)).toString();
}

/** Tick positions on the 1-2-5 ladder covering [lo, hi]. */
export function ticks(lo: number, hi: number, want = 6): number[] {
  if (!(hi > lo)) {
    const pad = Math.abs(lo) > 0 ? Math.abs(lo) * 0.5 : 1;
    lo -= pad;
    hi += pad;
  }
  const raw = (hi - lo) / Math.max(2, want);
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  const steps = [1, 2, 5, 10].map((s) => s * mag);
  const step = steps.find((s) => s >= raw) ?? steps[3];
  const out: number[] = [];
  for (let v = Math.ceil(lo / step) * step; v <= hi + step * 1e-9; v += step) {
    out.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return out;
}

interface Scale {
  lo: number;
  hi: number;
  map(v: number): number;
}

function scaleOf(values: number[], pix0: number, pix1: number): Scale {
  let lo = Math.min(...values);
  let hi = Math.max(...values);
  if (!(hi > lo)) {
    const pad = Math.abs(lo) > 0 ? Math.abs(lo) * 0.5 : 1;
    lo -= pad;
    hi += pad;
  }
  const span = hi - lo;
  lo -= span * 0.03;
  hi += span * 0.03;
  return { lo, hi, map: (v) => pix0 + ((v - lo) / (hi - lo)) * (pix1 - pix0) };
}

function frame(opts: ChartOptions, sx: Scale, sy: Scale): string[] {
  const parts: string[] = [];
  const x0 = M.left;
  const x1 = W - M.right;
  const y0 = H - M.bottom;
  const y1 = M.top;
  parts.push(`<rect x="${x0}" y="${y1}" width="${x1 - x0}" height="${y0 - y1}" fill="none" stroke="#444"/>`);
  for (const t of ticks(sx.lo, sx.hi)) {
    const px = fmtCoord(sx.map(t));
    parts.push(`<line x1="${px}" y1="${y0}" x2="${px}" y2="${y1}" stroke="#ddd"/>`);
    parts.push(`<text x="${px}" y="${y0 + 18}" text-anchor="middle" font-size="11" ${FONT}>${fmtTick(t)}</text>`);
  }
  for (const t of ticks(sy.lo, sy.hi)) {
    const py = fmtCoord(sy.map(t));
    parts.push(`<line x1="${x0}" y1="${py}" x2="${x1}" y2="${py}" stroke="#ddd"/>`);
    parts.push(`<text x="${x0 - 6}" y="${py}" text-anchor="end" dominant-baseline="middle" font-size="11" ${FONT}>${fmtTick(t)}</text>`);
  }
  parts.push(`<text x="${(x0 + x1) / 2}" y="${H - 12}" text-anchor="middle" font-size="13" ${FONT}>${escapeXml(opts.xLabel)}</text>`);
  parts.push(
    `<text x="16" y="${(y0 + y1) / 2}" text-anchor="middle" font-size="13" ${FONT} transform="rotate(-90 16 ${(y0 + y1) / 2})">${escapeXml(opts.yLabel)}</text>`,
  );
  parts.push(`<text x="${(x0 + x1) / 2}" y="22" text-anchor="middle" font-size="15" ${FONT}>${escapeXml(opts.title)}</text>`);
  return parts;
}

function legend(labels: string[]): string[] {
  const parts: string[] = [];
  let y = M.top + 14;
  const x = W - M.right - 150;
  for (let i = 0; i < labels.length; i++) {
    const c = PALETTE[i % PALETTE.length];
    parts.push(`<line x1="${x}" y1="${y - 4}" x2="${x + 22}" y2="${y - 4}" stroke="${c}" stroke-width="2.5"/>`);
    parts.push(`<text x="${x + 28}" y="${y}" font-size="12" ${FONT}>${escapeXml(labels[i])}</text>`);
    y += 17;
  }
  return parts;
}

function wrap(body: string[]): string {
  return [
    `<?xml version="1.0" encoding="UTF-8"?>`,
    `<svg xmlns="http://www.w3.org/2000/svg" width="${W}" height="${H}" viewBox="0 0 ${W} ${H}">`,
    `<rect width="${W}" height="${H}" fill="white"/>`,
    ...body,
    `</svg>`,
    ``,
  ].join("\n");
}

export function lineChart(series: Series[], opts: ChartOptions): string {
  const pts = series.filter((s) => s.x.length > 0);
  if (pts.length === 0) throw new Error("no finite data to plot");
  const xs = pts.flatMap((s) => s.x);
  const ys = pts.flatMap((s) => s.y);
  const sx = scaleOf(xs, M.left, W - M.right);
  const sy = scaleOf(ys, H - M.bottom, M.top);
  const body = frame(opts, sx, sy);
  pts.forEach((s, i) => {
    const c = PALETTE[i % PALETTE.length];
    const coords = s.x.map((x, k) => `${fmtCoord(sx.map(x))},${fmtCoord(sy.map(s.y[k]))}`);
    if (coords.length === 1) {
      const [x, y] = coords[0].split(",");
      body.push(`<circle cx="${x}" cy="${y}" r="4" fill="${c}"/>`);
    } else {
      body.push(`<polyline points="${coords.join(" ")}" fill="none" stroke="${c}" stroke-width="2"/>`);
    }
    if (opts.markers ?? s.x.length <= 40) {
      for (const p of coords) {
        const [x, y] = p.split(",");
        body.push(`<circle cx="${x}" cy="${y}" r="3" fill="${c}"/>`);
      }
    }
  });
  body.push(...legend(pts.map((s) => s.label)));
  return wrap(body);
}

/** Grouped vertical bars: one group per category, one bar per series. */
export function barChart(
  categories: string[],
  series: { label: string; values: number[] }[],
  opts: ChartOptions,
): string {
  if (categories.length === 0 || series.length === 0) throw new Error("no finite data to plot");
  const all = series.flatMap((s) => s.values).filter(Number.isFinite);
  const sy = scaleOf([0, ...all], H - M.bottom, M.top);
  const sx: Scale = { lo: 0, hi: 1, map: (v) => M.left + v * (W - M.right - M.left) };
  const body = frame({ ...opts, xLabel: opts.xLabel }, sx, sy).filter(
    (p) => !p.includes("text-anchor=\"middle\" font-size=\"11\""), // drop numeric x ticks
  );
  const y0 = fmtCoord(sy.map(0));
  const groupW = 1 / categories.length;
  const barW = (groupW * 0.7) / series.length;
  categories.forEach((cat, g) => {
    const center = (g + 0.5) * groupW;
    series.forEach((s, i) => {
      const v = s.values[g];
      if (!Number.isFinite(v)) return;
      const cx = center + (i - (series.length - 1) / 2) * barW;
      const px = sx.map(cx - barW / 2);
      const py = sy.map(v);
      const hgt = Math.abs(Number(y0) - py);
      body.push(
        `<rect x="${fmtCoord(px)}" y="${fmtCoord(Math.min(py, Number(y0)))}" width="${fmtCoord(barW * (W - M.left - M.right))}" height="${fmtCoord(hgt)}" fill="${PALETTE[i % PALETTE.length]}"/>`,
      );
    });
    body.push(
      `<text x="${fmtCoord(sx.map(center))}" y="${H - M.bottom + 18}" text-anchor="middle" font-size="12" ${FONT}>${escapeXml(cat)}</text>`,
    );
  });
  body.push(...legend(series.map((s) => s.label)));
  return wrap(body);
}

/** Thin every series to at most `cap` points (keeps first and last). */
export function thin(s: Series, cap = 1500): Series {
  if (s.x.length <= cap) return s;
  const step = Math.ceil(s.x.length / cap);
  const x: number[] = [];
  const y: number[] = [];
  for (let i = 0; i < s.x.length; i += step) {
    x.push(s.x[i]);
    y.push(s.y[i]);
  }
  if (x[x.length - 1] !== s.x[s.x.length - 1]) {
    x.push(s.x[s.x.length - 1]);
    y.push(s.y[s.y.length - 1]);
  }
  return { label: s.label, x, y };
}
