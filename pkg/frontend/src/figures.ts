import { Table, column, textColumn, distinct, finitePairs } from "./csv.js";
import { Series, lineChart, barChart, thin } from "./svg.js";

export interface FigureKind {
  /** CSV file the kind consumes, relative to the input directory. */
  file: string;
  columns: string[];
  build(t: Table): string;
}

/** One series per distinct row label, in first-appearance order. */
function byLabel(t: Table, labels: string[], xCol: string, yCol: string, thinCap?: number): Series[] {
  const xs = column(t, xCol);
  const ys = column(t, yCol);
  return distinct(labels).map((label) => {
    const keep = labels.map((m, i) => i).filter((i) => labels[i] === label);
    const pairs = finitePairs(keep.map((i) => xs[i]), keep.map((i) => ys[i]));
    const s = { label, x: pairs.x, y: pairs.y };
    return thinCap ? thin(s, thinCap) : s;
  });
}

function perModel(t: Table, xCol: string, yCol: string, thinCap?: number): Series[] {
  return byLabel(t, textColumn(t, "model"), xCol, yCol, thinCap);
}

/** Like perModel, but splits on modulation and code rate too when several are present. */
function perModelMcs(t: Table, xCol: string, yCol: string): Series[] {
  const models = textColumn(t, "model");
  const rates = textColumn(t, "code_rate");
  const mcs = textColumn(t, "modulation").map((m, i) => `${m} r=${rates[i]}`);
  const labels = distinct(mcs).length > 1 ? models.map((m, i) => `${m} ${mcs[i]}`) : models;
  return byLabel(t, labels, xCol, yCol);
}

export const FIGURE_KINDS: Record<string, FigureKind> = {
  estimates: {
    file: "estimates.csv",
    columns: ["step", "truth", "xhap", "hold_last"],
    build(t) {
      const step = column(t, "step");
      const series = ["truth", "xhap", "hold_last"].map((name) =>
        thin({ label: name, ...finitePairs(step, column(t, name)) }),
      );
      return lineChart(series, {
        title: "Restored force vs ground truth",
        xLabel: "step (1 kHz)",
        yLabel: "force magnitude [N]",
        markers: false,
      });
    },
  },
  rolling_mse: {
    file: "rolling_mse.csv",
    columns: ["model", "start_step", "mse"],
    build(t) {
      return lineChart(perModel(t, "start_step", "mse", 1500), {
        title: "Rolling prediction error",
        xLabel: "window start step",
        yLabel: "windowed MSE [N²]",
        markers: false,
      });
    },
  },
  min_snr: {
    file: "min_snr.csv",
    columns: ["model", "modulation", "code_rate", "threshold", "min_snr_db"],
    build(t) {
      return lineChart(perModelMcs(t, "threshold", "min_snr_db"), {
        title: "Minimum SNR for the reliability target",
        xLabel: "restoration threshold [N]",
        yLabel: "min mean SNR [dB]",
      });
    },
  },
  coverage: {
    file: "coverage.csv",
    columns: ["model", "snr_req_db", "pl_max_db", "d_max_m", "distance_m", "p_cov"],
    build(t) {
      return lineChart(perModel(t, "distance_m", "p_cov", 1500), {
        title: "Coverage probability vs distance",
        xLabel: "distance [m]",
        yLabel: "coverage probability",
        markers: false,
      });
    },
  },
  threshold_sweep: {
    file: "threshold_sweep.csv",
    columns: [
      "model",
      "modulation",
      "code_rate",
      "snr_db",
      "threshold",
      "raw_plr",
      "effective_plr",
      "restoration_rate",
    ],
    build(t) {
      return lineChart(perModelMcs(t, "threshold", "restoration_rate"), {
        title: "Restoration rate vs acceptance threshold",
        xLabel: "restoration threshold [N]",
        yLabel: "restoration rate",
      });
    },
  },
  burst: {
    file: "burst.csv",
    columns: ["model", "snr_db", "threshold", "burst_len", "lost", "restored", "effective_plr"],
    build(t) {
      return lineChart(perModel(t, "burst_len", "effective_plr"), {
        title: "Residual loss vs burst length",
        xLabel: "burst length [packets]",
        yLabel: "effective PLR",
      });
    },
  },
  force_dynamics: {
    file: "force_dynamics.csv",
    columns: ["model", "region", "steps", "mean_abs_rate", "mean_abs_jerk"],
    build(t) {
      const models = textColumn(t, "model");
      const regionCol = textColumn(t, "region");
      const regions = distinct(regionCol);
      const rates = column(t, "mean_abs_rate");
      const series = distinct(models).map((label) => ({
        label,
        values: regions.map((region) => {
          const i = models.findIndex((m, k) => m === label && regionCol[k] === region);
          return i >= 0 ? rates[i] : NaN;
        }),
      }));
      return barChart(regions, series, {
        title: "Force slew by difficulty region",
        xLabel: "region",
        yLabel: "mean |df/dt| [N/ms]",
      });
    },
  },
  capacity: {
    file: "capacity.csv",
    columns: ["model", "snr_db", "bandwidth_hz", "rate_ceiling", "reliable", "users"],
    build(t) {
      const mhz = column(t, "bandwidth_hz").map((b) => b / 1e6);
      const byModel = perModel(t, "bandwidth_hz", "users").map((s) => ({
        ...s,
        x: s.x.map((b) => b / 1e6),
      }));
      const ceiling = finitePairs(mhz, column(t, "rate_ceiling"));
      const dedup = new Map(ceiling.x.map((x, i) => [x, ceiling.y[i]]));
      const cx = [...dedup.keys()].sort((a, b) => a - b);
      byModel.push({ label: "rate ceiling", x: cx, y: cx.map((x) => dedup.get(x)!) });
      return lineChart(byModel, {
        title: "Admitted users vs bandwidth",
        xLabel: "bandwidth [MHz]",
        yLabel: "users",
      });
    },
  },
};
