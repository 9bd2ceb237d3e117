/**
 * The three figure kinds, each a pure function from a parsed CSV to SVG.
 *
 * recall_curve  report.csv      recall_mean vs points_probed_mean, one line
 *                               per router
 * pred_error    report.csv      pred_err_mean vs l, one line per router;
 *                               routers whose prediction column is empty are
 *                               dropped from the figure
 * eigen_hist    diagnostics.csv histogram of lambda_t_plus_1 across shards,
 *                               with a dashed marker at 1.0 when in range
 */

import { numberColumn, requireColumns, SchemaError, stringColumn, Table } from "./csv.js";
import {
  assemble,
  BarGeom,
  linearScale,
  logScale,
  PLOT_AREA,
  Scale,
  SeriesGeom,
} from "./figure.js";

export type FigureKind = "recall_curve" | "pred_error" | "eigen_hist";

export const FIGURE_KINDS: FigureKind[] = ["recall_curve", "pred_error", "eigen_hist"];

export interface RenderOptions {
  logx?: boolean;
}

interface Series {
  label: string;
  x: number[];
  y: number[];
}

function strictNumberColumn(table: Table, name: string): number[] {
  const values = numberColumn(table, name);
  const bad = values.findIndex((v) => Number.isNaN(v));
  if (bad >= 0) {
    throw new SchemaError(
      `${table.source}: row ${bad + 1}, column "${name}": empty cell`,
    );
  }
  return values;
}

/** Group (x, y) pairs by router, keeping first-seen router order. */
function routerSeries(
  labels: string[],
  xs: number[],
  ys: number[],
  dropNanY: boolean,
): Series[] {
  const order: string[] = [];
  const byLabel = new Map<string, Series>();
  labels.forEach((label, i) => {
    const y = ys[i] as number;
    if (dropNanY && Number.isNaN(y)) {
      return;
    }
    let s = byLabel.get(label);
    if (s === undefined) {
      s = { label, x: [], y: [] };
      byLabel.set(label, s);
      order.push(label);
    }
    s.x.push(xs[i] as number);
    s.y.push(y);
  });
  return order.map((label) => byLabel.get(label) as Series);
}

function extent(values: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  return [lo, hi];
}

function makeXScale(lo: number, hi: number, logx: boolean): Scale {
  if (logx) {
    if (lo <= 0) {
      throw new SchemaError(
        `--logx needs strictly positive x values, got minimum ${lo}`,
      );
    }
    const pad = Math.pow(hi / lo, 0.02);
    return logScale(lo / pad, hi * pad, PLOT_AREA.left, PLOT_AREA.right);
  }
  const pad = hi === lo ? 0.5 : 0.02 * (hi - lo);
  return linearScale(lo - pad, hi + pad, PLOT_AREA.left, PLOT_AREA.right);
}

function lineFigure(
  title: string,
  xLabel: string,
  yLabel: string,
  series: Series[],
  yDomain: [number, number],
  options: RenderOptions,
): string {
  const allX = series.flatMap((s) => s.x);
  const [xlo, xhi] = extent(allX);
  const xScale = makeXScale(xlo, xhi, options.logx === true);
  const yScale = linearScale(yDomain[0], yDomain[1], PLOT_AREA.bottom, PLOT_AREA.top);
  const geom: SeriesGeom[] = series.map((s) => ({
    label: s.label,
    points: s.x.map((x, i) => [x, s.y[i] as number]),
  }));
  return assemble({ title, xLabel, yLabel, xScale, yScale, series: geom });
}

export function renderRecallCurve(table: Table, options: RenderOptions): string {
  requireColumns(table, ["router", "points_probed_mean", "recall_mean"]);
  const series = routerSeries(
    stringColumn(table, "router"),
    strictNumberColumn(table, "points_probed_mean"),
    strictNumberColumn(table, "recall_mean"),
    false,
  );
  if (series.length === 0) {
    throw new SchemaError(`${table.source}: no data rows`);
  }
  return lineFigure(
    "recall vs points probed",
    "points probed (mean per query)",
    "recall (mean over queries)",
    series,
    [0, 1.02],
    options,
  );
}

export function renderPredError(table: Table, options: RenderOptions): string {
  requireColumns(table, ["router", "l", "pred_err_mean"]);
  const series = routerSeries(
    stringColumn(table, "router"),
    strictNumberColumn(table, "l"),
    numberColumn(table, "pred_err_mean"),
    true,
  );
  if (series.length === 0) {
    throw new SchemaError(
      `${table.source}: column "pred_err_mean" has no values; ` +
        `re-run the evaluation with prediction error enabled`,
    );
  }
  const [, yhi] = extent(series.flatMap((s) => s.y));
  const [ylo] = extent(series.flatMap((s) => s.y));
  return lineFigure(
    "score prediction error vs probe depth",
    "shards probed",
    "relative prediction error (mean)",
    series,
    [Math.min(0, ylo), yhi * 1.05],
    options,
  );
}

export interface Histogram {
  edges: number[];
  counts: number[];
}

/** Equal-width bins; the last bin's upper edge is closed so max lands inside. */
export function histogram(values: number[], binCount: number): Histogram {
  let [lo, hi] = extent(values);
  if (lo === hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  const width = (hi - lo) / binCount;
  const counts = new Array<number>(binCount).fill(0);
  for (const v of values) {
    let b = Math.floor((v - lo) / width);
    if (b === binCount) {
      b = binCount - 1;
    }
    counts[b] = (counts[b] as number) + 1;
  }
  const edges = Array.from({ length: binCount + 1 }, (_, i) => lo + i * width);
  return { edges, counts };
}

export function renderEigenHist(table: Table, options: RenderOptions): string {
  requireColumns(table, ["lambda_t_plus_1"]);
  void options;
  const values = strictNumberColumn(table, "lambda_t_plus_1");
  if (values.length === 0) {
    throw new SchemaError(`${table.source}: no data rows`);
  }
  const binCount = Math.max(6, Math.min(24, Math.ceil(Math.log2(values.length)) + 1));
  const { edges, counts } = histogram(values, binCount);
  const lo = edges[0] as number;
  const hi = edges[edges.length - 1] as number;
  const maxCount = Math.max(...counts);
  const xScale = linearScale(lo, hi, PLOT_AREA.left, PLOT_AREA.right);
  const yScale = linearScale(0, maxCount * 1.05, PLOT_AREA.bottom, PLOT_AREA.top);
  const bars: BarGeom[] = counts.map((count, i) => {
    const x0 = xScale.map(edges[i] as number);
    const x1 = xScale.map(edges[i + 1] as number);
    const yTop = yScale.map(count);
    return { x: x0, y: yTop, width: x1 - x0, height: PLOT_AREA.bottom - yTop };
  });
  const markers = lo <= 1 && 1 <= hi ? [1] : [];
  return assemble({
    title: "whitened residual eigenvalue across shards",
    xLabel: "lambda_(t+1) of the correlation matrix",
    yLabel: "shard count",
    xScale,
    yScale,
    bars,
    xMarkers: markers,
  });
}

export function render(kind: FigureKind, table: Table, options: RenderOptions): string {
  switch (kind) {
    case "recall_curve":
      return renderRecallCurve(table, options);
    case "pred_error":
      return renderPredError(table, options);
    case "eigen_hist":
      return renderEigenHist(table, options);
  }
}
