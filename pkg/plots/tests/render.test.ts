import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { parseCsv, SchemaError } from "../src/csv.js";
import {
  histogram,
  render,
  renderEigenHist,
  renderPredError,
  renderRecallCurve,
} from "../src/render.js";

const HERE = dirname(fileURLToPath(import.meta.url));
const TESTDATA = join(HERE, "..", "testdata");

function goldenTable(name: string) {
  const path = join(TESTDATA, name);
  return parseCsv(readFileSync(path, "utf8"), name);
}

function countOccurrences(text: string, needle: string): number {
  return text.split(needle).length - 1;
}

describe("renderRecallCurve", () => {
  it("draws one polyline and one legend entry per router", () => {
    const svg = renderRecallCurve(goldenTable("report.csv"), {});
    expect(countOccurrences(svg, "<polyline")).toBe(3);
    expect(svg).toContain(">mean</text>");
    expect(svg).toContain(">normalized_mean</text>");
    expect(svg).toContain(">optimist(t=8,delta=0.8)</text>");
    expect(svg.trim().startsWith("<svg")).toBe(true);
    expect(svg.trim().endsWith("</svg>")).toBe(true);
  });

  it("draws a single line for a single-router CSV", () => {
    const text =
      "router,l,points_probed_mean,recall_mean,recall_std,pred_err_mean\n" +
      "mean,1,10,0.5,0.1,\nmean,2,20,0.8,0.1,\nmean,3,40,1,0,\n";
    const svg = renderRecallCurve(parseCsv(text, "one.csv"), {});
    expect(countOccurrences(svg, "<polyline")).toBe(1);
    expect(countOccurrences(svg, "<circle")).toBe(3);
  });

  it("names a missing column", () => {
    const table = goldenTable("missing_column.csv");
    expect(() => renderRecallCurve(table, {})).toThrow(SchemaError);
    expect(() => renderRecallCurve(table, {})).toThrow(
      'missing required column "recall_mean"',
    );
  });

  it("rejects an empty numeric cell where the schema requires a value", () => {
    const text =
      "router,l,points_probed_mean,recall_mean,recall_std,pred_err_mean\n" +
      "mean,1,10,,0.1,\n";
    expect(() => renderRecallCurve(parseCsv(text, "e.csv"), {})).toThrow(
      'row 1, column "recall_mean": empty cell',
    );
  });

  it("logx switches the probe axis to decade ticks", () => {
    const text =
      "router,l,points_probed_mean,recall_mean,recall_std,pred_err_mean\n" +
      "mean,1,10,0.2,0.1,\nmean,2,100,0.5,0.1,\nmean,3,10000,1,0,\n";
    const table = parseCsv(text, "l.csv");
    const svg = render("recall_curve", table, { logx: true });
    expect(svg).toContain(">100</text>");
    expect(svg).toContain(">1000</text>");
  });

  it("logx rejects non-positive x values", () => {
    const text =
      "router,l,points_probed_mean,recall_mean,recall_std,pred_err_mean\n" +
      "mean,1,0,0.2,0.1,\n";
    expect(() => render("recall_curve", parseCsv(text, "z.csv"), { logx: true })).toThrow(
      "strictly positive",
    );
  });
});

describe("renderPredError", () => {
  it("drops routers whose prediction column is empty", () => {
    const text =
      "router,l,points_probed_mean,recall_mean,recall_std,pred_err_mean\n" +
      "mean,1,10,0.5,0.1,0.4\nmean,2,20,0.9,0.1,0.5\n" +
      "normalized_mean,1,12,0.5,0.1,\nnormalized_mean,2,22,0.9,0.1,\n";
    const svg = renderPredError(parseCsv(text, "p.csv"), {});
    expect(countOccurrences(svg, "<polyline")).toBe(1);
    expect(svg).toContain(">mean</text>");
    expect(svg).not.toContain(">normalized_mean</text>");
  });

  it("renders every router in the golden report", () => {
    const svg = renderPredError(goldenTable("report.csv"), {});
    expect(countOccurrences(svg, "<polyline")).toBe(3);
  });

  it("errors when no router has prediction values", () => {
    const text =
      "router,l,points_probed_mean,recall_mean,recall_std,pred_err_mean\n" +
      "mean,1,10,0.5,0.1,\n";
    expect(() => renderPredError(parseCsv(text, "n.csv"), {})).toThrow(
      'column "pred_err_mean" has no values',
    );
  });
});

describe("histogram", () => {
  it("puts every value in exactly one bin", () => {
    const values = [0.1, 0.4, 0.4, 0.9, 1.7, 2.0];
    const { edges, counts } = histogram(values, 4);
    expect(counts.reduce((a, b) => a + b, 0)).toBe(values.length);
    expect(edges).toHaveLength(5);
    expect(edges[0]).toBeCloseTo(0.1);
    expect(edges[4]).toBeCloseTo(2.0);
  });

  it("closes the top edge so the maximum lands in the last bin", () => {
    const { counts } = histogram([0, 1, 2, 3, 4], 4);
    expect(counts[3]).toBe(2);
  });

  it("widens a degenerate single-value domain", () => {
    const { edges, counts } = histogram([2, 2, 2], 6);
    expect(counts.reduce((a, b) => a + b, 0)).toBe(3);
    expect(edges[0]).toBeLessThan(2);
    expect(edges[6]).toBeGreaterThan(2);
  });
});

describe("renderEigenHist", () => {
  it("renders bars from the golden diagnostics dump", () => {
    const table = goldenTable("diagnostics.csv");
    const svg = renderEigenHist(table, {});
    // background rect + frame rect + one bar per non-empty bin
    expect(countOccurrences(svg, "<rect")).toBeGreaterThan(4);
    expect(svg).toContain("shard count");
    expect(svg).toContain("</svg>");
  });

  it("marks the unit eigenvalue when it is inside the data range", () => {
    const text = "shard,n,lambda_t_plus_1,diag_ratio\n0,5,0.5,0.9\n1,6,1.5,0.8\n";
    const svg = renderEigenHist(parseCsv(text, "d.csv"), {});
    expect(svg).toContain("stroke-dasharray");
  });

  it("names a missing eigenvalue column", () => {
    const text = "shard,n,diag_ratio\n0,5,0.9\n";
    expect(() => renderEigenHist(parseCsv(text, "d.csv"), {})).toThrow(
      'missing required column "lambda_t_plus_1"',
    );
  });
});
