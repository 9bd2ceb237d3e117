import { describe, expect, it } from "vitest";

import {
  numberColumn,
  parseCsv,
  requireColumns,
  SchemaError,
  stringColumn,
} from "../src/csv.js";

const SAMPLE = "router,l,recall_mean\nmean,1,0.5\nmean,2,0.75\nopt,1,\n";

describe("parseCsv", () => {
  it("splits header and rows", () => {
    const table = parseCsv(SAMPLE, "sample.csv");
    expect(table.columns).toEqual(["router", "l", "recall_mean"]);
    expect(table.rows).toHaveLength(3);
    expect(table.rows[0]).toEqual(["mean", "1", "0.5"]);
  });

  it("tolerates trailing newline and CRLF", () => {
    const crlf = SAMPLE.replace(/\n/g, "\r\n");
    expect(parseCsv(crlf, "x").rows).toHaveLength(3);
  });

  it("rejects an empty file", () => {
    expect(() => parseCsv("", "empty.csv")).toThrow(SchemaError);
    expect(() => parseCsv("", "empty.csv")).toThrow("empty.csv: empty file");
  });

  it("rejects ragged rows with the row number", () => {
    const bad = "a,b\n1,2\n3\n";
    expect(() => parseCsv(bad, "r.csv")).toThrow('r.csv: row 2 has 1 cells, expected 2');
  });

  it("rejects duplicate column names", () => {
    expect(() => parseCsv("a,a\n1,2\n", "d.csv")).toThrow('duplicate column "a"');
  });

  it("unwraps quoted cells containing commas", () => {
    const text = 'router,l\n"optimist(t=8,delta=0.8)",1\n';
    const table = parseCsv(text, "q.csv");
    expect(table.rows[0]).toEqual(["optimist(t=8,delta=0.8)", "1"]);
  });

  it("unescapes doubled quotes inside quoted cells", () => {
    const table = parseCsv('a,b\n"say ""hi""",2\n', "q.csv");
    expect(table.rows[0]?.[0]).toBe('say "hi"');
  });

  it("keeps a trailing empty cell", () => {
    const table = parseCsv("a,b,c\n1,2,\n", "t.csv");
    expect(table.rows[0]).toEqual(["1", "2", ""]);
  });

  it("rejects an unterminated quote with the row named", () => {
    expect(() => parseCsv('a,b\n"oops,1\n', "u.csv")).toThrow(
      "u.csv: row 1: unterminated quoted cell",
    );
  });
});

describe("requireColumns", () => {
  it("passes when every column exists", () => {
    const table = parseCsv(SAMPLE, "s.csv");
    expect(() => requireColumns(table, ["router", "recall_mean"])).not.toThrow();
  });

  it("names the first missing column", () => {
    const table = parseCsv(SAMPLE, "s.csv");
    expect(() => requireColumns(table, ["router", "points_probed_mean"])).toThrow(
      's.csv: missing required column "points_probed_mean"',
    );
  });
});

describe("columns", () => {
  it("extracts strings in row order", () => {
    const table = parseCsv(SAMPLE, "s.csv");
    expect(stringColumn(table, "router")).toEqual(["mean", "mean", "opt"]);
  });

  it("parses numbers and maps empty cells to NaN", () => {
    const table = parseCsv(SAMPLE, "s.csv");
    const values = numberColumn(table, "recall_mean");
    expect(values[0]).toBe(0.5);
    expect(values[1]).toBe(0.75);
    expect(Number.isNaN(values[2])).toBe(true);
  });

  it("rejects non-numeric cells with row and column named", () => {
    const table = parseCsv("a\nxyz\n", "n.csv");
    expect(() => numberColumn(table, "a")).toThrow(
      'n.csv: row 1, column "a": not a number: "xyz"',
    );
  });

  it("rejects a missing column at extraction time too", () => {
    const table = parseCsv(SAMPLE, "s.csv");
    expect(() => numberColumn(table, "pred_err_mean")).toThrow(
      'missing required column "pred_err_mean"',
    );
  });
});
