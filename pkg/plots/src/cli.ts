#!/usr/bin/env node
/**
 * plots <kind> --in report.csv --out fig.svg [--logx]
 *
 * kind is one of recall_curve, pred_error (both read an evaluation report)
 * or eigen_hist (reads a diagnostics dump). The output is written only
 * after the figure renders, so a failed run leaves no partial file.
 *
 * Exit codes: 0 ok, 1 bad input data (schema violations, unreadable file),
 * 2 bad usage (unknown kind, missing flags).
 */

import { readFileSync, writeFileSync } from "node:fs";
import { parseArgs } from "node:util";
import { pathToFileURL } from "node:url";

import { parseCsv, SchemaError } from "./csv.js";
import { FIGURE_KINDS, FigureKind, render, RenderOptions } from "./render.js";

export class UsageError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "UsageError";
  }
}

const USAGE = `usage: plots <kind> --in <report.csv> --out <figure.svg> [--logx]
  kinds: ${FIGURE_KINDS.join(", ")}`;

export interface CliRequest {
  kind: FigureKind;
  input: string;
  output: string;
  options: RenderOptions;
}

export function parseCliArgs(argv: string[]): CliRequest {
  let parsed;
  try {
    parsed = parseArgs({
      args: argv,
      allowPositionals: true,
      options: {
        in: { type: "string" },
        out: { type: "string" },
        logx: { type: "boolean", default: false },
      },
    });
  } catch (err) {
    throw new UsageError((err as Error).message);
  }
  const { positionals, values } = parsed;
  if (positionals.length !== 1) {
    throw new UsageError("expected exactly one figure kind");
  }
  const kind = positionals[0] as string;
  if (!(FIGURE_KINDS as string[]).includes(kind)) {
    throw new UsageError(
      `unknown figure kind "${kind}" (expected ${FIGURE_KINDS.join(", ")})`,
    );
  }
  if (values.in === undefined || values.out === undefined) {
    throw new UsageError("--in and --out are both required");
  }
  if (values.logx && kind === "eigen_hist") {
    throw new UsageError("--logx applies to the line figures, not eigen_hist");
  }
  return {
    kind: kind as FigureKind,
    input: values.in,
    output: values.out,
    options: { logx: values.logx === true },
  };
}

export function run(argv: string[]): string {
  const request = parseCliArgs(argv);
  let text: string;
  try {
    text = readFileSync(request.input, "utf8");
  } catch (err) {
    throw new SchemaError(`${request.input}: ${(err as Error).message}`);
  }
  const table = parseCsv(text, request.input);
  const svg = render(request.kind, table, request.options);
  writeFileSync(request.output, svg);
  return request.output;
}

export function main(argv: string[]): number {
  try {
    const output = run(argv);
    console.log(`wrote ${output}`);
    return 0;
  } catch (err) {
    if (err instanceof UsageError) {
      console.error(`error: ${err.message}`);
      console.error(USAGE);
      return 2;
    }
    if (err instanceof SchemaError) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    throw err;
  }
}

const entry = process.argv[1];
if (entry !== undefined && import.meta.url === pathToFileURL(entry).href) {
  process.exit(main(process.argv.slice(2)));
}
