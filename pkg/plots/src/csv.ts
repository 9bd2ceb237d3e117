/**
 * Strict parsing for the benchmark CSV reports.
 *
 * Two shapes are consumed downstream:
 *
 *   report:       router,l,points_probed_mean,recall_mean,recall_std,pred_err_mean
 *   diagnostics:  shard,n,lambda_t_plus_1,diag_ratio
 *
 * Cells follow RFC 4180 minimal quoting: the writer quotes a cell only
 * when it contains a comma or a quote (router names like
 * optimist(t=8,delta=0.8) need this). An empty cell means "value absent",
 * which the report format uses for routers without a prediction-error
 * column. Every structural problem raises SchemaError with the file and
 * the exact column or row named, so the CLI can surface it verbatim.
 */

/** A problem with the shape or content of an input CSV. */
export class SchemaError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "SchemaError";
  }
}

export interface Table {
  source: string;
  columns: string[];
  rows: string[][];
}

/** Split a single line into cells, honouring RFC 4180 quoting. */
function splitLine(line: string, source: string, where: string): string[] {
  const cells: string[] = [];
  let i = 0;
  for (;;) {
    let cell = "";
    if (line[i] === '"') {
      i += 1;
      let closed = false;
      while (i < line.length) {
        if (line[i] === '"') {
          if (line[i + 1] === '"') {
            cell += '"';
            i += 2;
            continue;
          }
          i += 1;
          closed = true;
          break;
        }
        cell += line[i];
        i += 1;
      }
      if (!closed) {
        throw new SchemaError(`${source}: ${where}: unterminated quoted cell`);
      }
      if (i < line.length && line[i] !== ",") {
        throw new SchemaError(`${source}: ${where}: text after closing quote`);
      }
    } else {
      while (i < line.length && line[i] !== ",") {
        cell += line[i];
        i += 1;
      }
    }
    cells.push(cell);
    if (i >= line.length) {
      return cells;
    }
    i += 1;
    if (i === line.length) {
      cells.push("");
      return cells;
    }
  }
}

export function parseCsv(text: string, source: string): Table {
  const lines = text.split(/\r?\n/).filter((line) => line.length > 0);
  if (lines.length === 0) {
    throw new SchemaError(`${source}: empty file`);
  }
  const columns = splitLine(lines[0] as string, source, "header");
  const seen = new Set<string>();
  for (const name of columns) {
    if (seen.has(name)) {
      throw new SchemaError(`${source}: duplicate column "${name}"`);
    }
    seen.add(name);
  }
  const rows = lines.slice(1).map((line, i) => {
    const cells = splitLine(line, source, `row ${i + 1}`);
    if (cells.length !== columns.length) {
      throw new SchemaError(
        `${source}: row ${i + 1} has ${cells.length} cells, expected ${columns.length}`,
      );
    }
    return cells;
  });
  return { source, columns, rows };
}

export function requireColumns(table: Table, names: string[]): void {
  for (const name of names) {
    if (!table.columns.includes(name)) {
      throw new SchemaError(
        `${table.source}: missing required column "${name}"`,
      );
    }
  }
}

function columnIndex(table: Table, name: string): number {
  const idx = table.columns.indexOf(name);
  if (idx < 0) {
    throw new SchemaError(`${table.source}: missing required column "${name}"`);
  }
  return idx;
}

export function stringColumn(table: Table, name: string): string[] {
  const idx = columnIndex(table, name);
  return table.rows.map((row) => row[idx] as string);
}

/** Numeric column; empty cells become NaN, anything else non-numeric throws. */
export function numberColumn(table: Table, name: string): number[] {
  const idx = columnIndex(table, name);
  return table.rows.map((row, i) => {
    const cell = row[idx] as string;
    if (cell === "") {
      return NaN;
    }
    const value = Number(cell);
    if (!Number.isFinite(value)) {
      throw new SchemaError(
        `${table.source}: row ${i + 1}, column "${name}": not a number: "${cell}"`,
      );
    }
    return value;
  });
}
