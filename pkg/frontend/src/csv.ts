/** Parsing of the run-artifact CSV schemas. */

export interface Table {
  columns: string[];
  rows: number[][];
}

export class SchemaError extends Error {
  constructor(message: string, readonly found: string[]) {
    super(`${message}; found columns: ${found.join(", ")}`);
  }
}

export function parseCsv(text: string): Table {
  const lines = text.trim().split(/\r?\n/);
  if (lines.length < 1 || lines[0].trim() === "") {
    throw new SchemaError("empty CSV", []);
  }
  const columns = lines[0].split(",").map((c) => c.trim());
  const rows: number[][] = [];
  for (let i = 1; i < lines.length; i++) {
    if (lines[i].trim() === "") continue;
    const parts = lines[i].split(",");
    if (parts.length !== columns.length) {
      throw new SchemaError(`row ${i} has ${parts.length} fields, expected ${columns.length}`, columns);
    }
    rows.push(parts.map(Number));
  }
  return { columns, rows };
}

export function requireColumns(table: Table, needed: string[]): void {
  for (const c of needed) {
    if (!table.columns.includes(c)) {
      throw new SchemaError(`missing column '${c}'`, table.columns);
    }
  }
}

export function column(table: Table, name: string): number[] {
  const idx = table.columns.indexOf(name);
  if (idx < 0) throw new SchemaError(`missing column '${name}'`, table.columns);
  return table.rows.map((r) => r[idx]);
}

/** Split a long-format trajectory table into per-sample point lists. */
export function groupBySample(table: Table, valueColumns: string[]): Map<number, number[][]> {
  requireColumns(table, ["sample_id", ...valueColumns]);
  const idCol = column(table, "sample_id");
  const cols = valueColumns.map((c) => column(table, c));
  const out = new Map<number, number[][]>();
  for (let i = 0; i < idCol.length; i++) {
    const id = idCol[i];
    if (!out.has(id)) out.set(id, []);
    out.get(id)!.push(cols.map((c) => c[i]));
  }
  return out;
}
