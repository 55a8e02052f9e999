/**
 * render_figs <kind> --in <run-dir> [--in <run-dir> ...] --out <file.svg>
 *
 * kinds: flow-lines | time-slices | monotonicity | recon-error | classifier
 *
 * Reads only the documented artifact schemas (trajectories.csv,
 * metrics.csv, manifest.json, trajectory_labels.csv, targets.csv);
 * never mutates inputs, and identical inputs produce identical output.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { SchemaError, column, parseCsv } from "./csv.js";
import { classifierFlows, flowLines, monotonicityPlot, reconErrorBars, timeSlices } from "./figures.js";

export const KINDS = ["flow-lines", "time-slices", "monotonicity", "recon-error", "classifier"] as const;
export type Kind = (typeof KINDS)[number];

interface Args {
  kind: Kind;
  inputs: string[];
  out: string;
  drop?: number;
}

export function parseArgs(argv: string[]): Args {
  const [kind, ...rest] = argv;
  if (!KINDS.includes(kind as Kind)) {
    throw new Error(`unknown kind '${kind}'; expected one of ${KINDS.join(", ")}`);
  }
  const inputs: string[] = [];
  let out: string | undefined;
  let drop: number | undefined;
  for (let i = 0; i < rest.length; i++) {
    const a = rest[i];
    if (a === "--in") inputs.push(rest[++i]);
    else if (a === "--out") out = rest[++i];
    else if (a === "--drop-slot") drop = Number(rest[++i]);
    else throw new Error(`unknown flag '${a}'`);
  }
  if (inputs.length === 0 || !out) throw new Error("need --in <dir> and --out <file>");
  return { kind: kind as Kind, inputs, out, drop };
}

function readTable(dir: string, name: string) {
  const p = path.join(dir, name);
  if (!fs.existsSync(p)) throw new Error(`missing artifact ${p}`);
  return parseCsv(fs.readFileSync(p, "utf-8"));
}

function manifestOf(dir: string): any {
  const p = path.join(dir, "manifest.json");
  if (!fs.existsSync(p)) throw new Error(`missing artifact ${p}`);
  return JSON.parse(fs.readFileSync(p, "utf-8"));
}

export function render(args: Args): string {
  const dir = args.inputs[0];
  switch (args.kind) {
    case "flow-lines": {
      const manifest = manifestOf(dir);
      const space = manifest.config?.space;
      if (!space) throw new Error("manifest carries no space configuration");
      return flowLines(readTable(dir, "trajectories.csv"), {
        tau1: space.tau1,
        tau2: space.tau2,
        drop: args.drop,
      });
    }
    case "time-slices":
      return timeSlices(readTable(dir, "trajectories.csv"));
    case "monotonicity":
      return monotonicityPlot(readTable(dir, "metrics.csv"));
    case "recon-error": {
      const bars = args.inputs.map((d) => {
        const metrics = readTable(d, "metrics.csv");
        const recon = column(metrics, "recon_error");
        const manifest = manifestOf(d);
        const label = manifest.config?.data?.v !== undefined
          ? `v=${manifest.config.data.v}`
          : manifest.config?.task ?? path.basename(d);
        return { label, value: recon[recon.length - 1] };
      });
      return reconErrorBars(bars);
    }
    case "classifier": {
      const traj = readTable(dir, "trajectories.csv");
      const labelTable = readTable(dir, "trajectory_labels.csv");
      const ids = column(labelTable, "sample_id");
      const labs = column(labelTable, "label");
      const labels = new Map<number, number>();
      ids.forEach((id, i) => labels.set(id, labs[i]));
      const targetTable = readTable(dir, "targets.csv");
      const targets = targetTable.rows.map((r) => [
        r[targetTable.columns.indexOf("x")],
        r[targetTable.columns.indexOf("y")],
        r[targetTable.columns.indexOf("z")],
      ]);
      return classifierFlows(traj, labels, targets);
    }
  }
}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (e) {
    console.error(String(e instanceof Error ? e.message : e));
    return 1;
  }
  try {
    const svg = render(args);
    fs.mkdirSync(path.dirname(path.resolve(args.out)), { recursive: true });
    fs.writeFileSync(args.out, svg);
    return 0;
  } catch (e) {
    if (e instanceof SchemaError) {
      console.error(`schema mismatch: ${e.message}`);
      return 2;
    }
    console.error(String(e instanceof Error ? e.message : e));
    return 2;
  }
}

const isDirectRun = process.argv[1] !== undefined &&
  path.resolve(process.argv[1]) === path.resolve(new URL(import.meta.url).pathname);
if (isDirectRun) {
  process.exit(main(process.argv.slice(2)));
}
