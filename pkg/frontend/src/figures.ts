/** The five figure kinds rendered from exported run artifacts. */

import { Table, column, groupBySample, requireColumns } from "./csv.js";
import { Camera, DEFAULT_CAMERA, dropSlot, project } from "./project.js";
import { Scene, colorFor, extentOf, linearScale, logTicks, rampColor } from "./svg.js";

const W = 640;
const H = 480;
const MARGIN = 48;

export interface FlowLineOptions {
  tau1: number;
  tau2: number;
  /** index of the state slot to project out (default: the last one) */
  drop?: number;
  camera?: Camera;
}

function stateColumns(table: Table): string[] {
  return table.columns.filter((c) => c !== "sample_id" && c !== "t");
}

/** Flow lines through the bottleneck with grey planes at tau1/tau2. */
export function flowLines(traj: Table, opts: FlowLineOptions): string {
  const slots = stateColumns(traj);
  requireColumns(traj, ["sample_id", "t"]);
  if (slots.length < 3) throw new Error("flow-lines needs at least three state slots");
  const drop = opts.drop ?? slots.length - 1;
  const cam = opts.camera ?? DEFAULT_CAMERA;
  const samples = groupBySample(traj, slots);

  const projected = new Map<number, [number, number][]>();
  const us: number[] = [];
  const vs: number[] = [];
  let spanB: [number, number] = [Infinity, -Infinity];
  let spanC: [number, number] = [Infinity, -Infinity];
  for (const [id, rows] of samples) {
    const pts: [number, number][] = rows.map((r) => {
      const [a, b, c] = dropSlot(r, drop);
      spanB = [Math.min(spanB[0], b), Math.max(spanB[1], b)];
      spanC = [Math.min(spanC[0], c), Math.max(spanC[1], c)];
      const [u, v] = project([a, b, c], cam);
      us.push(u);
      vs.push(v);
      return [u, v];
    });
    projected.set(id, pts);
  }

  // grey planes: quads at the stratification depths spanning the data
  const planes: [number, number][][] = [];
  for (const tau of [opts.tau1, opts.tau2]) {
    const corners: [number, number, number][] = [
      [tau, spanB[0], spanC[0]],
      [tau, spanB[1], spanC[0]],
      [tau, spanB[1], spanC[1]],
      [tau, spanB[0], spanC[1]],
    ];
    const quad = corners.map((p) => {
      const [u, v] = project(p, cam);
      us.push(u);
      vs.push(v);
      return [u, v] as [number, number];
    });
    planes.push(quad);
  }

  const sx = linearScale(extentOf(us), MARGIN, W - MARGIN);
  const sy = linearScale(extentOf(vs), H - MARGIN, MARGIN);
  const scene = new Scene(W, H);
  for (const quad of planes) {
    scene.polygon(quad.map(([u, v]) => [sx(u), sy(v)] as [number, number]), "#bbbbbb", 0.45);
  }
  let i = 0;
  for (const [, pts] of projected) {
    scene.polyline(pts.map(([u, v]) => [sx(u), sy(v)] as [number, number]), colorFor(i), 1, 0.85);
    const [u0, v0] = pts[0];
    const [u1, v1] = pts[pts.length - 1];
    scene.circle(sx(u0), sy(v0), 2.2, "#1f77b4");
    scene.circle(sx(u1), sy(v1), 2.2, "#ff7f0e");
    i++;
  }
  scene.text(W / 2, H - 12, "flow lines (orthographic projection); grey planes mark the pinned interval");
  return scene.render();
}

export interface TimeSliceOptions {
  /** times (fractions of the trajectory) at which to slice */
  fractions?: number[];
  /** state slots to scatter; defaults to slots 1 and 2 */
  axes?: [number, number];
}

/** Scatter panels of the state distribution at selected times. */
export function timeSlices(traj: Table, opts: TimeSliceOptions = {}): string {
  const slots = stateColumns(traj);
  const fractions = opts.fractions ?? [0, 0.25, 0.5, 0.75, 1];
  const axes = opts.axes ?? [Math.min(1, slots.length - 1), Math.min(2, slots.length - 1)];
  const samples = groupBySample(traj, slots);
  const nSamples = samples.size;

  const cols = fractions.length;
  const panelW = (W - 2 * MARGIN) / cols;
  const scene = new Scene(W, H / 2 + MARGIN);
  const allA: number[] = [];
  const allB: number[] = [];
  for (const [, rows] of samples) {
    for (const f of fractions) {
      const k = Math.min(rows.length - 1, Math.round(f * (rows.length - 1)));
      allA.push(rows[k][axes[0]]);
      allB.push(rows[k][axes[1]]);
    }
  }
  const exA = extentOf(allA);
  const exB = extentOf(allB);
  fractions.forEach((f, panel) => {
    const x0 = MARGIN + panel * panelW;
    const sx = linearScale(exA, x0 + 4, x0 + panelW - 4);
    const sy = linearScale(exB, H / 2 - 4, MARGIN / 2 + 4);
    scene.rect(x0, MARGIN / 2, panelW - 2, H / 2 - MARGIN / 2, "#f5f5f5");
    let idx = 0;
    for (const [, rows] of samples) {
      const k = Math.min(rows.length - 1, Math.round(f * (rows.length - 1)));
      scene.circle(sx(rows[k][axes[0]]), sy(rows[k][axes[1]]), 1.6, rampColor(idx / Math.max(1, nSamples - 1)));
      idx++;
    }
    scene.text(x0 + panelW / 2, H / 2 + 16, `t = ${f}`);
  });
  scene.text(W / 2, H / 2 + 34, `slices of ${slots[axes[0]]} vs ${slots[axes[1]]}, colored by sample order`);
  return scene.render();
}

/** Training-alignment plot: log-scale error vs epoch, zeros omitted. */
export function monotonicityPlot(metrics: Table): string {
  requireColumns(metrics, ["epoch", "monotonicity_error"]);
  const epochs = column(metrics, "epoch");
  const errs = column(metrics, "monotonicity_error");
  const kept: [number, number][] = [];
  for (let i = 0; i < epochs.length; i++) {
    if (errs[i] > 0) kept.push([epochs[i], errs[i]]); // zeros cannot appear on a log scale
  }
  const scene = new Scene(W, H);
  const ex = extentOf(epochs.length ? epochs : [0, 1], 0.02);
  const positive = kept.map(([, e]) => e);
  const ey = positive.length ? extentOf(positive, 0) : { min: 1e-4, max: 1 };
  ey.min = Math.max(ey.min, 1e-12);
  const sx = linearScale(ex, MARGIN, W - MARGIN);
  const syLog = (v: number) =>
    linearScale({ min: Math.log10(ey.min), max: Math.log10(ey.max) }, H - MARGIN, MARGIN)(Math.log10(v));

  for (const tick of logTicks(ey)) {
    if (tick < ey.min || tick > ey.max) continue;
    scene.line(MARGIN, syLog(tick), W - MARGIN, syLog(tick), "#dddddd");
    scene.text(MARGIN - 6, syLog(tick) + 4, tick.toExponential(0), 10, "end");
  }
  scene.line(MARGIN, H - MARGIN, W - MARGIN, H - MARGIN, "#333333");
  scene.line(MARGIN, H - MARGIN, MARGIN, MARGIN, "#333333");
  for (const [ep, er] of kept) {
    scene.circle(sx(ep), syLog(er), 2.0, "#1f77b4");
  }
  scene.text(W / 2, H - 12, "alignment error by epoch (log scale; zero values omitted)");
  return scene.render();
}

export interface ReconBar {
  label: string;
  value: number;
}

/** Final reconstruction errors of one or more runs as bars. */
export function reconErrorBars(bars: ReconBar[]): string {
  if (bars.length === 0) throw new Error("no runs to plot");
  const scene = new Scene(W, H);
  const ey = extentOf([0, ...bars.map((b) => b.value)], 0.08);
  ey.min = 0;
  const sy = linearScale(ey, H - MARGIN, MARGIN);
  const slot = (W - 2 * MARGIN) / bars.length;
  bars.forEach((b, i) => {
    const x = MARGIN + i * slot + slot * 0.2;
    scene.rect(x, sy(b.value), slot * 0.6, H - MARGIN - sy(b.value), colorFor(i), 0.9);
    scene.text(x + slot * 0.3, H - MARGIN + 16, b.label);
    scene.text(x + slot * 0.3, sy(b.value) - 6, (b.value * 100).toFixed(2) + "%");
  });
  scene.line(MARGIN, H - MARGIN, W - MARGIN, H - MARGIN, "#333333");
  scene.text(W / 2, H - 12, "mean reconstruction error relative to the object diameter");
  return scene.render();
}

/** Classifier flow lines colored by label with square target markers. */
export function classifierFlows(traj: Table, labels: Map<number, number>, targets: number[][]): string {
  const slots = stateColumns(traj);
  if (slots.length !== 3) throw new Error(`classifier trajectories need slots x,y,z; got ${slots.join(",")}`);
  const samples = groupBySample(traj, slots);
  const xs: number[] = [];
  const ys: number[] = [];
  for (const [, rows] of samples) {
    for (const r of rows) {
      xs.push(r[0]);
      ys.push(r[1]);
    }
  }
  for (const t of targets) {
    xs.push(t[0]);
    ys.push(t[1]);
  }
  const sx = linearScale(extentOf(xs), MARGIN, W - MARGIN);
  const sy = linearScale(extentOf(ys), H - MARGIN, MARGIN);
  const scene = new Scene(W, H);
  for (const [id, rows] of samples) {
    const label = labels.get(id) ?? 0;
    scene.polyline(rows.map((r) => [sx(r[0]), sy(r[1])] as [number, number]), colorFor(label), 1, 0.75);
  }
  targets.forEach((t, i) => scene.square(sx(t[0]), sy(t[1]), 12, colorFor(i)));
  scene.text(W / 2, H - 12, "classification flows (xy projection); squares mark the label targets");
  return scene.render();
}
