/** Minimal deterministic SVG scene builder: no DOM, just strings. */

export interface Extent {
  min: number;
  max: number;
}

export function extentOf(values: number[], pad = 0.05): Extent {
  let min = Infinity;
  let max = -Infinity;
  for (const v of values) {
    if (!Number.isFinite(v)) continue;
    if (v < min) min = v;
    if (v > max) max = v;
  }
  if (!Number.isFinite(min)) {
    min = 0;
    max = 1;
  }
  if (min === max) {
    min -= 0.5;
    max += 0.5;
  }
  const span = max - min;
  return { min: min - pad * span, max: max + pad * span };
}

/** Affine map from a data extent to pixel coordinates. */
export function linearScale(e: Extent, pxMin: number, pxMax: number): (v: number) => number {
  const k = (pxMax - pxMin) / (e.max - e.min);
  return (v: number) => pxMin + (v - e.min) * k;
}

export function logTicks(e: Extent): number[] {
  const ticks: number[] = [];
  const lo = Math.floor(Math.log10(e.min));
  const hi = Math.ceil(Math.log10(e.max));
  for (let p = lo; p <= hi; p++) ticks.push(Math.pow(10, p));
  return ticks;
}

const fmt = (v: number) => (Math.abs(v) < 1e-12 ? "0" : String(Math.round(v * 100) / 100));

export class Scene {
  private parts: string[] = [];

  constructor(readonly width: number, readonly height: number) {}

  polyline(points: [number, number][], stroke: string, strokeWidth = 1, opacity = 1) {
    const pts = points.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ");
    this.parts.push(
      `<polyline points="${pts}" fill="none" stroke="${stroke}" stroke-width="${strokeWidth}" opacity="${opacity}"/>`,
    );
  }

  polygon(points: [number, number][], fill: string, opacity = 1) {
    const pts = points.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ");
    this.parts.push(`<polygon points="${pts}" fill="${fill}" opacity="${opacity}"/>`);
  }

  circle(x: number, y: number, r: number, fill: string, opacity = 1) {
    this.parts.push(`<circle cx="${fmt(x)}" cy="${fmt(y)}" r="${r}" fill="${fill}" opacity="${opacity}"/>`);
  }

  square(x: number, y: number, size: number, fill: string) {
    const h = size / 2;
    this.parts.push(
      `<rect x="${fmt(x - h)}" y="${fmt(y - h)}" width="${size}" height="${size}" fill="${fill}" stroke="black"/>`,
    );
  }

  rect(x: number, y: number, w: number, h: number, fill: string, opacity = 1) {
    this.parts.push(
      `<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" height="${fmt(h)}" fill="${fill}" opacity="${opacity}"/>`,
    );
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke: string, strokeWidth = 1) {
    this.parts.push(
      `<line x1="${fmt(x1)}" y1="${fmt(y1)}" x2="${fmt(x2)}" y2="${fmt(y2)}" stroke="${stroke}" stroke-width="${strokeWidth}"/>`,
    );
  }

  text(x: number, y: number, content: string, size = 11, anchor = "middle") {
    this.parts.push(
      `<text x="${fmt(x)}" y="${fmt(y)}" font-size="${size}" font-family="sans-serif" text-anchor="${anchor}">${content}</text>`,
    );
  }

  render(): string {
    return (
      `<svg xmlns="http://www.w3.org/2000/svg" width="${this.width}" height="${this.height}" ` +
      `viewBox="0 0 ${this.width} ${this.height}">\n<rect width="100%" height="100%" fill="white"/>\n` +
      this.parts.join("\n") +
      "\n</svg>\n"
    );
  }
}

/** Categorical palette for sample/label coloring. */
export const PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2"];

export function colorFor(index: number): string {
  return PALETTE[((index % PALETTE.length) + PALETTE.length) % PALETTE.length];
}

/** Viridis-like ramp used to color scatter points by a parameter. */
export function rampColor(t: number): string {
  const clamp = Math.min(1, Math.max(0, t));
  const stops: [number, number, number][] = [
    [68, 1, 84],
    [59, 82, 139],
    [33, 145, 140],
    [94, 201, 98],
    [253, 231, 37],
  ];
  const x = clamp * (stops.length - 1);
  const i = Math.min(stops.length - 2, Math.floor(x));
  const f = x - i;
  const mix = (a: number, b: number) => Math.round(a + (b - a) * f);
  const [r, g, b] = [0, 1, 2].map((k) => mix(stops[i][k], stops[i + 1][k]));
  return `rgb(${r},${g},${b})`;
}
