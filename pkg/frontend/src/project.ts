/** Orthographic 3D -> 2D projection for the flow-line figures. */

export interface Camera {
  /** rotation about the vertical axis, radians */
  azimuth: number;
  /** tilt toward the viewer, radians */
  elevation: number;
}

export const DEFAULT_CAMERA: Camera = { azimuth: -0.6, elevation: 0.35 };

/**
 * Project (a, b, c) orthographically after rotating by azimuth around
 * the c-axis and tilting by elevation.  Returns screen-plane (u, v)
 * with v growing upward (callers flip for SVG).
 */
export function project([a, b, c]: [number, number, number], cam: Camera = DEFAULT_CAMERA): [number, number] {
  const ca = Math.cos(cam.azimuth);
  const sa = Math.sin(cam.azimuth);
  const ce = Math.cos(cam.elevation);
  const se = Math.sin(cam.elevation);
  const x1 = ca * a + sa * b;
  const y1 = -sa * a + ca * b;
  return [x1, ce * c + se * y1];
}

/** Select three plotting axes from a state row by dropping one slot. */
export function dropSlot(row: number[], drop: number): [number, number, number] {
  const kept = row.filter((_, i) => i !== drop);
  if (kept.length < 3) throw new Error(`cannot drop slot ${drop} from a row of length ${row.length}`);
  return [kept[0], kept[1], kept[2]];
}
