/**
 * Axis scaling only: the one place the UI is allowed to transform numbers,
 * and it only ever maps values to pixels or rescales an overlay into a
 * panel's range. Model quantities themselves pass through untouched -
 * extractPlotted() is the identity on served values and is snapshot-tested.
 */

import { DecompositionPayload } from "./types.js";

export interface Point {
  x: number;
  y: number;
  se?: number;
}

/** Plotted points for the three panels, pulled verbatim from a served payload. */
export function extractPlotted(payload: DecompositionPayload): {
  exogenous: Point[];
  maturity: Point[];
  vintage: Point[];
} {
  return {
    exogenous: payload.exogenous.map((e) => ({ x: e.time, y: e.value, se: e.se })),
    maturity: payload.maturity.map((e) => ({ x: e.age, y: e.value, se: e.se })),
    vintage: payload.vintage.map((e) => ({ x: e.vintage, y: e.value, se: e.se })),
  };
}

export interface Range {
  lo: number;
  hi: number;
}

export function valueRange(series: Point[][]): Range {
  let lo = Infinity;
  let hi = -Infinity;
  for (const pts of series) {
    for (const p of pts) {
      const half = p.se ?? 0;
      lo = Math.min(lo, p.y - half);
      hi = Math.max(hi, p.y + half);
    }
  }
  if (!isFinite(lo) || !isFinite(hi)) return { lo: 0, hi: 1 };
  if (lo === hi) return { lo: lo - 1, hi: hi + 1 };
  return { lo, hi };
}

/**
 * Min-max rescale of an overlay series into a target range. Shape comparison
 * only; the overlay's raw extremes are reported back for the secondary axis.
 */
export function rescaleOverlay(
  values: number[],
  target: Range,
): { scaled: number[]; rawLo: number; rawHi: number } {
  const rawLo = Math.min(...values);
  const rawHi = Math.max(...values);
  const span = rawHi - rawLo || 1;
  const scaled = values.map((v) => target.lo + ((v - rawLo) / span) * (target.hi - target.lo));
  return { scaled, rawLo, rawHi };
}

export interface PixelMapper {
  px(x: number): number;
  py(y: number): number;
}

export function pixelMapper(
  xRange: Range,
  yRange: Range,
  width: number,
  height: number,
  margin: { l: number; r: number; t: number; b: number },
): PixelMapper {
  const plotW = width - margin.l - margin.r;
  const plotH = height - margin.t - margin.b;
  const xSpan = xRange.hi - xRange.lo || 1;
  const ySpan = yRange.hi - yRange.lo || 1;
  return {
    px: (x: number) => margin.l + ((x - xRange.lo) / xSpan) * plotW,
    py: (y: number) => margin.t + ((yRange.hi - y) / ySpan) * plotH,
  };
}

/** Evenly spaced round-ish axis ticks. */
export function niceTicks(range: Range, n = 5): number[] {
  const span = range.hi - range.lo;
  if (!(span > 0)) return [range.lo];
  const raw = span / n;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  const step = [1, 2, 2.5, 5, 10].map((m) => m * mag).find((s) => raw <= s) ?? 10 * mag;
  const ticks: number[] = [];
  for (let t = Math.ceil(range.lo / step) * step; t <= range.hi + 1e-12 * step; t += step) {
    ticks.push(Number(t.toFixed(12)));
  }
  return ticks;
}
