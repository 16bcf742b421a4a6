/**
 * SVG line panels for the three effect curves. Values arrive pre-extracted
 * from served payloads; this module only maps them to pixels.
 */

import { niceTicks, pixelMapper, Point, Range, rescaleOverlay, valueRange } from "./scaling.js";

const W = 860;
const H = 250;
const MARGIN = { l: 64, r: 56, t: 26, b: 34 };
const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const DASHES = ["", "6,4", "2,3", "8,3,2,3"];

const SVG_NS = "http://www.w3.org/2000/svg";

function el<K extends keyof SVGElementTagNameMap>(
  tag: K,
  attrs: Record<string, string | number>,
  text?: string,
): SVGElementTagNameMap[K] {
  const node = document.createElementNS(SVG_NS, tag);
  for (const [k, v] of Object.entries(attrs)) {
    node.setAttribute(k, String(v));
  }
  if (text !== undefined) node.textContent = text;
  return node;
}

export interface PanelSeries {
  label: string;
  points: Point[];
}

export interface OverlaySeries {
  label: string;
  x: number[];
  values: number[];
}

export function renderPanel(
  title: string,
  xLabel: string,
  series: PanelSeries[],
  overlay?: OverlaySeries,
): SVGSVGElement {
  const svg = el("svg", { width: W, height: H, viewBox: `0 0 ${W} ${H}` });
  svg.appendChild(el("rect", { width: W, height: H, fill: "white" }));
  svg.appendChild(
    el("rect", {
      x: MARGIN.l,
      y: MARGIN.t,
      width: W - MARGIN.l - MARGIN.r,
      height: H - MARGIN.t - MARGIN.b,
      fill: "none",
      stroke: "#ccc",
    }),
  );
  svg.appendChild(el("text", { x: MARGIN.l, y: 16, "font-size": 13, "font-weight": "bold" }, title));

  const allPoints = series.map((s) => s.points);
  const xs = allPoints.flat().map((p) => p.x);
  const xRange: Range = xs.length ? { lo: Math.min(...xs), hi: Math.max(...xs) } : { lo: 0, hi: 1 };
  const yRange = valueRange(allPoints);
  const m = pixelMapper(xRange, yRange, W, H, MARGIN);

  for (const t of niceTicks(xRange)) {
    if (t < xRange.lo || t > xRange.hi) continue;
    svg.appendChild(
      el("text", { x: m.px(t), y: H - MARGIN.b + 16, "font-size": 10, "text-anchor": "middle" }, String(t)),
    );
  }
  for (const t of niceTicks(yRange)) {
    if (t < yRange.lo || t > yRange.hi) continue;
    svg.appendChild(
      el("text", { x: MARGIN.l - 6, y: m.py(t) + 3, "font-size": 10, "text-anchor": "end" }, t.toPrecision(3)),
    );
  }
  svg.appendChild(
    el("text", { x: W / 2, y: H - 6, "font-size": 11, "text-anchor": "middle" }, xLabel),
  );

  series.forEach((s, i) => {
    const color = COLORS[i % COLORS.length];
    const withSe = s.points.filter((p) => p.se !== undefined);
    if (withSe.length === s.points.length && s.points.length > 0) {
      const upper = s.points.map((p) => `${m.px(p.x)},${m.py(p.y + (p.se ?? 0))}`);
      const lower = [...s.points].reverse().map((p) => `${m.px(p.x)},${m.py(p.y - (p.se ?? 0))}`);
      svg.appendChild(
        el("polygon", { points: [...upper, ...lower].join(" "), fill: color, opacity: 0.12 }),
      );
    }
    const path = s.points.map((p) => `${m.px(p.x)},${m.py(p.y)}`).join(" ");
    const line = el("polyline", {
      points: path,
      fill: "none",
      stroke: color,
      "stroke-width": 1.5,
    });
    const dash = DASHES[i % DASHES.length];
    if (dash) line.setAttribute("stroke-dasharray", dash);
    svg.appendChild(line);
    svg.appendChild(
      el(
        "text",
        { x: W - MARGIN.r - 6, y: MARGIN.t + 14 + 13 * i, "font-size": 10, "text-anchor": "end", fill: color },
        s.label,
      ),
    );
  });

  if (overlay && overlay.values.length) {
    const { scaled, rawLo, rawHi } = rescaleOverlay(overlay.values, yRange);
    const pts = overlay.x.map((x, i) => `${m.px(x)},${m.py(scaled[i])}`).join(" ");
    svg.appendChild(
      el("polyline", {
        points: pts,
        fill: "none",
        stroke: "#444",
        "stroke-width": 1.2,
        "stroke-dasharray": "4,3",
      }),
    );
    // raw overlay scale on the secondary (right) axis
    svg.appendChild(
      el("text", { x: W - MARGIN.r + 4, y: m.py(yRange.lo) + 3, "font-size": 9, fill: "#444" }, rawLo.toPrecision(3)),
    );
    svg.appendChild(
      el("text", { x: W - MARGIN.r + 4, y: m.py(yRange.hi) + 3, "font-size": 9, fill: "#444" }, rawHi.toPrecision(3)),
    );
    svg.appendChild(
      el(
        "text",
        {
          x: W - MARGIN.r - 6,
          y: MARGIN.t + 14 + 13 * series.length,
          "font-size": 10,
          "text-anchor": "end",
          fill: "#444",
        },
        `${overlay.label} (overlay)`,
      ),
    );
  }
  return svg;
}
