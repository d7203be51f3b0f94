import type { ProjectionPoint } from "../types";

// 2-D projection scatter, one dot per timeline row, colored by cluster.
// Noise rows (cluster -1) are gray.

const PALETTE = [
  "#0466c8",
  "#d1495b",
  "#117a65",
  "#e09f3e",
  "#6d597a",
  "#00a8b5",
  "#874c62",
  "#5f8d4e",
  "#b36a5e",
  "#3a5ba0",
];

export function clusterColor(clusterId: number): string {
  if (clusterId < 0) return "#9aa5ad";
  return PALETTE[clusterId % PALETTE.length];
}

const SVG_NS = "http://www.w3.org/2000/svg";

export function renderScatter(
  points: ProjectionPoint[],
  width = 520,
  height = 380,
): SVGSVGElement {
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("class", "scatter");
  svg.setAttribute("role", "img");
  if (points.length === 0) return svg;

  const pad = 14;
  const xs = points.map((p) => p.x);
  const ys = points.map((p) => p.y);
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  const yMin = Math.min(...ys);
  const yMax = Math.max(...ys);
  const xSpan = xMax - xMin || 1;
  const ySpan = yMax - yMin || 1;

  for (const point of points) {
    const dot = document.createElementNS(SVG_NS, "circle");
    const cx = pad + ((point.x - xMin) / xSpan) * (width - 2 * pad);
    // SVG y grows downward; flip so the projection reads math-style
    const cy = height - pad - ((point.y - yMin) / ySpan) * (height - 2 * pad);
    dot.setAttribute("cx", cx.toFixed(2));
    dot.setAttribute("cy", cy.toFixed(2));
    dot.setAttribute("r", "2.5");
    dot.setAttribute("fill", clusterColor(point.cluster_id));
    dot.setAttribute("fill-opacity", "0.75");
    dot.setAttribute("data-cluster", String(point.cluster_id));
    svg.appendChild(dot);
  }
  return svg;
}
