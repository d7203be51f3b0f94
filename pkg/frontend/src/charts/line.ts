import type { SweepGroup } from "../types";
import { clusterColor } from "./scatter";

// Accuracy vs temperature, one polyline per prompt tier, with ± SE
// whiskers. Cells with no successful runs (mean null) leave a gap.

const SVG_NS = "http://www.w3.org/2000/svg";

export function renderSweepChart(
  groups: SweepGroup[],
  width = 520,
  height = 300,
): SVGSVGElement {
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("class", "sweep-chart");

  const tiers = [...new Set(groups.map((g) => g.tier))].sort((a, b) => a - b);
  const temperatures = [...new Set(groups.map((g) => g.temperature))].sort(
    (a, b) => a - b,
  );
  if (tiers.length === 0 || temperatures.length === 0) return svg;

  const pad = { left: 38, right: 12, top: 10, bottom: 26 };
  const tSpan = temperatures[temperatures.length - 1] - temperatures[0] || 1;
  const xOf = (t: number) =>
    pad.left + ((t - temperatures[0]) / tSpan) * (width - pad.left - pad.right);
  const yOf = (v: number) => pad.top + (1 - v) * (height - pad.top - pad.bottom);

  // axes
  const axes = document.createElementNS(SVG_NS, "path");
  axes.setAttribute(
    "d",
    `M ${pad.left} ${pad.top} V ${height - pad.bottom} H ${width - pad.right}`,
  );
  axes.setAttribute("class", "axis");
  axes.setAttribute("fill", "none");
  axes.setAttribute("stroke", "currentColor");
  svg.appendChild(axes);
  for (const t of temperatures) {
    const tick = document.createElementNS(SVG_NS, "text");
    tick.setAttribute("x", xOf(t).toFixed(1));
    tick.setAttribute("y", String(height - 8));
    tick.setAttribute("class", "tick");
    tick.setAttribute("text-anchor", "middle");
    tick.textContent = t.toFixed(1);
    svg.appendChild(tick);
  }
  for (const v of [0, 0.5, 1]) {
    const tick = document.createElementNS(SVG_NS, "text");
    tick.setAttribute("x", String(pad.left - 6));
    tick.setAttribute("y", (yOf(v) + 3).toFixed(1));
    tick.setAttribute("class", "tick");
    tick.setAttribute("text-anchor", "end");
    tick.textContent = v.toFixed(1);
    svg.appendChild(tick);
  }

  for (const tier of tiers) {
    const color = clusterColor(tier - 1);
    const cells = groups
      .filter((g) => g.tier === tier && g.mean !== null)
      .sort((a, b) => a.temperature - b.temperature);

    const line = document.createElementNS(SVG_NS, "polyline");
    line.setAttribute(
      "points",
      cells.map((g) => `${xOf(g.temperature).toFixed(1)},${yOf(g.mean!).toFixed(1)}`).join(" "),
    );
    line.setAttribute("fill", "none");
    line.setAttribute("stroke", color);
    line.setAttribute("stroke-width", "2");
    line.setAttribute("data-tier", String(tier));
    line.setAttribute("class", "tier-line");
    svg.appendChild(line);

    for (const g of cells) {
      if (g.se !== null && g.se > 0) {
        const whisker = document.createElementNS(SVG_NS, "line");
        whisker.setAttribute("x1", xOf(g.temperature).toFixed(1));
        whisker.setAttribute("x2", xOf(g.temperature).toFixed(1));
        whisker.setAttribute("y1", yOf(Math.min(1, g.mean! + g.se)).toFixed(1));
        whisker.setAttribute("y2", yOf(Math.max(0, g.mean! - g.se)).toFixed(1));
        whisker.setAttribute("stroke", color);
        whisker.setAttribute("class", "se-whisker");
        svg.appendChild(whisker);
      }
      const dot = document.createElementNS(SVG_NS, "circle");
      dot.setAttribute("cx", xOf(g.temperature).toFixed(1));
      dot.setAttribute("cy", yOf(g.mean!).toFixed(1));
      dot.setAttribute("r", "3");
      dot.setAttribute("fill", color);
      dot.setAttribute(
        "data-cell",
        `tier ${g.tier} T=${g.temperature} mean=${g.mean!.toFixed(3)} se=${(g.se ?? 0).toFixed(3)}`,
      );
      svg.appendChild(dot);
    }
  }
  return svg;
}
