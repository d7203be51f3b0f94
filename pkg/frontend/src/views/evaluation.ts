import type { Service } from "../api";
import { banner, clear, el } from "../dom";
import { renderHeatmap } from "../charts/heatmap";
import { renderSweepChart } from "../charts/line";

// Accuracy summary, the predicted × reference alignment heatmap, and —
// when a sweep report is present — the accuracy-vs-temperature chart
// with one series per prompt tier plus the label-diversity table.

export async function renderEvaluation(service: Service, root: HTMLElement): Promise<void> {
  clear(root);
  let report;
  let sweep;
  try {
    report = await service.evaluation();
    sweep = await service.sweep();
  } catch {
    root.appendChild(banner("error", "service unreachable"));
    return;
  }

  if (report === null && sweep === null) {
    root.appendChild(
      el("p", { class: "empty-state" }, "No evaluation report — run evaluate with a reference labeling."),
    );
    return;
  }

  if (report !== null) {
    const summary = el(
      "p",
      { class: "swa-summary" },
      `similarity-weighted accuracy ${report.swa.toFixed(4)} ` +
        `(n=${report.n}, T=${report.threshold}, provider=${report.provider})`,
    );
    summary.dataset.swa = String(report.swa);
    root.appendChild(el("div", { class: "view-head" }, el("h2", {}, "Evaluation"), summary));
    for (const warning of report.warnings) {
      root.appendChild(banner("info", warning));
    }
    if (report.alignment) {
      root.appendChild(renderHeatmap(report.alignment));
    }
  }

  if (sweep !== null) {
    root.appendChild(el("h3", {}, "Accuracy by temperature"));
    root.appendChild(renderSweepChart(sweep.groups));
    const legend = el("p", { class: "muted" }, `tiers: ${sweep.tiers.join(", ")} · ` +
      `${sweep.runs_per_cell} runs per cell · T=${sweep.threshold}`);
    root.appendChild(legend);

    const table = el("table", { class: "data-table diversity" });
    const head = table.createTHead().insertRow();
    for (const title of ["tier", "temperature", "runs", "unique labels"]) {
      head.appendChild(el("th", {}, title));
    }
    const body = table.createTBody();
    for (const row of sweep.diversity) {
      const tr = body.insertRow();
      for (const value of [row.tier, row.temperature, row.runs, row.unique_labels]) {
        tr.insertCell().textContent = String(value);
      }
    }
    root.appendChild(table);

    if (sweep.failures.length > 0) {
      root.appendChild(
        banner("error", `${sweep.failures.length} run(s) failed during the sweep`),
      );
    }
  }
}
