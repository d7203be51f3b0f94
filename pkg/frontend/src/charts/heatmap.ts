import type { AlignmentDoc } from "../types";

// Predicted × reference alignment matrix as a grid of shaded cells.
// Cell intensity is the value scaled by the matrix maximum, so the
// strongest correspondence is always full-intensity — a 1×1 matrix
// renders as a single saturated cell. Hover (title) carries the pair
// and the value.

const CELL_RGB = "4, 102, 200";

export function renderHeatmap(alignment: AlignmentDoc): HTMLElement {
  const { predicted_labels: predicted, reference_labels: reference, cells } = alignment;
  const root = document.createElement("div");
  root.className = "heatmap";

  const table = document.createElement("table");
  table.className = "heatmap-grid";

  const head = table.createTHead().insertRow();
  head.appendChild(document.createElement("th")); // corner
  for (const label of reference) {
    const th = document.createElement("th");
    th.scope = "col";
    th.textContent = label;
    head.appendChild(th);
  }

  const max = Math.max(...cells.flat());
  const body = table.createTBody();
  predicted.forEach((predLabel, i) => {
    const row = body.insertRow();
    const th = document.createElement("th");
    th.scope = "row";
    th.textContent = predLabel;
    row.appendChild(th);
    reference.forEach((refLabel, j) => {
      const value = cells[i][j];
      const cell = row.insertCell();
      cell.className = "heatmap-cell";
      const intensity = max > 0 ? value / max : 0;
      cell.style.backgroundColor = `rgba(${CELL_RGB}, ${intensity})`;
      cell.title = `${predLabel} → ${refLabel}: ${value.toFixed(4)}`;
      cell.dataset.predicted = predLabel;
      cell.dataset.reference = refLabel;
      cell.dataset.value = String(value);
      cell.dataset.intensity = String(intensity);
    });
  });

  const caption = document.createElement("p");
  caption.className = "axis-note";
  caption.textContent = "rows: predicted · columns: reference";
  root.append(table, caption);
  return root;
}
