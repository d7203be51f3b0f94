import type { Service } from "../api";
import type { RankedConfig } from "../types";
import { banner, clear, el } from "../dom";
import { renderScatter } from "../charts/scatter";

// Ranked-config table (all grid configs with their three indices, order
// as served, winner on top highlighted) beside the 2-D projection
// scatter. Selecting a row re-requests the projection for that config.

function describeParams(config: RankedConfig["config"]): string {
  const skip = new Set(["algorithm", "normalization", "seed"]);
  return Object.entries(config)
    .filter(([key]) => !skip.has(key))
    .map(([key, value]) => `${key}=${typeof value === "number" ? +value.toFixed(4) : value}`)
    .join(" ");
}

export async function renderClustering(service: Service, root: HTMLElement): Promise<void> {
  clear(root);
  let ranked: RankedConfig[];
  try {
    ranked = await service.clustering();
  } catch {
    root.appendChild(banner("error", "service unreachable or clustering artifacts missing"));
    return;
  }
  if (ranked.length === 0) {
    root.appendChild(
      el("p", { class: "empty-state" }, "No clustering results yet — run the cluster stage first."),
    );
    return;
  }

  const scatterPane = el("div", { class: "scatter-pane" });
  const scatterNote = el("p", { class: "muted" });

  async function showProjection(rank: number): Promise<void> {
    scatterNote.textContent = `projection · config rank ${rank}`;
    try {
      const projection = await service.projection(rank);
      clear(scatterPane).append(renderScatter(projection.points), scatterNote);
    } catch {
      clear(scatterPane).appendChild(banner("error", "projection unavailable for this config"));
    }
  }

  const table = el("table", { class: "data-table ranking" });
  const head = table.createTHead().insertRow();
  for (const title of ["rank", "algorithm", "normalization", "params", "k", "silhouette", "DB", "CH"]) {
    head.appendChild(el("th", {}, title));
  }
  const body = table.createTBody();
  for (const entry of ranked) {
    const row = body.insertRow();
    if (entry.rank === 0) row.classList.add("winner");
    row.dataset.rank = String(entry.rank);
    row.tabIndex = 0;
    const ch = Number.isFinite(entry.calinski_harabasz)
      ? entry.calinski_harabasz.toFixed(1)
      : "∞";
    for (const text of [
      String(entry.rank),
      entry.config.algorithm,
      entry.config.normalization,
      describeParams(entry.config),
      String(entry.k),
      entry.silhouette.toFixed(4),
      entry.davies_bouldin.toFixed(4),
      ch,
    ]) {
      row.insertCell().textContent = text;
    }
    row.addEventListener("click", () => {
      body.querySelectorAll("tr").forEach((r) => r.classList.remove("selected"));
      row.classList.add("selected");
      void showProjection(entry.rank);
    });
  }

  root.append(
    el("div", { class: "split" }, el("div", { class: "table-pane" }, table), scatterPane),
  );
  await showProjection(0);
}
