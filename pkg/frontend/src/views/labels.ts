import { ApiError, type Service } from "../api";
import type { ClusterProfile, LabelDoc } from "../types";
import { banner, clear, el } from "../dom";

// Label review panel: each cluster's profile summary next to its
// current label in an editable field. Edits stay pending until Save
// POSTs them with the version they were based on; a 409 means someone
// else edited first and is surfaced with a reload prompt.

const AMBIGUOUS_RE = /\bor\b/i;

/** Client-side twin of the service's ambiguity rule: the standalone
 * token "or" makes a label ambiguous ("Tramming" is fine). */
export function isAmbiguousLabel(label: string): boolean {
  return AMBIGUOUS_RE.test(label);
}

function profileSummary(profile: ClusterProfile | undefined): string {
  if (!profile) return "";
  const share = (profile.share * 100).toFixed(1);
  const channels = Object.entries(profile.stats)
    .slice(0, 3)
    .map(([name, stats]) => `${name}≈${+stats.mean.toFixed(1)}`)
    .join(" ");
  return `${profile.size} rows (${share}%) ${channels}`;
}

export async function renderLabels(service: Service, root: HTMLElement): Promise<void> {
  clear(root);
  let doc: LabelDoc;
  let profiles: ClusterProfile[] = [];
  try {
    doc = await service.labels();
    profiles = await service.profiles();
  } catch {
    root.appendChild(banner("error", "service unreachable or no label map yet"));
    return;
  }
  const byId = new Map(profiles.map((p) => [String(p.cluster_id), p]));
  const pending = new Map<string, string>();
  const notices = el("div", { class: "notices" });
  const versionBadge = el("span", { class: "version-badge" }, `v${doc.version}`);

  const table = el("table", { class: "data-table labels" });
  const head = table.createTHead().insertRow();
  for (const title of ["cluster", "profile", "label", ""]) head.appendChild(el("th", {}, title));
  const body = table.createTBody();

  for (const [cid, label] of Object.entries(doc.entries)) {
    const row = body.insertRow();
    row.dataset.cluster = cid;
    row.insertCell().textContent = cid;
    row.insertCell().textContent = profileSummary(byId.get(cid));

    const input = el("input", {
      type: "text",
      value: label,
      "data-cluster": cid,
      class: "label-input",
    }) as HTMLInputElement;
    input.value = label;
    const flag = el("span", { class: "badge badge-warn" }, "ambiguous");
    flag.hidden = !(doc.ambiguous.includes(label) || isAmbiguousLabel(label));

    input.addEventListener("input", () => {
      if (input.value === doc.entries[cid]) pending.delete(cid);
      else pending.set(cid, input.value);
      flag.hidden = !isAmbiguousLabel(input.value);
      saveButton.disabled = pending.size === 0;
    });

    row.insertCell().appendChild(input);
    row.insertCell().appendChild(flag);
  }

  const saveButton = el("button", { class: "primary", disabled: true }, "Save edits") as HTMLButtonElement;
  saveButton.addEventListener("click", () => void save());

  async function save(): Promise<void> {
    clear(notices);
    if (pending.size === 0) return;
    try {
      const updated = await service.saveLabels(doc.version, Object.fromEntries(pending));
      doc = updated;
      pending.clear();
      saveButton.disabled = true;
      versionBadge.textContent = `v${doc.version}`;
      notices.appendChild(banner("info", `saved — label map is now version ${doc.version}`));
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        const detail = error.detail as { message?: string; current_version?: number };
        const reload = el("button", {}, "Reload labels");
        reload.addEventListener("click", () => void renderLabels(service, root));
        const conflict = banner(
          "error",
          `label map changed elsewhere (server has version ${detail.current_version ?? "?"}) — reload before editing `,
        );
        conflict.classList.add("conflict");
        conflict.appendChild(reload);
        notices.appendChild(conflict);
      } else if (error instanceof ApiError) {
        notices.appendChild(banner("error", `edit rejected: ${String(error.detail)}`));
      } else {
        notices.appendChild(banner("error", "service unreachable"));
      }
    }
  }

  const provenance = Object.entries(doc.provenance)
    .map(([key, value]) => `${key}=${String(value)}`)
    .join(" · ");

  root.append(
    el("div", { class: "view-head" }, el("h2", {}, "Cluster labels "), versionBadge),
    el("p", { class: "muted" }, provenance),
    notices,
    table,
    el("div", { class: "toolbar" }, saveButton),
  );
}
