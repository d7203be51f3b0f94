import { ApiError, type Service } from "../api";
import type { PreviewDoc, SegmentationDraft, SegmentationMethod } from "../types";
import { banner, clear, el } from "../dom";
import { parseDuration } from "../duration";

// Segmentation form plus live event-log preview: pick the cut method
// and its thresholds, apply, and see the first K cases rebuilt from
// the current labels. Duration fields accept "900", "15m", "2h"; a
// string that doesn't parse is an inline error and nothing is sent.

const PREVIEW_CASES = 20;

interface Fields {
  method: HTMLSelectElement;
  gap: HTMLInputElement;
  channel: HTMLInputElement;
  sensitivity: HTMLInputElement;
  minActivities: HTMLInputElement;
  maxDuration: HTMLInputElement;
  merge: HTMLInputElement;
}

function draftFromForm(fields: Fields, errors: Map<string, string>): SegmentationDraft | null {
  errors.clear();
  const method = fields.method.value as SegmentationMethod;
  const draft: SegmentationDraft = {
    method,
    merge_consecutive: fields.merge.checked,
    min_activities_per_case: Number(fields.minActivities.value || "2"),
  };
  if (!Number.isInteger(draft.min_activities_per_case) || draft.min_activities_per_case! < 1) {
    errors.set("min_activities", "must be a whole number ≥ 1");
  }
  if (method === "time-gap") {
    const seconds = parseDuration(fields.gap.value);
    if (seconds === null || seconds <= 0) {
      errors.set("gap", `not a duration: ${fields.gap.value.trim() || "(empty)"}`);
    } else {
      draft.gap_threshold_s = seconds;
    }
  }
  if (method === "sensor-change") {
    if (!fields.channel.value.trim()) errors.set("channel", "channel name required");
    else draft.change_channel = fields.channel.value.trim();
    const sensitivity = Number(fields.sensitivity.value);
    if (!fields.sensitivity.value.trim() || !Number.isFinite(sensitivity) || sensitivity <= 0) {
      errors.set("sensitivity", "must be a positive number");
    } else {
      draft.sensitivity = sensitivity;
    }
  }
  if (fields.maxDuration.value.trim()) {
    const seconds = parseDuration(fields.maxDuration.value);
    if (seconds === null || seconds <= 0) {
      errors.set("max_duration", `not a duration: ${fields.maxDuration.value.trim()}`);
    } else {
      draft.max_case_duration_s = seconds;
    }
  }
  return errors.size === 0 ? draft : null;
}

function renderPreview(preview: PreviewDoc): HTMLElement {
  const pane = el("div", { class: "preview" });
  const totals = el(
    "p",
    { class: "preview-totals" },
    `${preview.totals.cases} cases · ${preview.totals.events} events · ` +
      `${preview.totals.dropped_cases} dropped`,
  );
  totals.dataset.cases = String(preview.totals.cases);
  totals.dataset.dropped = String(preview.totals.dropped_cases);
  pane.appendChild(totals);

  for (const caseDoc of preview.cases) {
    const header = el(
      "div",
      { class: "case-head" },
      `${caseDoc.case_id} · ${caseDoc.start} → ${caseDoc.end}`,
    );
    const list = el("ol", { class: "event-list" });
    for (const event of caseDoc.events) {
      const item = el("li", {}, `${event.activity} (${event.start} → ${event.end})`);
      item.dataset.activity = event.activity;
      list.appendChild(item);
    }
    pane.appendChild(el("section", { class: "case", "data-case": caseDoc.case_id }, header, list));
  }
  return pane;
}

export async function renderSegmentation(service: Service, root: HTMLElement): Promise<void> {
  clear(root);

  const fields: Fields = {
    method: el("select", { name: "method" }) as HTMLSelectElement,
    gap: el("input", { name: "gap", type: "text", value: "900" }) as HTMLInputElement,
    channel: el("input", { name: "channel", type: "text" }) as HTMLInputElement,
    sensitivity: el("input", { name: "sensitivity", type: "text" }) as HTMLInputElement,
    minActivities: el("input", { name: "min_activities", type: "text", value: "2" }) as HTMLInputElement,
    maxDuration: el("input", { name: "max_duration", type: "text" }) as HTMLInputElement,
    merge: el("input", { name: "merge", type: "checkbox" }) as HTMLInputElement,
  };
  fields.gap.value = "900";
  fields.minActivities.value = "2";
  fields.merge.checked = true;
  for (const method of ["time-gap", "day-boundary", "sensor-change"]) {
    fields.method.appendChild(el("option", { value: method }, method));
  }

  const errors = new Map<string, string>();
  const errorPane = el("div", { class: "field-errors" });
  const previewPane = el("div", { class: "preview-pane" });
  const applyButton = el("button", { class: "primary" }, "Apply and preview");

  function fieldRow(label: string, input: HTMLElement, key: string): HTMLElement {
    const slot = el("span", { class: "field-error", "data-field": key });
    return el("label", { class: "field" }, el("span", { class: "field-name" }, label), input, slot);
  }

  function showErrors(): void {
    root.querySelectorAll<HTMLElement>(".field-error").forEach((slot) => {
      slot.textContent = errors.get(slot.dataset.field ?? "") ?? "";
    });
  }

  async function refreshPreview(): Promise<void> {
    const preview = await service.preview(PREVIEW_CASES);
    clear(previewPane).appendChild(renderPreview(preview));
  }

  async function apply(): Promise<void> {
    clear(errorPane);
    const draft = draftFromForm(fields, errors);
    showErrors();
    if (!draft) return; // client-side rejection: nothing was sent
    try {
      await service.setSegmentation(draft);
      await refreshPreview();
    } catch (error) {
      if (error instanceof ApiError && error.status === 422) {
        errorPane.appendChild(banner("error", `rejected: ${JSON.stringify(error.detail)}`));
      } else {
        errorPane.appendChild(banner("error", "service unreachable"));
      }
    }
  }
  applyButton.addEventListener("click", () => void apply());

  const form = el(
    "div",
    { class: "seg-form" },
    fieldRow("method", fields.method, "method"),
    fieldRow("gap threshold", fields.gap, "gap"),
    fieldRow("change channel", fields.channel, "channel"),
    fieldRow("sensitivity", fields.sensitivity, "sensitivity"),
    fieldRow("min activities per case", fields.minActivities, "min_activities"),
    fieldRow("max case duration", fields.maxDuration, "max_duration"),
    el("label", { class: "field field-inline" }, fields.merge, el("span", {}, "merge consecutive")),
    el("div", { class: "toolbar" }, applyButton),
    errorPane,
  );

  root.append(el("div", { class: "split" }, form, previewPane));
  try {
    await refreshPreview();
  } catch {
    clear(previewPane).appendChild(banner("error", "no labeled timeline to preview yet"));
  }
}
