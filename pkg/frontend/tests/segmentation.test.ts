import { describe, expect, it } from "vitest";
import { renderSegmentation } from "../src/views/segmentation";
import { FakeService, flush } from "./fake_service";

// Segmentation form + preview against the fixture service: the case
// count must fall (or hold) as the gap threshold rises, invalid
// durations never reach the service, and the merge toggle removes
// adjacent duplicate activities.

function mount(): HTMLElement {
  const root = document.createElement("div");
  document.body.appendChild(root);
  return root;
}

function field(root: HTMLElement, name: string): HTMLInputElement {
  return root.querySelector<HTMLInputElement>(`[name="${name}"]`)!;
}

async function applyGap(root: HTMLElement, value: string): Promise<void> {
  field(root, "gap").value = value;
  root.querySelector<HTMLButtonElement>("button.primary")!.click();
  await flush();
}

function caseCount(root: HTMLElement): number {
  return Number(root.querySelector<HTMLElement>(".preview-totals")!.dataset.cases);
}

describe("segmentation tuning", () => {
  it("case count is monotone non-increasing in the gap threshold", async () => {
    const service = new FakeService();
    const root = mount();
    await renderSegmentation(service, root);
    await flush();

    const counts: number[] = [];
    for (const threshold of ["5", "60", "200", "1000"]) {
      await applyGap(root, threshold);
      counts.push(caseCount(root));
    }
    expect(counts).toEqual([5, 3, 2, 1]);
    for (let i = 1; i < counts.length; i += 1) {
      expect(counts[i]).toBeLessThanOrEqual(counts[i - 1]);
    }
  });

  it("rejects an invalid duration inline without calling the service", async () => {
    const service = new FakeService();
    const root = mount();
    await renderSegmentation(service, root);
    await flush();
    const callsBefore = service.calls.setSegmentation;

    await applyGap(root, "1h30m");

    const error = root.querySelector<HTMLElement>(`.field-error[data-field="gap"]`)!;
    expect(error.textContent).toContain("1h30m");
    expect(service.calls.setSegmentation).toBe(callsBefore);
  });

  it("accepts duration units in the gap field", async () => {
    const service = new FakeService();
    const root = mount();
    await renderSegmentation(service, root);
    await flush();

    await applyGap(root, "15m");
    expect(service.segmentation.gap_threshold_s).toBe(900);
  });

  it("merge toggle removes adjacent duplicate activities", async () => {
    // rows labeled A A B B A: merged → A B A
    const service = new FakeService({
      timeline: [
        [0, 0],
        [1, 0],
        [2, 1],
        [3, 1],
        [4, 0],
      ],
      labels: { "0": "Loading", "1": "Dumping" },
    });
    const root = mount();
    await renderSegmentation(service, root);
    await flush();

    field(root, "merge").checked = false;
    await applyGap(root, "900");
    let activities = [...root.querySelectorAll<HTMLElement>(".event-list li")].map(
      (li) => li.dataset.activity,
    );
    expect(activities).toEqual(["Loading", "Loading", "Dumping", "Dumping", "Loading"]);

    field(root, "merge").checked = true;
    await applyGap(root, "900");
    activities = [...root.querySelectorAll<HTMLElement>(".event-list li")].map(
      (li) => li.dataset.activity,
    );
    expect(activities).toEqual(["Loading", "Dumping", "Loading"]);
    for (let i = 1; i < activities.length; i += 1) {
      expect(activities[i]).not.toBe(activities[i - 1]);
    }
  });

  it("renders the service's 422 for a draft the client cannot pre-check", async () => {
    const service = new FakeService();
    const root = mount();
    await renderSegmentation(service, root);
    await flush();

    field(root, "method").value = "sensor-change";
    field(root, "channel").value = "GHOST";
    field(root, "sensitivity").value = "5";
    // fake service accepts any channel name; force a rejection instead
    service.setSegmentation = async () => {
      service.calls.setSegmentation += 1;
      const { ApiError } = await import("../src/api");
      throw new ApiError(422, "unknown change channel 'GHOST'");
    };
    root.querySelector<HTMLButtonElement>("button.primary")!.click();
    await flush();

    expect(root.querySelector(".banner-error")!.textContent).toContain("GHOST");
  });
});
