import type {
  EvaluationDoc,
  LabelDoc,
  Projection,
  PreviewDoc,
  RankedConfig,
  ClusterProfile,
  SegmentationDoc,
  SegmentationDraft,
  StateDoc,
  SweepDoc,
} from "./types";

/** Error carrying the HTTP status and the service's `detail` payload.
 * 409 detail is `{message, current_version}`; 422 detail is a string
 * (or pydantic's field-error list). */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: unknown,
  ) {
    super(typeof detail === "string" ? detail : `request failed (${status})`);
  }
}

/** Everything the UI may do. Views depend on this interface only, so
 * tests can substitute an in-memory fixture service. */
export interface Service {
  state(): Promise<StateDoc>;
  clustering(): Promise<RankedConfig[]>;
  profiles(): Promise<ClusterProfile[]>;
  projection(rank?: number): Promise<Projection>;
  labels(): Promise<LabelDoc>;
  saveLabels(baseVersion: number, entries: Record<string, string>): Promise<LabelDoc>;
  setSegmentation(draft: SegmentationDraft): Promise<SegmentationDoc>;
  preview(cases: number): Promise<PreviewDoc>;
  /** null when the run has no evaluation report (404). */
  evaluation(): Promise<EvaluationDoc | null>;
  /** null when no sweep report sits in the run directory (404). */
  sweep(): Promise<SweepDoc | null>;
}

async function raiseForStatus(response: Response): Promise<Response> {
  if (response.ok) return response;
  let detail: unknown = response.statusText;
  try {
    const body = await response.json();
    if (body && typeof body === "object" && "detail" in body) {
      detail = (body as { detail: unknown }).detail;
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, detail);
}

export class HttpService implements Service {
  constructor(private readonly base: string = "") {}

  private async getJson<T>(path: string): Promise<T> {
    const response = await raiseForStatus(await fetch(this.base + path));
    return (await response.json()) as T;
  }

  private async getOrNull<T>(path: string): Promise<T | null> {
    const response = await fetch(this.base + path);
    if (response.status === 404) return null;
    await raiseForStatus(response);
    return (await response.json()) as T;
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const response = await raiseForStatus(
      await fetch(this.base + path, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      }),
    );
    return (await response.json()) as T;
  }

  state() {
    return this.getJson<StateDoc>("/api/state");
  }

  clustering() {
    return this.getJson<RankedConfig[]>("/api/clustering");
  }

  profiles() {
    return this.getJson<ClusterProfile[]>("/api/profiles");
  }

  projection(rank?: number) {
    const suffix = rank === undefined ? "" : `?rank=${rank}`;
    return this.getJson<Projection>(`/api/projection${suffix}`);
  }

  labels() {
    return this.getJson<LabelDoc>("/api/labels");
  }

  saveLabels(baseVersion: number, entries: Record<string, string>) {
    return this.postJson<LabelDoc>("/api/labels", {
      base_version: baseVersion,
      entries,
    });
  }

  setSegmentation(draft: SegmentationDraft) {
    return this.postJson<SegmentationDoc>("/api/segmentation", draft);
  }

  preview(cases: number) {
    return this.getJson<PreviewDoc>(`/api/eventlog/preview?cases=${cases}`);
  }

  evaluation() {
    return this.getOrNull<EvaluationDoc>("/api/evaluation");
  }

  sweep() {
    return this.getOrNull<SweepDoc>("/api/sweep");
  }
}
