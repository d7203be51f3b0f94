import { ApiError, type Service } from "../src/api";
import type {
  ClusterProfile,
  EvaluationDoc,
  LabelDoc,
  PreviewCase,
  PreviewDoc,
  PreviewEvent,
  Projection,
  RankedConfig,
  SegmentationDoc,
  SegmentationDraft,
  StateDoc,
  SweepDoc,
} from "../src/types";

// In-memory stand-in for the run-inspection service, faithful to its
// contract: versioned label edits (409 on stale base, 422 on bad
// input), segmentation replacement, and a preview rebuilt from the
// *current* labels + segmentation over a fixture timeline.

type TimelineRow = [offsetSeconds: number, clusterId: number];

// gaps: 1, 30, 1, 120, 1, 1, 400, 1, 30, 1, 1 — case counts under a
// time-gap threshold: 5 cases (<30), 3 (<120), 2 (<400), 1 (above)
export const DEFAULT_TIMELINE: TimelineRow[] = [
  [0, 0],
  [1, 1],
  [31, 0],
  [32, 1],
  [152, 0],
  [153, 1],
  [154, 0],
  [554, 1],
  [555, 0],
  [585, 1],
  [586, 0],
  [587, 1],
];

export const DEFAULT_LABELS: Record<string, string> = {
  "0": "Loading",
  "1": "Hauling Loaded",
  "2": "Loading or Dumping",
};

const BASE_MS = Date.UTC(2024, 9, 1, 6, 0, 0);

function iso(offsetSeconds: number): string {
  return new Date(BASE_MS + offsetSeconds * 1000).toISOString();
}

function statsFor(mean: number) {
  return { min: mean - 1, max: mean + 1, mean, median: mean, std: 0.5, q1: mean - 0.5, q3: mean + 0.5 };
}

export const DEFAULT_PROFILES: ClusterProfile[] = [0, 1, 2].map((cid) => ({
  cluster_id: cid,
  size: 4,
  share: 1 / 3,
  stats: { APP: statsFor(10 * cid), ES: statsFor(700 + 600 * cid) },
}));

export const DEFAULT_RANKING: RankedConfig[] = [
  {
    rank: 0,
    config: { algorithm: "kmeans", normalization: "robust", seed: 0, kmeans_k: 3 },
    k: 3,
    silhouette: 0.91,
    davies_bouldin: 0.2,
    calinski_harabasz: 812.4,
    silhouette_subsampled: false,
  },
  {
    rank: 1,
    config: { algorithm: "kmeans", normalization: "standard", seed: 0, kmeans_k: 3 },
    k: 3,
    silhouette: 0.88,
    davies_bouldin: 0.25,
    calinski_harabasz: 730.0,
    silhouette_subsampled: false,
  },
  {
    rank: 2,
    config: {
      algorithm: "dbscan",
      normalization: "minmax",
      seed: 0,
      dbscan_eps: 0.1,
      dbscan_min_pts: 4,
      distance_metric: "euclidean",
    },
    k: 2,
    silhouette: 0.74,
    davies_bouldin: 0.4,
    calinski_harabasz: 402.1,
    silhouette_subsampled: false,
  },
];

export interface FakeOptions {
  timeline?: TimelineRow[];
  labels?: Record<string, string>;
  evaluation?: EvaluationDoc | null;
  sweep?: SweepDoc | null;
}

export class FakeService implements Service {
  version = 1;
  entries: Record<string, string>;
  segmentation: SegmentationDoc = {
    method: "time-gap",
    gap_threshold_s: 900,
    min_activities_per_case: 2,
    max_case_duration_s: null,
    merge_consecutive: true,
  };
  readonly timeline: TimelineRow[];
  readonly evaluationDoc: EvaluationDoc | null;
  readonly sweepDoc: SweepDoc | null;
  readonly calls: { projection: number[]; saveLabels: number; setSegmentation: number } = {
    projection: [],
    saveLabels: 0,
    setSegmentation: 0,
  };

  constructor(options: FakeOptions = {}) {
    this.timeline = options.timeline ?? DEFAULT_TIMELINE;
    this.entries = { ...(options.labels ?? DEFAULT_LABELS) };
    this.evaluationDoc = options.evaluation ?? null;
    this.sweepDoc = options.sweep ?? null;
  }

  async state(): Promise<StateDoc> {
    return {
      tool_version: "0.1.0",
      config_hash: "fixture0fixture0",
      created: iso(0),
      stages: [
        { name: "ingest", status: "completed" },
        { name: "cluster", status: "completed" },
        { name: "label", status: "completed" },
      ],
      artifacts: ["frame.csv", "labels.json"],
      labels_version: this.version,
      mutations: this.version - 1,
    };
  }

  async clustering(): Promise<RankedConfig[]> {
    return DEFAULT_RANKING;
  }

  async profiles(): Promise<ClusterProfile[]> {
    return DEFAULT_PROFILES;
  }

  async projection(rank = 0): Promise<Projection> {
    this.calls.projection.push(rank);
    // each config gets a recognizably different point count
    const count = 6 + 3 * rank;
    const points = Array.from({ length: count }, (_, i) => ({
      row_id: i,
      x: Math.cos(i) * (1 + rank),
      y: Math.sin(i) * (1 + rank),
      cluster_id: i % 3,
    }));
    return { points };
  }

  async labels(): Promise<LabelDoc> {
    return {
      entries: { ...this.entries },
      ambiguous: Object.values(this.entries).filter((l) => /\bor\b/i.test(l)),
      provenance: { backend: "mock", model: "gpt-4", temperature: 0 },
      version: this.version,
    };
  }

  async saveLabels(baseVersion: number, entries: Record<string, string>): Promise<LabelDoc> {
    this.calls.saveLabels += 1;
    if (baseVersion !== this.version) {
      throw new ApiError(409, {
        message: "label map changed since this edit was loaded",
        current_version: this.version,
      });
    }
    if (Object.keys(entries).length === 0) {
      throw new ApiError(422, "no label entries in edit");
    }
    for (const [cid, label] of Object.entries(entries)) {
      if (!(cid in this.entries)) throw new ApiError(422, `unknown cluster id ${cid}`);
      if (!label.trim()) throw new ApiError(422, "label is empty after sanitizing");
    }
    for (const [cid, label] of Object.entries(entries)) {
      this.entries[cid] = label.trim();
    }
    this.version += 1;
    return this.labels();
  }

  async setSegmentation(draft: SegmentationDraft): Promise<SegmentationDoc> {
    this.calls.setSegmentation += 1;
    if (!["time-gap", "day-boundary", "sensor-change"].includes(draft.method)) {
      throw new ApiError(422, `unknown segmentation method ${draft.method}`);
    }
    if (draft.method === "time-gap" && !(draft.gap_threshold_s && draft.gap_threshold_s > 0)) {
      throw new ApiError(422, "time-gap segmentation needs gap_threshold_s");
    }
    this.segmentation = {
      method: draft.method,
      gap_threshold_s: draft.gap_threshold_s ?? undefined,
      change_channel: draft.change_channel ?? undefined,
      sensitivity: draft.sensitivity ?? undefined,
      min_activities_per_case: draft.min_activities_per_case ?? 2,
      max_case_duration_s: draft.max_case_duration_s ?? null,
      merge_consecutive: draft.merge_consecutive ?? true,
    };
    return this.segmentation;
  }

  async preview(cases: number): Promise<PreviewDoc> {
    const labeled = this.timeline.map(([offset, cluster]) => ({
      offset,
      activity: this.entries[String(cluster)] ?? `cluster ${cluster}`,
    }));

    const segments: (typeof labeled)[] = [[labeled[0]]];
    for (let i = 1; i < labeled.length; i += 1) {
      const gap = labeled[i].offset - labeled[i - 1].offset;
      const tooLong =
        this.segmentation.max_case_duration_s !== null &&
        labeled[i].offset - segments[segments.length - 1][0].offset >
          this.segmentation.max_case_duration_s;
      if (
        (this.segmentation.method === "time-gap" &&
          gap > (this.segmentation.gap_threshold_s ?? Infinity)) ||
        tooLong
      ) {
        segments.push([labeled[i]]);
      } else {
        segments[segments.length - 1].push(labeled[i]);
      }
    }

    const kept: PreviewCase[] = [];
    let dropped = 0;
    segments.forEach((rows, index) => {
      let events: PreviewEvent[] = rows.map((row, i) => ({
        activity: row.activity,
        start: iso(row.offset),
        end: iso(i + 1 < rows.length ? rows[i + 1].offset : row.offset),
      }));
      if (this.segmentation.merge_consecutive) {
        const merged: PreviewEvent[] = [];
        for (const event of events) {
          const last = merged[merged.length - 1];
          if (last && last.activity === event.activity) last.end = event.end;
          else merged.push({ ...event });
        }
        events = merged;
      }
      if (events.length < this.segmentation.min_activities_per_case) {
        dropped += 1;
        return;
      }
      kept.push({
        case_id: `case_${String(index + 1).padStart(4, "0")}`,
        start: events[0].start,
        end: events[events.length - 1].end,
        events,
      });
    });

    return {
      labels_version: this.version,
      segmentation: this.segmentation,
      totals: {
        cases: kept.length,
        events: kept.reduce((n, c) => n + c.events.length, 0),
        dropped_cases: dropped,
      },
      cases: kept.slice(0, cases),
    };
  }

  async evaluation(): Promise<EvaluationDoc | null> {
    return this.evaluationDoc;
  }

  async sweep(): Promise<SweepDoc | null> {
    return this.sweepDoc;
  }
}

/** Let queued view promises (fetch → render chains) settle. */
export async function flush(): Promise<void> {
  for (let i = 0; i < 4; i += 1) {
    await new Promise((resolve) => setTimeout(resolve, 0));
  }
}
