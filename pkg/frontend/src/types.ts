// TypeScript mirrors of the JSON the run-inspection API serves. Field
// names match the wire format exactly (snake_case).

export interface StageStatus {
  name: string;
  status: string;
}

export interface StateDoc {
  tool_version: string;
  config_hash: string;
  created: string;
  stages: StageStatus[];
  artifacts: string[];
  labels_version: number;
  mutations: number;
}

export interface ClusteringConfigDoc {
  algorithm: string;
  normalization: string;
  seed: number;
  [param: string]: string | number;
}

export interface RankedConfig {
  rank: number;
  config: ClusteringConfigDoc;
  k: number;
  silhouette: number;
  davies_bouldin: number;
  calinski_harabasz: number;
  silhouette_subsampled: boolean;
}

export interface ChannelStats {
  min: number;
  max: number;
  mean: number;
  median: number;
  std: number;
  q1: number;
  q3: number;
}

export interface ClusterProfile {
  cluster_id: number;
  size: number;
  share: number;
  stats: Record<string, ChannelStats>;
}

export interface ProjectionPoint {
  row_id: number;
  x: number;
  y: number;
  cluster_id: number;
}

export interface Projection {
  points: ProjectionPoint[];
}

export interface LabelDoc {
  entries: Record<string, string>;
  ambiguous: string[];
  provenance: Record<string, unknown>;
  version: number;
}

export type SegmentationMethod = "time-gap" | "day-boundary" | "sensor-change";

export interface SegmentationDoc {
  method: SegmentationMethod;
  min_activities_per_case: number;
  max_case_duration_s: number | null;
  merge_consecutive: boolean;
  gap_threshold_s?: number;
  change_channel?: string;
  sensitivity?: number;
}

export interface SegmentationDraft {
  method: SegmentationMethod;
  gap_threshold_s?: number | null;
  change_channel?: string | null;
  sensitivity?: number | null;
  min_activities_per_case?: number;
  max_case_duration_s?: number | null;
  merge_consecutive?: boolean;
}

export interface PreviewEvent {
  activity: string;
  start: string;
  end: string;
}

export interface PreviewCase {
  case_id: string;
  start: string;
  end: string;
  events: PreviewEvent[];
}

export interface PreviewDoc {
  labels_version: number;
  segmentation: SegmentationDoc;
  totals: { cases: number; events: number; dropped_cases: number };
  cases: PreviewCase[];
}

export interface AlignmentDoc {
  predicted_labels: string[];
  reference_labels: string[];
  cells: number[][];
  frequencies: number[][];
}

export interface EvaluationDoc {
  swa: number;
  threshold: number;
  n: number;
  provider: string;
  warnings: string[];
  alignment?: AlignmentDoc;
}

export interface SweepGroup {
  tier: number;
  temperature: number;
  runs: number;
  mean: number | null;
  std: number | null;
  se: number | null;
  min: number | null;
  max: number | null;
}

export interface DiversityRow {
  tier: number;
  temperature: number;
  runs: number;
  unique_labels: number;
}

export interface SweepDoc {
  tool_version: string;
  config_hash: string;
  tiers: number[];
  temperatures: number[];
  runs_per_cell: number;
  threshold: number;
  provider: string;
  groups: SweepGroup[];
  diversity: DiversityRow[];
  failures: { tier: number; temperature: number; run_index: number; error: string }[];
  warnings: string[];
}
