// Mirrors of the review-service JSON payloads. The client renders these as
// received; analytical numbers (tallies, recalls, mappings) are never
// recomputed on this side.

export interface StageState {
  stage: string;
  round: number;
  next_batch_index: number;
}

export interface ActiveStage {
  stage: string;
  round: number;
  done: number;
  total: number;
  error: string | null;
  finished: boolean;
}

export interface RunSummary {
  run_id: string;
  name: string;
  created_at: number;
  dataset_digest: string;
  n_points: number;
  rounds: number[];
  stages: StageState[];
  approved_rounds: number[];
  last_seq: number;
}

export interface ContextSnapshot {
  research_questions: string[];
  analysis_kind: string;
  topic_focus: string;
  theme_specification: string;
  custom_requirements: string[];
  positive_exemplars: string[];
}

export interface RunDetail extends RunSummary {
  contexts: Record<string, ContextSnapshot>;
  active_stage: ActiveStage | null;
}

export interface CodeItem {
  id: string;
  code: string;
  round: number;
  text?: string;
}

export interface CodesPage {
  round: number;
  rounds: number[];
  total: number;
  offset: number;
  limit: number;
  items: CodeItem[];
}

export type VerdictValue = "not_how" | "not_what" | "ok";

export interface AnnotationItem {
  data_point_id: string;
  round: number;
  verdict: VerdictValue;
}

export interface Tally {
  counts: Record<VerdictValue, number>;
  percentages: Record<VerdictValue, number>;
  total: number;
  ok_pct: number;
  not_ok_pct: number;
  empty: boolean;
}

export interface AnnotationsPayload {
  round: number | null;
  items: AnnotationItem[];
  tally: Tally;
}

export interface ThemeNode {
  label: string;
  sub_themes: string[];
}

export interface CandidateTheme {
  label: string;
  members: string[];
}

export interface ThemesPayload {
  round: number;
  merged: { themes: ThemeNode[] } | null;
  approved: { themes: ThemeNode[] } | null;
  candidates: CandidateTheme[];
}

export interface AssignmentItem {
  id: string;
  themes: string[];
  gold_theme?: string;
}

export interface AssignmentsPage {
  round: number;
  rounds: number[];
  total: number;
  offset: number;
  limit: number;
  items: AssignmentItem[];
}

export interface RecallRow {
  r_at_1: number;
  support: number;
  [key: string]: number; // r_at_<k>
}

export interface RecallReport {
  k: number;
  overall: RecallRow;
  per_theme: Record<string, RecallRow>;
  residual_themes: string[];
}

export interface EvaluationPayload {
  round: number;
  k: number;
  recall: RecallReport | null;
  tally: Tally | null;
  recall_unavailable?: string;
}

export interface Flow {
  source: string;
  target: string;
  weight: number;
}

export interface MappingPayload {
  round: number;
  matrix: {
    rows: string[];
    cols: string[];
    cells: { gold: string; auto: string; count: number }[];
  };
  flows: Flow[];
}

export interface ProgressPayload {
  version: number;
  stages: { stage: string; round: number; batches_done: number }[];
  active: ActiveStage | null;
}

export interface FeedbackBody {
  positive: string[];
  negative: string[];
  exemplars: string[];
  rerun: boolean;
  seed?: number;
}

export interface StageBody {
  round?: number;
  seed?: number;
  k?: number;
  parallelism?: number;
  allow_unapproved?: boolean;
}

export interface CreateRunBody {
  name: string;
  dataset_path: string;
  research_questions?: string[];
  analysis_kind?: "semantic" | "latent";
  topic_focus?: string;
  theme_specification?: string;
  custom_requirements?: string[];
  config?: Record<string, unknown>;
}
