// Wire shapes, mirroring docs/API.md in the service repo.

export interface TransitionRow {
  state: string;
  event: string;
  guard: string;
  next: string;
  action: string | null;
}

export interface HistoryEntry {
  state: string;
  ts: number;
  actor: string;
}

export interface VoteRow {
  member: string;
  decision: "Approve" | "Reject" | "Abstain";
  rationale: string;
}

export interface CcbDecision {
  approvals: number;
  rejections: number;
  abstentions: number;
  quorum: number;
  outcome: "Approved" | "Rejected";
}

export interface ImpactAnalysis {
  affected: Record<string, number>;
  total_cost: number;
  schedule_days: number;
}

export interface ChangeRequestForm {
  cr_id: string;
  affected: Record<string, number>;
  preliminary_cost: number;
  conflicts: string[];
  priority_score: number;
  generated_at: number;
}

export interface RequirementDelta {
  op: "Add" | "Modify" | "Deprecate";
  requirement_id: string;
  new_title?: string;
  new_text?: string;
  new_effort?: number;
  owner_site?: string;
}

export interface ChangeRequest {
  id: string;
  author: string;
  origin_site: string;
  targets: string[];
  description: string;
  severity: number;
  created_at: number;
  state: string;
  goals: string[];
  measurements: string[];
  deltas: RequirementDelta[];
  history: HistoryEntry[];
  votes: Record<string, VoteRow>;
  form: ChangeRequestForm | null;
  decision: CcbDecision | null;
  pm_decision: string | null;
  pm_rationale: string | null;
  preliminary_impact: ImpactAnalysis | null;
  final_impact: ImpactAnalysis | null;
  changeset_seq: number | null;
}

export interface SiteRow {
  id: string;
  coordinator: boolean;
  utc_offset_minutes: number;
  daily_capacity: number;
  applied_seq: number;
  baseline_hash: string;
  quarantined: boolean;
}

export interface VerificationRow {
  seq: number;
  cr_id: string;
  acked_sites: string[];
  required_sites: string[];
  missing_sites: string[];
  hashes_match: boolean;
  complete: boolean;
}

export interface ActorRow {
  id: string;
  role: string;
  site: string;
  stakeholder_weight: number;
}

export interface SitesBody {
  sites: SiteRow[];
  change_sets: VerificationRow[];
  actors: ActorRow[];
}

export interface ImpactBody extends ImpactAnalysis {
  cr_id: string;
  phase: "preliminary" | "final";
  dot: string;
}

export interface ErrorEnvelope {
  code: string;
  message: string;
  details: Record<string, unknown>;
}

export interface TickBody {
  ticks: number;
  delivered: number;
  clock: number;
  in_flight: number;
}
