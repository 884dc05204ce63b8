// Mirrors of the alert-service API payloads. The console is a pure client:
// every shape here corresponds to a documented endpoint response.

export type Severity = "low" | "medium" | "high" | "critical";
export type AlertState = "open" | "labeled";
export type LabelValue = "TP" | "TPNM" | "FP";

export interface AnalystLabel {
  alert_id: string;
  label: LabelValue;
  analyst_id: string;
  note: string;
  labeled_at: number;
}

export interface TriageSignal {
  kind: string;
  location: [string, number];
  excerpt: string;
  rule_id: string;
}

export interface EvidenceItem {
  provider: string;
  query: string;
  finding: string;
  supports: "malicious" | "benign" | "neutral";
}

export interface Verdict {
  session_id: string;
  decision: "benign" | "malicious";
  tier: "tier1_resolved" | "tier2";
  technique_ids: string[];
  signals: TriageSignal[];
  evidence: EvidenceItem[];
  cost_usd: number;
  latency_s: number;
  degraded: boolean;
}

export interface Alert {
  alert_id: string;
  session_id: string;
  verdict: Verdict;
  severity: Severity;
  state: AlertState;
  created_at: number;
  label: AnalystLabel | null;
  label_history: AnalystLabel[];
}

export interface AlertPage {
  alerts: Alert[];
  page: number;
  total: number;
}

export interface PromptEvent {
  index: number;
  ts: string;
  text: string;
  source: "user" | "injected_data";
}

export interface ReasoningStep {
  index: number;
  ts: string;
  prompt_index: number;
  text: string;
}

export interface ToolInvocation {
  index: number;
  ts: string;
  prompt_index: number;
  server_name: string;
  tool_name: string;
  arguments: Record<string, string>;
  result_excerpt: string;
  outcome: "success" | "error";
  truncated: boolean;
}

export interface SessionDocument {
  session_id: string;
  host_id: string;
  started_at: string;
  ended_at: string | null;
  prompts: PromptEvent[];
  reasoning: ReasoningStep[];
  tool_calls: ToolInvocation[];
}

export interface SessionDetail {
  session: SessionDocument;
  verdict: Verdict | null;
}

export interface GuidanceLine {
  text: string;
  tag: "EAS" | "CURATED";
}

export interface Technique {
  id: string;
  name: string;
  detection_guidance: GuidanceLine[];
}

export interface ThreatRepo {
  threat_framework: {
    tactics: Record<string, { techniques: Technique[] }>;
  };
}

export interface Stats {
  window: string;
  processed_sessions: number;
  alerts_total: number;
  alerts_open: number;
  alerts_labeled: number;
  label_distribution: Record<LabelValue, number>;
  severity_counts: Record<Severity, number>;
  tier1_resolved_share: number;
  queue_depth: number;
}
