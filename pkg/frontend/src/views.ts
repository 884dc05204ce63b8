// Read-only view projections. No detection logic lives here: rows and
// chains are pure shapes of what the service returned, ordered for the
// analyst (critical first, then oldest first within a severity).

import type { Alert, SessionDetail, Severity, Technique, ThreatRepo, Verdict } from "./types.js";

const SEVERITY_ORDER: Record<Severity, number> = {
  critical: 0,
  high: 1,
  medium: 2,
  low: 3,
};

export interface AlertRow {
  alertId: string;
  sessionId: string;
  severity: Severity;
  state: string;
  label: string;
  techniqueIds: string[];
  createdAt: number;
}

export function buildQueueView(alerts: Alert[]): AlertRow[] {
  const rows = alerts.map((alert) => ({
    alertId: alert.alert_id,
    sessionId: alert.session_id,
    severity: alert.severity,
    state: alert.state,
    label: alert.label?.label ?? "",
    techniqueIds: alert.verdict.technique_ids,
    createdAt: alert.created_at,
  }));
  rows.sort(
    (a, b) => SEVERITY_ORDER[a.severity] - SEVERITY_ORDER[b.severity] || a.createdAt - b.createdAt,
  );
  return rows;
}

export interface ChainEntry {
  ts: string;
  kind: "prompt" | "reasoning" | "tool_call";
  heading: string;
  body: string;
  highlighted: boolean;
}

function highlightSet(verdict: Verdict | null): Set<string> {
  const keys = new Set<string>();
  for (const signal of verdict?.signals ?? []) {
    keys.add(`${signal.location[0]}:${signal.location[1]}`);
  }
  return keys;
}

export function buildCausalChain(detail: SessionDetail): ChainEntry[] {
  const marks = highlightSet(detail.verdict);
  const entries: ChainEntry[] = [];
  for (const prompt of detail.session.prompts) {
    entries.push({
      ts: prompt.ts,
      kind: "prompt",
      heading: prompt.source === "injected_data" ? "prompt (injected data)" : "prompt",
      body: prompt.text,
      highlighted: marks.has(`prompts:${prompt.index}`),
    });
  }
  for (const step of detail.session.reasoning) {
    entries.push({
      ts: step.ts,
      kind: "reasoning",
      heading: `reasoning (prompt ${step.prompt_index})`,
      body: step.text,
      highlighted: marks.has(`reasoning:${step.index}`),
    });
  }
  for (const call of detail.session.tool_calls) {
    const args = Object.entries(call.arguments)
      .map(([key, value]) => `${key}=${value}`)
      .join(", ");
    entries.push({
      ts: call.ts,
      kind: "tool_call",
      heading: `${call.server_name}.${call.tool_name}(${args}) [${call.outcome}]`,
      body: call.result_excerpt,
      highlighted: marks.has(`tool_calls:${call.index}`),
    });
  }
  entries.sort((a, b) => (a.ts < b.ts ? -1 : a.ts > b.ts ? 1 : 0));
  return entries;
}

export function listTechniques(repo: ThreatRepo): Technique[] {
  const techniques: Technique[] = [];
  for (const tactic of Object.values(repo.threat_framework.tactics)) {
    techniques.push(...tactic.techniques);
  }
  techniques.sort((a, b) => a.id.localeCompare(b.id));
  return techniques;
}

export interface CurationDraft {
  techniqueId: string;
  text: string;
}

export function validateDraft(draft: CurationDraft, repo: ThreatRepo): string[] {
  const problems: string[] = [];
  if (!draft.text.trim()) {
    problems.push("guidance text must be non-empty");
  }
  if (!listTechniques(repo).some((technique) => technique.id === draft.techniqueId)) {
    problems.push(`unknown technique ${draft.techniqueId}`);
  }
  return problems;
}
