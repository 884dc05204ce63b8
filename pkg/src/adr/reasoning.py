"""Tier-2 deep analysis: plan provider queries, gather evidence, decide.

The decision core is deterministic so runs are reproducible: a session is
convicted iff at least one evidence item supports malicious AND the
analysis is anchored by a matched threat technique or a policy violation.
An optional completion backend may only upgrade benign to malicious (with
its rationale recorded as evidence), never downgrade.

Source inspection classifies evidence by capability markers in the stored
implementation (outbound send, shell execution) corroborated by the
triage signals; the threat-framework step records matched technique ids;
the policy step is malicious exactly when a violation is found.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

from .model import (
    AgentSession,
    Decision,
    EvidenceItem,
    EvidenceSupport,
    SignalKind,
    TriageSignal,
    Verdict,
    VerdictTier,
)
from .providers import (
    PolicyStore,
    SourceIndex,
    assess_policy_violations,
    get_source_code,
    significant_tokens,
)
from .threat_repo import ThreatRepository
from .triage import CompletionBackend, build_digest

logger = logging.getLogger(__name__)

DEFAULT_PLAN_BUDGET = 8

# capability markers looked for in stored tool implementations
OUTBOUND_SEND_MARKERS = ("requests.post", "requests.put", "httpx.post", "smtplib", "urlopen(")
EXEC_MARKERS = ("subprocess", "os.system", "eval(", "exec(")

_TOOL_RELATED_KINDS = frozenset(
    {SignalKind.CREDENTIAL_TOUCH, SignalKind.RISKY_COMBINATION, SignalKind.PRIVILEGE_CHANGE}
)


@dataclass(frozen=True)
class PlanStep:
    provider: str  # source_code | threat_framework | policy
    query: str


@dataclass(frozen=True)
class ReasoningPlan:
    steps: tuple[PlanStep, ...]
    budget: int = DEFAULT_PLAN_BUDGET


@dataclass(frozen=True)
class RepoMatch:
    technique_id: str
    matched_guidance_line: str
    tag: str


@dataclass
class ProviderSet:
    """The provider bundle Tier-2 queries, with synthetic call receipts.

    ``disabled`` names providers to treat as unavailable (the ablation
    switch); an unavailable step records a neutral "unavailable" finding.
    """

    source_index: SourceIndex
    policy_store: PolicyStore
    call_cost_usd: float = 0.002
    call_latency_s: float = 0.3
    disabled: frozenset = frozenset()


def consult_repo(session: AgentSession, repo: ThreatRepository) -> list[RepoMatch]:
    """Match guidance lines against the session digest by keyword overlap.

    A line matches when it shares at least three significant tokens with
    the digest; matches carry their provenance tag.
    """
    digest_tokens = significant_tokens(build_digest(session))
    matches: list[RepoMatch] = []
    for technique in repo.techniques():
        for line in technique.detection_guidance:
            overlap = significant_tokens(line.text) & digest_tokens
            if len(overlap) >= 3:
                matches.append(
                    RepoMatch(
                        technique_id=technique.id,
                        matched_guidance_line=line.text,
                        tag=line.tag,
                    )
                )
    matches.sort(key=lambda m: m.technique_id)
    return matches


def _guidance_tokens(repo: ThreatRepository) -> set[str]:
    tokens: set[str] = set()
    for technique in repo.techniques():
        tokens |= significant_tokens(technique.name)
        for line in technique.detection_guidance:
            tokens |= significant_tokens(line.text)
    return tokens


def plan(
    session: AgentSession,
    signals: Sequence[TriageSignal],
    repo: ThreatRepository,
    budget: int = DEFAULT_PLAN_BUDGET,
) -> ReasoningPlan:
    """Deterministic provider plan for an escalated session.

    Credential or tool-related signals put source inspection first (one
    step per distinct tool invoked); a signal sharing keywords with repo
    guidance adds a threat-framework step; a policy check always closes
    the plan. Steps are deduplicated and truncated to the budget.
    """
    steps: list[PlanStep] = []

    tool_related = any(
        s.kind in _TOOL_RELATED_KINDS or s.location[0] == "tool_calls" for s in signals
    )
    if tool_related:
        seen: set[tuple[str, str]] = set()
        for call in session.tool_calls:
            key = (call.server_name, call.tool_name)
            if key not in seen:
                seen.add(key)
                steps.append(PlanStep("source_code", f"{call.server_name}/{call.tool_name}"))

    repo_tokens = _guidance_tokens(repo)
    matching_excerpts = sorted(
        {s.excerpt for s in signals if significant_tokens(s.excerpt) & repo_tokens}
    )
    if matching_excerpts:
        query = "; ".join(matching_excerpts)[:160]
        steps.append(PlanStep("threat_framework", query))

    steps.append(PlanStep("policy", "assess_policy_violations"))

    deduped: list[PlanStep] = []
    seen_steps: set[PlanStep] = set()
    for step in steps:
        if step not in seen_steps:
            seen_steps.add(step)
            deduped.append(step)
    return ReasoningPlan(steps=tuple(deduped[:budget]), budget=budget)


def _source_evidence(
    step: PlanStep,
    session: AgentSession,
    signals: Sequence[TriageSignal],
    index: SourceIndex,
) -> EvidenceItem:
    server_name, _, tool_name = step.query.partition("/")
    lookup = get_source_code(server_name, tool_name, index)
    if lookup.not_indexed:
        return EvidenceItem("source_code", step.query, "not_indexed", EvidenceSupport.NEUTRAL)

    kinds = {s.kind for s in signals}
    outbound = next(
        (m for m in OUTBOUND_SEND_MARKERS if m in lookup.source_text), None
    )
    executes = next((m for m in EXEC_MARKERS if m in lookup.source_text), None)

    if outbound and kinds & {SignalKind.CREDENTIAL_TOUCH, SignalKind.RISKY_COMBINATION}:
        call_site = next(
            line.strip() for line in lookup.source_text.splitlines() if outbound in line
        )
        return EvidenceItem(
            "source_code",
            step.query,
            f"tool can transmit data externally ({call_site}) while session touches credentials",
            EvidenceSupport.MALICIOUS,
        )
    if executes and kinds & {
        SignalKind.PROMPT_INJECTION_PHRASE,
        SignalKind.RISKY_COMBINATION,
        SignalKind.PRIVILEGE_CHANGE,
        SignalKind.MODEL_FLAG,
    }:
        return EvidenceItem(
            "source_code",
            step.query,
            f"tool executes arbitrary commands ({executes}) under suspicious direction",
            EvidenceSupport.MALICIOUS,
        )
    if outbound or executes:
        return EvidenceItem(
            "source_code",
            step.query,
            f"tool has risky capability ({outbound or executes}) but no corroborating signal",
            EvidenceSupport.NEUTRAL,
        )
    return EvidenceItem(
        "source_code",
        step.query,
        "implementation shows no outbound or execution capability",
        EvidenceSupport.BENIGN,
    )


def execute(
    session: AgentSession,
    reasoning_plan: ReasoningPlan,
    providers: ProviderSet,
    repo: ThreatRepository,
    backend: Optional[CompletionBackend] = None,
    signals: Sequence[TriageSignal] = (),
) -> Verdict:
    """Run the plan, collect evidence, and decide deterministically."""
    evidence: list[EvidenceItem] = []
    technique_ids: list[str] = []
    policy_violation_found = False
    cost = 0.0
    latency = 0.0

    for step in reasoning_plan.steps:
        cost += providers.call_cost_usd
        latency += providers.call_latency_s
        if step.provider in providers.disabled:
            evidence.append(
                EvidenceItem(step.provider, step.query, "unavailable", EvidenceSupport.NEUTRAL)
            )
            continue
        if step.provider == "source_code":
            evidence.append(_source_evidence(step, session, signals, providers.source_index))
        elif step.provider == "threat_framework":
            matches = consult_repo(session, repo)
            for match in matches:
                if match.technique_id not in technique_ids:
                    technique_ids.append(match.technique_id)
            finding = (
                "; ".join(f"{m.technique_id}[{m.tag}]" for m in matches)
                if matches
                else "no technique guidance matched"
            )
            evidence.append(
                EvidenceItem("threat_framework", step.query, finding, EvidenceSupport.NEUTRAL)
            )
        elif step.provider == "policy":
            violations = assess_policy_violations(session, providers.policy_store)
            if violations:
                policy_violation_found = True
                finding = "; ".join(
                    f"{v.policy_id}:{v.violated_predicate}@{v.event_ref[0]}[{v.event_ref[1]}]"
                    for v in violations
                )
                evidence.append(
                    EvidenceItem("policy", step.query, finding, EvidenceSupport.MALICIOUS)
                )
            else:
                evidence.append(
                    EvidenceItem("policy", step.query, "no policy violated", EvidenceSupport.BENIGN)
                )
        else:
            evidence.append(
                EvidenceItem(step.provider, step.query, "unavailable", EvidenceSupport.NEUTRAL)
            )

    all_unavailable = bool(reasoning_plan.steps) and all(
        e.finding == "unavailable" for e in evidence
    )
    if all_unavailable:
        # degraded mode: convict only when the strongest signal class is present
        if any(s.kind is SignalKind.CREDENTIAL_TOUCH for s in signals):
            evidence.append(
                EvidenceItem(
                    "pipeline",
                    "degraded",
                    "all providers unavailable; unresolved credential-touch signals "
                    "(degraded confidence)",
                    EvidenceSupport.MALICIOUS,
                )
            )
            decision = Decision.MALICIOUS
        else:
            decision = Decision.BENIGN
        return Verdict(
            session_id=session.session_id,
            decision=decision,
            tier=VerdictTier.TIER2,
            technique_ids=tuple(technique_ids),
            signals=tuple(signals),
            evidence=tuple(evidence),
            cost_usd=cost,
            latency_s=latency,
            degraded=True,
        )

    malicious_support = any(e.supports is EvidenceSupport.MALICIOUS for e in evidence)
    decision = (
        Decision.MALICIOUS
        if malicious_support and (technique_ids or policy_violation_found)
        else Decision.BENIGN
    )

    if decision is Decision.BENIGN and backend is not None:
        try:
            summary = build_digest(session) + "\nevidence:\n" + "\n".join(
                f"{e.provider}: {e.finding}" for e in evidence
            )
            result = backend.classify(summary)
            cost += result.cost_usd
            latency += result.latency_s
            if result.flag:
                evidence.append(
                    EvidenceItem("model", "review", result.rationale, EvidenceSupport.MALICIOUS)
                )
                decision = Decision.MALICIOUS
        except Exception as exc:
            logger.warning("reasoning backend unavailable: %s", exc)

    return Verdict(
        session_id=session.session_id,
        decision=decision,
        tier=VerdictTier.TIER2,
        technique_ids=tuple(technique_ids),
        signals=tuple(signals),
        evidence=tuple(evidence),
        cost_usd=cost,
        latency_s=latency,
    )
