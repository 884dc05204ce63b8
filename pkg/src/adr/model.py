"""Core domain types shared by every component.

Sessions carry the full causal chain of one agent run: the user prompts,
the agent's reasoning steps, the MCP tool invocations with their arguments
and (truncated) results, and a snapshot of the environment the agent had
access to. Detection verdicts, triage signals, reasoning evidence, and
analyst labels are defined here as well so the sensor, detector, explorer,
and service all speak the same vocabulary.

All types are immutable after construction (frozen dataclasses holding
tuples) and safe to share across threads. Timestamps are integer
microseconds since the Unix epoch internally and RFC 3339 UTC strings on
the wire.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Iterable, Mapping, Optional

RESULT_EXCERPT_CAP = 4096


# ---------------------------------------------------------------------------
# Timestamps
# ---------------------------------------------------------------------------

def us_to_rfc3339(ts_us: int) -> str:
    """Render microseconds-since-epoch as an RFC 3339 UTC string."""
    whole, frac = divmod(ts_us, 1_000_000)
    dt = datetime.fromtimestamp(whole, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S") + f".{frac:06d}Z"


def rfc3339_to_us(value: str) -> int:
    """Parse an RFC 3339 timestamp into integer microseconds (UTC)."""
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(round(dt.timestamp() * 1_000_000))


# ---------------------------------------------------------------------------
# Enums
# ---------------------------------------------------------------------------

class PromptSource(str, Enum):
    USER = "user"
    INJECTED_DATA = "injected_data"


class ToolOutcome(str, Enum):
    SUCCESS = "success"
    ERROR = "error"


class Decision(str, Enum):
    BENIGN = "benign"
    MALICIOUS = "malicious"


class VerdictTier(str, Enum):
    TIER1_RESOLVED = "tier1_resolved"
    TIER2 = "tier2"


class SignalKind(str, Enum):
    PROMPT_INJECTION_PHRASE = "prompt_injection_phrase"
    CREDENTIAL_TOUCH = "credential_touch"
    PRIVILEGE_CHANGE = "privilege_change"
    RISKY_COMBINATION = "risky_combination"
    MODEL_FLAG = "model_flag"


class EvidenceSupport(str, Enum):
    MALICIOUS = "malicious"
    BENIGN = "benign"
    NEUTRAL = "neutral"


class LabelValue(str, Enum):
    TP = "TP"
    TPNM = "TPNM"
    FP = "FP"


class PackageEcosystem(str, Enum):
    PIP = "pip"
    NPM = "npm"


# ---------------------------------------------------------------------------
# Session events
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PromptEvent:
    index: int
    timestamp: int
    text: str
    source: PromptSource = PromptSource.USER


@dataclass(frozen=True)
class ReasoningStep:
    index: int
    timestamp: int
    prompt_index: int
    text: str


@dataclass(frozen=True)
class ToolInvocation:
    index: int
    timestamp: int
    prompt_index: int
    server_name: str
    tool_name: str
    arguments: tuple[tuple[str, str], ...]
    result_excerpt: str = ""
    outcome: ToolOutcome = ToolOutcome.SUCCESS
    truncated: bool = False

    @staticmethod
    def args_from_mapping(arguments: Mapping[str, str]) -> tuple[tuple[str, str], ...]:
        return tuple((str(k), str(v)) for k, v in arguments.items())

    def arguments_dict(self) -> dict[str, str]:
        return dict(self.arguments)


@dataclass(frozen=True)
class McpServerInfo:
    name: str
    entry_point: str = ""
    tool_names: tuple[str, ...] = ()


@dataclass(frozen=True)
class InstalledPackage:
    ecosystem: PackageEcosystem
    name: str
    version: str = ""


@dataclass(frozen=True)
class EnvironmentContext:
    mcp_servers: tuple[McpServerInfo, ...] = ()
    installed_packages: tuple[InstalledPackage, ...] = ()


@dataclass(frozen=True)
class AgentSession:
    session_id: str
    host_id: str
    started_at: int
    ended_at: Optional[int]
    prompts: tuple[PromptEvent, ...] = ()
    reasoning: tuple[ReasoningStep, ...] = ()
    tool_calls: tuple[ToolInvocation, ...] = ()
    environment: EnvironmentContext = field(default_factory=EnvironmentContext)


def truncate_excerpt(text: str, cap: int = RESULT_EXCERPT_CAP) -> tuple[str, bool]:
    """Clamp a tool result excerpt to the configured cap."""
    if len(text) <= cap:
        return text, False
    return text[:cap], True


# ---------------------------------------------------------------------------
# Detection outcome types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TriageSignal:
    """One suspicious indicator found by Tier-1 screening.

    ``location`` is (list name, index) and must resolve inside the session
    that produced the signal: list name is one of "prompts", "reasoning",
    "tool_calls".
    """

    kind: SignalKind
    location: tuple[str, int]
    excerpt: str
    rule_id: str = ""

    def __post_init__(self) -> None:
        if len(self.excerpt) > 200:
            object.__setattr__(self, "excerpt", self.excerpt[:200])


@dataclass(frozen=True)
class EvidenceItem:
    """One finding gathered by Tier-2 from a context provider."""

    provider: str
    query: str
    finding: str
    supports: EvidenceSupport = EvidenceSupport.NEUTRAL


@dataclass(frozen=True)
class Verdict:
    session_id: str
    decision: Decision
    tier: VerdictTier
    technique_ids: tuple[str, ...] = ()
    signals: tuple[TriageSignal, ...] = ()
    evidence: tuple[EvidenceItem, ...] = ()
    cost_usd: float = 0.0
    latency_s: float = 0.0
    degraded: bool = False


@dataclass(frozen=True)
class AnalystLabel:
    alert_id: str
    label: LabelValue
    analyst_id: str
    note: str
    labeled_at: int


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _check_ordered(name: str, timestamps: list[int], out: list[str]) -> None:
    for prev, cur in zip(timestamps, timestamps[1:]):
        if cur <= prev:
            out.append(f"{name} events are not strictly ordered by timestamp")
            return


def validate_session(session: AgentSession) -> list[str]:
    """Check every session invariant; returns human-readable violations.

    Pure: never raises, never mutates, identical output for identical input.
    An empty list means the session is valid.
    """
    violations: list[str] = []

    if not session.session_id:
        violations.append("session_id is empty")

    _check_ordered("prompts", [p.timestamp for p in session.prompts], violations)
    _check_ordered("reasoning", [r.timestamp for r in session.reasoning], violations)
    _check_ordered("tool_calls", [t.timestamp for t in session.tool_calls], violations)

    for i, prompt in enumerate(session.prompts):
        if prompt.index != i:
            violations.append(f"prompts[{i}] has index {prompt.index}, expected {i}")
        if not prompt.text:
            violations.append(f"prompts[{i}] has empty text")

    n_prompts = len(session.prompts)
    for i, step in enumerate(session.reasoning):
        if not (0 <= step.prompt_index < n_prompts):
            violations.append(
                f"reasoning[{i}] references missing prompt {step.prompt_index}"
            )

    for i, call in enumerate(session.tool_calls):
        if not (0 <= call.prompt_index < n_prompts):
            violations.append(
                f"tool_calls[{i}] references missing prompt {call.prompt_index}"
            )
        if not call.server_name:
            violations.append(f"tool_calls[{i}] has empty server_name")
        if not call.tool_name:
            violations.append(f"tool_calls[{i}] has empty tool_name")
        if len(call.result_excerpt) > RESULT_EXCERPT_CAP:
            violations.append(
                f"tool_calls[{i}] result_excerpt exceeds {RESULT_EXCERPT_CAP} characters"
            )

    seen_servers: set[str] = set()
    for server in session.environment.mcp_servers:
        if server.name in seen_servers:
            violations.append(f"environment lists server '{server.name}' more than once")
        seen_servers.add(server.name)

    return violations


# ---------------------------------------------------------------------------
# Canonical wire encoding (one self-contained JSON object per session)
# ---------------------------------------------------------------------------

def session_to_dict(session: AgentSession) -> dict[str, Any]:
    return {
        "session_id": session.session_id,
        "host_id": session.host_id,
        "started_at": us_to_rfc3339(session.started_at),
        "ended_at": us_to_rfc3339(session.ended_at) if session.ended_at is not None else None,
        "prompts": [
            {
                "index": p.index,
                "ts": us_to_rfc3339(p.timestamp),
                "text": p.text,
                "source": p.source.value,
            }
            for p in session.prompts
        ],
        "reasoning": [
            {
                "index": r.index,
                "ts": us_to_rfc3339(r.timestamp),
                "prompt_index": r.prompt_index,
                "text": r.text,
            }
            for r in session.reasoning
        ],
        "tool_calls": [
            {
                "index": t.index,
                "ts": us_to_rfc3339(t.timestamp),
                "prompt_index": t.prompt_index,
                "server_name": t.server_name,
                "tool_name": t.tool_name,
                "arguments": t.arguments_dict(),
                "result_excerpt": t.result_excerpt,
                "outcome": t.outcome.value,
                "truncated": t.truncated,
            }
            for t in session.tool_calls
        ],
        "environment": {
            "mcp_servers": [
                {"name": s.name, "entry_point": s.entry_point, "tool_names": list(s.tool_names)}
                for s in session.environment.mcp_servers
            ],
            "installed_packages": [
                {"ecosystem": p.ecosystem.value, "name": p.name, "version": p.version}
                for p in session.environment.installed_packages
            ],
        },
    }


def session_from_dict(data: Mapping[str, Any]) -> AgentSession:
    env = data.get("environment") or {}
    ended = data.get("ended_at")
    return AgentSession(
        session_id=data["session_id"],
        host_id=data.get("host_id", ""),
        started_at=rfc3339_to_us(data["started_at"]),
        ended_at=rfc3339_to_us(ended) if ended else None,
        prompts=tuple(
            PromptEvent(
                index=p["index"],
                timestamp=rfc3339_to_us(p["ts"]),
                text=p["text"],
                source=PromptSource(p.get("source", "user")),
            )
            for p in data.get("prompts", [])
        ),
        reasoning=tuple(
            ReasoningStep(
                index=r["index"],
                timestamp=rfc3339_to_us(r["ts"]),
                prompt_index=r["prompt_index"],
                text=r["text"],
            )
            for r in data.get("reasoning", [])
        ),
        tool_calls=tuple(
            ToolInvocation(
                index=t["index"],
                timestamp=rfc3339_to_us(t["ts"]),
                prompt_index=t["prompt_index"],
                server_name=t["server_name"],
                tool_name=t["tool_name"],
                arguments=ToolInvocation.args_from_mapping(t.get("arguments", {})),
                result_excerpt=t.get("result_excerpt", ""),
                outcome=ToolOutcome(t.get("outcome", "success")),
                truncated=t.get("truncated", False),
            )
            for t in data.get("tool_calls", [])
        ),
        environment=EnvironmentContext(
            mcp_servers=tuple(
                McpServerInfo(
                    name=s["name"],
                    entry_point=s.get("entry_point", ""),
                    tool_names=tuple(s.get("tool_names", ())),
                )
                for s in env.get("mcp_servers", [])
            ),
            installed_packages=tuple(
                InstalledPackage(
                    ecosystem=PackageEcosystem(p["ecosystem"]),
                    name=p["name"],
                    version=p.get("version", ""),
                )
                for p in env.get("installed_packages", [])
            ),
        ),
    )


def session_to_json(session: AgentSession) -> str:
    return json.dumps(session_to_dict(session), sort_keys=True, separators=(",", ":"))


def session_from_json(text: str) -> AgentSession:
    return session_from_dict(json.loads(text))


def verdict_to_dict(verdict: Verdict) -> dict[str, Any]:
    return {
        "session_id": verdict.session_id,
        "decision": verdict.decision.value,
        "tier": verdict.tier.value,
        "technique_ids": list(verdict.technique_ids),
        "signals": [
            {
                "kind": s.kind.value,
                "location": [s.location[0], s.location[1]],
                "excerpt": s.excerpt,
                "rule_id": s.rule_id,
            }
            for s in verdict.signals
        ],
        "evidence": [
            {
                "provider": e.provider,
                "query": e.query,
                "finding": e.finding,
                "supports": e.supports.value,
            }
            for e in verdict.evidence
        ],
        "cost_usd": verdict.cost_usd,
        "latency_s": verdict.latency_s,
        "degraded": verdict.degraded,
    }


def verdict_from_dict(data: Mapping[str, Any]) -> Verdict:
    return Verdict(
        session_id=data["session_id"],
        decision=Decision(data["decision"]),
        tier=VerdictTier(data["tier"]),
        technique_ids=tuple(data.get("technique_ids", ())),
        signals=tuple(
            TriageSignal(
                kind=SignalKind(s["kind"]),
                location=(s["location"][0], int(s["location"][1])),
                excerpt=s.get("excerpt", ""),
                rule_id=s.get("rule_id", ""),
            )
            for s in data.get("signals", ())
        ),
        evidence=tuple(
            EvidenceItem(
                provider=e["provider"],
                query=e.get("query", ""),
                finding=e.get("finding", ""),
                supports=EvidenceSupport(e.get("supports", "neutral")),
            )
            for e in data.get("evidence", ())
        ),
        cost_usd=float(data.get("cost_usd", 0.0)),
        latency_s=float(data.get("latency_s", 0.0)),
        degraded=bool(data.get("degraded", False)),
    )


# ---------------------------------------------------------------------------
# Convenience transforms
# ---------------------------------------------------------------------------

def map_session_text(session: AgentSession, fn) -> AgentSession:
    """Apply ``fn`` to every free-text field, preserving structure.

    Used by the sensor's redaction pass: prompt text, reasoning text, tool
    argument values, and result excerpts all run through ``fn``.
    """
    prompts = tuple(replace(p, text=fn(p.text)) for p in session.prompts)
    reasoning = tuple(replace(r, text=fn(r.text)) for r in session.reasoning)
    tool_calls = tuple(
        replace(
            t,
            arguments=tuple((k, fn(v)) for k, v in t.arguments),
            result_excerpt=fn(t.result_excerpt),
        )
        for t in session.tool_calls
    )
    return replace(session, prompts=prompts, reasoning=reasoning, tool_calls=tool_calls)


def session_event_count(session: AgentSession) -> int:
    return len(session.prompts) + len(session.reasoning) + len(session.tool_calls)


def resolve_location(session: AgentSession, location: tuple[str, int]) -> bool:
    name, idx = location
    lists = {
        "prompts": session.prompts,
        "reasoning": session.reasoning,
        "tool_calls": session.tool_calls,
    }
    events: Iterable[Any] = lists.get(name, ())
    return 0 <= idx < len(tuple(events))
