"""Tier-1 screening: cheap, high-recall, conservative.

A data-driven rule table (YAML, shipped under ``data/triage_rules.yaml``)
matches regexes against declared session text fields; an optional
completion backend can add a model flag. Any hit escalates. Only sessions
with no rule hits and no model flag are short-circuited as benign, so
adding rules can only move sessions from resolve_benign to escalate.

Rules that target the synthetic ``tool_sequence`` field see the ordered
tool-call lines joined with newlines, which lets a single DOTALL regex
express risky combinations ("credential read, then network send").
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from importlib.resources import files
from pathlib import Path
from typing import Optional, Protocol, Sequence

import httpx
import yaml

from .model import AgentSession, SignalKind, TriageSignal

logger = logging.getLogger(__name__)

DIGEST_MAX_CHARS = 8192
_TRUNCATION_MARKER = "…[truncated]…"
_DIGEST_HEAD = 4000

RULE_FIELDS = ("prompt", "reasoning", "tool_name", "tool_argument", "result_excerpt", "tool_sequence")


class RuleLoadError(ValueError):
    pass


@dataclass(frozen=True)
class TriageRule:
    rule_id: str
    kind: SignalKind
    pattern: re.Pattern
    fields: tuple[str, ...]
    description: str = ""


@dataclass(frozen=True)
class BackendResult:
    flag: bool
    rationale: str
    cost_usd: float = 0.0
    latency_s: float = 0.0


class CompletionBackend(Protocol):
    name: str

    def classify(self, digest: str) -> BackendResult: ...


class MockCompletionBackend:
    """Deterministic stand-in for a completion model.

    Flags the digest iff it contains one of the configured terms; identical
    input always yields identical output. Cost and latency are synthetic,
    taken from the price table so accounting paths run end to end.
    """

    name = "mock"

    def __init__(
        self,
        flag_terms: Sequence[str] = ("disregard all safeguards", "base64 -d | sh"),
        cost_usd: float = 0.0005,
        latency_s: float = 0.2,
    ):
        self.flag_terms = tuple(t.lower() for t in flag_terms)
        self.cost_usd = cost_usd
        self.latency_s = latency_s

    def classify(self, digest: str) -> BackendResult:
        lowered = digest.lower()
        for term in self.flag_terms:
            if term in lowered:
                return BackendResult(
                    flag=True,
                    rationale=f"matched screening term '{term}'",
                    cost_usd=self.cost_usd,
                    latency_s=self.latency_s,
                )
        return BackendResult(False, "no screening term matched", self.cost_usd, self.latency_s)


class HttpCompletionBackend:
    """POST the digest to a completion endpoint with a fixed prompt template."""

    name = "http"

    def __init__(self, endpoint: str, prompt_template: str, timeout_s: float = 30.0):
        self.endpoint = endpoint
        self.prompt_template = prompt_template
        self.timeout_s = timeout_s

    def classify(self, digest: str) -> BackendResult:
        response = httpx.post(
            self.endpoint,
            json={"prompt": self.prompt_template.format(digest=digest)},
            timeout=self.timeout_s,
        )
        response.raise_for_status()
        body = response.json()
        return BackendResult(
            flag=bool(body.get("flag", False)),
            rationale=str(body.get("rationale", "")),
            cost_usd=float(body.get("cost_usd", 0.0)),
            latency_s=float(body.get("latency_s", 0.0)),
        )


DEFAULT_HTTP_PROMPT_TEMPLATE = (
    # illustrative template; the production wording is not public
    "You screen agent sessions for a security team. Review the session "
    "digest below and answer with JSON {{\"flag\": bool, \"rationale\": str}}. "
    "Flag anything that is not clearly benign.\n\n{digest}"
)


def backend_from_config(doc: Optional[dict]) -> Optional[CompletionBackend]:
    """Build the configured completion backend.

    Config shape: ``triage.backend: mock | http | none`` plus
    ``triage.endpoint`` and optional ``triage.prompt_template`` for http.
    """
    triage_doc = (doc or {}).get("triage", {})
    kind = triage_doc.get("backend", "mock")
    if kind == "none":
        return None
    if kind == "mock":
        return MockCompletionBackend()
    if kind == "http":
        return HttpCompletionBackend(
            endpoint=triage_doc["endpoint"],
            prompt_template=triage_doc.get("prompt_template", DEFAULT_HTTP_PROMPT_TEMPLATE),
            timeout_s=float(triage_doc.get("timeout_s", 30.0)),
        )
    raise ValueError(f"unknown triage backend '{kind}'")


def load_rules(path: Optional[str | Path] = None) -> list[TriageRule]:
    if path is None:
        raw = files("adr").joinpath("data/triage_rules.yaml").read_text("utf-8")
    else:
        raw = Path(path).read_text("utf-8")
    doc = yaml.safe_load(raw) or {}
    rules: list[TriageRule] = []
    seen: set[str] = set()
    for entry in doc.get("rules", []):
        rule_id = entry.get("rule_id", "")
        if not rule_id or rule_id in seen:
            raise RuleLoadError(f"missing or duplicate rule_id {rule_id!r}")
        seen.add(rule_id)
        try:
            pattern = re.compile(entry["pattern"])
        except (re.error, KeyError) as exc:
            raise RuleLoadError(f"rule {rule_id}: bad pattern: {exc}")
        rule_fields = tuple(entry.get("fields", []))
        for name in rule_fields:
            if name not in RULE_FIELDS:
                raise RuleLoadError(f"rule {rule_id}: unknown field {name!r}")
        rules.append(
            TriageRule(
                rule_id=rule_id,
                kind=SignalKind(entry["kind"]),
                pattern=pattern,
                fields=rule_fields,
                description=entry.get("description", ""),
            )
        )
    return rules


# ---------------------------------------------------------------------------
# Digest
# ---------------------------------------------------------------------------

def _tool_line(call) -> str:
    args = ",".join(f"{k}={v}" for k, v in call.arguments)
    excerpt = call.result_excerpt[:80].replace("\n", " ")
    return f"[{call.index}] {call.server_name}.{call.tool_name}({args}) -> {excerpt}"


def tool_sequence_text(session: AgentSession) -> str:
    return "\n".join(_tool_line(c) for c in session.tool_calls)


def build_digest(session: AgentSession) -> str:
    """Deterministic text view of a session, bounded to 8192 characters."""
    parts = [f"session {session.session_id} host {session.host_id}", "prompts:"]
    for p in session.prompts:
        parts.append(f"[{p.index}]({p.source.value}) {p.text}")
    parts.append("tools:")
    for c in session.tool_calls:
        parts.append(_tool_line(c))
    parts.append("reasoning:")
    for r in session.reasoning:
        text = r.text[:200].replace("\n", " ")
        parts.append(f"[{r.index}@p{r.prompt_index}] {text}")
    digest = "\n".join(parts)
    if len(digest) <= DIGEST_MAX_CHARS:
        return digest
    tail = DIGEST_MAX_CHARS - _DIGEST_HEAD - len(_TRUNCATION_MARKER)
    return digest[:_DIGEST_HEAD] + _TRUNCATION_MARKER + digest[-tail:]


# ---------------------------------------------------------------------------
# Screening
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TriageOutcome:
    route: str  # resolve_benign | escalate
    signals: tuple[TriageSignal, ...] = ()
    degraded: bool = False
    model_rationale: str = ""
    cost_usd: float = 0.0
    latency_s: float = 0.0


def _field_texts(session: AgentSession, field_name: str) -> list[tuple[tuple[str, int], str]]:
    if field_name == "prompt":
        return [(("prompts", p.index), p.text) for p in session.prompts]
    if field_name == "reasoning":
        return [(("reasoning", r.index), r.text) for r in session.reasoning]
    if field_name == "tool_name":
        return [
            (("tool_calls", c.index), f"{c.server_name}.{c.tool_name}")
            for c in session.tool_calls
        ]
    if field_name == "tool_argument":
        return [
            (("tool_calls", c.index), " ".join(f"{k}={v}" for k, v in c.arguments))
            for c in session.tool_calls
        ]
    if field_name == "result_excerpt":
        return [(("tool_calls", c.index), c.result_excerpt) for c in session.tool_calls]
    raise ValueError(f"unknown rule field {field_name!r}")


def _sequence_location(session: AgentSession, sequence: str, match: re.Match) -> tuple[str, int]:
    # anchor the signal on the tool call whose line contains the match end
    line_no = sequence.count("\n", 0, match.end())
    idx = min(line_no, max(len(session.tool_calls) - 1, 0))
    return ("tool_calls", idx)


def apply_rules(session: AgentSession, rules: Sequence[TriageRule]) -> list[TriageSignal]:
    signals: list[TriageSignal] = []
    seen: set[tuple[str, tuple[str, int]]] = set()
    sequence = tool_sequence_text(session)
    for rule in rules:
        for field_name in rule.fields:
            if field_name == "tool_sequence":
                match = rule.pattern.search(sequence)
                if match and session.tool_calls:
                    location = _sequence_location(session, sequence, match)
                    key = (rule.rule_id, location)
                    if key not in seen:
                        seen.add(key)
                        signals.append(
                            TriageSignal(
                                kind=rule.kind,
                                location=location,
                                excerpt=match.group(0)[:200],
                                rule_id=rule.rule_id,
                            )
                        )
                continue
            for location, text in _field_texts(session, field_name):
                match = rule.pattern.search(text)
                if not match:
                    continue
                key = (rule.rule_id, location)
                if key in seen:
                    continue
                seen.add(key)
                signals.append(
                    TriageSignal(
                        kind=rule.kind,
                        location=location,
                        excerpt=match.group(0)[:200],
                        rule_id=rule.rule_id,
                    )
                )
    return signals


def triage(
    session: AgentSession,
    rules: Sequence[TriageRule],
    backend: Optional[CompletionBackend] = None,
) -> TriageOutcome:
    """Screen one session; escalate on any rule hit or model flag.

    A backend failure never resolves the session benign: the outcome is
    computed rules-only and marked degraded.
    """
    signals = tuple(apply_rules(session, rules))
    degraded = False
    rationale = ""
    cost = 0.0
    latency = 0.0
    flag = False
    if backend is not None:
        try:
            result = backend.classify(build_digest(session))
            flag = result.flag
            rationale = result.rationale
            cost = result.cost_usd
            latency = result.latency_s
        except Exception as exc:
            logger.warning("triage backend unavailable, proceeding rules-only: %s", exc)
            degraded = True

    if flag:
        if session.prompts:
            anchor = ("prompts", 0)
        elif session.tool_calls:
            anchor = ("tool_calls", 0)
        else:
            anchor = None
        if anchor is not None:
            signals = signals + (
                TriageSignal(
                    kind=SignalKind.MODEL_FLAG,
                    location=anchor,
                    excerpt=rationale[:200],
                    rule_id="model",
                ),
            )

    route = "escalate" if (signals or flag) else "resolve_benign"
    return TriageOutcome(
        route=route,
        signals=signals,
        degraded=degraded,
        model_rationale=rationale,
        cost_usd=cost,
        latency_s=latency,
    )
