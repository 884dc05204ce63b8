"""Enterprise context providers queried by Tier-2.

Three read-only, deterministic sources over immutable snapshots:

* ``SourceIndex``: what an MCP tool actually does — exact stored source
  text plus declared permissions, prebuilt from a manifest mapping
  (server, tool) to a file.
* threat-framework lookup over the loaded repository.
* ``PolicyStore``: organizational rules whose enforcement conditions are
  machine-checkable predicates over session events (a small declarative
  condition language: field path, comparator, value, plus an "A before B"
  sequence form). Malformed predicates fail at load time, never at query
  time.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib.resources import files
from pathlib import Path
from typing import Any, Optional
from urllib.parse import urlsplit

import yaml

from .model import AgentSession, ToolInvocation
from .threat_repo import ThreatRepository

# Tokens that occur in every digest or guidance line and carry no signal.
STOPWORDS = frozenset(
    """a an and are as at be but by during for from has have if in into is it
    its like of on or that the their then this to under via was were when
    which while with without followed unusual patterns such using monitor
    malicious session host prompts tools reasoning content body text""".split()
)

_TOKEN_RE = re.compile(r"[a-z0-9_]+")


def significant_tokens(text: str) -> set[str]:
    return {
        token
        for token in _TOKEN_RE.findall(text.lower())
        if len(token) >= 3 and token not in STOPWORDS
    }


# ---------------------------------------------------------------------------
# Source index
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SourceLookup:
    found: bool
    source_text: str = ""
    declared_permissions: tuple[str, ...] = ()

    @property
    def not_indexed(self) -> bool:
        return not self.found


NOT_INDEXED = SourceLookup(found=False)


class SourceIndexError(ValueError):
    pass


@dataclass(frozen=True)
class SourceIndex:
    entries: tuple[tuple[tuple[str, str], SourceLookup], ...]

    def lookup(self, server_name: str, tool_name: str) -> SourceLookup:
        for key, value in self.entries:
            if key == (server_name, tool_name):
                return value
        return NOT_INDEXED


def load_source_index(manifest_path: Optional[str | Path] = None) -> SourceIndex:
    """Build the index from a manifest mapping (server, tool) -> source file."""
    if manifest_path is None:
        base = files("adr").joinpath("data")
        raw = base.joinpath("source_index.yaml").read_text("utf-8")
        read_file = lambda rel: base.joinpath(rel).read_text("utf-8")  # noqa: E731
    else:
        manifest = Path(manifest_path)
        base_dir = manifest.parent
        raw = manifest.read_text("utf-8")
        read_file = lambda rel: (base_dir / rel).read_text("utf-8")  # noqa: E731

    doc = yaml.safe_load(raw) or {}
    entries = []
    for item in doc.get("tools", []):
        try:
            key = (item["server"], item["tool"])
            text = read_file(item["path"])
        except (KeyError, OSError) as exc:
            raise SourceIndexError(f"bad source index entry {item!r}: {exc}")
        entries.append(
            (
                key,
                SourceLookup(
                    found=True,
                    source_text=text,
                    declared_permissions=tuple(item.get("declared_permissions", ())),
                ),
            )
        )
    return SourceIndex(entries=tuple(entries))


def get_source_code(server_name: str, tool_name: str, index: SourceIndex) -> SourceLookup:
    """Exact stored implementation text, or the distinguished not_indexed."""
    return index.lookup(server_name, tool_name)


# ---------------------------------------------------------------------------
# Threat framework lookup
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TechniqueSummary:
    technique_id: str
    name: str
    match_count: int
    guidance_count: int


def get_threat_framework(query: str, repo: ThreatRepository) -> list[TechniqueSummary]:
    """Keyword lookup over technique names and guidance, best matches first."""
    query_tokens = significant_tokens(query)
    if not query_tokens:
        return []
    summaries: list[TechniqueSummary] = []
    for technique in repo.techniques():
        haystack = technique.name + " " + " ".join(g.text for g in technique.detection_guidance)
        tokens = significant_tokens(haystack)
        count = len(query_tokens & tokens)
        if count:
            summaries.append(
                TechniqueSummary(
                    technique_id=technique.id,
                    name=technique.name,
                    match_count=count,
                    guidance_count=len(technique.detection_guidance),
                )
            )
    summaries.sort(key=lambda s: (-s.match_count, s.technique_id))
    return summaries


# ---------------------------------------------------------------------------
# Policy store and predicate language
# ---------------------------------------------------------------------------

class PolicyLoadError(ValueError):
    pass


_EVENT_FIELDS = {
    "prompt": ("text", "source"),
    "reasoning": ("text",),
    "tool_call": ("server_name", "tool_name", "outcome", "result_excerpt", "arguments"),
}

_OPS = (
    "equals",
    "not_equals",
    "contains",
    "not_contains",
    "matches",
    "not_matches",
    "in",
    "not_in",
    "host_in",
    "not_host_in",
)


@dataclass(frozen=True)
class Clause:
    field_path: str
    op: str
    value: Any
    _regex: Optional[re.Pattern] = None


@dataclass(frozen=True)
class EventPredicate:
    event: str  # prompt | reasoning | tool_call
    where: tuple[Clause, ...]


@dataclass(frozen=True)
class EnforcementCondition:
    condition_id: str
    kind: str  # event | sequence
    event_predicate: Optional[EventPredicate] = None
    first: Optional[EventPredicate] = None
    then: Optional[EventPredicate] = None


@dataclass(frozen=True)
class Policy:
    policy_id: str
    standard: str
    risk_areas: tuple[str, ...] = ()
    affected_roles: tuple[str, ...] = ()
    enforcement_conditions: tuple[EnforcementCondition, ...] = ()


@dataclass(frozen=True)
class PolicyStore:
    policies: tuple[Policy, ...]


@dataclass(frozen=True)
class PolicyViolation:
    policy_id: str
    violated_predicate: str  # condition_id
    event_ref: tuple[str, int]


def _validate_clause(policy_id: str, event: str, raw: dict) -> Clause:
    field_path = raw.get("field", "")
    op = raw.get("op", "")
    value = raw.get("value")
    root = field_path.split(".", 1)[0]
    if event not in _EVENT_FIELDS:
        raise PolicyLoadError(f"{policy_id}: unknown event type '{event}'")
    if root not in _EVENT_FIELDS[event]:
        raise PolicyLoadError(f"{policy_id}: field '{field_path}' not valid for {event} events")
    if root == "arguments" and "." not in field_path:
        raise PolicyLoadError(f"{policy_id}: arguments clause needs a key, e.g. arguments.url")
    if op not in _OPS:
        raise PolicyLoadError(f"{policy_id}: unknown comparator '{op}'")
    regex = None
    if op in ("matches", "not_matches"):
        try:
            regex = re.compile(str(value))
        except re.error as exc:
            raise PolicyLoadError(f"{policy_id}: bad regex in '{field_path}': {exc}")
    if op in ("in", "not_in", "host_in", "not_host_in") and not isinstance(value, list):
        raise PolicyLoadError(f"{policy_id}: comparator '{op}' needs a list value")
    return Clause(field_path=field_path, op=op, value=value, _regex=regex)


def _parse_predicate(policy_id: str, raw: dict) -> EventPredicate:
    event = raw.get("event", "")
    clauses = tuple(_validate_clause(policy_id, event, c) for c in raw.get("where", []))
    if not clauses:
        raise PolicyLoadError(f"{policy_id}: predicate has no where clauses")
    return EventPredicate(event=event, where=clauses)


def load_policy_store(path: Optional[str | Path] = None) -> PolicyStore:
    if path is None:
        raw = files("adr").joinpath("data/policies.yaml").read_text("utf-8")
    else:
        raw = Path(path).read_text("utf-8")
    doc = yaml.safe_load(raw) or {}
    policies: list[Policy] = []
    seen: set[str] = set()
    for entry in doc.get("policies", []):
        policy_id = entry.get("policy_id", "")
        if not policy_id:
            raise PolicyLoadError("policy with missing policy_id")
        if policy_id in seen:
            raise PolicyLoadError(f"duplicate policy_id '{policy_id}'")
        seen.add(policy_id)
        conditions: list[EnforcementCondition] = []
        for raw_cond in entry.get("enforcement_conditions", []):
            condition_id = raw_cond.get("condition_id", "")
            if not condition_id:
                raise PolicyLoadError(f"{policy_id}: enforcement condition missing condition_id")
            kind = raw_cond.get("kind", "event")
            if kind == "event":
                conditions.append(
                    EnforcementCondition(
                        condition_id=condition_id,
                        kind="event",
                        event_predicate=_parse_predicate(policy_id, raw_cond),
                    )
                )
            elif kind == "sequence":
                conditions.append(
                    EnforcementCondition(
                        condition_id=condition_id,
                        kind="sequence",
                        first=_parse_predicate(policy_id, raw_cond.get("first", {})),
                        then=_parse_predicate(policy_id, raw_cond.get("then", {})),
                    )
                )
            else:
                raise PolicyLoadError(f"{policy_id}: unknown condition kind '{kind}'")
        policies.append(
            Policy(
                policy_id=policy_id,
                standard=entry.get("standard", ""),
                risk_areas=tuple(entry.get("risk_areas", ())),
                affected_roles=tuple(entry.get("affected_roles", ())),
                enforcement_conditions=tuple(conditions),
            )
        )
    return PolicyStore(policies=tuple(policies))


def get_policies(store: PolicyStore) -> list[Policy]:
    return list(store.policies)


def _field_value(event: Any, field_path: str) -> str:
    root, _, rest = field_path.partition(".")
    if root == "arguments":
        assert isinstance(event, ToolInvocation)
        return event.arguments_dict().get(rest, "")
    value = getattr(event, root, "")
    if hasattr(value, "value"):  # enums
        return value.value
    return str(value)


def _clause_holds(event: Any, clause: Clause) -> bool:
    value = _field_value(event, clause.field_path)
    op = clause.op
    if op == "equals":
        return value == clause.value
    if op == "not_equals":
        return value != clause.value
    if op == "contains":
        return str(clause.value) in value
    if op == "not_contains":
        return str(clause.value) not in value
    if op == "matches":
        return bool(clause._regex.search(value))
    if op == "not_matches":
        return not clause._regex.search(value)
    if op == "in":
        return value in clause.value
    if op == "not_in":
        return value not in clause.value
    host = urlsplit(value).hostname or ""
    allowed = any(host == entry or host.endswith("." + entry) for entry in clause.value)
    if op == "host_in":
        return bool(host) and allowed
    # not_host_in: only a resolvable host outside the list is a hit
    return bool(host) and not allowed


def _events_of(session: AgentSession, event_type: str) -> list[tuple[tuple[str, int], Any]]:
    if event_type == "prompt":
        return [(("prompts", p.index), p) for p in session.prompts]
    if event_type == "reasoning":
        return [(("reasoning", r.index), r) for r in session.reasoning]
    return [(("tool_calls", t.index), t) for t in session.tool_calls]


def _predicate_matches(session: AgentSession, predicate: EventPredicate):
    for ref, event in _events_of(session, predicate.event):
        if all(_clause_holds(event, clause) for clause in predicate.where):
            yield ref, event


def assess_policy_violations(session: AgentSession, store: PolicyStore) -> list[PolicyViolation]:
    """Evaluate every enforcement condition against every session event."""
    violations: list[PolicyViolation] = []
    for policy in store.policies:
        for condition in policy.enforcement_conditions:
            if condition.kind == "event":
                for ref, _ in _predicate_matches(session, condition.event_predicate):
                    violations.append(
                        PolicyViolation(
                            policy_id=policy.policy_id,
                            violated_predicate=condition.condition_id,
                            event_ref=ref,
                        )
                    )
            else:  # sequence: first strictly before then (by timestamp)
                firsts = list(_predicate_matches(session, condition.first))
                if not firsts:
                    continue
                first_ts = min(event.timestamp for _, event in firsts)
                for ref, event in _predicate_matches(session, condition.then):
                    if event.timestamp > first_ts:
                        violations.append(
                            PolicyViolation(
                                policy_id=policy.policy_id,
                                violated_predicate=condition.condition_id,
                                event_ref=ref,
                            )
                        )
    return violations
