"""Two-tier detection pipeline: triage everything, reason about the rest.

Bundles the rule table, completion backends, context providers, and the
threat-repository snapshot behind one ``detect(session)`` call so the
bench harness, the explorer, and the alert service all run the identical
pipeline. The repository is consulted through a callable snapshot source,
so guidance published while the process runs is picked up on the next
detection without a restart.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Union

from .model import AgentSession, Decision, Verdict, VerdictTier
from .providers import load_policy_store, load_source_index
from .reasoning import ProviderSet, execute, plan
from .threat_repo import ThreatRepository, default_repo_path, load_repo
from .triage import CompletionBackend, MockCompletionBackend, TriageRule, load_rules, triage

RepoSource = Union[ThreatRepository, Callable[[], ThreatRepository]]


@dataclass
class Detector:
    rules: Sequence[TriageRule]
    providers: ProviderSet
    repo_source: RepoSource
    triage_backend: Optional[CompletionBackend] = None
    reasoning_backend: Optional[CompletionBackend] = None
    plan_budget: int = 8

    def _repo(self) -> ThreatRepository:
        if callable(self.repo_source):
            return self.repo_source()
        return self.repo_source

    def detect(self, session: AgentSession) -> Verdict:
        outcome = triage(session, self.rules, self.triage_backend)
        if outcome.route == "resolve_benign":
            return Verdict(
                session_id=session.session_id,
                decision=Decision.BENIGN,
                tier=VerdictTier.TIER1_RESOLVED,
                cost_usd=outcome.cost_usd,
                latency_s=outcome.latency_s,
                degraded=outcome.degraded,
            )
        repo = self._repo()
        reasoning_plan = plan(session, outcome.signals, repo, budget=self.plan_budget)
        verdict = execute(
            session,
            reasoning_plan,
            self.providers,
            repo,
            backend=self.reasoning_backend,
            signals=outcome.signals,
        )
        return replace(
            verdict,
            cost_usd=verdict.cost_usd + outcome.cost_usd,
            latency_s=verdict.latency_s + outcome.latency_s,
            degraded=verdict.degraded or outcome.degraded,
        )


def build_default_detector(
    repo_source: Optional[RepoSource] = None,
    *,
    with_triage_backend: bool = True,
    disabled_providers: frozenset = frozenset(),
) -> Detector:
    """Detector wired to the bundled rule table, stores, and seed repo."""
    return Detector(
        rules=load_rules(),
        providers=ProviderSet(
            source_index=load_source_index(),
            policy_store=load_policy_store(),
            disabled=disabled_providers,
        ),
        repo_source=repo_source if repo_source is not None else load_repo(default_repo_path()),
        triage_backend=MockCompletionBackend() if with_triage_backend else None,
    )
