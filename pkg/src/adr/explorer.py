"""Offline evolutionary red-teaming.

Attack candidates are genomes: a prompt template, an ordered tool chain,
and parameters. The sandbox replays a candidate's chain against the mock
registry, synthesizes the resulting session, and scores three components:
execution depth (fraction of stages that ran), naturalness (one minus the
Tier-1 rule-hit density of the synthesized session), and impact (the best
effective stage weight reached, where exfiltration only counts once
sensitive material was acquired and shell execution only counts for risky
commands). Fitness is depth x naturalness x impact^alpha.

Each generation keeps the top ceil(rho*N) candidates by fitness and
replaces the population with their mu mutations each; rho*mu < 1 keeps
the population contracting. Candidates that score above the publish
threshold while the full detector still says benign are discoveries and
can be published to the threat repository as EAS guidance, closing the
loop: the published line makes the same session detectable.
"""

from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass, replace
from importlib.resources import files
from pathlib import Path
from typing import Optional, Sequence

import click
import yaml

from .detector import Detector, build_default_detector
from .model import (
    AgentSession,
    Decision,
    EnvironmentContext,
    McpServerInfo,
    PromptEvent,
    PromptSource,
    ReasoningStep,
    ToolInvocation,
    ToolOutcome,
    Verdict,
    rfc3339_to_us,
    session_event_count,
)
from .registry import Registry, load_registry
from .threat_repo import DuplicateGuidance, RepoStore
from .triage import apply_rules

DEFAULT_PUBLISH_THRESHOLD = 0.5


# ---------------------------------------------------------------------------
# Genome and fitness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitnessComponents:
    epsilon: float  # execution depth
    sigma: float    # semantic naturalness
    tau: float      # impact

    def __post_init__(self) -> None:
        for name in ("epsilon", "sigma", "tau"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be within [0, 1], got {value}")


def fitness(components: FitnessComponents, alpha: float) -> float:
    """Depth x naturalness x impact^alpha (0^positive is 0, no singularity)."""
    return components.epsilon * components.sigma * components.tau**alpha


@dataclass(frozen=True)
class AttackCandidate:
    candidate_id: str
    technique_id: str
    prompt_template: str
    tool_chain: tuple[str, ...]
    parameters: tuple[tuple[str, str], ...]
    generation: int = 0
    parent_id: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.tool_chain:
            raise ValueError("tool_chain must be non-empty")
        if self.generation == 0 and self.parent_id is not None:
            raise ValueError("generation 0 candidates have no parent")

    def parameters_dict(self) -> dict[str, str]:
        return dict(self.parameters)

    def fingerprint(self) -> str:
        return json.dumps(
            {
                "template": self.prompt_template,
                "chain": list(self.tool_chain),
                "parameters": sorted(self.parameters),
            },
            sort_keys=True,
        )


def _params(mapping: dict) -> tuple[tuple[str, str], ...]:
    return tuple(sorted((str(k), str(v)) for k, v in mapping.items()))


@dataclass
class EvolutionConfig:
    rho: float                      # survival rate
    mu: int                         # mutations per survivor
    population_init: int
    alpha: float = 1.2
    max_generations: int = 50
    convergence_threshold: int = 1
    rng_seed: int = 0
    publish_threshold: float = DEFAULT_PUBLISH_THRESHOLD

    def __post_init__(self) -> None:
        if not 0.0 < self.rho < 1.0:
            raise ValueError("ρ must be within (0, 1)")
        if self.mu < 1:
            raise ValueError("μ must be a positive integer")
        if self.rho * self.mu >= 1.0:
            raise ValueError(f"ρ × μ must be < 1.0 (got {self.rho * self.mu:.3f})")
        if self.alpha <= 0:
            raise ValueError("α must be positive")
        if self.population_init < 1:
            raise ValueError("population_init must be positive")


def load_evolution_config(path: str | Path) -> EvolutionConfig:
    doc = yaml.safe_load(Path(path).read_text("utf-8")) or {}
    return EvolutionConfig(
        rho=float(doc["rho"]),
        mu=int(doc["mu"]),
        population_init=int(doc["population_init"]),
        alpha=float(doc.get("alpha", 1.2)),
        max_generations=int(doc.get("max_generations", 50)),
        convergence_threshold=int(doc.get("convergence_threshold", 1)),
        rng_seed=int(doc.get("rng_seed", 0)),
        publish_threshold=float(doc.get("publish_threshold", DEFAULT_PUBLISH_THRESHOLD)),
    )


# ---------------------------------------------------------------------------
# Sandbox
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StageDef:
    name: str
    server: str
    kind: str  # read | acquire | transform | exfiltrate | execute
    impact: float
    args: tuple[tuple[str, str], ...]
    always_sensitive: bool = False
    risky_arg: str = ""
    risky_pattern: Optional[re.Pattern] = None


class _Defaulting(dict):
    def __missing__(self, key: str) -> str:
        return "unset"


class Sandbox:
    """Isolated replay environment over the mock registry."""

    def __init__(
        self,
        stages: dict[str, StageDef],
        registry: Registry,
        detector: Detector,
        sensitive_pattern: re.Pattern,
        mutation_banks: dict[str, list[str]],
        phrase_bank: list[str],
        base_timestamp_us: int,
    ):
        self.stages = stages
        self.registry = registry
        self.detector = detector
        self.sensitive_pattern = sensitive_pattern
        self.mutation_banks = mutation_banks
        self.phrase_bank = phrase_bank
        self.base_timestamp_us = base_timestamp_us

    @classmethod
    def from_files(
        cls,
        detector: Detector,
        sandbox_path: Optional[str | Path] = None,
        registry: Optional[Registry] = None,
    ) -> "Sandbox":
        """Load fixtures; a directory may hold sandbox.yaml and registry.yaml."""
        if sandbox_path is None:
            raw = files("adr").joinpath("data/sandbox.yaml").read_text("utf-8")
        else:
            path = Path(sandbox_path)
            if path.is_dir():
                if registry is None and (path / "registry.yaml").exists():
                    registry = load_registry(path / "registry.yaml")
                path = path / "sandbox.yaml"
            raw = path.read_text("utf-8")
        doc = yaml.safe_load(raw) or {}
        stages: dict[str, StageDef] = {}
        for name, body in (doc.get("stages") or {}).items():
            risky = body.get("risky_when") or {}
            stages[name] = StageDef(
                name=name,
                server=body["server"],
                kind=body.get("kind", "read"),
                impact=float(body.get("impact", 0.0)),
                args=tuple((str(k), str(v)) for k, v in (body.get("args") or {}).items()),
                always_sensitive=bool(body.get("always_sensitive", False)),
                risky_arg=risky.get("arg", ""),
                risky_pattern=re.compile(risky["matches"]) if risky else None,
            )
        return cls(
            stages=stages,
            registry=registry or load_registry(),
            detector=detector,
            sensitive_pattern=re.compile(doc["sensitive_argument_pattern"]),
            mutation_banks={k: list(v) for k, v in (doc.get("mutation_banks") or {}).items()},
            phrase_bank=list(doc.get("phrase_bank") or []),
            base_timestamp_us=rfc3339_to_us(doc.get("base_timestamp", "2025-06-01T00:00:00Z")),
        )

    def _render_args(self, stage: StageDef, candidate: AttackCandidate) -> dict[str, str]:
        params = _Defaulting(candidate.parameters_dict())
        return {k: v.format_map(params) for k, v in stage.args}

    def synthesize_session(self, candidate: AttackCandidate) -> AgentSession:
        """Build the session the candidate's chain would leave behind."""
        params = _Defaulting(candidate.parameters_dict())
        prompt_text = candidate.prompt_template.format_map(params)
        ts = self.base_timestamp_us
        step_us = 1_000_000

        prompts = [PromptEvent(index=0, timestamp=ts, text=prompt_text)]
        reasoning: list[ReasoningStep] = []
        tool_calls: list[ToolInvocation] = []
        servers: dict[str, McpServerInfo] = {}

        for stage_name in candidate.tool_chain:
            stage = self.stages.get(stage_name)
            if stage is None:
                continue
            arguments = self._render_args(stage, candidate)
            behavior = self.registry.resolve_call(stage.server, stage_name, arguments)
            ts += step_us
            reasoning.append(
                ReasoningStep(
                    index=len(reasoning),
                    timestamp=ts,
                    prompt_index=len(prompts) - 1,
                    text=f"use {stage.server}.{stage_name} for this step",
                )
            )
            ts += step_us
            result = behavior.result.format_map(_Defaulting(arguments))
            tool_calls.append(
                ToolInvocation(
                    index=len(tool_calls),
                    timestamp=ts,
                    prompt_index=len(prompts) - 1,
                    server_name=stage.server,
                    tool_name=stage_name,
                    arguments=ToolInvocation.args_from_mapping(arguments),
                    result_excerpt=result,
                    outcome=ToolOutcome(behavior.outcome),
                )
            )
            if behavior.injects_prompt:
                ts += step_us
                prompts.append(
                    PromptEvent(
                        index=len(prompts),
                        timestamp=ts,
                        text=behavior.injects_prompt,
                        source=PromptSource.INJECTED_DATA,
                    )
                )
            entry = self.registry.server(stage.server)
            if stage.server not in servers:
                servers[stage.server] = McpServerInfo(
                    name=stage.server,
                    entry_point=entry.entry_point if entry else "",
                    tool_names=tuple(t.tool_name for t in entry.tools) if entry else (),
                )

        return AgentSession(
            session_id=f"sandbox-{candidate.candidate_id}",
            host_id="sandbox",
            started_at=self.base_timestamp_us,
            ended_at=ts,
            prompts=tuple(prompts),
            reasoning=tuple(reasoning),
            tool_calls=tuple(tool_calls),
            environment=EnvironmentContext(mcp_servers=tuple(servers.values())),
        )

    def run_chain(self, candidate: AttackCandidate) -> tuple[float, float, list[str]]:
        """Replay stages; returns (epsilon, tau, execution log)."""
        log: list[str] = []
        successes = 0
        sensitive_held = False
        tau = 0.0
        for stage_name in candidate.tool_chain:
            stage = self.stages.get(stage_name)
            if stage is None:
                log.append(f"{stage_name}: unknown stage, failed")
                continue
            arguments = self._render_args(stage, candidate)
            behavior = self.registry.resolve_call(stage.server, stage_name, arguments)
            if behavior.outcome != "success":
                log.append(f"{stage_name}: failed ({behavior.result})")
                continue
            successes += 1
            effective = stage.impact
            note = ""
            if stage.kind == "acquire":
                sensitive = stage.always_sensitive or any(
                    self.sensitive_pattern.search(v) for v in arguments.values()
                )
                if sensitive:
                    sensitive_held = True
                    note = " (sensitive acquired)"
            elif stage.kind == "exfiltrate":
                effective = stage.impact * (1.0 if sensitive_held else 0.05)
            elif stage.kind == "execute":
                risky = bool(
                    stage.risky_pattern
                    and stage.risky_pattern.search(arguments.get(stage.risky_arg, ""))
                )
                effective = stage.impact if risky else 0.05
            tau = max(tau, effective)
            log.append(f"{stage_name}: success, impact {effective:.2f}{note}")
        epsilon = successes / len(candidate.tool_chain)
        return epsilon, min(tau, 1.0), log


@dataclass(frozen=True)
class EvalResult:
    components: FitnessComponents
    fitness: float
    detector_verdict: Verdict
    execution_log: tuple[str, ...]


def evaluate(candidate: AttackCandidate, sandbox: Sandbox, alpha: float = 1.2) -> EvalResult:
    """Replay, score components, and run the full two-tier detector."""
    epsilon, tau, log = sandbox.run_chain(candidate)
    session = sandbox.synthesize_session(candidate)

    total_events = session_event_count(session)
    hits = {s.location for s in apply_rules(session, sandbox.detector.rules)}
    density = len(hits) / total_events if total_events else 0.0
    sigma = min(max(1.0 - density, 0.0), 1.0)

    components = FitnessComponents(epsilon=epsilon, sigma=sigma, tau=tau)
    verdict = sandbox.detector.detect(session)
    return EvalResult(
        components=components,
        fitness=fitness(components, alpha),
        detector_verdict=verdict,
        execution_log=tuple(log),
    )


# ---------------------------------------------------------------------------
# Mutation
# ---------------------------------------------------------------------------

_GENERIC_BANK = ["archived report", "sync payload", "weekly summary"]


def _param_perturb(candidate: AttackCandidate, rng: random.Random, banks: dict) -> AttackCandidate:
    params = candidate.parameters_dict()
    if not params:
        key = "content"
        params[key] = rng.choice(banks.get(key, _GENERIC_BANK))
        return replace(candidate, parameters=_params(params))
    key = rng.choice(sorted(params))
    bank = [v for v in banks.get(key, _GENERIC_BANK) if v != params[key]]
    if bank:
        params[key] = rng.choice(bank)
    else:
        params[key] = f"{params[key]}-v{rng.randint(2, 9)}"
    return replace(candidate, parameters=_params(params))


def _paraphrase(candidate: AttackCandidate, rng: random.Random, phrase_bank: Sequence[str]) -> AttackCandidate:
    options = [p for p in phrase_bank if p != candidate.prompt_template]
    if not options:
        return replace(candidate, prompt_template=candidate.prompt_template + " please")
    return replace(candidate, prompt_template=rng.choice(options))


def _chain_splice(
    candidate: AttackCandidate,
    rng: random.Random,
    stage_names: Sequence[str],
    banks: dict,
) -> AttackCandidate:
    chain = list(candidate.tool_chain)
    op = rng.choice(("insert", "remove", "swap"))
    if op == "remove" and len(chain) <= 1:
        # chain must stay non-empty: fall back to a parameter perturbation
        return _param_perturb(candidate, rng, banks)
    if op == "insert" and stage_names:
        chain.insert(rng.randint(0, len(chain)), rng.choice(sorted(stage_names)))
    elif op == "remove":
        chain.pop(rng.randrange(len(chain)))
    elif op == "swap" and len(chain) >= 2:
        i = rng.randrange(len(chain) - 1)
        chain[i], chain[i + 1] = chain[i + 1], chain[i]
    else:
        return _param_perturb(candidate, rng, banks)
    return replace(candidate, tool_chain=tuple(chain))


def _cross_graft(
    candidate: AttackCandidate,
    rng: random.Random,
    seed_pool: Sequence[AttackCandidate],
    banks: dict,
) -> AttackCandidate:
    donors = [s for s in seed_pool if s.candidate_id != candidate.candidate_id and s.tool_chain]
    if not donors:
        return _param_perturb(candidate, rng, banks)
    donor = rng.choice(sorted(donors, key=lambda c: c.candidate_id))
    stage = rng.choice(donor.tool_chain)
    chain = list(candidate.tool_chain)
    chain.insert(rng.randint(0, len(chain)), stage)
    merged = donor.parameters_dict() | candidate.parameters_dict()
    return replace(candidate, tool_chain=tuple(chain), parameters=_params(merged))


def mutate(
    candidate: AttackCandidate,
    rng: random.Random,
    mu: int,
    *,
    seed_pool: Sequence[AttackCandidate] = (),
    banks: Optional[dict] = None,
    phrase_bank: Sequence[str] = (),
    stage_names: Sequence[str] = (),
) -> list[AttackCandidate]:
    """Exactly mu offspring, one operator each, applied in rotation."""
    banks = banks or {}
    offspring: list[AttackCandidate] = []
    operators = ("param_perturb", "paraphrase", "chain_splice", "cross_graft")
    for i in range(mu):
        op = operators[i % len(operators)]
        if op == "param_perturb":
            child = _param_perturb(candidate, rng, banks)
        elif op == "paraphrase":
            child = _paraphrase(candidate, rng, phrase_bank)
        elif op == "chain_splice":
            child = _chain_splice(candidate, rng, stage_names, banks)
        else:
            child = _cross_graft(candidate, rng, seed_pool, banks)
        offspring.append(
            replace(
                child,
                candidate_id=f"{candidate.candidate_id}/{i}",
                generation=candidate.generation + 1,
                parent_id=candidate.candidate_id,
            )
        )
    return offspring


# ---------------------------------------------------------------------------
# Evolution loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Discovery:
    candidate: AttackCandidate
    components: FitnessComponents
    fitness: float
    verdict: Verdict


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    population: int
    best_fitness: float
    mean_fitness: float
    discoveries_total: int


@dataclass
class EvolveResult:
    discoveries: list[Discovery]
    generations_run: int
    converged: bool
    stop_reason: str
    history: list[GenerationRecord]


def generation_bound(population_init: int, threshold: int, rho: float, mu: int) -> int:
    """Analytic cap on generations implied by the contraction rate."""
    ratio = rho * mu
    if population_init <= threshold:
        return 2
    return math.ceil(math.log(population_init / threshold) / -math.log(ratio)) + 2


def evolve(
    seeds: Sequence[AttackCandidate],
    config: EvolutionConfig,
    sandbox: Sandbox,
) -> EvolveResult:
    """Run the contraction loop until the population converges."""
    if not seeds:
        raise ValueError("seed set must be non-empty")

    rng = random.Random(config.rng_seed)

    population: list[AttackCandidate] = list(seeds[: config.population_init])
    filler = 0
    while len(population) < config.population_init:
        base = seeds[filler % len(seeds)]
        variant = _param_perturb(base, rng, sandbox.mutation_banks)
        population.append(
            replace(variant, candidate_id=f"{base.candidate_id}+{filler}", parent_id=None)
        )
        filler += 1

    history: list[GenerationRecord] = []
    discoveries: dict[str, Discovery] = {}
    stop_reason = "max_generations"
    converged = False
    generations_run = 0

    for generation in range(config.max_generations):
        scored: list[tuple[AttackCandidate, EvalResult]] = [
            (c, evaluate(c, sandbox, config.alpha)) for c in population
        ]
        generations_run += 1

        for candidate, result in scored:
            if (
                result.fitness > config.publish_threshold
                and result.detector_verdict.decision is Decision.BENIGN
            ):
                key = candidate.fingerprint()
                if key not in discoveries:
                    discoveries[key] = Discovery(
                        candidate=candidate,
                        components=result.components,
                        fitness=result.fitness,
                        verdict=result.detector_verdict,
                    )

        fitnesses = [r.fitness for _, r in scored]
        history.append(
            GenerationRecord(
                generation=generation,
                population=len(population),
                best_fitness=max(fitnesses),
                mean_fitness=sum(fitnesses) / len(fitnesses),
                discoveries_total=len(discoveries),
            )
        )

        if len(population) <= config.convergence_threshold:
            stop_reason = "population_at_threshold"
            converged = True
            break

        ranked = sorted(scored, key=lambda item: (-item[1].fitness, item[0].candidate_id))
        survivor_count = math.ceil(config.rho * len(population))
        survivors = [candidate for candidate, _ in ranked[:survivor_count]]

        next_population: list[AttackCandidate] = []
        for survivor in survivors:
            next_population.extend(
                mutate(
                    survivor,
                    rng,
                    config.mu,
                    seed_pool=seeds,
                    banks=sandbox.mutation_banks,
                    phrase_bank=sandbox.phrase_bank,
                    stage_names=tuple(sandbox.stages),
                )
            )

        if len(next_population) >= len(population):
            # ceilings stalled the contraction: nothing left to shrink
            stop_reason = "population_stalled"
            converged = True
            break
        population = next_population

    return EvolveResult(
        discoveries=sorted(discoveries.values(), key=lambda d: -d.fitness),
        generations_run=generations_run,
        converged=converged,
        stop_reason=stop_reason,
        history=history,
    )


# ---------------------------------------------------------------------------
# Publication
# ---------------------------------------------------------------------------

def guidance_text_for(discovery: Discovery) -> str:
    chain = ", ".join(discovery.candidate.tool_chain)
    params = "; ".join(f"{k}={v}" for k, v in discovery.candidate.parameters)
    return (
        f"Malicious: Monitor for agent chains invoking {chain} "
        f"with parameters {params} (observed impact {discovery.components.tau:.2f})."
    )


@dataclass
class PublishResult:
    published: int = 0
    skipped: int = 0


def publish_discoveries(discoveries: Sequence[Discovery], repo_store: RepoStore) -> PublishResult:
    """One EAS guidance line per discovery; exact duplicates are skipped."""
    result = PublishResult()
    for discovery in discoveries:
        try:
            repo_store.publish(
                discovery.candidate.technique_id,
                guidance_text_for(discovery),
                "EAS",
                who="explorer",
                source="explorer",
            )
            result.published += 1
        except DuplicateGuidance:
            result.skipped += 1
    return result


# ---------------------------------------------------------------------------
# Seeds and CLI
# ---------------------------------------------------------------------------

def load_seeds(path: Optional[str | Path] = None) -> list[AttackCandidate]:
    if path is None:
        raw = files("adr").joinpath("data/seeds.yaml").read_text("utf-8")
        docs = [yaml.safe_load(raw)]
    else:
        p = Path(path)
        sources = sorted(p.glob("*.yaml")) if p.is_dir() else [p]
        docs = [yaml.safe_load(s.read_text("utf-8")) for s in sources]
    seeds: list[AttackCandidate] = []
    for doc in docs:
        for entry in (doc or {}).get("seeds", []):
            seeds.append(
                AttackCandidate(
                    candidate_id=entry["candidate_id"],
                    technique_id=entry["technique_id"],
                    prompt_template=entry["prompt_template"],
                    tool_chain=tuple(entry["tool_chain"]),
                    parameters=_params(entry.get("parameters", {})),
                )
            )
    return seeds


def write_run_outputs(result: EvolveResult, out_dir: str | Path) -> None:
    """History as newline-delimited records plus a fitness figure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "history.ndjson", "w", encoding="utf-8") as fh:
        for record in result.history:
            fh.write(
                json.dumps(
                    {
                        "generation": record.generation,
                        "population": record.population,
                        "best_fitness": round(record.best_fitness, 6),
                        "mean_fitness": round(record.mean_fitness, 6),
                        "discoveries_total": record.discoveries_total,
                    },
                    sort_keys=True,
                )
                + "\n"
            )

    with open(out / "discoveries.ndjson", "w", encoding="utf-8") as fh:
        for d in result.discoveries:
            fh.write(
                json.dumps(
                    {
                        "candidate_id": d.candidate.candidate_id,
                        "technique_id": d.candidate.technique_id,
                        "tool_chain": list(d.candidate.tool_chain),
                        "parameters": dict(d.candidate.parameters),
                        "fitness": round(d.fitness, 6),
                        "epsilon": d.components.epsilon,
                        "sigma": round(d.components.sigma, 6),
                        "tau": d.components.tau,
                    },
                    sort_keys=True,
                )
                + "\n"
            )

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    generations = [r.generation for r in result.history]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    ax1.plot(generations, [r.best_fitness for r in result.history], marker="o", label="best")
    ax1.plot(generations, [r.mean_fitness for r in result.history], marker=".", label="mean")
    ax1.set_xlabel("generation")
    ax1.set_ylabel("fitness")
    ax1.legend()
    ax2.plot(generations, [r.population for r in result.history], marker="s", color="tab:gray")
    ax2.set_xlabel("generation")
    ax2.set_ylabel("population")
    fig.tight_layout()
    fig.savefig(out / "fitness_history.png", dpi=120)
    plt.close(fig)


@click.group("adr-explore")
def main() -> None:
    """Offline evolutionary red-teaming."""


@main.command("run")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--seeds", "seeds_path", type=click.Path(exists=True), default=None)
@click.option("--repo", "repo_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--sandbox", "sandbox_path", type=click.Path(exists=True), default=None)
@click.option("--publish/--no-publish", default=True, help="Publish discoveries to the repo.")
def run_command(
    config_path: str,
    seeds_path: Optional[str],
    repo_path: str,
    out_dir: str,
    sandbox_path: Optional[str],
    publish: bool,
) -> None:
    config = load_evolution_config(config_path)
    repo_store = RepoStore(repo_path)
    detector = build_default_detector(repo_source=repo_store.snapshot)
    sandbox = Sandbox.from_files(detector, sandbox_path=sandbox_path)
    seeds = load_seeds(seeds_path)

    result = evolve(seeds, config, sandbox)
    write_run_outputs(result, out_dir)
    click.echo(
        f"generations={result.generations_run} converged={result.converged} "
        f"discoveries={len(result.discoveries)}"
    )
    if publish and result.discoveries:
        published = publish_discoveries(result.discoveries, repo_store)
        click.echo(f"published={published.published} skipped={published.skipped}")


if __name__ == "__main__":
    main()
