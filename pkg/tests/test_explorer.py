from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adr.detector import build_default_detector
from adr.explorer import (
    AttackCandidate,
    Discovery,
    EvolutionConfig,
    FitnessComponents,
    Sandbox,
    evaluate,
    evolve,
    fitness,
    generation_bound,
    guidance_text_for,
    load_evolution_config,
    load_seeds,
    mutate,
    publish_discoveries,
)
from adr.model import Decision

SEEDS = load_seeds()


@pytest.fixture(scope="module")
def sandbox():
    return Sandbox.from_files(build_default_detector())


def _candidate(chain=("read_file",), params=(("target_path", "docs/readme.md"),), cid="c-1"):
    return AttackCandidate(
        candidate_id=cid,
        technique_id="ADR.T0002",
        prompt_template="Tidy up the workspace and snapshot important settings",
        tool_chain=tuple(chain),
        parameters=tuple(params),
    )


# --- fitness ------------------------------------------------------------------

def test_fitness_zero_depth():
    assert fitness(FitnessComponents(0.0, 0.9, 0.8), 1.2) == 0.0


def test_fitness_identity():
    assert fitness(FitnessComponents(1.0, 1.0, 1.0), 1.2) == 1.0


def test_fitness_direct_arithmetic():
    value = fitness(FitnessComponents(0.5, 0.8, 0.5), 1.2)
    assert value == pytest.approx(0.4 * 0.5**1.2, abs=1e-9)
    assert value == pytest.approx(0.1741, abs=1e-4)


def test_fitness_zero_impact_no_singularity():
    assert fitness(FitnessComponents(1.0, 1.0, 0.0), 1.2) == 0.0


def test_components_validated():
    with pytest.raises(ValueError):
        FitnessComponents(1.2, 0.5, 0.5)


@given(
    e1=st.floats(0, 1), e2=st.floats(0, 1),
    s=st.floats(0, 1), t=st.floats(0, 1),
)
@settings(max_examples=200, deadline=None)
def test_fitness_monotone_in_depth(e1, e2, s, t):
    lo, hi = sorted((e1, e2))
    assert fitness(FitnessComponents(lo, s, t), 1.2) <= fitness(
        FitnessComponents(hi, s, t), 1.2
    )
    assert 0.0 <= fitness(FitnessComponents(hi, s, t), 1.2) <= 1.0


# --- config -------------------------------------------------------------------

def test_config_rejects_rho_mu_at_least_one():
    with pytest.raises(ValueError, match="ρ × μ"):
        EvolutionConfig(rho=0.5, mu=3, population_init=10)


def test_config_accepts_contracting():
    config = EvolutionConfig(rho=0.25, mu=3, population_init=10)
    assert config.alpha == 1.2


def test_config_file_load_rejects(tmp_path):
    path = tmp_path / "evo.yaml"
    path.write_text("rho: 0.5\nmu: 3\npopulation_init: 16\n")
    with pytest.raises(ValueError, match="ρ × μ"):
        load_evolution_config(path)


# --- evaluation -----------------------------------------------------------------

def test_full_chain_executes(sandbox):
    result = evaluate(SEEDS[0], sandbox)  # fetch_ticket, read_file(.aws), publish_gist
    assert result.components.epsilon == 1.0
    assert result.components.tau == 1.0
    assert len(result.execution_log) == 3


def test_blocked_chain_partial_depth(sandbox):
    blocked = _candidate(
        chain=("fetch_ticket", "read_file", "read_file", "read_file"),
        params=(("ticket_id", "OPS-1"), ("target_path", "/etc/shadow")),
    )
    result = evaluate(blocked, sandbox)
    assert result.components.epsilon == pytest.approx(0.25)


def test_noop_chain_zero_impact(sandbox):
    noop = AttackCandidate(
        candidate_id="noop",
        technique_id="ADR.T0002",
        prompt_template="Prepare the weekly ops digest from recent activity",
        tool_chain=("list_dir", "query_docs"),
        parameters=(),
    )
    result = evaluate(noop, sandbox)
    assert result.components.epsilon == 1.0
    assert result.components.tau == 0.0
    assert result.fitness == 0.0


def test_exfiltration_without_sensitive_data_scores_low(sandbox):
    gist_only = _candidate(chain=("publish_gist",), params=(("content", "hello"),))
    result = evaluate(gist_only, sandbox)
    assert result.components.tau == pytest.approx(0.05)


def test_naturalness_reflects_rule_hits(sandbox):
    stealthy = _candidate(chain=("query_docs",), params=(("query", "docs"),))
    noisy = _candidate(
        chain=("read_file", "publish_gist"),
        params=(("target_path", "~/.aws/credentials"), ("content", "x")),
    )
    assert evaluate(stealthy, sandbox).components.sigma == 1.0
    assert evaluate(noisy, sandbox).components.sigma < 1.0


# --- mutation ------------------------------------------------------------------

def _mutate_kwargs(sandbox):
    return dict(
        seed_pool=SEEDS,
        banks=sandbox.mutation_banks,
        phrase_bank=sandbox.phrase_bank,
        stage_names=tuple(sandbox.stages),
    )


def test_mutate_produces_mu_offspring_with_rotated_operators(sandbox):
    parent = SEEDS[0]
    offspring = mutate(parent, random.Random(5), 4, **_mutate_kwargs(sandbox))
    assert len(offspring) == 4
    assert all(c.generation == parent.generation + 1 for c in offspring)
    assert all(c.parent_id == parent.candidate_id for c in offspring)
    # operator rotation: param change, paraphrase, splice, graft
    assert offspring[0].parameters != parent.parameters
    assert offspring[1].prompt_template != parent.prompt_template
    assert offspring[2].tool_chain != parent.tool_chain or offspring[2].parameters != parent.parameters
    assert offspring[3].tool_chain != parent.tool_chain or offspring[3].parameters != parent.parameters


def test_mutate_single_stage_chain_never_empties(sandbox):
    parent = _candidate(chain=("read_file",))
    for seed in range(40):
        for child in mutate(parent, random.Random(seed), 4, **_mutate_kwargs(sandbox)):
            assert child.tool_chain


def test_mutate_deterministic(sandbox):
    parent = SEEDS[0]
    a = mutate(parent, random.Random(99), 4, **_mutate_kwargs(sandbox))
    b = mutate(parent, random.Random(99), 4, **_mutate_kwargs(sandbox))
    assert a == b


def test_generation_zero_has_no_parent():
    with pytest.raises(ValueError):
        AttackCandidate(
            candidate_id="x", technique_id="t", prompt_template="p",
            tool_chain=("a",), parameters=(), generation=0, parent_id="boom",
        )


# --- evolution -------------------------------------------------------------------

def test_population_sizes_follow_ceiling_recurrence(sandbox):
    config = EvolutionConfig(rho=0.2, mu=4, population_init=100, rng_seed=3)
    result = evolve(SEEDS, config, sandbox)
    sizes = [h.population for h in result.history]
    # hand recurrence: N' = ceil(0.2 N) * 4 until the ceiling stalls at 16
    assert sizes == [100, 80, 64, 52, 44, 36, 32, 28, 24, 20, 16]
    assert result.converged and result.stop_reason == "population_stalled"


def test_evolve_reaches_threshold(sandbox):
    config = EvolutionConfig(rho=0.2, mu=1, population_init=12, rng_seed=3,
                             convergence_threshold=4)
    result = evolve(SEEDS, config, sandbox)
    assert result.history[-1].population <= 4
    assert result.converged and result.stop_reason == "population_at_threshold"


def test_generation_bound_holds(sandbox):
    rng = random.Random(2)
    for _ in range(8):
        mu = rng.randint(1, 4)
        rho = rng.uniform(0.1, min(0.9 / mu, 0.7))
        config = EvolutionConfig(
            rho=rho, mu=mu, population_init=rng.randint(4, 40),
            rng_seed=rng.randint(0, 999), convergence_threshold=rng.randint(1, 4),
        )
        result = evolve(SEEDS, config, sandbox)
        bound = generation_bound(
            config.population_init, config.convergence_threshold, config.rho, config.mu
        )
        assert result.converged
        assert result.generations_run <= bound, (config, result.generations_run, bound)


def test_empty_seed_set_rejected(sandbox):
    with pytest.raises(ValueError):
        evolve([], EvolutionConfig(rho=0.25, mu=3, population_init=8), sandbox)


def test_all_zero_fitness_still_converges(sandbox):
    noop = AttackCandidate(
        candidate_id="noop", technique_id="ADR.T0002",
        prompt_template="Prepare the weekly ops digest from recent activity",
        tool_chain=("query_docs",), parameters=(("query", "a"),),
    )
    config = EvolutionConfig(rho=0.3, mu=2, population_init=6, rng_seed=0)
    result = evolve([noop], config, sandbox)
    assert result.converged
    assert result.discoveries == []


def test_evolution_reproducible(sandbox):
    config = EvolutionConfig(rho=0.25, mu=3, population_init=16, rng_seed=7)
    a = evolve(SEEDS, config, sandbox)
    b = evolve(SEEDS, config, sandbox)
    assert a.history == b.history
    assert [d.candidate for d in a.discoveries] == [d.candidate for d in b.discoveries]


# --- publication ----------------------------------------------------------------

def test_publish_discoveries_and_duplicates(repo_store, sandbox):
    seed_eval = evaluate(SEEDS[0], sandbox)
    assert seed_eval.detector_verdict.decision is Decision.BENIGN
    discovery = Discovery(
        candidate=SEEDS[0],
        components=seed_eval.components,
        fitness=seed_eval.fitness,
        verdict=seed_eval.detector_verdict,
    )
    result = publish_discoveries([discovery], repo_store)
    assert result.published == 1 and result.skipped == 0
    again = publish_discoveries([discovery], repo_store)
    assert again.published == 0 and again.skipped == 1
    line = guidance_text_for(discovery)
    technique = repo_store.snapshot().technique_by_id(SEEDS[0].technique_id)
    assert any(g.text == line and g.tag == "EAS" for g in technique.detection_guidance)


def test_closed_loop_published_discovery_becomes_detectable(repo_store):
    detector = build_default_detector(repo_source=repo_store.snapshot)
    sandbox = Sandbox.from_files(detector)
    config = EvolutionConfig(rho=0.25, mu=3, population_init=16, rng_seed=11)
    result = evolve(SEEDS, config, sandbox)
    assert result.discoveries, "expected at least one detector-evading discovery"
    publish_discoveries(result.discoveries, repo_store)
    for discovery in result.discoveries:
        session = sandbox.synthesize_session(discovery.candidate)
        verdict = detector.detect(session)
        assert verdict.decision is Decision.MALICIOUS, discovery.candidate.candidate_id


def test_run_outputs_written(tmp_path, sandbox):
    from adr.explorer import write_run_outputs

    config = EvolutionConfig(rho=0.25, mu=3, population_init=8, rng_seed=5)
    result = evolve(SEEDS, config, sandbox)
    write_run_outputs(result, tmp_path)
    assert (tmp_path / "history.ndjson").exists()
    assert (tmp_path / "discoveries.ndjson").exists()
    assert (tmp_path / "fitness_history.png").exists()
    lines = (tmp_path / "history.ndjson").read_text().splitlines()
    assert len(lines) == len(result.history)


def test_sandbox_fixture_directory(tmp_path):
    import shutil
    from importlib.resources import files as _files

    fixture_dir = tmp_path / "sandbox-fixtures"
    fixture_dir.mkdir()
    base = _files("adr").joinpath("data")
    shutil.copy(str(base.joinpath("sandbox.yaml")), fixture_dir / "sandbox.yaml")
    shutil.copy(str(base.joinpath("registry.yaml")), fixture_dir / "registry.yaml")
    sandbox = Sandbox.from_files(build_default_detector(), sandbox_path=fixture_dir)
    assert "read_file" in sandbox.stages
    result = evaluate(SEEDS[0], sandbox)
    assert result.components.epsilon == 1.0
