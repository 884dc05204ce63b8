"""Acceptance suite: one test per release criterion, at stated tolerances.

Each test prints a visible [PASS]/[FAIL] line (see conftest). Runtime
budgets are asserted inside the tests themselves.
"""

from __future__ import annotations

import json
import random
import time

import pytest
import yaml

from adr.bench import compute_metrics, load_tasks, run_suite
from adr.corpus import build_labeled_corpus
from adr.credguard import HookConfig, HookRequest, handle, load_patterns, scan
from adr.detector import build_default_detector
from adr.explorer import (
    EvolutionConfig,
    FitnessComponents,
    Sandbox,
    evolve,
    fitness,
    generation_bound,
    load_seeds,
    publish_discoveries,
)
from adr.model import Decision, VerdictTier
from adr.registry import load_registry
from adr.reasoning import consult_repo
from adr.sensor import flatten_session, parse_trace_file, reconstruct_sessions, record_to_line
from adr.service import AlertService
from adr.threat_repo import RepoLoadError, load_repo, repo_to_dict
from conftest import flayer_session, make_session

RNG_SEED = 20250810


# --- criterion: metrics oracle ------------------------------------------------

def test_metrics_oracle():
    started = time.perf_counter()
    enterprise = compute_metrics(28, 0, 14, 260)
    assert enterprise.precision == pytest.approx(1.000, abs=1e-3)
    assert enterprise.recall == pytest.approx(0.667, abs=1e-3)
    assert enterprise.f1 == pytest.approx(0.800, abs=1e-3)
    assert enterprise.fpr == pytest.approx(0.000, abs=1e-3)

    injection = compute_metrics(38, 3, 0, 52)
    assert injection.precision == pytest.approx(0.927, abs=1e-3)
    assert injection.recall == pytest.approx(1.000, abs=1e-3)
    assert injection.f1 == pytest.approx(0.962, abs=1e-3)
    assert injection.fpr == pytest.approx(0.055, abs=1e-3)

    prevention = compute_metrics(206, 6, 0, 0)
    assert prevention.precision == pytest.approx(0.972, abs=1e-3)
    assert time.perf_counter() - started < 1.0


# --- criterion: fitness and convergence -----------------------------------------

def test_fitness_and_convergence():
    started = time.perf_counter()

    rng = random.Random(RNG_SEED)
    for _ in range(1000):
        e, s, t = rng.random(), rng.random(), rng.random()
        expected = e * s * t**1.2
        assert fitness(FitnessComponents(e, s, t), 1.2) == pytest.approx(expected, abs=1e-9)

    # configs violating the contraction constraint are rejected at load
    for rho, mu in ((0.5, 3), (0.34, 3), (1.0 / 2, 2), (0.99, 2)):
        with pytest.raises(ValueError):
            EvolutionConfig(rho=rho, mu=mu, population_init=8)

    sandbox = Sandbox.from_files(build_default_detector())
    seeds = load_seeds()
    for i in range(50):
        mu = rng.randint(1, 4)
        rho = rng.uniform(0.1, min(0.9 / mu, 0.7))
        config = EvolutionConfig(
            rho=rho,
            mu=mu,
            population_init=rng.randint(4, 32),
            convergence_threshold=rng.randint(1, 4),
            rng_seed=rng.randint(0, 10_000),
        )
        result = evolve(seeds, config, sandbox)
        bound = generation_bound(
            config.population_init, config.convergence_threshold, config.rho, config.mu
        )
        assert result.converged, (i, config)
        assert result.generations_run <= bound, (i, config, result.generations_run, bound)

    assert time.perf_counter() - started < 30.0


# --- criterion: closed loop --------------------------------------------------------

def test_closed_loop(repo_store):
    started = time.perf_counter()
    detector = build_default_detector(repo_source=repo_store.snapshot)
    sandbox = Sandbox.from_files(detector)
    config = EvolutionConfig(rho=0.25, mu=3, population_init=32, rng_seed=RNG_SEED)
    result = evolve(load_seeds(), config, sandbox)
    assert len(result.discoveries) >= 1

    published = publish_discoveries(result.discoveries, repo_store)
    assert published.published >= 1

    for discovery in result.discoveries:
        session = sandbox.synthesize_session(discovery.candidate)
        verdict = detector.detect(session)
        assert verdict.decision is Decision.MALICIOUS, discovery.candidate.candidate_id
    assert time.perf_counter() - started < 120.0


# --- criterion: pipeline precision and recall at desk scale --------------------------

def test_pipeline_precision_recall():
    started = time.perf_counter()
    tasks = load_tasks()
    registry = load_registry()
    repo = load_repo()
    detector = build_default_detector()
    result = run_suite(tasks, registry, detector, repo)

    metrics = result.metrics
    assert metrics.fp == 0
    assert metrics.recall >= 0.75

    malicious = [o for o in result.outcomes if o.label == "malicious"]
    assert malicious and all(
        o.verdict.tier is not VerdictTier.TIER1_RESOLVED for o in malicious
    ), "Tier 1 must escalate every malicious task"

    resolved = sum(
        1 for o in result.outcomes if o.verdict.tier is VerdictTier.TIER1_RESOLVED
    )
    share = resolved / len(result.outcomes)
    assert 0.20 <= share <= 0.70
    assert time.perf_counter() - started < 60.0


# --- criterion: credential hook ------------------------------------------------------

def test_credential_hook():
    patterns = load_patterns()
    config = HookConfig(mode="redact", patterns=patterns)
    corpus = build_labeled_corpus()
    benign = [c for c in corpus if not c.is_planted]
    planted = [c for c in corpus if c.is_planted]
    assert len(planted) >= 200
    assert len(benign) >= 2000

    false_positives = 0
    flagged_planted = 0
    for item in benign:
        if scan(item.text, patterns):
            false_positives += 1
    missed = []
    for item in planted:
        findings = scan(item.text, patterns)
        if findings:
            flagged_planted += 1
        if not any(f.category == item.planted_category for f in findings):
            missed.append(item)
    assert not missed, f"{len(missed)} planted credentials not found by category"
    precision = flagged_planted / (flagged_planted + false_positives)
    assert precision >= 0.97, f"precision {precision:.4f}"

    # redaction completeness over every planted item
    for item in planted[:50]:
        response = handle(HookRequest("pre_prompt", "acc", item.text), config)
        assert response.decision == "modify"
        leftover = scan(response.redacted_prompt, patterns)
        assert [f for f in leftover if f.category != "high_entropy_token"] == []

    # interactive-path latency, including a 32 kB prompt
    big_prompt = ("review this log line please " * 1200)[:32_768]
    for prompt in [big_prompt] + [c.text for c in corpus[:100]]:
        started = time.perf_counter()
        handle(HookRequest("pre_prompt", "acc", prompt), config)
        assert (time.perf_counter() - started) < 0.050


# --- criterion: sensor round trip ------------------------------------------------------

def _fixture_sessions(count=100):
    rng = random.Random(RNG_SEED)
    sessions = []
    for i in range(count):
        prompts = tuple(f"prompt {i}.{j} {rng.random():.4f}" for j in range(rng.randint(1, 3)))
        tools = tuple(
            ("files", "read_file", {"path": f"notes/f{j}.md"}, f"body {j}")
            for j in range(rng.randint(0, 3))
        )
        reasoning = tuple(f"step {j}" for j in range(rng.randint(0, 2)))
        sessions.append(
            make_session(
                session_id=f"fix-{i:03d}", prompts=prompts, tools=tools, reasoning=reasoning
            )
        )
    return sessions


def test_sensor_round_trip(tmp_path):
    sessions = _fixture_sessions(100)
    started = time.perf_counter()

    trace = tmp_path / "fixture.ndjson"
    records = [record for session in sessions for record in flatten_session(session)]
    trace.write_text("".join(record_to_line(r) + "\n" for r in records), "utf-8")

    parsed, skipped = parse_trace_file(trace)
    assert skipped == 0
    rebuilt = reconstruct_sessions(parsed)
    assert rebuilt == sorted(sessions, key=lambda s: s.session_id)

    rng = random.Random(1)
    shuffled = parsed[:]
    rng.shuffle(shuffled)
    shuffled = [
        type(r)(r.record_type, r.session_id, r.timestamp, r.payload, i)
        for i, r in enumerate(shuffled)
    ]
    assert reconstruct_sessions(shuffled) == rebuilt

    assert time.perf_counter() - started < 1.0


# --- criterion: threat repo ---------------------------------------------------------------

def test_threat_repo(tmp_path, repo_store):
    repo = load_repo()
    assert repo.technique_count() == 17
    assert len(repo.tactics) == 5

    bad_id = tmp_path / "bad_id.yaml"
    doc = repo_to_dict(repo)
    doc["threat_framework"]["tactics"]["permission_abuse"]["techniques"][0]["id"] = "T-1"
    bad_id.write_text(yaml.safe_dump(doc))
    with pytest.raises(RepoLoadError) as bad_err:
        load_repo(bad_id)
    assert any("bad id pattern" in v for v in bad_err.value.violations)

    dup_id = tmp_path / "dup_id.yaml"
    doc = repo_to_dict(repo)
    doc["threat_framework"]["tactics"]["permission_abuse"]["techniques"][0]["id"] = "ADR.T0002"
    dup_id.write_text(yaml.safe_dump(doc))
    with pytest.raises(RepoLoadError) as dup_err:
        load_repo(dup_id)
    assert any("duplicate id" in v for v in dup_err.value.violations)

    # publish -> consult visible through the live snapshot, no restart
    session = make_session(
        session_id="repo-loop",
        prompts=("baseline drift scan",),
        tools=(("config_manager", "update_config",
                {"name": "canary-widget", "content": "enable beacon relay"}, "updated"),),
    )
    assert consult_repo(session, repo_store.snapshot()) == []
    repo_store.publish(
        "ADR.T0014",
        "Malicious: Monitor update_config writes that enable beacon relay on canary-widget.",
        "EAS",
        who="explorer",
        source="explorer",
    )
    matches = consult_repo(session, repo_store.snapshot())
    assert any(m.technique_id == "ADR.T0014" and m.tag == "EAS" for m in matches)


# --- criterion: service durability -----------------------------------------------------------

def test_service_durability(tmp_path, detector):
    batch = [
        make_session(
            session_id=f"dur-{i}",
            prompts=(f"What does job {i} do?",),
            tools=(("search", "query_docs", {"query": f"job {i}"}, "1 match"),),
        )
        for i in range(9)
    ] + [flayer_session("dur-attack")]

    service = AlertService(tmp_path / "store", detector)
    receipt = service.ingest(batch)
    assert receipt.accepted == 10
    del service  # killed between ingest and process

    restarted = AlertService(tmp_path / "store", detector)
    restarted.drain()

    terminal = 0
    for session in batch:
        verdict = restarted.get_verdict(session.session_id)
        assert verdict is not None, session.session_id
        terminal += 1
    assert terminal == 10
    _, total = restarted.list_alerts()
    assert total == 1  # exactly one alert, zero duplicates
    assert restarted.pending() == []
