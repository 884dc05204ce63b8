from __future__ import annotations

import json

import pytest
import yaml

from adr.threat_repo import (
    TACTIC_KEYS,
    DuplicateGuidance,
    RepoLoadError,
    RepoStore,
    UnknownTechnique,
    default_repo_path,
    load_repo,
    publish_guidance,
    repo_to_dict,
    save_repo,
)

SEED = load_repo(default_repo_path())


def _write_repo(tmp_path, mutate):
    doc = repo_to_dict(SEED)
    mutate(doc)
    path = tmp_path / "repo.yaml"
    path.write_text(yaml.safe_dump(doc))
    return path


def test_seed_loads_17_techniques_across_5_tactics():
    assert SEED.technique_count() == 17
    assert tuple(k for k, _ in SEED.tactics) == TACTIC_KEYS
    counts = {k: len(ts) for k, ts in SEED.tactics}
    assert counts == {
        "initial_access_and_execution": 6,
        "permission_abuse": 2,
        "security_control_bypass": 3,
        "reasoning_and_data_manipulation": 4,
        "operational_impact": 2,
    }


def test_every_guidance_line_is_tagged():
    for technique in SEED.techniques():
        assert technique.detection_guidance
        for line in technique.detection_guidance:
            assert line.tag in ("EAS", "CURATED")
            assert line.text


def test_bad_id_pattern_rejected(tmp_path):
    def mutate(doc):
        doc["threat_framework"]["tactics"]["permission_abuse"]["techniques"][0]["id"] = "T-1"

    with pytest.raises(RepoLoadError) as err:
        load_repo(_write_repo(tmp_path, mutate))
    assert any("bad id pattern" in v for v in err.value.violations)


def test_duplicate_id_rejected(tmp_path):
    def mutate(doc):
        doc["threat_framework"]["tactics"]["permission_abuse"]["techniques"][0]["id"] = "ADR.T0002"

    with pytest.raises(RepoLoadError) as err:
        load_repo(_write_repo(tmp_path, mutate))
    assert any("duplicate id 'ADR.T0002'" in v for v in err.value.violations)


def test_unknown_tactic_rejected(tmp_path):
    def mutate(doc):
        tactics = doc["threat_framework"]["tactics"]
        tactics["initial_compromise"] = tactics.pop("permission_abuse")

    with pytest.raises(RepoLoadError) as err:
        load_repo(_write_repo(tmp_path, mutate))
    assert any("unknown tactic" in v for v in err.value.violations)


def test_missing_tag_rejected(tmp_path):
    def mutate(doc):
        techniques = doc["threat_framework"]["tactics"]["operational_impact"]["techniques"]
        techniques[0]["detection_guidance"][0].pop("tag")

    with pytest.raises(RepoLoadError) as err:
        load_repo(_write_repo(tmp_path, mutate))
    assert any("invalid tag" in v for v in err.value.violations)


def test_all_violations_reported_at_once(tmp_path):
    def mutate(doc):
        tactics = doc["threat_framework"]["tactics"]
        tactics["permission_abuse"]["techniques"][0]["id"] = "nope"
        tactics["operational_impact"]["techniques"][0]["detection_guidance"][0]["tag"] = "GUESS"

    with pytest.raises(RepoLoadError) as err:
        load_repo(_write_repo(tmp_path, mutate))
    assert len(err.value.violations) >= 2


def test_publish_appends_eas_line():
    updated = publish_guidance(SEED, "ADR.T0001", "Malicious: Monitor new thing.", "EAS")
    technique = updated.technique_by_id("ADR.T0001")
    before = SEED.technique_by_id("ADR.T0001")
    assert len(technique.detection_guidance) == len(before.detection_guidance) + 1
    assert technique.detection_guidance[-1].tag == "EAS"


def test_publish_curated_line():
    updated = publish_guidance(SEED, "ADR.T0002", "Malicious: Monitor analyst case.", "CURATED")
    assert updated.technique_by_id("ADR.T0002").detection_guidance[-1].tag == "CURATED"


def test_publish_unknown_technique():
    with pytest.raises(UnknownTechnique):
        publish_guidance(SEED, "ADR.T9999", "text", "EAS")


def test_publish_duplicate_text_rejected():
    line = SEED.technique_by_id("ADR.T0001").detection_guidance[0].text
    with pytest.raises(DuplicateGuidance):
        publish_guidance(SEED, "ADR.T0001", line, "EAS")


def test_save_load_round_trip(tmp_path):
    path = tmp_path / "repo.yaml"
    save_repo(SEED, path)
    assert load_repo(path) == SEED


def test_repo_store_snapshot_swap_and_audit(tmp_path, repo_store):
    before = repo_store.snapshot()
    record = repo_store.publish(
        "ADR.T0003", "Malicious: Monitor plan rewrites via staging queues.", "EAS",
        who="explorer", source="explorer",
    )
    after = repo_store.snapshot()
    assert after is not before
    assert len(after.technique_by_id("ADR.T0003").detection_guidance) == 2
    # persisted and reload-consistent
    assert load_repo(repo_store.path) == after
    # audit record appended beside the repo file
    lines = repo_store.audit_path.read_text().splitlines()
    assert json.loads(lines[-1])["technique_id"] == "ADR.T0003"
    assert record["source"] == "explorer"


def test_tactic_of():
    assert SEED.tactic_of("ADR.T0007") == "permission_abuse"
    assert SEED.tactic_of("ADR.T9999") is None
