"""Threat-intelligence repository: load, validate, query, publish.

The repository is a YAML store of techniques grouped under five tactic
keys. Every technique carries detection-guidance lines tagged by
provenance: EAS for lines discovered by the offline explorer, CURATED for
lines added by analysts. Tags are structured fields on disk (not trailing
comments) so they survive round-trips.

Publishing appends a guidance line, writes the store atomically, and
appends an audit record beside it. Readers hold immutable snapshots; a
reload simply swaps the snapshot.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import yaml

TECHNIQUE_ID_PATTERN = re.compile(r"^ADR\.T\d{4}$")

TACTIC_KEYS = (
    "initial_access_and_execution",
    "permission_abuse",
    "security_control_bypass",
    "reasoning_and_data_manipulation",
    "operational_impact",
)

VALID_TAGS = ("EAS", "CURATED")


class RepoLoadError(ValueError):
    """Repository file failed validation; carries every violation found."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("; ".join(violations))


class UnknownTechnique(KeyError):
    pass


class DuplicateGuidance(ValueError):
    pass


@dataclass(frozen=True)
class GuidanceLine:
    text: str
    tag: str  # EAS | CURATED


@dataclass(frozen=True)
class ThreatTechnique:
    id: str
    name: str
    detection_guidance: tuple[GuidanceLine, ...] = ()


@dataclass(frozen=True)
class ThreatRepository:
    tactics: tuple[tuple[str, tuple[ThreatTechnique, ...]], ...]

    def techniques(self) -> Iterable[ThreatTechnique]:
        for _, techniques in self.tactics:
            yield from techniques

    def technique_by_id(self, technique_id: str) -> Optional[ThreatTechnique]:
        for technique in self.techniques():
            if technique.id == technique_id:
                return technique
        return None

    def tactic_of(self, technique_id: str) -> Optional[str]:
        for tactic_key, techniques in self.tactics:
            if any(t.id == technique_id for t in techniques):
                return tactic_key
        return None

    def technique_count(self) -> int:
        return sum(1 for _ in self.techniques())


def default_repo_path() -> Path:
    from importlib.resources import files

    return Path(str(files("adr").joinpath("data/threat_repo.yaml")))


def load_repo(path: Optional[str | Path] = None) -> ThreatRepository:
    """Parse and validate the repository; all violations reported at once.

    Defaults to the bundled seed when no path is given.
    """
    if path is None:
        path = default_repo_path()
    doc = yaml.safe_load(Path(path).read_text("utf-8")) or {}
    violations: list[str] = []
    tactics: list[tuple[str, tuple[ThreatTechnique, ...]]] = []
    seen_ids: set[str] = set()

    framework = doc.get("threat_framework") or {}
    for tactic_key, body in (framework.get("tactics") or {}).items():
        if tactic_key not in TACTIC_KEYS:
            violations.append(f"unknown tactic '{tactic_key}'")
        techniques: list[ThreatTechnique] = []
        for entry in (body or {}).get("techniques", []):
            technique_id = entry.get("id", "")
            if not TECHNIQUE_ID_PATTERN.match(technique_id or ""):
                violations.append(f"bad id pattern '{technique_id}'")
            if technique_id in seen_ids:
                violations.append(f"duplicate id '{technique_id}'")
            seen_ids.add(technique_id)
            guidance: list[GuidanceLine] = []
            for line in entry.get("detection_guidance", []):
                if isinstance(line, str):
                    violations.append(
                        f"{technique_id}: guidance line missing explicit tag"
                    )
                    continue
                text = line.get("text", "")
                tag = line.get("tag", "")
                if not text:
                    violations.append(f"{technique_id}: empty guidance text")
                if tag not in VALID_TAGS:
                    violations.append(f"{technique_id}: missing or invalid tag '{tag}'")
                guidance.append(GuidanceLine(text=text, tag=tag))
            techniques.append(
                ThreatTechnique(
                    id=technique_id,
                    name=entry.get("name", ""),
                    detection_guidance=tuple(guidance),
                )
            )
        tactics.append((tactic_key, tuple(techniques)))

    if violations:
        raise RepoLoadError(violations)
    return ThreatRepository(tactics=tuple(tactics))


def repo_to_dict(repo: ThreatRepository) -> dict:
    return {
        "threat_framework": {
            "tactics": {
                tactic_key: {
                    "techniques": [
                        {
                            "id": t.id,
                            "name": t.name,
                            "detection_guidance": [
                                {"text": g.text, "tag": g.tag} for g in t.detection_guidance
                            ],
                        }
                        for t in techniques
                    ]
                }
                for tactic_key, techniques in repo.tactics
            }
        }
    }


def save_repo(repo: ThreatRepository, path: str | Path) -> None:
    """Atomic write: temp file in the same directory, then rename."""
    target = Path(path)
    tmp = target.with_name(target.name + ".tmp")
    tmp.write_text(yaml.safe_dump(repo_to_dict(repo), sort_keys=False), "utf-8")
    os.replace(tmp, target)


def publish_guidance(
    repo: ThreatRepository, technique_id: str, text: str, tag: str
) -> ThreatRepository:
    """Pure update: returns a new repository with the guidance appended."""
    if tag not in VALID_TAGS:
        raise ValueError(f"invalid tag {tag!r}")
    if not text:
        raise ValueError("guidance text must be non-empty")
    technique = repo.technique_by_id(technique_id)
    if technique is None:
        raise UnknownTechnique(technique_id)
    if any(g.text == text for g in technique.detection_guidance):
        raise DuplicateGuidance(text)

    new_tactics = []
    for tactic_key, techniques in repo.tactics:
        new_techniques = tuple(
            ThreatTechnique(
                id=t.id,
                name=t.name,
                detection_guidance=t.detection_guidance + (GuidanceLine(text, tag),),
            )
            if t.id == technique_id
            else t
            for t in techniques
        )
        new_tactics.append((tactic_key, new_techniques))
    return ThreatRepository(tactics=tuple(new_tactics))


class RepoStore:
    """Single-writer store with immutable snapshots for readers.

    ``publish`` validates, persists atomically, appends an audit record,
    and swaps the in-memory snapshot so readers see the new line without a
    restart.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._snapshot = load_repo(self.path)

    @property
    def audit_path(self) -> Path:
        return self.path.with_name(self.path.name + ".audit.ndjson")

    def snapshot(self) -> ThreatRepository:
        return self._snapshot

    def reload(self) -> ThreatRepository:
        with self._lock:
            self._snapshot = load_repo(self.path)
            return self._snapshot

    def publish(
        self, technique_id: str, text: str, tag: str, *, who: str, source: str
    ) -> dict:
        """Append one guidance line; returns the audit record."""
        with self._lock:
            updated = publish_guidance(self._snapshot, technique_id, text, tag)
            save_repo(updated, self.path)
            record = {
                "who": who,
                "when": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
                "source": source,
                "technique_id": technique_id,
                "tag": tag,
                "text": text,
            }
            with open(self.audit_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
            self._snapshot = updated
            return record
