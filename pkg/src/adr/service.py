"""Alert service core: durable ingestion, detection, labeling, stats.

The store is an embedded directory layout with atomic writes (temp file +
rename) and a queue of pending sessions:

    store/
      sessions/<session_id>.json    archived session (ingest is idempotent)
      queue/<session_id>.json       pending-detection marker
      verdicts/<session_id>.json    detection outcome (benign ones too)
      alerts/<alert_id>.json        alerts with label history

Processing writes the verdict (and alert) before removing the queue
marker, so a crash anywhere between ingest and process is recovered by
draining the queue on startup; alert ids derive from session ids, so a
reprocessed session can never create a second alert.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .detector import Detector
from .model import (
    AgentSession,
    AnalystLabel,
    Decision,
    EvidenceSupport,
    LabelValue,
    SignalKind,
    Verdict,
    session_from_dict,
    session_to_dict,
    validate_session,
    verdict_from_dict,
    verdict_to_dict,
)

SEVERITIES = ("low", "medium", "high", "critical")
DEFAULT_RETENTION_DAYS = 396  # thirteen months


class AlertNotFound(KeyError):
    pass


def severity_for(verdict: Verdict) -> str:
    """Map verdict contents to alert severity.

    Credential-category evidence is always critical; policy violations are
    high; a technique match alone is medium; degraded-confidence verdicts
    rank low.
    """
    if any(s.kind is SignalKind.CREDENTIAL_TOUCH for s in verdict.signals):
        return "critical"
    if any(
        e.provider == "policy" and e.supports is EvidenceSupport.MALICIOUS
        for e in verdict.evidence
    ):
        return "high"
    if verdict.technique_ids:
        return "medium"
    return "low"


@dataclass(frozen=True)
class Alert:
    alert_id: str
    session_id: str
    verdict: Verdict
    severity: str
    state: str  # open | labeled
    created_at: int  # epoch microseconds
    label: Optional[AnalystLabel] = None
    label_history: tuple[AnalystLabel, ...] = ()


def alert_to_dict(alert: Alert) -> dict:
    def label_dict(label: AnalystLabel) -> dict:
        return {
            "alert_id": label.alert_id,
            "label": label.label.value,
            "analyst_id": label.analyst_id,
            "note": label.note,
            "labeled_at": label.labeled_at,
        }

    return {
        "alert_id": alert.alert_id,
        "session_id": alert.session_id,
        "verdict": verdict_to_dict(alert.verdict),
        "severity": alert.severity,
        "state": alert.state,
        "created_at": alert.created_at,
        "label": label_dict(alert.label) if alert.label else None,
        "label_history": [label_dict(l) for l in alert.label_history],
    }


def alert_from_dict(data: dict) -> Alert:
    def parse_label(raw: dict) -> AnalystLabel:
        return AnalystLabel(
            alert_id=raw["alert_id"],
            label=LabelValue(raw["label"]),
            analyst_id=raw.get("analyst_id", ""),
            note=raw.get("note", ""),
            labeled_at=int(raw.get("labeled_at", 0)),
        )

    return Alert(
        alert_id=data["alert_id"],
        session_id=data["session_id"],
        verdict=verdict_from_dict(data["verdict"]),
        severity=data["severity"],
        state=data["state"],
        created_at=int(data["created_at"]),
        label=parse_label(data["label"]) if data.get("label") else None,
        label_history=tuple(parse_label(raw) for raw in data.get("label_history", ())),
    )


@dataclass
class IngestReceipt:
    accepted: int = 0
    duplicates: int = 0
    invalid: list = field(default_factory=list)  # [{session_id, reason}]


def _atomic_write(path: Path, payload: str) -> None:
    tmp = path.with_name(f".{path.name}.{uuid.uuid4().hex}.tmp")
    tmp.write_text(payload, "utf-8")
    os.replace(tmp, path)


def _now_us() -> int:
    return int(time.time() * 1_000_000)


class AlertService:
    """Durable pipeline front: ingest, process, label, aggregate."""

    def __init__(self, store_dir: str | Path, detector: Detector):
        self.root = Path(store_dir)
        self.detector = detector
        self._lock = threading.RLock()
        for sub in ("sessions", "queue", "verdicts", "alerts"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    # -- paths ------------------------------------------------------------

    def _session_path(self, session_id: str) -> Path:
        return self.root / "sessions" / f"{session_id}.json"

    def _queue_path(self, session_id: str) -> Path:
        return self.root / "queue" / f"{session_id}.json"

    def _verdict_path(self, session_id: str) -> Path:
        return self.root / "verdicts" / f"{session_id}.json"

    def _alert_path(self, alert_id: str) -> Path:
        return self.root / "alerts" / f"{alert_id}.json"

    @staticmethod
    def alert_id_for(session_id: str) -> str:
        return f"alert-{session_id}"

    # -- ingestion ----------------------------------------------------------

    def ingest(self, sessions: Sequence[AgentSession]) -> IngestReceipt:
        """Accept new sessions into the queue; duplicates acknowledged."""
        receipt = IngestReceipt()
        with self._lock:
            for session in sessions:
                violations = validate_session(session)
                if violations:
                    receipt.invalid.append(
                        {"session_id": session.session_id, "reason": "; ".join(violations)}
                    )
                    continue
                if self._session_path(session.session_id).exists():
                    receipt.duplicates += 1
                    continue
                payload = json.dumps(session_to_dict(session), sort_keys=True)
                _atomic_write(self._session_path(session.session_id), payload)
                _atomic_write(self._queue_path(session.session_id), payload)
                receipt.accepted += 1
        return receipt

    def ingest_dicts(self, payload: Sequence[dict]) -> IngestReceipt:
        receipt = IngestReceipt()
        sessions: list[AgentSession] = []
        for item in payload:
            try:
                sessions.append(session_from_dict(item))
            except Exception as exc:
                receipt.invalid.append(
                    {"session_id": str(item.get("session_id", "?")), "reason": f"undecodable: {exc}"}
                )
        inner = self.ingest(sessions)
        receipt.accepted = inner.accepted
        receipt.duplicates = inner.duplicates
        receipt.invalid.extend(inner.invalid)
        return receipt

    # -- processing -----------------------------------------------------------

    def pending(self) -> list[str]:
        return sorted(p.stem for p in (self.root / "queue").glob("*.json"))

    def process_session(self, session_id: str) -> Optional[Alert]:
        """Detect one queued session; terminal state is alert or archive."""
        with self._lock:
            queue_path = self._queue_path(session_id)
            verdict_path = self._verdict_path(session_id)
            if verdict_path.exists():
                # processed before the queue marker was removed: finish up
                queue_path.unlink(missing_ok=True)
                alert_path = self._alert_path(self.alert_id_for(session_id))
                if alert_path.exists():
                    return alert_from_dict(json.loads(alert_path.read_text("utf-8")))
                return None
            session = session_from_dict(
                json.loads(self._session_path(session_id).read_text("utf-8"))
            )

        verdict = self.detector.detect(session)

        with self._lock:
            alert: Optional[Alert] = None
            if verdict.decision is Decision.MALICIOUS:
                alert = Alert(
                    alert_id=self.alert_id_for(session_id),
                    session_id=session_id,
                    verdict=verdict,
                    severity=severity_for(verdict),
                    state="open",
                    created_at=_now_us(),
                )
                _atomic_write(
                    self._alert_path(alert.alert_id),
                    json.dumps(alert_to_dict(alert), sort_keys=True),
                )
            _atomic_write(verdict_path, json.dumps(verdict_to_dict(verdict), sort_keys=True))
            self._queue_path(session_id).unlink(missing_ok=True)
            return alert

    def drain(self) -> int:
        """Process every queued session (startup recovery and workers)."""
        count = 0
        for session_id in self.pending():
            self.process_session(session_id)
            count += 1
        return count

    # -- reads ------------------------------------------------------------------

    def get_alert(self, alert_id: str) -> Alert:
        path = self._alert_path(alert_id)
        if not path.exists():
            raise AlertNotFound(alert_id)
        return alert_from_dict(json.loads(path.read_text("utf-8")))

    def get_session(self, session_id: str) -> AgentSession:
        path = self._session_path(session_id)
        if not path.exists():
            raise AlertNotFound(session_id)
        return session_from_dict(json.loads(path.read_text("utf-8")))

    def get_verdict(self, session_id: str) -> Optional[Verdict]:
        path = self._verdict_path(session_id)
        if not path.exists():
            return None
        return verdict_from_dict(json.loads(path.read_text("utf-8")))

    def list_alerts(
        self,
        state: Optional[str] = None,
        severity: Optional[str] = None,
        page: int = 1,
        page_size: int = 50,
    ) -> tuple[list[Alert], int]:
        alerts = [
            alert_from_dict(json.loads(p.read_text("utf-8")))
            for p in sorted((self.root / "alerts").glob("*.json"))
        ]
        if state:
            alerts = [a for a in alerts if a.state == state]
        if severity:
            alerts = [a for a in alerts if a.severity == severity]
        alerts.sort(key=lambda a: (-SEVERITIES.index(a.severity), a.created_at))
        total = len(alerts)
        start = (page - 1) * page_size
        return alerts[start : start + page_size], total

    # -- labeling -----------------------------------------------------------------

    def label_alert(self, alert_id: str, label: str, analyst_id: str, note: str = "") -> Alert:
        """Attach or supersede an analyst label; history is kept."""
        with self._lock:
            alert = self.get_alert(alert_id)
            new_label = AnalystLabel(
                alert_id=alert_id,
                label=LabelValue(label),
                analyst_id=analyst_id,
                note=note,
                labeled_at=_now_us(),
            )
            updated = Alert(
                alert_id=alert.alert_id,
                session_id=alert.session_id,
                verdict=alert.verdict,
                severity=alert.severity,
                state="labeled",
                created_at=alert.created_at,
                label=new_label,
                label_history=alert.label_history + (new_label,),
            )
            _atomic_write(
                self._alert_path(alert_id), json.dumps(alert_to_dict(updated), sort_keys=True)
            )
            return updated

    # -- stats ---------------------------------------------------------------------

    def stats(self, window: str = "all") -> dict:
        cutoff = 0
        if window != "all":
            unit = window[-1]
            amount = int(window[:-1])
            seconds = amount * {"h": 3600, "d": 86400, "w": 604800}[unit]
            cutoff = _now_us() - seconds * 1_000_000

        alerts, _ = self.list_alerts(page_size=10_000_000)
        alerts = [a for a in alerts if a.created_at >= cutoff]
        labeled = [a for a in alerts if a.state == "labeled" and a.label is not None]
        distribution = {value.value: 0 for value in LabelValue}
        for alert in labeled:
            distribution[alert.label.label.value] += 1
        if labeled:
            distribution = {k: v / len(labeled) for k, v in distribution.items()}
        else:
            distribution = {k: 0.0 for k in distribution}

        verdict_files = list((self.root / "verdicts").glob("*.json"))
        tier1 = 0
        for path in verdict_files:
            if json.loads(path.read_text("utf-8")).get("tier") == "tier1_resolved":
                tier1 += 1
        processed = len(verdict_files)
        return {
            "window": window,
            "processed_sessions": processed,
            "alerts_total": len(alerts),
            "alerts_open": sum(1 for a in alerts if a.state == "open"),
            "alerts_labeled": len(labeled),
            "label_distribution": distribution,
            "severity_counts": {
                severity: sum(1 for a in alerts if a.severity == severity)
                for severity in SEVERITIES
            },
            "tier1_resolved_share": tier1 / processed if processed else 0.0,
            "queue_depth": len(self.pending()),
        }

    # -- retention -------------------------------------------------------------------

    def purge_expired(self, retention_days: int = DEFAULT_RETENTION_DAYS) -> int:
        """Drop sessions, verdicts, and alerts older than the retention window."""
        cutoff = _now_us() - retention_days * 86400 * 1_000_000
        removed = 0
        with self._lock:
            for alert_path in (self.root / "alerts").glob("*.json"):
                alert = alert_from_dict(json.loads(alert_path.read_text("utf-8")))
                if alert.created_at < cutoff:
                    alert_path.unlink()
                    removed += 1
                    for path in (
                        self._session_path(alert.session_id),
                        self._verdict_path(alert.session_id),
                    ):
                        path.unlink(missing_ok=True)
        return removed


class DetectionWorker:
    """Background thread draining the queue; safe to stop and restart."""

    def __init__(self, service: AlertService, poll_interval_s: float = 0.2):
        self.service = service
        self.poll_interval_s = poll_interval_s
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def start(self) -> None:
        self._stop.clear()
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def _run(self) -> None:
        while not self._stop.is_set():
            if not self.service.drain():
                self._stop.wait(self.poll_interval_s)

    def stop(self) -> None:
        self._stop.set()
        if self._thread:
            self._thread.join(timeout=5)
