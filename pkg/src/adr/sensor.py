"""Endpoint sensor: parse trace stores, rebuild sessions, forward them.

The canonical trace format is line-delimited JSON, one record per line,
with required keys ``record_type``, ``session_id``, ``ts`` and payload keys
per record type. Adapters for real agent-tool caches implement the same
record stream; see ``TraceAdapter``.

Reconstruction groups records by session, orders events by timestamp
(ties break by file order), binds reasoning and tool records to the most
recent prior prompt, and merges environment snapshots (last snapshot wins
per server name). Forwarding posts batches to the alert service with
retry, exponential backoff, and a local spool for the next run.
"""

from __future__ import annotations

import json
import logging
import os
import time
import uuid
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Optional, Protocol, Sequence

import click
import httpx
import yaml

from . import credguard
from .model import (
    AgentSession,
    EnvironmentContext,
    InstalledPackage,
    McpServerInfo,
    PackageEcosystem,
    PromptEvent,
    PromptSource,
    ReasoningStep,
    ToolInvocation,
    ToolOutcome,
    rfc3339_to_us,
    truncate_excerpt,
    us_to_rfc3339,
)

logger = logging.getLogger(__name__)

RETRY_BASE_S = 1.0
RETRY_CAP_S = 60.0
RETRY_ATTEMPTS = 5


class CorruptTrace(ValueError):
    """More than half of a trace file failed to parse: format drift."""


class RecordType(str, Enum):
    PROMPT = "prompt"
    REASONING = "reasoning"
    TOOL_CALL = "tool_call"
    ENV_SNAPSHOT = "env_snapshot"


_REQUIRED_PAYLOAD = {
    RecordType.PROMPT: ("text",),
    RecordType.REASONING: ("text",),
    RecordType.TOOL_CALL: ("server_name", "tool_name"),
    RecordType.ENV_SNAPSHOT: (),
}


@dataclass(frozen=True)
class TraceRecord:
    record_type: RecordType
    session_id: str
    timestamp: int
    payload: dict
    order: int = 0  # position in the originating file; tie-breaker only


@dataclass
class SensorConfig:
    trace_paths: list[str]
    forward_endpoint: str = "http://127.0.0.1:8787"
    schedule_interval_s: int = 3600
    batch_max: int = 50
    redaction_enabled: bool = True
    spool_dir: str = ".adr-spool"
    auth_token: str = ""

    def __post_init__(self) -> None:
        if self.schedule_interval_s < 60:
            raise ValueError("schedule_interval_s must be at least 60")
        if self.batch_max < 1:
            raise ValueError("batch_max must be positive")


def load_sensor_config(path: str | Path) -> SensorConfig:
    doc = yaml.safe_load(Path(path).read_text("utf-8")) or {}
    return SensorConfig(
        trace_paths=list(doc.get("trace_paths", [])),
        forward_endpoint=doc.get("forward_endpoint", "http://127.0.0.1:8787"),
        schedule_interval_s=int(doc.get("schedule_interval_s", 3600)),
        batch_max=int(doc.get("batch_max", 50)),
        redaction_enabled=bool(doc.get("redaction_enabled", True)),
        spool_dir=doc.get("spool_dir", ".adr-spool"),
        auth_token=doc.get("auth_token", ""),
    )


class TraceAdapter(Protocol):
    """Extension point for real agent-tool stores: path -> record stream."""

    def records(self, path: Path) -> Iterable[TraceRecord]: ...


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _parse_line(line: str, order: int) -> Optional[TraceRecord]:
    try:
        doc = json.loads(line)
        record_type = RecordType(doc["record_type"])
        session_id = doc["session_id"]
        ts = rfc3339_to_us(doc["ts"])
    except (json.JSONDecodeError, KeyError, ValueError, TypeError):
        return None
    if not isinstance(session_id, str) or not session_id:
        return None
    payload = {k: v for k, v in doc.items() if k not in ("record_type", "session_id", "ts")}
    for key in _REQUIRED_PAYLOAD[record_type]:
        if key not in payload:
            return None
    return TraceRecord(
        record_type=record_type,
        session_id=session_id,
        timestamp=ts,
        payload=payload,
        order=order,
    )


def parse_trace_file(path: str | Path) -> tuple[list[TraceRecord], int]:
    """Parse one trace file; returns (records, skipped_line_count).

    Raises OSError when the file cannot be read and CorruptTrace when more
    than half of the non-empty lines are malformed.
    """
    text = Path(path).read_text("utf-8")
    records: list[TraceRecord] = []
    skipped = 0
    total = 0
    for order, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        total += 1
        record = _parse_line(line, order)
        if record is None:
            skipped += 1
            logger.warning("skipping malformed trace line %d in %s", order, path)
        else:
            records.append(record)
    if total and skipped * 2 > total:
        raise CorruptTrace(f"{path}: {skipped}/{total} lines malformed")
    return records, skipped


# ---------------------------------------------------------------------------
# Reconstruction
# ---------------------------------------------------------------------------

def _merge_env(snapshots: Sequence[dict]) -> EnvironmentContext:
    servers: dict[str, McpServerInfo] = {}
    packages: dict[tuple[str, str], InstalledPackage] = {}
    for snap in snapshots:
        for s in snap.get("mcp_servers", []):
            servers[s["name"]] = McpServerInfo(
                name=s["name"],
                entry_point=s.get("entry_point", ""),
                tool_names=tuple(s.get("tool_names", ())),
            )
        for p in snap.get("installed_packages", []):
            pkg = InstalledPackage(
                ecosystem=PackageEcosystem(p.get("ecosystem", "pip")),
                name=p["name"],
                version=p.get("version", ""),
            )
            packages[(pkg.ecosystem.value, pkg.name)] = pkg
    return EnvironmentContext(
        mcp_servers=tuple(servers.values()),
        installed_packages=tuple(packages.values()),
    )


def reconstruct_sessions(records: Sequence[TraceRecord]) -> list[AgentSession]:
    """Correlate a record soup into ordered, prompt-bound sessions."""
    by_session: dict[str, list[TraceRecord]] = {}
    for record in records:
        by_session.setdefault(record.session_id, []).append(record)

    sessions: list[AgentSession] = []
    for session_id in sorted(by_session):
        group = sorted(by_session[session_id], key=lambda r: (r.timestamp, r.order))
        host_id = next(
            (r.payload["host_id"] for r in group if r.payload.get("host_id")), "unknown"
        )

        prompts: list[PromptEvent] = []
        reasoning: list[ReasoningStep] = []
        tool_calls: list[ToolInvocation] = []
        env_snapshots: list[dict] = []
        current_prompt = -1

        for record in group:
            if record.record_type is RecordType.PROMPT:
                current_prompt += 1
                prompts.append(
                    PromptEvent(
                        index=current_prompt,
                        timestamp=record.timestamp,
                        text=record.payload["text"],
                        source=PromptSource(record.payload.get("source", "user")),
                    )
                )
            elif record.record_type is RecordType.REASONING:
                if current_prompt < 0:
                    logger.warning(
                        "session %s: reasoning record at %d precedes any prompt; "
                        "binding to prompt 0",
                        session_id,
                        record.timestamp,
                    )
                reasoning.append(
                    ReasoningStep(
                        index=len(reasoning),
                        timestamp=record.timestamp,
                        prompt_index=max(current_prompt, 0),
                        text=record.payload["text"],
                    )
                )
            elif record.record_type is RecordType.TOOL_CALL:
                if current_prompt < 0:
                    logger.warning(
                        "session %s: tool record at %d precedes any prompt; "
                        "binding to prompt 0",
                        session_id,
                        record.timestamp,
                    )
                excerpt, truncated = truncate_excerpt(record.payload.get("result_excerpt", ""))
                tool_calls.append(
                    ToolInvocation(
                        index=len(tool_calls),
                        timestamp=record.timestamp,
                        prompt_index=max(current_prompt, 0),
                        server_name=record.payload["server_name"],
                        tool_name=record.payload["tool_name"],
                        arguments=ToolInvocation.args_from_mapping(
                            record.payload.get("arguments", {})
                        ),
                        result_excerpt=excerpt,
                        outcome=ToolOutcome(record.payload.get("outcome", "success")),
                        truncated=record.payload.get("truncated", truncated),
                    )
                )
            else:
                env_snapshots.append(record.payload)

        timestamps = [r.timestamp for r in group]
        sessions.append(
            AgentSession(
                session_id=session_id,
                host_id=host_id,
                started_at=min(timestamps),
                ended_at=max(timestamps),
                prompts=tuple(prompts),
                reasoning=tuple(reasoning),
                tool_calls=tuple(tool_calls),
                environment=_merge_env(env_snapshots),
            )
        )
    return sessions


def flatten_session(session: AgentSession) -> list[TraceRecord]:
    """Inverse of reconstruction: emit the records a session came from."""
    records: list[TraceRecord] = []
    for p in session.prompts:
        records.append(
            TraceRecord(
                RecordType.PROMPT,
                session.session_id,
                p.timestamp,
                {"text": p.text, "source": p.source.value, "host_id": session.host_id},
            )
        )
    for r in session.reasoning:
        records.append(
            TraceRecord(
                RecordType.REASONING,
                session.session_id,
                r.timestamp,
                {"text": r.text, "host_id": session.host_id},
            )
        )
    for t in session.tool_calls:
        records.append(
            TraceRecord(
                RecordType.TOOL_CALL,
                session.session_id,
                t.timestamp,
                {
                    "server_name": t.server_name,
                    "tool_name": t.tool_name,
                    "arguments": t.arguments_dict(),
                    "result_excerpt": t.result_excerpt,
                    "outcome": t.outcome.value,
                    "truncated": t.truncated,
                    "host_id": session.host_id,
                },
            )
        )
    env = session.environment
    if env.mcp_servers or env.installed_packages:
        records.append(
            TraceRecord(
                RecordType.ENV_SNAPSHOT,
                session.session_id,
                session.started_at,
                {
                    "mcp_servers": [
                        {
                            "name": s.name,
                            "entry_point": s.entry_point,
                            "tool_names": list(s.tool_names),
                        }
                        for s in env.mcp_servers
                    ],
                    "installed_packages": [
                        {"ecosystem": p.ecosystem.value, "name": p.name, "version": p.version}
                        for p in env.installed_packages
                    ],
                    "host_id": session.host_id,
                },
            )
        )
    return records


def record_to_line(record: TraceRecord) -> str:
    doc = {
        "record_type": record.record_type.value,
        "session_id": record.session_id,
        "ts": us_to_rfc3339(record.timestamp),
        **record.payload,
    }
    return json.dumps(doc, sort_keys=True)


# ---------------------------------------------------------------------------
# Redaction
# ---------------------------------------------------------------------------

def redact_secrets(
    session: AgentSession, hook_config: Optional[credguard.HookConfig] = None
) -> AgentSession:
    """Replace credential-pattern matches in every text field."""
    from .model import map_session_text

    if hook_config is None:
        hook_config = credguard.HookConfig(patterns=credguard.load_patterns())
    return map_session_text(session, lambda text: credguard.redact_text(text, hook_config))


# ---------------------------------------------------------------------------
# Forwarding
# ---------------------------------------------------------------------------

Transport = Callable[[str, list[dict]], tuple[int, dict]]


def http_transport(endpoint: str, payload: list[dict], auth_token: str = "") -> tuple[int, dict]:
    headers = {"Authorization": f"Bearer {auth_token}"} if auth_token else {}
    response = httpx.post(
        f"{endpoint}/v1/telemetry/sessions", json=payload, headers=headers, timeout=10.0
    )
    try:
        body = response.json()
    except ValueError:
        body = {}
    return response.status_code, body


@dataclass
class DeliveryReceipt:
    accepted: int = 0
    rejected: int = 0
    spooled: int = 0


def _spool(sessions: Sequence[AgentSession], spool_dir: str | Path) -> None:
    path = Path(spool_dir)
    path.mkdir(parents=True, exist_ok=True)
    tmp = path / f".batch-{uuid.uuid4().hex}.tmp"
    final = path / f"batch-{uuid.uuid4().hex}.ndjson"
    from .model import session_to_json

    tmp.write_text("\n".join(session_to_json(s) for s in sessions) + "\n", "utf-8")
    os.replace(tmp, final)


def load_spool(spool_dir: str | Path) -> list[AgentSession]:
    """Drain spooled batches back into memory (files are removed)."""
    from .model import session_from_json

    path = Path(spool_dir)
    if not path.is_dir():
        return []
    sessions: list[AgentSession] = []
    for batch_file in sorted(path.glob("batch-*.ndjson")):
        for line in batch_file.read_text("utf-8").splitlines():
            if line.strip():
                sessions.append(session_from_json(line))
        batch_file.unlink()
    return sessions


def forward_batch(
    sessions: Sequence[AgentSession],
    endpoint: str,
    *,
    batch_max: int = 50,
    spool_dir: str | Path = ".adr-spool",
    transport: Transport = http_transport,
    sleeper: Callable[[float], None] = time.sleep,
) -> DeliveryReceipt:
    """Post sessions in batches with retry/backoff; spool on failure.

    Delivery is at-least-once: the service deduplicates by session_id, so
    a spooled batch resent on the next run cannot double-alert.
    """
    from .model import session_to_dict

    receipt = DeliveryReceipt()
    for start in range(0, len(sessions), batch_max):
        batch = list(sessions[start : start + batch_max])
        payload = [session_to_dict(s) for s in batch]
        delivered = False
        for attempt in range(RETRY_ATTEMPTS):
            try:
                status, body = transport(endpoint, payload)
            except Exception as exc:  # network-level failure
                logger.warning("forward attempt %d failed: %s", attempt + 1, exc)
                status, body = 0, {}
            if 200 <= status < 300:
                receipt.accepted += int(body.get("accepted", 0)) + int(body.get("duplicates", 0))
                receipt.rejected += len(body.get("invalid", []))
                delivered = True
                break
            if 400 <= status < 500:
                # a client error will not heal with retries
                logger.error("forward rejected with status %d", status)
                receipt.rejected += len(batch)
                delivered = True
                break
            if attempt < RETRY_ATTEMPTS - 1:
                sleeper(min(RETRY_BASE_S * (2**attempt), RETRY_CAP_S))
        if not delivered:
            _spool(batch, spool_dir)
            receipt.spooled += len(batch)
    return receipt


# ---------------------------------------------------------------------------
# Scan pass + CLI
# ---------------------------------------------------------------------------

def discover_trace_files(trace_paths: Sequence[str]) -> list[Path]:
    found: list[Path] = []
    for entry in trace_paths:
        path = Path(entry)
        if path.is_dir():
            found.extend(sorted(p for p in path.iterdir() if p.suffix in (".ndjson", ".jsonl")))
        elif path.is_file():
            found.append(path)
    return found


@dataclass
class ScanStats:
    files: int = 0
    records: int = 0
    skipped_lines: int = 0
    sessions: int = 0
    receipt: DeliveryReceipt = field(default_factory=DeliveryReceipt)


def scan_once(
    config: SensorConfig,
    *,
    transport: Optional[Transport] = None,
    sleeper: Callable[[float], None] = time.sleep,
) -> ScanStats:
    """One full sensor pass: parse, reconstruct, redact, forward."""
    if transport is None:
        token = config.auth_token

        def transport(endpoint: str, payload: list[dict]) -> tuple[int, dict]:
            return http_transport(endpoint, payload, token)

    stats = ScanStats()
    records: list[TraceRecord] = []
    for trace_file in discover_trace_files(config.trace_paths):
        stats.files += 1
        try:
            file_records, skipped = parse_trace_file(trace_file)
        except CorruptTrace as exc:
            logger.error("%s", exc)
            continue
        records.extend(file_records)
        stats.skipped_lines += skipped
    stats.records = len(records)

    sessions = reconstruct_sessions(records)
    # only complete sessions are forwarded
    sessions = [s for s in sessions if s.ended_at is not None]
    if config.redaction_enabled:
        hook_config = credguard.HookConfig(patterns=credguard.load_patterns())
        sessions = [redact_secrets(s, hook_config) for s in sessions]
    stats.sessions = len(sessions)

    outgoing = load_spool(config.spool_dir) + sessions
    if outgoing:
        stats.receipt = forward_batch(
            outgoing,
            config.forward_endpoint,
            batch_max=config.batch_max,
            spool_dir=config.spool_dir,
            transport=transport,
            sleeper=sleeper,
        )
    return stats


@click.group("adr-sensor")
def main() -> None:
    """Agent-trace sensor."""


@main.command("scan")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--once", is_flag=True, help="Run a single pass and exit.")
def scan_command(config_path: str, once: bool) -> None:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(message)s")
    config = load_sensor_config(config_path)
    while True:
        stats = scan_once(config)
        click.echo(
            f"files={stats.files} records={stats.records} sessions={stats.sessions} "
            f"accepted={stats.receipt.accepted} rejected={stats.receipt.rejected} "
            f"spooled={stats.receipt.spooled}"
        )
        if once:
            break
        time.sleep(config.schedule_interval_s)


if __name__ == "__main__":
    main()
