"""Pre-prompt credential scanning hook.

Scans prompts for credentials with a shipped regex pattern library plus a
Shannon-entropy gate for unknown token shapes, then answers over the hook
protocol: exactly one JSON request on stdin, exactly one JSON response on
stdout. Depending on the configured mode the hook observes, redacts
(modify), or blocks.

The pattern library is data (YAML), not code; enterprises extend it by
pointing ``patterns_path`` at their own file.
"""

from __future__ import annotations

import json
import math
import re
import sys
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path
from typing import Optional, Sequence

import click
import yaml

DEFAULT_ENTROPY_THRESHOLD = 3.5  # bits per character
DEFAULT_MIN_TOKEN_LEN = 20
HIGH_ENTROPY_CATEGORY = "high_entropy_token"
REDACTION_TEMPLATE = "[REDACTED:{category}]"
_REDACTION_MARKER = re.compile(r"\[REDACTED:[a-z_]+\]")


class PatternLoadError(ValueError):
    """A pattern file entry is malformed (bad regex, missing keys)."""


@dataclass(frozen=True)
class CredentialPattern:
    category: str
    pattern: re.Pattern
    min_entropy_bits_per_char: Optional[float] = None
    description: str = ""


@dataclass(frozen=True)
class Finding:
    category: str
    span_start: int
    span_end: int

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "span_start": self.span_start,
            "span_end": self.span_end,
        }


@dataclass(frozen=True)
class HookRequest:
    hook_event: str
    session_id: str
    prompt: str


@dataclass(frozen=True)
class HookResponse:
    decision: str  # allow | modify | block
    findings: tuple[Finding, ...] = ()
    redacted_prompt: Optional[str] = None

    def to_dict(self) -> dict:
        out: dict = {
            "decision": self.decision,
            "findings": [f.to_dict() for f in self.findings],
        }
        if self.decision == "modify":
            out["redacted_prompt"] = self.redacted_prompt
        return out


@dataclass
class HookConfig:
    mode: str = "block"  # block | redact | observe
    fail_closed: bool = False
    entropy_threshold: float = DEFAULT_ENTROPY_THRESHOLD
    min_token_len: int = DEFAULT_MIN_TOKEN_LEN
    patterns: Sequence[CredentialPattern] = field(default_factory=tuple)


def shannon_entropy(s: str) -> float:
    """Bits per character of the empirical character distribution."""
    if not s:
        raise ValueError("entropy of empty string is undefined")
    counts: dict[str, int] = {}
    for ch in s:
        counts[ch] = counts.get(ch, 0) + 1
    n = len(s)
    entropy = -sum((c / n) * math.log2(c / n) for c in counts.values())
    return entropy if entropy != 0 else 0.0


def load_patterns(path: Optional[str | Path] = None) -> list[CredentialPattern]:
    """Load the pattern library; defaults to the shipped set."""
    if path is None:
        raw = files("adr").joinpath("data/credential_patterns.yaml").read_text("utf-8")
    else:
        raw = Path(path).read_text("utf-8")
    doc = yaml.safe_load(raw) or {}
    patterns: list[CredentialPattern] = []
    seen: set[str] = set()
    for i, entry in enumerate(doc.get("patterns", [])):
        category = entry.get("category")
        if not category:
            raise PatternLoadError(f"pattern entry {i} is missing a category")
        expr = entry.get("pattern")
        try:
            compiled = re.compile(expr)
        except (re.error, TypeError) as exc:
            raise PatternLoadError(f"pattern for {category!r} does not compile: {exc}")
        if category in seen:
            raise PatternLoadError(f"duplicate pattern category {category!r}")
        seen.add(category)
        patterns.append(
            CredentialPattern(
                category=category,
                pattern=compiled,
                min_entropy_bits_per_char=entry.get("min_entropy_bits_per_char"),
                description=entry.get("description", ""),
            )
        )
    return patterns


def scan(
    prompt: str,
    patterns: Sequence[CredentialPattern],
    entropy_threshold: float = DEFAULT_ENTROPY_THRESHOLD,
    min_token_len: int = DEFAULT_MIN_TOKEN_LEN,
) -> list[Finding]:
    """Find credential-like spans; non-overlapping, longest-match leftmost wins."""
    candidates: list[tuple[int, int, int, str]] = []  # (start, -len, priority, category)

    for prio, cred in enumerate(patterns):
        for match in cred.pattern.finditer(prompt):
            span = match.group(0)
            if not span:
                continue
            if cred.min_entropy_bits_per_char is not None:
                if shannon_entropy(span) < cred.min_entropy_bits_per_char:
                    continue
            candidates.append((match.start(), -len(span), prio, cred.category))

    # entropy gate over whitespace-delimited tokens; redaction markers from
    # an earlier pass are exempt so redaction stays idempotent
    for match in re.finditer(r"\S+", prompt):
        token = match.group(0)
        if len(token) < min_token_len or _REDACTION_MARKER.search(token):
            continue
        if shannon_entropy(token) >= entropy_threshold:
            candidates.append((match.start(), -len(token), len(patterns), HIGH_ENTROPY_CATEGORY))

    candidates.sort()
    findings: list[Finding] = []
    last_end = -1
    for start, neg_len, _prio, category in candidates:
        end = start - neg_len
        if start < last_end:
            continue
        findings.append(Finding(category=category, span_start=start, span_end=end))
        last_end = end
    return findings


def redact(prompt: str, findings: Sequence[Finding]) -> str:
    """Replace each finding span with a redaction marker."""
    out = prompt
    for f in sorted(findings, key=lambda f: f.span_start, reverse=True):
        out = out[: f.span_start] + REDACTION_TEMPLATE.format(category=f.category) + out[f.span_end :]
    return out


def redact_text(text: str, config: HookConfig) -> str:
    """One-shot scan-and-redact over arbitrary text (used by the sensor)."""
    findings = scan(text, config.patterns, config.entropy_threshold, config.min_token_len)
    if not findings:
        return text
    return redact(text, findings)


def handle(request: HookRequest, config: HookConfig) -> HookResponse:
    """Apply the configured policy to one hook request."""
    findings = tuple(
        scan(request.prompt, config.patterns, config.entropy_threshold, config.min_token_len)
    )
    if not findings:
        return HookResponse(decision="allow")
    if config.mode == "block":
        return HookResponse(decision="block", findings=findings)
    if config.mode == "redact":
        return HookResponse(
            decision="modify",
            findings=findings,
            redacted_prompt=redact(request.prompt, findings),
        )
    # observe: report findings but never interfere
    return HookResponse(decision="allow", findings=findings)


def load_config(path: Optional[str | Path] = None, mode_override: Optional[str] = None) -> HookConfig:
    doc = {}
    if path is not None:
        doc = yaml.safe_load(Path(path).read_text("utf-8")) or {}
    config = HookConfig(
        mode=doc.get("mode", "block"),
        fail_closed=bool(doc.get("fail_closed", False)),
        entropy_threshold=float(doc.get("entropy_threshold", DEFAULT_ENTROPY_THRESHOLD)),
        min_token_len=int(doc.get("min_token_len", DEFAULT_MIN_TOKEN_LEN)),
        patterns=load_patterns(doc.get("patterns_path")),
    )
    if mode_override:
        config.mode = mode_override
    return config


def run_hook(stdin_text: str, config: HookConfig) -> tuple[str, str, int]:
    """Process one protocol exchange; returns (stdout, stderr, exit_code)."""
    try:
        payload = json.loads(stdin_text)
        request = HookRequest(
            hook_event=payload["hook_event"],
            session_id=payload.get("session_id", ""),
            prompt=payload["prompt"],
        )
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        decision = "block" if config.fail_closed else "allow"
        response = HookResponse(decision=decision)
        return (
            json.dumps(response.to_dict()),
            f"adr-credguard: malformed request: {exc}",
            2,
        )
    response = handle(request, config)
    return json.dumps(response.to_dict()), "", 0


@click.command("adr-credguard")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--mode", type=click.Choice(["block", "redact", "observe"]), default=None)
def main(config_path: Optional[str], mode: Optional[str]) -> None:
    """Scan one prompt from stdin and answer on stdout."""
    config = load_config(config_path, mode_override=mode)
    stdout, stderr, code = run_hook(sys.stdin.read(), config)
    sys.stdout.write(stdout + "\n")
    if stderr:
        sys.stderr.write(stderr + "\n")
    sys.exit(code)


if __name__ == "__main__":
    main()
