"""YAML MCP registry and the deterministic mock tool runtime.

Each registry entry declares a server (name, entry point, authentication)
and its tools; every tool carries a behavior table the mock runtime
resolves calls against: ordered match cases (exact or substring argument
matches) and a default. A case may mark the call failed, and may inject a
prompt into the session (tool output entering the agent's context), which
is how indirect-injection scenarios are reproduced without live servers.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib.resources import files
from pathlib import Path
from typing import Mapping, Optional

import yaml


class RegistryLoadError(ValueError):
    pass


@dataclass(frozen=True)
class BehaviorCase:
    match: tuple[tuple[str, str], ...] = ()           # exact equality per key
    match_contains: tuple[tuple[str, str], ...] = ()  # substring per key
    outcome: str = "success"
    result: str = "ok"
    injects_prompt: Optional[str] = None


@dataclass(frozen=True)
class BehaviorTable:
    cases: tuple[BehaviorCase, ...] = ()
    default: BehaviorCase = BehaviorCase()

    def resolve(self, arguments: Mapping[str, str]) -> BehaviorCase:
        for case in self.cases:
            exact_ok = all(arguments.get(k, "") == v for k, v in case.match)
            contains_ok = all(v in arguments.get(k, "") for k, v in case.match_contains)
            if exact_ok and contains_ok:
                return case
        return self.default


@dataclass(frozen=True)
class ToolDefinition:
    tool_name: str
    argument_schema: tuple[tuple[str, str], ...]  # name -> type label
    behavior: BehaviorTable


@dataclass(frozen=True)
class RegistryEntry:
    name: str
    entry_point: str
    authentication: str  # none | token
    tools: tuple[ToolDefinition, ...]

    def tool(self, tool_name: str) -> Optional[ToolDefinition]:
        for t in self.tools:
            if t.tool_name == tool_name:
                return t
        return None


@dataclass(frozen=True)
class Registry:
    servers: tuple[RegistryEntry, ...]

    def server(self, name: str) -> Optional[RegistryEntry]:
        for s in self.servers:
            if s.name == name:
                return s
        return None

    def resolve_call(
        self, server_name: str, tool_name: str, arguments: Mapping[str, str]
    ) -> BehaviorCase:
        """Behavior for one mock tool call; unknown tools succeed blandly."""
        entry = self.server(server_name)
        tool = entry.tool(tool_name) if entry else None
        if tool is None:
            return BehaviorCase(result="ok")
        return tool.behavior.resolve(arguments)


def _parse_case(raw: dict) -> BehaviorCase:
    return BehaviorCase(
        match=tuple((str(k), str(v)) for k, v in (raw.get("match") or {}).items()),
        match_contains=tuple(
            (str(k), str(v)) for k, v in (raw.get("match_contains") or {}).items()
        ),
        outcome=raw.get("outcome", "success"),
        result=str(raw.get("result", "ok")),
        injects_prompt=raw.get("injects_prompt"),
    )


def load_registry(path: Optional[str | Path] = None) -> Registry:
    if path is None:
        raw = files("adr").joinpath("data/registry.yaml").read_text("utf-8")
    else:
        raw = Path(path).read_text("utf-8")
    doc = yaml.safe_load(raw) or {}
    servers: list[RegistryEntry] = []
    seen: set[str] = set()
    for entry in doc.get("servers", []):
        name = entry.get("name", "")
        if not name or name in seen:
            raise RegistryLoadError(f"missing or duplicate server name {name!r}")
        seen.add(name)
        if entry.get("authentication", "none") not in ("none", "token"):
            raise RegistryLoadError(f"{name}: authentication must be none or token")
        tools: list[ToolDefinition] = []
        for raw_tool in entry.get("tools", []):
            tool_name = raw_tool.get("tool_name", "")
            if not tool_name:
                raise RegistryLoadError(f"{name}: tool with missing tool_name")
            behavior = raw_tool.get("behavior")
            if behavior is None:
                raise RegistryLoadError(f"{name}.{tool_name}: missing behavior table")
            tools.append(
                ToolDefinition(
                    tool_name=tool_name,
                    argument_schema=tuple(
                        (str(k), str(v)) for k, v in (raw_tool.get("arguments") or {}).items()
                    ),
                    behavior=BehaviorTable(
                        cases=tuple(_parse_case(c) for c in behavior.get("cases", [])),
                        default=_parse_case(behavior.get("default", {})),
                    ),
                )
            )
        servers.append(
            RegistryEntry(
                name=name,
                entry_point=entry.get("entry_point", ""),
                authentication=entry.get("authentication", "none"),
                tools=tuple(tools),
            )
        )
    return Registry(servers=tuple(servers))
