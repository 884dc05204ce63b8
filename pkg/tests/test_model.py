from __future__ import annotations

import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adr.model import (
    AgentSession,
    PromptEvent,
    PromptSource,
    ReasoningStep,
    ToolInvocation,
    rfc3339_to_us,
    session_from_json,
    session_to_json,
    truncate_excerpt,
    us_to_rfc3339,
    validate_session,
)
from conftest import T0, US, env_context, make_session


def test_valid_session_has_no_violations():
    session = make_session(tools=(("files", "read_file", {"path": "a.txt"}, "text"),))
    assert validate_session(session) == []


def test_missing_prompt_reference_reported():
    session = make_session()
    bad = dataclasses.replace(
        session,
        reasoning=(ReasoningStep(index=0, timestamp=T0 + US, prompt_index=5, text="hm"),),
    )
    assert validate_session(bad) == ["reasoning[0] references missing prompt 5"]


def test_empty_id_and_unordered_timestamps_are_two_violations():
    session = AgentSession(
        session_id="",
        host_id="h",
        started_at=T0,
        ended_at=T0 + 2 * US,
        prompts=(
            PromptEvent(index=0, timestamp=T0 + 2 * US, text="later"),
            PromptEvent(index=1, timestamp=T0, text="earlier"),
        ),
    )
    violations = validate_session(session)
    assert len(violations) == 2
    assert "session_id is empty" in violations
    assert any("not strictly ordered" in v for v in violations)


def test_validation_is_pure():
    session = make_session()
    assert validate_session(session) == validate_session(session)


def test_empty_prompt_text_and_bad_tool_fields():
    session = make_session()
    bad = dataclasses.replace(
        session,
        prompts=(PromptEvent(index=0, timestamp=T0, text=""),),
        tool_calls=(
            ToolInvocation(
                index=0, timestamp=T0 + US, prompt_index=0,
                server_name="", tool_name="", arguments=(),
            ),
        ),
    )
    violations = validate_session(bad)
    assert "prompts[0] has empty text" in violations
    assert "tool_calls[0] has empty server_name" in violations
    assert "tool_calls[0] has empty tool_name" in violations


def test_duplicate_environment_server_names():
    env = env_context()
    dup = dataclasses.replace(env, mcp_servers=env.mcp_servers + (env.mcp_servers[0],))
    session = make_session(environment=dup)
    assert any("more than once" in v for v in validate_session(session))


def test_excerpt_truncation_cap():
    text, truncated = truncate_excerpt("x" * 5000)
    assert len(text) == 4096 and truncated
    text, truncated = truncate_excerpt("short")
    assert text == "short" and not truncated


def test_timestamp_wire_format_round_trip():
    assert us_to_rfc3339(0) == "1970-01-01T00:00:00.000000Z"
    for value in (0, 1, 123_456, T0, T0 + 999_999):
        assert rfc3339_to_us(us_to_rfc3339(value)) == value
    assert rfc3339_to_us("2025-06-01T02:00:00+02:00") == T0


def test_json_round_trip_fixture():
    session = make_session(
        prompts=("a", "b"),
        injected=(1,),
        tools=(("files", "read_file", {"path": "x"}, "body"),),
        reasoning=("planning",),
        environment=env_context(),
    )
    assert session_from_json(session_to_json(session)) == session


_texts = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=40
)


@st.composite
def sessions(draw):
    n_prompts = draw(st.integers(1, 4))
    prompts = tuple(
        PromptEvent(
            index=i,
            timestamp=T0 + i * US,
            text=draw(_texts),
            source=draw(st.sampled_from(list(PromptSource))),
        )
        for i in range(n_prompts)
    )
    n_tools = draw(st.integers(0, 4))
    tools = tuple(
        ToolInvocation(
            index=i,
            timestamp=T0 + (10 + i) * US,
            prompt_index=draw(st.integers(0, n_prompts - 1)),
            server_name=draw(st.sampled_from(["files", "web", "jira"])),
            tool_name=draw(st.sampled_from(["read_file", "http_post"])),
            arguments=ToolInvocation.args_from_mapping({"k": draw(_texts)}),
            result_excerpt=draw(_texts),
        )
        for i in range(n_tools)
    )
    return AgentSession(
        session_id=draw(st.uuids()).hex,
        host_id="h",
        started_at=T0,
        ended_at=T0 + 100 * US,
        prompts=prompts,
        tool_calls=tools,
        environment=env_context(),
    )


@given(sessions())
@settings(max_examples=60, deadline=None)
def test_json_round_trip_property(session):
    assert session_from_json(session_to_json(session)) == session


def test_signal_location_resolution():
    from adr.model import resolve_location

    session = make_session(tools=(("files", "read_file", {"path": "a"}, "r"),))
    assert resolve_location(session, ("prompts", 0))
    assert resolve_location(session, ("tool_calls", 0))
    assert not resolve_location(session, ("tool_calls", 3))
    assert not resolve_location(session, ("nonsense", 0))
