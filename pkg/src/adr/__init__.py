"""Detection and response toolkit for MCP-driven agent workflows."""

__version__ = "0.1.0"

from .model import AgentSession, Decision, Verdict, VerdictTier, validate_session

__all__ = [
    "AgentSession",
    "Decision",
    "Verdict",
    "VerdictTier",
    "validate_session",
    "__version__",
]
