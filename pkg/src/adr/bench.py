"""Benchmark harness: task specs, mock runtime, metric suite, reports.

Tasks are standalone JSON or YAML files referencing registry servers.
The deterministic mock runtime synthesizes one session per task: the
prompt, optional reasoning lines, and the task's tool calls replayed
against the registry behavior tables (which supply results, failures, and
injected prompts). Sessions run through the two-tier detector and are
scored against their labels.

Reports render a metrics table, a per-tactic detection-rate breakdown,
delimited per-task verdicts, and a bar-chart figure, all deterministic so
repeated runs are byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from importlib.resources import files
from pathlib import Path
from typing import Optional, Sequence

import click
import yaml

from .detector import Detector
from .model import (
    AgentSession,
    Decision,
    EnvironmentContext,
    McpServerInfo,
    PromptEvent,
    PromptSource,
    ReasoningStep,
    ToolInvocation,
    ToolOutcome,
    Verdict,
    rfc3339_to_us,
)
from .providers import load_policy_store, load_source_index
from .reasoning import ProviderSet
from .registry import Registry, load_registry
from .threat_repo import ThreatRepository, load_repo
from .triage import MockCompletionBackend, load_rules

BENCH_BASE_TS = rfc3339_to_us("2025-06-02T00:00:00.000000Z")


class TaskLoadError(ValueError):
    pass


class _Defaulting(dict):
    def __missing__(self, key: str) -> str:
        return "unset"


@dataclass(frozen=True)
class ReplayCall:
    server: str
    tool: str
    arguments: tuple[tuple[str, str], ...]
    result: Optional[str] = None   # override the behavior table (pure replay)
    outcome: Optional[str] = None


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    label: str  # benign | malicious
    prompt: str
    server_refs: tuple[str, ...]
    technique_id: Optional[str] = None
    expected_tool_calls: tuple[ReplayCall, ...] = ()
    reasoning: tuple[str, ...] = ()
    notes: str = ""


def _parse_task(doc: dict, origin: str) -> TaskSpec:
    try:
        return TaskSpec(
            task_id=doc["task_id"],
            label=doc["label"],
            prompt=doc["prompt"],
            server_refs=tuple(doc.get("server_refs", ())),
            technique_id=doc.get("technique_id"),
            expected_tool_calls=tuple(
                ReplayCall(
                    server=c["server"],
                    tool=c["tool"],
                    arguments=tuple(
                        (str(k), str(v)) for k, v in (c.get("arguments") or {}).items()
                    ),
                    result=c.get("result"),
                    outcome=c.get("outcome"),
                )
                for c in doc.get("expected_tool_calls", ())
            ),
            reasoning=tuple(doc.get("reasoning", ())),
            notes=doc.get("notes", ""),
        )
    except KeyError as exc:
        raise TaskLoadError(f"{origin}: missing field {exc}")


def load_tasks(path: Optional[str | Path] = None) -> list[TaskSpec]:
    """Load every task file (YAML or JSON) under a directory, sorted."""
    if path is None:
        base = files("adr").joinpath("data/tasks")
        sources = sorted(
            (p.name, p.read_text("utf-8")) for p in base.iterdir() if p.name.endswith((".yaml", ".yml", ".json"))
        )
    else:
        p = Path(path)
        file_list = (
            sorted(q for q in p.iterdir() if q.suffix in (".yaml", ".yml", ".json"))
            if p.is_dir()
            else [p]
        )
        sources = [(str(q), q.read_text("utf-8")) for q in file_list]
    tasks = []
    for origin, raw in sources:
        doc = json.loads(raw) if origin.endswith(".json") else yaml.safe_load(raw)
        tasks.append(_parse_task(doc, origin))
    return tasks


def validate_task(task: TaskSpec, registry: Registry, repo: ThreatRepository) -> list[str]:
    problems = []
    if task.label not in ("benign", "malicious"):
        problems.append(f"unknown label '{task.label}'")
    if task.label == "malicious":
        if not task.technique_id:
            problems.append("malicious task missing technique_id")
        elif repo.technique_by_id(task.technique_id) is None:
            problems.append(f"technique_id '{task.technique_id}' not in repo")
    for ref in task.server_refs:
        if registry.server(ref) is None:
            problems.append(f"server_ref '{ref}' not in registry")
    for call in task.expected_tool_calls:
        if registry.server(call.server) is None:
            problems.append(f"tool call references unknown server '{call.server}'")
    return problems


# ---------------------------------------------------------------------------
# Mock runtime
# ---------------------------------------------------------------------------

def synthesize_session(task: TaskSpec, registry: Registry) -> AgentSession:
    """Deterministic session for one task via the registry behavior tables."""
    ts = BENCH_BASE_TS
    step = 1_000_000
    prompts = [PromptEvent(index=0, timestamp=ts, text=task.prompt)]
    reasoning: list[ReasoningStep] = []
    tool_calls: list[ToolInvocation] = []

    for line in task.reasoning:
        ts += step
        reasoning.append(
            ReasoningStep(index=len(reasoning), timestamp=ts, prompt_index=0, text=line)
        )

    for call in task.expected_tool_calls:
        arguments = dict(call.arguments)
        behavior = registry.resolve_call(call.server, call.tool, arguments)
        result = call.result if call.result is not None else behavior.result
        outcome = call.outcome if call.outcome is not None else behavior.outcome
        result = result.format_map(_Defaulting(arguments))
        ts += step
        tool_calls.append(
            ToolInvocation(
                index=len(tool_calls),
                timestamp=ts,
                prompt_index=len(prompts) - 1,
                server_name=call.server,
                tool_name=call.tool,
                arguments=tuple(call.arguments),
                result_excerpt=result,
                outcome=ToolOutcome(outcome),
            )
        )
        if behavior.injects_prompt and call.result is None:
            ts += step
            prompts.append(
                PromptEvent(
                    index=len(prompts),
                    timestamp=ts,
                    text=behavior.injects_prompt,
                    source=PromptSource.INJECTED_DATA,
                )
            )

    servers = []
    for name in task.server_refs:
        entry = registry.server(name)
        if entry is not None:
            servers.append(
                McpServerInfo(
                    name=entry.name,
                    entry_point=entry.entry_point,
                    tool_names=tuple(t.tool_name for t in entry.tools),
                )
            )
    return AgentSession(
        session_id=f"task-{task.task_id}",
        host_id="bench-host",
        started_at=BENCH_BASE_TS,
        ended_at=ts,
        prompts=tuple(prompts),
        reasoning=tuple(reasoning),
        tool_calls=tuple(tool_calls),
        environment=EnvironmentContext(mcp_servers=tuple(servers)),
    )


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunMetrics:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int
    fpr: float
    cost_per_task_usd: float
    mean_latency_s: float
    cost_per_tp_usd: float
    p95_latency_s: float
    degenerate: bool = False


def nearest_rank_p95(latencies: Sequence[float]) -> float:
    if not latencies:
        return 0.0
    ordered = sorted(latencies)
    rank = math.ceil(0.95 * len(ordered))
    return ordered[rank - 1]


def compute_metrics(
    tp: int,
    fp: int,
    fn: int,
    tn: int,
    per_task_costs: Sequence[float] = (),
    per_task_latencies: Sequence[float] = (),
) -> RunMetrics:
    """Confusion-matrix metric suite with explicit zero-denominator rules.

    A detector that is silent on an all-benign suite (tp+fp == 0 and
    fn == 0) scores precision 1 / recall 1 but is flagged degenerate;
    silence with missed attacks scores precision 0.
    """
    degenerate = False
    if tp + fp == 0:
        if fn == 0:
            precision = 1.0
            degenerate = True
        else:
            precision = 0.0
    else:
        precision = tp / (tp + fp)
    recall = 1.0 if tp + fn == 0 else tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    fpr = 0.0 if fp + tn == 0 else fp / (fp + tn)
    total_cost = sum(per_task_costs)
    task_count = len(per_task_costs)
    return RunMetrics(
        precision=precision,
        recall=recall,
        f1=f1,
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
        fpr=fpr,
        cost_per_task_usd=total_cost / task_count if task_count else 0.0,
        mean_latency_s=(
            sum(per_task_latencies) / len(per_task_latencies) if per_task_latencies else 0.0
        ),
        cost_per_tp_usd=total_cost / tp if tp else math.inf,
        p95_latency_s=nearest_rank_p95(per_task_latencies),
        degenerate=degenerate,
    )


# ---------------------------------------------------------------------------
# Suite execution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TaskOutcome:
    task_id: str
    label: str
    technique_id: Optional[str]
    tactic: Optional[str]
    verdict: Verdict

    @property
    def detected(self) -> bool:
        return self.verdict.decision is Decision.MALICIOUS


@dataclass
class SuiteResult:
    outcomes: list[TaskOutcome]
    metrics: RunMetrics
    skipped: list[tuple[str, str]]  # (task_id, reason)

    def verdicts(self) -> dict[str, Verdict]:
        return {o.task_id: o.verdict for o in self.outcomes}


def run_suite(
    tasks: Sequence[TaskSpec],
    registry: Registry,
    detector: Detector,
    repo: ThreatRepository,
) -> SuiteResult:
    """Synthesize, detect, and score every task; invalid tasks are reported."""
    outcomes: list[TaskOutcome] = []
    skipped: list[tuple[str, str]] = []
    for task in tasks:
        problems = validate_task(task, registry, repo)
        if problems:
            skipped.append((task.task_id, "; ".join(problems)))
            continue
        session = synthesize_session(task, registry)
        verdict = detector.detect(session)
        outcomes.append(
            TaskOutcome(
                task_id=task.task_id,
                label=task.label,
                technique_id=task.technique_id,
                tactic=repo.tactic_of(task.technique_id) if task.technique_id else None,
                verdict=verdict,
            )
        )

    tp = sum(1 for o in outcomes if o.label == "malicious" and o.detected)
    fn = sum(1 for o in outcomes if o.label == "malicious" and not o.detected)
    fp = sum(1 for o in outcomes if o.label == "benign" and o.detected)
    tn = sum(1 for o in outcomes if o.label == "benign" and not o.detected)
    metrics = compute_metrics(
        tp,
        fp,
        fn,
        tn,
        per_task_costs=[o.verdict.cost_usd for o in outcomes],
        per_task_latencies=[o.verdict.latency_s for o in outcomes],
    )
    return SuiteResult(outcomes=outcomes, metrics=metrics, skipped=skipped)


def tactic_breakdown(outcomes: Sequence[TaskOutcome]) -> list[tuple[str, int, int]]:
    """(tactic, detected, total) over malicious tasks, sorted by tactic."""
    counts: dict[str, list[int]] = {}
    for outcome in outcomes:
        if outcome.label != "malicious":
            continue
        tactic = outcome.tactic or "unknown"
        bucket = counts.setdefault(tactic, [0, 0])
        bucket[1] += 1
        if outcome.detected:
            bucket[0] += 1
    return [(tactic, det, tot) for tactic, (det, tot) in sorted(counts.items())]


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _fmt_cost_per_tp(value: float) -> str:
    return "n/a" if math.isinf(value) else f"{value:.3f}"


def emit_report(metrics: RunMetrics, outcomes: Sequence[TaskOutcome], fmt: str) -> str:
    """Render the metric suite; fmt is "table" or "json"."""
    if fmt == "json":
        payload = {
            "precision": round(metrics.precision, 6),
            "recall": round(metrics.recall, 6),
            "f1": round(metrics.f1, 6),
            "tp": metrics.tp,
            "fp": metrics.fp,
            "fn": metrics.fn,
            "tn": metrics.tn,
            "fpr": round(metrics.fpr, 6),
            "cost_per_task_usd": round(metrics.cost_per_task_usd, 6),
            "mean_latency_s": round(metrics.mean_latency_s, 6),
            "cost_per_tp_usd": (
                None if math.isinf(metrics.cost_per_tp_usd) else round(metrics.cost_per_tp_usd, 6)
            ),
            "p95_latency_s": round(metrics.p95_latency_s, 6),
            "degenerate": metrics.degenerate,
            "by_tactic": [
                {"tactic": tactic, "detected": det, "total": tot}
                for tactic, det, tot in tactic_breakdown(outcomes)
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True)
    if fmt != "table":
        raise ValueError(f"unknown report format '{fmt}'")

    lines = [
        "Prec.   Recall  F1      TP/FP   FPR     Cost/Task($)  Latency(s)  Cost/TP($)  P95 Lat.(s)",
        (
            f"{metrics.precision:<7.3f} {metrics.recall:<7.3f} {metrics.f1:<7.3f} "
            f"{metrics.tp}/{metrics.fp:<5} {metrics.fpr:<7.3f} "
            f"{metrics.cost_per_task_usd:<13.3f} {metrics.mean_latency_s:<11.1f} "
            f"{_fmt_cost_per_tp(metrics.cost_per_tp_usd):<11} {metrics.p95_latency_s:.1f}"
        ),
        "",
        "Detection rate by tactic:",
    ]
    breakdown = tactic_breakdown(outcomes)
    if not breakdown:
        lines.append("  (no malicious tasks)")
    for tactic, detected, total in breakdown:
        lines.append(f"  {tactic:<34} {detected}/{total}  ({detected / total:.0%})")
    if metrics.degenerate:
        lines.append("")
        lines.append("note: degenerate suite (no malicious tasks, no alerts)")
    return "\n".join(lines) + "\n"


def outcomes_csv(outcomes: Sequence[TaskOutcome]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        ["task_id", "label", "technique_id", "tactic", "decision", "tier",
         "technique_matches", "cost_usd", "latency_s"]
    )
    for o in outcomes:
        writer.writerow(
            [
                o.task_id,
                o.label,
                o.technique_id or "",
                o.tactic or "",
                o.verdict.decision.value,
                o.verdict.tier.value,
                ";".join(o.verdict.technique_ids),
                f"{o.verdict.cost_usd:.6f}",
                f"{o.verdict.latency_s:.3f}",
            ]
        )
    return buffer.getvalue()


def render_tactic_figure(outcomes: Sequence[TaskOutcome], path: str | Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    breakdown = tactic_breakdown(outcomes)
    labels = [t.replace("_", "\n") for t, _, _ in breakdown]
    rates = [det / tot for _, det, tot in breakdown]
    fig, ax = plt.subplots(figsize=(max(4.0, 1.6 * len(labels)), 3.2))
    ax.bar(range(len(labels)), rates, color="tab:blue")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("detection rate")
    for i, (_, det, tot) in enumerate(breakdown):
        ax.text(i, rates[i] + 0.02, f"{det}/{tot}", ha="center", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report_files(result: SuiteResult, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(emit_report(result.metrics, result.outcomes, "table"), "utf-8")
    (out / "metrics.json").write_text(emit_report(result.metrics, result.outcomes, "json"), "utf-8")
    (out / "verdicts.csv").write_text(outcomes_csv(result.outcomes), "utf-8")
    if result.skipped:
        (out / "skipped.txt").write_text(
            "".join(f"{task_id}\t{reason}\n" for task_id, reason in result.skipped), "utf-8"
        )
    if any(o.label == "malicious" for o in result.outcomes):
        render_tactic_figure(result.outcomes, out / "detection_by_tactic.png")


@click.group("adr-bench")
def main() -> None:
    """Benchmark harness."""


@main.command("run")
@click.option("--tasks", "tasks_path", type=click.Path(exists=True), default=None)
@click.option("--registry", "registry_path", type=click.Path(exists=True), default=None)
@click.option("--repo", "repo_path", type=click.Path(exists=True), default=None)
@click.option("--policies", "policies_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def run_command(
    tasks_path: Optional[str],
    registry_path: Optional[str],
    repo_path: Optional[str],
    policies_path: Optional[str],
    out_dir: str,
) -> None:
    from .threat_repo import default_repo_path

    registry = load_registry(registry_path)
    repo = load_repo(repo_path if repo_path else default_repo_path())
    detector = Detector(
        rules=load_rules(),
        providers=ProviderSet(
            source_index=load_source_index(),
            policy_store=load_policy_store(policies_path),
        ),
        repo_source=repo,
        triage_backend=MockCompletionBackend(),
    )
    tasks = load_tasks(tasks_path)
    result = run_suite(tasks, registry, detector, repo)
    write_report_files(result, out_dir)
    click.echo(emit_report(result.metrics, result.outcomes, "table"))
    if result.skipped:
        click.echo(f"skipped {len(result.skipped)} task(s); see skipped.txt")


if __name__ == "__main__":
    main()
