"""Training orchestration: tests, design, implementation, evaluate/analyze loop.

One training run follows a fixed control flow: generate unit tests once,
obtain a design, implement every function in design order, then loop
evaluate → analyze → revise until all tests pass or the iteration limit is
reached. An iteration is one evaluate/analyze/revise cycle. Restarts rerun
the whole procedure with derived seeds and the best program wins by tests
passed (ties: fewer iterations, then shorter source, then first restart).
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from . import agents as ag
from . import kg as kgmod
from . import prompts
from .evaluator import EvalReport, Evaluator, report_to_json_obj
from .gateway import Gateway, GatewayError
from .sandbox import CandidateProgram, ShimConfig, assemble, assemble_partial, default_shim

#: model prefixes of the proprietary tier, which gets the lower iteration cap
PROPRIETARY_MODEL_PREFIXES = ("gpt",)


def default_max_iterations(architect_model: str) -> int:
    """25 iterations normally, 10 for proprietary-tier architect/engineer models."""
    lowered = architect_model.lower()
    if any(lowered.startswith(p) for p in PROPRIETARY_MODEL_PREFIXES):
        return 10
    return 25


class TrainingError(Exception):
    """All restarts aborted; carries the partial records."""

    def __init__(self, message: str, records: Sequence["TrainingRunRecord"]):
        super().__init__(message)
        self.records = tuple(records)


@dataclass(frozen=True)
class TrainingConfig:
    max_iterations: int = 25
    restarts: int = 3
    failure_budget: int = 5
    batch_size: int = 50
    min_per_predicate: int = 3
    te_round_cap: int = 20
    timeout: float = 10.0
    kill_grace: float = 1.0
    workers: int = 1
    rng_seed: int = 0
    model_roles: dict[str, str] = field(default_factory=dict)
    shim: ShimConfig | None = None
    max_wall_seconds: float | None = None
    static_design: ag.SystemDesign | None = None
    external_tests: tuple[ag.UnitTest, ...] | None = None

    def __post_init__(self) -> None:
        for name in (
            "max_iterations",
            "restarts",
            "failure_budget",
            "batch_size",
            "min_per_predicate",
            "te_round_cap",
            "workers",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        missing = [r for r in ag.ROLES if r not in self.model_roles]
        if missing:
            raise ValueError(f"model_roles missing: {', '.join(missing)}")

    def digest(self) -> str:
        payload = {
            "max_iterations": self.max_iterations,
            "restarts": self.restarts,
            "failure_budget": self.failure_budget,
            "batch_size": self.batch_size,
            "min_per_predicate": self.min_per_predicate,
            "te_round_cap": self.te_round_cap,
            "timeout": self.timeout,
            "workers": self.workers,
            "rng_seed": self.rng_seed,
            "model_roles": dict(sorted(self.model_roles.items())),
            "shim": list(self.shim.command) if self.shim else None,
            "static_design": bool(self.static_design),
            "external_tests": len(self.external_tests) if self.external_tests else 0,
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True, slots=True)
class EventLogEntry:
    iteration: int
    agent: str
    action: str
    artifact_hash: str


@dataclass(frozen=True)
class TrainingRunRecord:
    restart_index: int
    seed: int
    iterations_used: int
    final_report: EvalReport | None
    program: CandidateProgram | None
    design: ag.SystemDesign | None
    tests: tuple[ag.UnitTest, ...]
    converged: bool
    event_log: tuple[EventLogEntry, ...]
    program_snapshots: tuple[dict[str, str], ...] = ()
    aborted: bool = False
    abort_reason: str | None = None

    @property
    def passed_count(self) -> int:
        return self.final_report.passed_count if self.final_report else -1


def _short_hash(data: str) -> str:
    return hashlib.sha256(data.encode("utf-8")).hexdigest()[:12]


def derive_seed(rng_seed: int, restart_index: int) -> int:
    return rng_seed + restart_index


def train_once(
    graph: kgmod.KnowledgeGraph,
    config: TrainingConfig,
    gateway: Gateway,
    restart_index: int = 0,
    on_iteration: Callable[[int, CandidateProgram, EvalReport], None] | None = None,
) -> TrainingRunRecord:
    """One full training run; agent failures abort with a partial record."""
    seed = derive_seed(config.rng_seed, restart_index)
    ctx = ag.AgentContext(gateway=gateway, model_roles=config.model_roles)
    shim = config.shim or default_shim()
    evaluator = Evaluator(
        gateway=gateway,
        judge_model=ctx.model_for("evaluator"),
        shim=shim,
        timeout=config.timeout,
        kill_grace=config.kill_grace,
    )
    predicates = graph.predicate_inventory()
    log: list[EventLogEntry] = []
    snapshots: list[dict[str, str]] = []
    started = time.monotonic()

    def aborted(reason: str, **partial) -> TrainingRunRecord:
        return TrainingRunRecord(
            restart_index=restart_index,
            seed=seed,
            iterations_used=partial.get("iterations_used", 0),
            final_report=partial.get("report"),
            program=partial.get("program"),
            design=partial.get("design"),
            tests=tuple(partial.get("tests", ())),
            converged=False,
            event_log=tuple(log),
            program_snapshots=tuple(snapshots),
            aborted=True,
            abort_reason=reason,
        )

    # -- unit tests: generated once per run, before the loop, then frozen
    try:
        if config.external_tests is not None:
            tests: Sequence[ag.UnitTest] = config.external_tests
            log.append(
                EventLogEntry(0, "test_engineer", "load_external_tests", _short_hash(str(len(tests))))
            )
        else:
            examples = kgmod.predicates_with_examples(graph, seed)
            generation = ag.te_generate_tests(
                ctx,
                graph,
                examples,
                batch_size=config.batch_size,
                min_per_predicate=config.min_per_predicate,
                rng_seed=seed,
                max_rounds=config.te_round_cap,
            )
            tests = generation.tests
            log.append(
                EventLogEntry(
                    0,
                    "test_engineer",
                    f"generate_tests:{len(tests)}:rounds={generation.rounds}"
                    f":discarded={generation.discarded}",
                    _short_hash("\n".join(t.test_id + prompts.format_triples(t.input.triples) for t in tests)),
                )
            )

        # -- design
        if config.static_design is not None:
            design = config.static_design
            log.append(EventLogEntry(0, "architect", "static_design", _short_hash(ag.design_to_text(design))))
        else:
            design = ag.sa_design(ctx, predicates)
            log.append(EventLogEntry(0, "architect", "design", _short_hash(ag.design_to_text(design))))

        # -- first implementation, in design order
        sources: dict[str, str] = {}
        for func in design.functions:
            code = ag.se_implement(
                ctx, func, design, assemble_partial(design, sources), predicates
            )
            sources[func.name] = code
            log.append(EventLogEntry(0, "engineer", f"implement:{func.name}", _short_hash(code)))
        program = assemble(design, sources)
        snapshots.append(dict(sources))
    except (ag.AgentError, GatewayError) as exc:
        return aborted(f"{type(exc).__name__}: {exc}")

    # -- evaluate / analyze / revise
    report: EvalReport | None = None
    iterations_used = 0
    converged = False
    for iteration in range(1, config.max_iterations + 1):
        if (
            config.max_wall_seconds is not None
            and time.monotonic() - started > config.max_wall_seconds
        ):
            break
        iterations_used = iteration
        report = evaluator.evaluate(
            program, tests, failure_budget=config.failure_budget, workers=config.workers
        )
        log.append(
            EventLogEntry(
                iteration,
                "evaluator",
                f"evaluate:passed={report.passed_count}:failed={report.failed_count}",
                _short_hash(program.source),
            )
        )
        if on_iteration is not None:
            on_iteration(iteration, program, report)
        if report.failed_count == 0 and not report.early_stopped:
            converged = True
            break
        if iteration == config.max_iterations:
            break

        try:
            decision = ag.ca_analyze(ctx, design, program, report, predicates)
            if config.static_design is not None and decision.kind == "redesign":
                # static-design mode cannot redesign; fall back to refactoring everything
                decision = ag.AnalystDecision(
                    kind="refactor",
                    functions_to_fix=tuple(f.name for f in design.functions),
                    feedback=decision.feedback + "\n[static design: coerced to refactor-all]",
                )
            log.append(
                EventLogEntry(
                    iteration,
                    "analyst",
                    decision.kind
                    + (":" + ",".join(decision.functions_to_fix) if decision.functions_to_fix else ""),
                    _short_hash(decision.feedback),
                )
            )
            if decision.kind == "redesign":
                design = ag.sa_design(
                    ctx, predicates, prior_design=design, feedback=decision.feedback, failures=report
                )
                log.append(EventLogEntry(iteration, "architect", "design", _short_hash(ag.design_to_text(design))))
                sources = {}
                for func in design.functions:
                    code = ag.se_implement(
                        ctx, func, design, assemble_partial(design, sources), predicates
                    )
                    sources[func.name] = code
                    log.append(
                        EventLogEntry(iteration, "engineer", f"implement:{func.name}", _short_hash(code))
                    )
            else:
                for name in decision.functions_to_fix:
                    func = design.function(name)
                    code = ag.se_implement(
                        ctx,
                        func,
                        design,
                        assemble_partial(design, sources),
                        predicates,
                        failures=report,
                        analyst_feedback=decision.feedback,
                    )
                    sources[name] = code
                    log.append(
                        EventLogEntry(iteration, "engineer", f"reimplement:{name}", _short_hash(code))
                    )
            program = assemble(design, sources)
            snapshots.append(dict(sources))
        except (ag.AgentError, GatewayError) as exc:
            return aborted(
                f"{type(exc).__name__}: {exc}",
                iterations_used=iterations_used,
                report=report,
                program=program,
                design=design,
                tests=tests,
            )

    return TrainingRunRecord(
        restart_index=restart_index,
        seed=seed,
        iterations_used=iterations_used,
        final_report=report,
        program=program,
        design=design,
        tests=tuple(tests),
        converged=converged,
        event_log=tuple(log),
        program_snapshots=tuple(snapshots),
    )


def _better(a: TrainingRunRecord, b: TrainingRunRecord) -> bool:
    """True when `b` strictly beats `a` under the selection rule."""
    if b.passed_count != a.passed_count:
        return b.passed_count > a.passed_count
    if b.iterations_used != a.iterations_used:
        return b.iterations_used < a.iterations_used
    len_a = len(a.program.source) if a.program else 1 << 30
    len_b = len(b.program.source) if b.program else 1 << 30
    return len_b < len_a


def select_best(records: Sequence[TrainingRunRecord]) -> TrainingRunRecord:
    """Most tests passed; ties go to fewer iterations, then shorter source,
    then the earliest restart (stable)."""
    best = records[0]
    for record in records[1:]:
        if _better(best, record):
            best = record
    return best


def train(
    graph: kgmod.KnowledgeGraph, config: TrainingConfig, gateway: Gateway
) -> tuple[TrainingRunRecord, list[TrainingRunRecord]]:
    """Run `restarts` independent training runs and select the best program."""
    records: list[TrainingRunRecord] = []
    for k in range(config.restarts):
        records.append(train_once(graph, config, gateway, restart_index=k))
    if all(r.aborted for r in records):
        raise TrainingError("all restarts aborted", records)
    return select_best(records), records


def export_program(record: TrainingRunRecord, path: str | Path, config: TrainingConfig) -> Path:
    """Write the assembled source plus a JSON sidecar (``<path>.json``)."""
    if record.program is None:
        raise ValueError("record has no program to export")
    path = Path(path)
    path.write_text(record.program.source, encoding="utf-8")
    sidecar = {
        "design": record.design.to_json_obj() if record.design else None,
        "function_sources": record.program.function_sources,
        "entry_point": record.program.entry_point,
        "generation_language_tag": record.program.generation_language_tag,
        "program_sha256": record.program.sha256(),
        "converged": record.converged,
        "iterations_used": record.iterations_used,
        "restart_index": record.restart_index,
        "seed": record.seed,
        "tests_total": record.final_report.tests_total if record.final_report else 0,
        "passed_count": record.final_report.passed_count if record.final_report else 0,
        "failed_count": record.final_report.failed_count if record.final_report else 0,
        "config_digest": config.digest(),
        "event_log": [
            {"iteration": e.iteration, "agent": e.agent, "action": e.action, "artifact_hash": e.artifact_hash}
            for e in record.event_log
        ],
    }
    sidecar_path = Path(str(path) + ".json")
    sidecar_path.write_text(
        json.dumps(sidecar, indent=2, ensure_ascii=False, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return sidecar_path


def load_exported(path: str | Path) -> CandidateProgram:
    """Re-import an exported program; source bytes come straight from the file."""
    path = Path(path)
    source = path.read_text(encoding="utf-8")
    sidecar = json.loads(Path(str(path) + ".json").read_text(encoding="utf-8"))
    return CandidateProgram(
        source=source,
        function_sources=dict(sidecar["function_sources"]),
        entry_point=sidecar["entry_point"],
        generation_language_tag=sidecar["generation_language_tag"],
    )


def event_log_text(record: TrainingRunRecord) -> str:
    """Human-readable event log for audit files."""
    lines = [
        f"restart={record.restart_index} seed={record.seed} "
        f"converged={record.converged} iterations={record.iterations_used}"
    ]
    for e in record.event_log:
        lines.append(f"  it{e.iteration:02d} {e.agent:<14} {e.action} [{e.artifact_hash}]")
    return "\n".join(lines) + "\n"


def save_eval_report(record: TrainingRunRecord, path: str | Path) -> None:
    if record.final_report is None or record.program is None:
        raise ValueError("record has no report to save")
    obj = report_to_json_obj(record.final_report, record.program.sha256())
    Path(path).write_text(json.dumps(obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
