"""Run a candidate program over unit tests and judge the outputs.

Sandbox failures (errors, timeouts, protocol breaches) count as failures
directly; successful outputs are judged correct/incorrect by the judge
model. Evaluation stops as soon as the failure budget (default five) is
reached: tests beyond the stopping point are never started and never judged.

Failure accounting runs strictly in test order even when sandbox runs are
prefetched in parallel, so serial and parallel evaluation agree on every
recorded outcome.
"""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, TYPE_CHECKING

from .gateway import ChatRequest, Gateway, GatewayError
from .kg import TripleSet
from .sandbox import CandidateProgram, ShimConfig, run_once
from . import prompts

if TYPE_CHECKING:  # pragma: no cover
    from .agents import UnitTest

FAILURE_KINDS = ("runtime_error", "timeout", "protocol_error", "judged_incorrect")


@dataclass(frozen=True, slots=True)
class TestOutcome:
    test_id: str
    status: str  # pass | fail
    failure_kind: str | None = None
    system_output: str | None = None
    detail: str | None = None
    input: TripleSet | None = None

    def __post_init__(self) -> None:
        if (self.status == "fail") != (self.failure_kind is not None):
            raise ValueError("failure_kind must be present exactly when status is fail")


@dataclass(frozen=True, slots=True)
class EvalReport:
    outcomes: tuple[TestOutcome, ...]
    passed_count: int
    failed_count: int
    early_stopped: bool
    tests_total: int


@dataclass(frozen=True, slots=True)
class JudgeResult:
    correct: bool
    diagnostic: str | None = None


_VERDICT_RE = re.compile(r"[a-z]+")


def parse_verdict(reply: str) -> str | None:
    """First-token match of correct/incorrect, case-insensitive, punctuation-tolerant."""
    m = _VERDICT_RE.search(reply.strip().lower())
    if m and m.group(0) in ("correct", "incorrect"):
        return m.group(0)
    return None


_JUDGE_REASK = "\n\nYou must answer strictly with 'correct' or 'incorrect'."


def judge_output(
    gateway: Gateway,
    model_id: str,
    input: TripleSet,
    output_text: str,
    temperature: float = 0.0,
    max_tokens: int = 16,
) -> JudgeResult:
    """Yes/no verdict on whether the output verbalizes the input correctly.

    Transport or parse problems never surface as exceptions: the fallback is
    an incorrect verdict carrying a diagnostic.
    """
    if not output_text:
        raise ValueError("judge_output needs a non-empty output")
    prompt = prompts.render_output_judge(input.triples, output_text)
    for attempt in range(2):
        request = ChatRequest(
            system_prompt="",
            user_prompt=prompt if attempt == 0 else prompt + _JUDGE_REASK,
            model_id=model_id,
            temperature=temperature,
            max_tokens=max_tokens,
        )
        try:
            reply = gateway.complete(request).text
        except GatewayError as exc:
            return JudgeResult(correct=False, diagnostic=f"judge transport failure: {exc}")
        verdict = parse_verdict(reply)
        if verdict is not None:
            return JudgeResult(correct=verdict == "correct")
    return JudgeResult(correct=False, diagnostic=f"unparsable judge reply: {reply!r}")


@dataclass(frozen=True)
class Evaluator:
    """Bundles the judge gateway and sandbox settings behind evaluate()."""

    gateway: Gateway
    judge_model: str
    shim: ShimConfig
    timeout: float = 10.0
    kill_grace: float = 1.0

    def evaluate(
        self,
        program: CandidateProgram,
        tests: Sequence[UnitTest],
        failure_budget: int = 5,
        workers: int = 1,
    ) -> EvalReport:
        """Run tests in order, stopping once the failure budget is reached."""
        if not tests:
            raise ValueError("evaluate needs at least one test")
        if failure_budget <= 0 or workers <= 0:
            raise ValueError("failure_budget and workers must be positive")

        outcomes: list[TestOutcome] = []
        passed = failed = 0
        early = False
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(run_once, program, t.input, self.timeout, self.shim, self.kill_grace)
                for t in tests[: workers]
            ]
            next_submit = len(futures)
            for i, test in enumerate(tests):
                if i >= len(futures):
                    break  # early stop cancelled the rest
                run = futures[i].result()
                outcome = self._outcome_for(test, run)
                outcomes.append(outcome)
                if outcome.status == "pass":
                    passed += 1
                else:
                    failed += 1
                if failed >= failure_budget:
                    early = i < len(tests) - 1
                    for fut in futures[i + 1 :]:
                        fut.cancel()
                    futures = futures[: i + 1]
                    break
                if next_submit < len(tests):
                    t = tests[next_submit]
                    futures.append(
                        pool.submit(
                            run_once, program, t.input, self.timeout, self.shim, self.kill_grace
                        )
                    )
                    next_submit += 1
        return EvalReport(
            outcomes=tuple(outcomes),
            passed_count=passed,
            failed_count=failed,
            early_stopped=early,
            tests_total=len(tests),
        )

    def _outcome_for(self, test: UnitTest, run) -> TestOutcome:
        if run.status != "ok":
            return TestOutcome(
                test_id=test.test_id,
                status="fail",
                failure_kind=run.status,
                detail=run.stderr_excerpt,
                input=test.input,
            )
        result = judge_output(self.gateway, self.judge_model, test.input, run.output_text)
        if result.correct:
            return TestOutcome(
                test_id=test.test_id,
                status="pass",
                system_output=run.output_text,
                input=test.input,
            )
        return TestOutcome(
            test_id=test.test_id,
            status="fail",
            failure_kind="judged_incorrect",
            system_output=run.output_text,
            detail=result.diagnostic,
            input=test.input,
        )


def report_to_json_obj(report: EvalReport, program_hash: str) -> dict:
    return {
        "program_hash": program_hash,
        "outcomes": [
            {
                "test_id": o.test_id,
                "status": o.status,
                "failure_kind": o.failure_kind,
                "system_output": o.system_output,
                "detail": o.detail,
                "triples": [t.as_list() for t in o.input.triples] if o.input else None,
            }
            for o in report.outcomes
        ],
        "passed_count": report.passed_count,
        "failed_count": report.failed_count,
        "early_stopped": report.early_stopped,
        "tests_total": report.tests_total,
    }


def save_report(report: EvalReport, program_hash: str, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report_to_json_obj(report, program_hash), indent=2, ensure_ascii=False)
        + "\n",
        encoding="utf-8",
    )
