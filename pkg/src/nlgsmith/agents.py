"""The four code-writing agents: test engineer, architect, engineer, analyst.

Each agent call is single-shot: render the template, send it through the
gateway, parse the reply. The architect and analyst use structured outputs
(JSON schemas bundled under ``schemas/``); the test engineer's examples and
the engineer's code come back as plain text and are parsed defensively.
"""

from __future__ import annotations

import ast
import json
import re
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Sequence, TYPE_CHECKING

from .gateway import ChatRequest, Gateway
from .kg import KnowledgeGraph, RDFTriple, TripleSet
from . import prompts

if TYPE_CHECKING:  # pragma: no cover
    from .evaluator import EvalReport
    from .sandbox import CandidateProgram

ENTRY_POINT = prompts.ENTRY_POINT

#: role names used to pick a model per agent
ROLES = ("test_engineer", "architect", "engineer", "analyst", "evaluator")


class AgentError(Exception):
    """Base class for unrecoverable agent failures."""


class DesignInvariantError(AgentError):
    """The architect never produced a design containing the entry point."""


class NameMismatchError(AgentError):
    """The engineer's code does not define the requested function."""


class CoverageError(AgentError):
    """Test generation hit the round cap with uncovered predicates."""

    def __init__(self, uncovered: Sequence[str]):
        super().__init__(f"predicates not covered after round cap: {', '.join(uncovered)}")
        self.uncovered = tuple(uncovered)


@dataclass(frozen=True, slots=True)
class UnitTest:
    """One evaluation atom: a triple-set input, optionally with a pseudo-reference.

    The pseudo-reference improves the plausibility of generated inputs but is
    never consulted by scoring or by any training decision.
    """

    test_id: str
    input: TripleSet
    pseudo_reference: str | None = None


@dataclass(frozen=True, slots=True)
class FunctionSpec:
    name: str
    signature: str
    description: str
    inputs: str = ""
    outputs: str = ""

    def __post_init__(self) -> None:
        if not self.name.isidentifier():
            raise ValueError(f"function name {self.name!r} is not a valid identifier")


@dataclass(frozen=True, slots=True)
class SystemDesign:
    architecture_notes: str
    functions: tuple[FunctionSpec, ...]

    def __post_init__(self) -> None:
        names = [f.name for f in self.functions]
        if len(set(names)) != len(names):
            raise ValueError("duplicate function names in design")
        if ENTRY_POINT not in names:
            raise ValueError(f"design is missing the {ENTRY_POINT!r} entry point")

    def function(self, name: str) -> FunctionSpec:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    def to_json_obj(self) -> dict:
        return {
            "architecture_notes": self.architecture_notes,
            "functions": [
                {
                    "name": f.name,
                    "signature": f.signature,
                    "description": f.description,
                    "inputs": f.inputs,
                    "outputs": f.outputs,
                }
                for f in self.functions
            ],
        }


@dataclass(frozen=True, slots=True)
class AnalystDecision:
    kind: str  # redesign | refactor
    functions_to_fix: tuple[str, ...]
    feedback: str

    def __post_init__(self) -> None:
        if self.kind not in ("redesign", "refactor"):
            raise ValueError(f"unknown decision kind {self.kind!r}")
        if self.kind == "refactor" and not self.functions_to_fix:
            raise ValueError("refactor decision must name functions")
        if self.kind == "redesign" and self.functions_to_fix:
            raise ValueError("redesign decision must not name functions")


@dataclass(frozen=True)
class AgentContext:
    """Gateway plus per-role model selection shared by all agent calls."""

    gateway: Gateway
    model_roles: Mapping[str, str]
    temperature: float = 0.0
    max_tokens: int = 4096

    def model_for(self, role: str) -> str:
        try:
            return self.model_roles[role]
        except KeyError:
            raise KeyError(f"no model configured for role {role!r}") from None

    def ask(self, role: str, user_prompt: str, response_schema: str | None = None):
        request = ChatRequest(
            system_prompt="",
            user_prompt=user_prompt,
            model_id=self.model_for(role),
            response_schema=response_schema,
            temperature=self.temperature,
            max_tokens=self.max_tokens,
        )
        return self.gateway.complete(request)


def _schema_text(name: str) -> str:
    return resources.files("nlgsmith").joinpath("schemas", name).read_text(encoding="utf-8")


SYSTEM_DESIGN_SCHEMA = _schema_text("system_design.schema.json")
ANALYST_DECISION_SCHEMA = _schema_text("analyst_decision.schema.json")


def design_to_text(design: SystemDesign) -> str:
    """Human/LLM-readable rendering of a design for the {design}/{idea} slots."""
    lines = [design.architecture_notes, "", "Functions:"]
    for f in design.functions:
        lines.append(f"- {f.signature}")
        lines.append(f"  Purpose: {f.description}")
        if f.inputs:
            lines.append(f"  Inputs: {f.inputs}")
        if f.outputs:
            lines.append(f"  Outputs: {f.outputs}")
    return "\n".join(lines)


def format_failures(report: EvalReport) -> str:
    """Failure details for the {errors} slots, one block per failed test."""
    blocks = []
    for outcome in report.outcomes:
        if outcome.status != "fail":
            continue
        lines = [f"- Test {outcome.test_id}"]
        if outcome.input is not None:
            lines.append(f"  Input: {prompts.format_triples(outcome.input.triples)}")
        lines.append(f"  Failure: {outcome.failure_kind}")
        if outcome.system_output is not None:
            lines.append(f"  System output: {outcome.system_output}")
        if outcome.detail:
            lines.append(f"  Detail: {outcome.detail}")
        blocks.append("\n".join(lines))
    return "\n".join(blocks)


def failures_with_feedback(report: EvalReport | None, feedback: str | None) -> str | None:
    """Compose the {errors} value; analyst feedback rides along in the same slot."""
    parts = []
    if report is not None:
        parts.append(format_failures(report))
    if feedback:
        parts.append(f"Feedback from the code analyst:\n{feedback}")
    return "\n\n".join(parts) if parts else None


# ---------------------------------------------------------------------------
# Test Engineer


@dataclass(frozen=True, slots=True)
class TestGeneration:
    """te_generate_tests output plus bookkeeping for diagnostics."""

    tests: tuple[UnitTest, ...]
    rounds: int
    discarded: int
    unparsable: int
    fallback_predicates: tuple[str, ...] = ()


_EXAMPLE_RE = re.compile(
    r"Input:\s*(\[.*?\])\s*\n\s*Output:\s*(.*?)(?=\n\s*Input:|\Z)", re.DOTALL
)


def _triple_from_call(node: ast.expr) -> RDFTriple | None:
    if not (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)):
        return None
    if node.func.id != "RDFTriple":
        return None
    fields: dict[str, str] = {}
    for pos, arg in zip(("subject", "predicate", "object"), node.args):
        if isinstance(arg, ast.Constant) and isinstance(arg.value, str):
            fields[pos] = arg.value
    for kw in node.keywords:
        if (
            kw.arg in ("subject", "predicate", "object")
            and isinstance(kw.value, ast.Constant)
            and isinstance(kw.value.value, str)
        ):
            fields[kw.arg] = kw.value.value
    if set(fields) != {"subject", "predicate", "object"}:
        return None
    try:
        return RDFTriple(**fields)
    except ValueError:
        return None


def parse_te_examples(text: str) -> tuple[list[tuple[list[RDFTriple], str]], int]:
    """Parse Input/Output example pairs from a test-engineer reply.

    Returns (examples, unparsable_count). Inputs are parsed as Python-style
    ``RDFTriple(...)`` constructor lists via the AST — nothing is executed.
    """
    examples: list[tuple[list[RDFTriple], str]] = []
    unparsable = 0
    for match in _EXAMPLE_RE.finditer(text):
        list_src, output = match.group(1), match.group(2).strip()
        try:
            node = ast.parse(list_src, mode="eval").body
        except SyntaxError:
            unparsable += 1
            continue
        if not isinstance(node, ast.List):
            unparsable += 1
            continue
        triples = [_triple_from_call(elt) for elt in node.elts]
        if not triples or any(t is None for t in triples):
            unparsable += 1
            continue
        if len(output) >= 2 and output[0] == output[-1] and output[0] in "'\"":
            output = output[1:-1]
        examples.append(([t for t in triples if t is not None], output))
    return examples, unparsable


def te_generate_tests(
    ctx: AgentContext,
    graph: KnowledgeGraph,
    examples: Mapping[str, RDFTriple],
    batch_size: int = 50,
    min_per_predicate: int = 3,
    rng_seed: int = 0,
    max_rounds: int = 20,
    fallback: bool = True,
) -> TestGeneration:
    """Request example batches until every predicate is covered enough.

    Examples whose inputs mention predicates outside the graph inventory are
    discarded; exact-duplicate inputs are dropped. If the round cap is hit
    with uncovered predicates, either synthesize one-triple fallback tests
    from the graph (default) or raise CoverageError.
    """
    import random

    inventory = graph.predicate_inventory()
    allowed = set(inventory)
    coverage: dict[str, int] = {p: 0 for p in inventory}
    tests: list[UnitTest] = []
    seen_inputs: set[tuple[RDFTriple, ...]] = set()
    discarded = unparsable = 0
    rounds = 0

    def covered() -> bool:
        return all(coverage[p] >= min_per_predicate for p in inventory)

    while not covered() and rounds < max_rounds:
        rounds += 1
        prompt = prompts.render_test_engineer(inventory, examples, batch_size)
        response = ctx.ask("test_engineer", prompt)
        parsed, bad = parse_te_examples(response.text)
        unparsable += bad
        for triples, output in parsed:
            if any(t.predicate not in allowed for t in triples):
                discarded += 1
                continue
            key = tuple(triples)
            if key in seen_inputs:
                discarded += 1
                continue
            seen_inputs.add(key)
            test_id = f"t{len(tests):04d}"
            tests.append(
                UnitTest(
                    test_id=test_id,
                    input=TripleSet(tuple(triples), instance_id=test_id),
                    pseudo_reference=output or None,
                )
            )
            for p in {t.predicate for t in triples}:
                coverage[p] += 1

    fallback_used: list[str] = []
    if not covered():
        uncovered = [p for p in inventory if coverage[p] < min_per_predicate]
        if not fallback:
            raise CoverageError(uncovered)
        rng = random.Random(rng_seed)
        for p in uncovered:
            candidates = [t for t in graph.triples if t.predicate == p]
            while coverage[p] < min_per_predicate:
                triple = rng.choice(candidates)
                test_id = f"t{len(tests):04d}"
                tests.append(
                    UnitTest(test_id=test_id, input=TripleSet((triple,), instance_id=test_id))
                )
                coverage[p] += 1
            fallback_used.append(p)

    return TestGeneration(
        tests=tuple(tests),
        rounds=rounds,
        discarded=discarded,
        unparsable=unparsable,
        fallback_predicates=tuple(fallback_used),
    )


def save_unit_tests(tests: Sequence[UnitTest], path) -> None:
    """Write tests as JSON Lines (the external-test-set input format)."""
    from pathlib import Path

    lines = []
    for t in tests:
        obj: dict = {"test_id": t.test_id, "triples": [tr.as_list() for tr in t.input.triples]}
        if t.pseudo_reference is not None:
            obj["pseudo_reference"] = t.pseudo_reference
        lines.append(json.dumps(obj, ensure_ascii=False))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_unit_tests(path) -> list[UnitTest]:
    from pathlib import Path

    tests = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        obj = json.loads(line)
        test_id = obj.get("test_id") or f"t{i - 1:04d}"
        triples = tuple(RDFTriple(*item) for item in obj["triples"])
        tests.append(
            UnitTest(
                test_id=test_id,
                input=TripleSet(triples, instance_id=test_id),
                pseudo_reference=obj.get("pseudo_reference"),
            )
        )
    return tests


# ---------------------------------------------------------------------------
# Software Architect

_RETRY_NOTE = (
    "\n\nYour previous design did not include the mandatory "
    "`verbalize_set_of_triples(triples)` function. It must be present."
)


def _design_from_obj(obj: dict) -> SystemDesign:
    functions = tuple(
        FunctionSpec(
            name=f["name"],
            signature=f["signature"],
            description=f["description"],
            inputs=f.get("inputs", ""),
            outputs=f.get("outputs", ""),
        )
        for f in obj["functions"]
    )
    return SystemDesign(architecture_notes=obj["architecture_notes"], functions=functions)


def sa_design(
    ctx: AgentContext,
    predicates: Sequence[str],
    prior_design: SystemDesign | None = None,
    feedback: str | None = None,
    failures: EvalReport | None = None,
    full_retries: int = 3,
) -> SystemDesign:
    """Ask the architect for a design; enforce the entry-point invariant."""
    prompt = prompts.render_architect(
        predicates,
        prior_design_text=design_to_text(prior_design) if prior_design else None,
        num_passed=failures.passed_count if failures is not None else 0,
        failures_text=failures_with_feedback(failures, feedback),
    )
    last_error = "no attempt made"
    for attempt in range(full_retries):
        response = ctx.ask("architect", prompt, response_schema=SYSTEM_DESIGN_SCHEMA)
        try:
            return _design_from_obj(response.parsed)
        except (ValueError, KeyError, TypeError) as exc:
            last_error = str(exc)
            prompt = prompt + _RETRY_NOTE
    raise DesignInvariantError(
        f"architect produced no valid design after {full_retries} attempts: {last_error}"
    )


# ---------------------------------------------------------------------------
# Software Engineer

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_+-]*\n(.*?)```", re.DOTALL)
_CODE_START_RE = re.compile(r"^(def |class |import |from |@|#)")


def extract_code(text: str) -> str:
    """Strip code fences and leading prose; the code body is kept byte-exact."""
    m = _FENCE_RE.search(text)
    if m:
        return m.group(1)
    lines = text.split("\n")
    for i, line in enumerate(lines):
        if _CODE_START_RE.match(line):
            return "\n".join(lines[i:])
    return text


def _defines(source: str, name: str) -> bool:
    try:
        tree = ast.parse(source)
    except SyntaxError:
        return False
    return any(
        isinstance(n, (ast.FunctionDef, ast.AsyncFunctionDef)) and n.name == name
        for n in tree.body
    )


_SE_RETRY_NOTE = (
    "\n\nYour previous reply did not contain a definition of `{name}`. "
    "Output only the code of the `{name}` function."
)


def se_implement(
    ctx: AgentContext,
    func: FunctionSpec,
    design: SystemDesign,
    program_so_far: str,
    predicates: Sequence[str],
    failures: EvalReport | None = None,
    analyst_feedback: str | None = None,
) -> str:
    """Ask the engineer for exactly one function's source."""
    try:
        known = design.function(func.name)
    except KeyError:
        known = None
    if known != func:
        raise ValueError(f"{func.name!r} is not part of the given design")
    prompt = prompts.render_engineer(
        func_name=func.name,
        predicates=predicates,
        program_so_far=program_so_far,
        design_text=design_to_text(design),
        num_passed=failures.passed_count if failures is not None else 0,
        failures_text=failures_with_feedback(failures, analyst_feedback),
    )
    for attempt in range(2):
        response = ctx.ask("engineer", prompt)
        if not response.text.strip():
            prompt = prompt + _SE_RETRY_NOTE.format(name=func.name)
            continue
        code = extract_code(response.text)
        if _defines(code, func.name):
            return code
        prompt = prompt + _SE_RETRY_NOTE.format(name=func.name)
    raise NameMismatchError(
        f"engineer reply does not define {func.name!r} after one retry"
    )


# ---------------------------------------------------------------------------
# Code Analyst

_CA_RETRY_NOTE = (
    "\n\nYour previous answer named functions that do not exist in the design. "
    "Name only functions from the design, or choose a redesign."
)


def ca_analyze(
    ctx: AgentContext,
    design: SystemDesign,
    program: CandidateProgram,
    report: EvalReport,
    predicates: Sequence[str],
) -> AnalystDecision:
    """Ask the analyst to route between redesign and targeted refactoring."""
    if report.failed_count < 1:
        raise ValueError("analyst needs at least one failure to analyze")
    prompt = prompts.render_analyst(
        predicates=predicates,
        design_text=design_to_text(design),
        program=program.source,
        num_passed=report.passed_count,
        failures_text=format_failures(report),
    )
    known = {f.name for f in design.functions}
    for attempt in range(2):
        response = ctx.ask("analyst", prompt, response_schema=ANALYST_DECISION_SCHEMA)
        obj = response.parsed
        kind = obj["kind"]
        to_fix = tuple(obj.get("functions_to_fix") or ())
        feedback = obj.get("feedback", "")
        if kind == "redesign":
            return AnalystDecision(kind="redesign", functions_to_fix=(), feedback=feedback)
        if to_fix and all(name in known for name in to_fix):
            return AnalystDecision(kind="refactor", functions_to_fix=to_fix, feedback=feedback)
        prompt = prompt + _CA_RETRY_NOTE
    return AnalystDecision(
        kind="redesign",
        functions_to_fix=(),
        feedback=feedback
        + f"\n[coerced to redesign: refactor did not name valid functions, got {list(to_fix)}]",
    )
