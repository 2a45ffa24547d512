"""Prompt template assets and their rendering.

Templates live under ``templates/`` as plain text with ``{name}``-style
placeholders and are substituted with ``str.format``. Rendered prompts are
golden-file tested, so any change here must be deliberate.

Re-entry sections (prior design, failed tests) are part of the architect and
engineer templates; on a first call those sections are elided by cutting the
lines between fixed marker strings. Everything else is substituted verbatim.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from types import SimpleNamespace
from typing import Iterable, Mapping, Sequence, TYPE_CHECKING

if TYPE_CHECKING:  # pragma: no cover
    from .kg import RDFTriple

ENTRY_POINT = "verbalize_set_of_triples"

#: reference-less judge probes, template file per probe
JUDGE_TEMPLATES = {
    "grammaticality": "judge_grammar.txt",
    "omissions": "judge_omissions.txt",
    "additions": "judge_additions.txt",
}


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return (
        resources.files("nlgsmith").joinpath("templates", name).read_text(encoding="utf-8")
    )


def format_triple(triple: RDFTriple) -> str:
    """Render one triple in the constructor style the templates use."""
    return (
        f"RDFTriple(subject={triple.subject!r}, "
        f"predicate={triple.predicate!r}, object={triple.object!r})"
    )


def format_triples(triples: Iterable[RDFTriple]) -> str:
    return "[" + ", ".join(format_triple(t) for t in triples) + "]"


def format_predicates(predicates: Sequence[str]) -> str:
    return ", ".join(repr(p) for p in predicates)


def format_examples(examples: Mapping[str, RDFTriple]) -> str:
    """One example triple per line, in the mapping's order."""
    return "\n".join(format_triple(t) for t in examples.values())


def _elide(text: str, start_marker: str, end_marker: str) -> str:
    """Drop the lines from start_marker (inclusive) to end_marker (exclusive)."""
    lines = text.split("\n")
    try:
        start = next(i for i, ln in enumerate(lines) if ln.startswith(start_marker))
        end = next(i for i, ln in enumerate(lines) if ln.startswith(end_marker))
    except StopIteration as exc:  # template drifted from the markers
        raise ValueError(f"marker not found: {start_marker!r} / {end_marker!r}") from exc
    return "\n".join(lines[:start] + lines[end:])


_SA_PRIOR = "# Previously, you came up with the following design."
_SA_FINAL = "# Please come up with a new design for the system."
_SE_FAILED = "# This implementation passed {num_test} unit tests, but failed the following:"
_SE_DESIGN = "# The design proposed by software architect is as follows."


def render_architect(
    predicates: Sequence[str],
    prior_design_text: str | None = None,
    num_passed: int = 0,
    failures_text: str | None = None,
) -> str:
    """Fill the architect template; first calls elide the re-entry sections."""
    template = load_template("architect.txt")
    if prior_design_text is None:
        template = _elide(template, _SA_PRIOR, _SA_FINAL)
        return template.format(possible_predicates=format_predicates(predicates))
    return template.format(
        possible_predicates=format_predicates(predicates),
        design=prior_design_text,
        num_test=num_passed,
        errors=failures_text or "",
    )


def render_engineer(
    func_name: str,
    predicates: Sequence[str],
    program_so_far: str,
    design_text: str,
    num_passed: int = 0,
    failures_text: str | None = None,
) -> str:
    """Fill the engineer template; without failures the failed-tests section is elided."""
    template = load_template("engineer.txt")
    if failures_text is None:
        template = _elide(template, _SE_FAILED, _SE_DESIGN)
        return template.format(
            possible_predicates=format_predicates(predicates),
            program=program_so_far,
            idea=design_text,
            func_name=func_name,
        )
    return template.format(
        possible_predicates=format_predicates(predicates),
        program=program_so_far,
        num_test=num_passed,
        errors=failures_text,
        idea=design_text,
        func_name=func_name,
    )


def render_analyst(
    predicates: Sequence[str],
    design_text: str,
    program: str,
    num_passed: int,
    failures_text: str,
) -> str:
    return load_template("analyst.txt").format(
        possible_predicates=format_predicates(predicates),
        idea=design_text,
        program=program,
        num_test=num_passed,
        errors=failures_text,
    )


def render_test_engineer(
    predicates: Sequence[str],
    examples: Mapping[str, RDFTriple],
    examples_per_request: int,
) -> str:
    return load_template("test_engineer.txt").format(
        predicates=format_predicates(predicates),
        examples=format_examples(examples),
        examples_per_request=examples_per_request,
    )


def render_output_judge(triples: Iterable[RDFTriple], output: str) -> str:
    sample = SimpleNamespace(data=format_triples(triples))
    return load_template("output_judge.txt").format(sample=sample, output=output)


def render_reference_less_judge(
    probe: str, triples: Iterable[RDFTriple], output: str
) -> str:
    """Fill one of the three reference-less judge templates.

    The grammaticality probe deliberately sees only the system output.
    """
    if probe not in JUDGE_TEMPLATES:
        raise ValueError(f"unknown probe {probe!r}")
    template = load_template(JUDGE_TEMPLATES[probe])
    if probe == "grammaticality":
        return template.format(output=output)
    return template.format(sample=format_triples(triples), output=output)
