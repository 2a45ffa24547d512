"""Shared fixture inputs for the prompt golden-file tests.

Each case is (name, callable) where the callable returns the rendered prompt.
`tests/make_goldens.py` freezes these into tests/fixtures/golden/, and
test_prompts.py compares fresh renders byte-for-byte against the frozen files.
"""

from __future__ import annotations

from nlgsmith import prompts
from nlgsmith.agents import design_to_text, format_failures
from nlgsmith.evaluator import EvalReport, TestOutcome
from nlgsmith.kg import RDFTriple, TripleSet

from fake_llm import DESIGN_OBJ

TOY_PREDICATES = [
    "academic staff size",
    "assembly",
    "birth country",
    "birth year",
    "birthplace",
    "production start year",
]

ALT_PREDICATES = ["country", "main ingredient", "region"]

CHOPIN = TripleSet(
    (
        RDFTriple("Chopin", "birthplace", "Poland"),
        RDFTriple("Chopin", "birth year", "1810"),
    ),
    instance_id="chopin-1",
)
SCHOOL = TripleSet(
    (
        RDFTriple("School of Business", "academic staff size", "737"),
        RDFTriple("School of Business", "birth country", "Denmark"),
    ),
    instance_id="sob-1",
)
PONTIAC = TripleSet(
    (
        RDFTriple("Pontiac Rageous", "assembly", "Michigan"),
        RDFTriple("Pontiac Rageous", "production start year", "1997"),
    ),
    instance_id="pontiac-1",
)

EXAMPLES = {
    "academic staff size": SCHOOL.triples[0],
    "assembly": PONTIAC.triples[0],
    "birth country": SCHOOL.triples[1],
    "birth year": CHOPIN.triples[1],
    "birthplace": CHOPIN.triples[0],
    "production start year": PONTIAC.triples[1],
}


def _toy_design_text() -> str:
    from nlgsmith.agents import FunctionSpec, SystemDesign

    design = SystemDesign(
        architecture_notes=DESIGN_OBJ["architecture_notes"],
        functions=tuple(FunctionSpec(**f) for f in DESIGN_OBJ["functions"]),
    )
    return design_to_text(design)


def _failing_report() -> EvalReport:
    outcomes = (
        TestOutcome(
            test_id="t0002",
            status="fail",
            failure_kind="judged_incorrect",
            system_output="Chopin was born in Poland.",
            input=CHOPIN,
        ),
        TestOutcome(
            test_id="t0005",
            status="fail",
            failure_kind="runtime_error",
            detail="KeyError: 'assembly'",
            input=PONTIAC,
        ),
        TestOutcome(test_id="t0001", status="pass", system_output="fine.", input=SCHOOL),
    )
    return EvalReport(
        outcomes=outcomes, passed_count=1, failed_count=2, early_stopped=False, tests_total=3
    )


_PROGRAM_SNIPPET = (
    "class NLGSystem:\n"
    "    def verbalize_set_of_triples(self, triples):\n"
    '        return " ".join(t.object for t in triples)\n'
)


def cases() -> list[tuple[str, str]]:
    report = _failing_report()
    failures = format_failures(report)
    design_text = _toy_design_text()
    out = []

    out.append(("architect_first", prompts.render_architect(TOY_PREDICATES)))
    out.append(("architect_first_alt", prompts.render_architect(ALT_PREDICATES)))
    out.append(
        (
            "architect_reentry",
            prompts.render_architect(
                TOY_PREDICATES,
                prior_design_text=design_text,
                num_passed=report.passed_count,
                failures_text=failures,
            ),
        )
    )

    out.append(
        (
            "engineer_first",
            prompts.render_engineer(
                "verbalize_set_of_triples", TOY_PREDICATES, "", design_text
            ),
        )
    )
    out.append(
        (
            "engineer_midbuild",
            prompts.render_engineer(
                "realize_group", TOY_PREDICATES, _PROGRAM_SNIPPET, design_text
            ),
        )
    )
    out.append(
        (
            "engineer_refine",
            prompts.render_engineer(
                "realize_group",
                TOY_PREDICATES,
                _PROGRAM_SNIPPET,
                design_text,
                num_passed=report.passed_count,
                failures_text=failures,
            ),
        )
    )

    out.append(
        (
            "analyst_two_failures",
            prompts.render_analyst(TOY_PREDICATES, design_text, _PROGRAM_SNIPPET, 1, failures),
        )
    )
    out.append(
        (
            "analyst_one_failure",
            prompts.render_analyst(
                ALT_PREDICATES,
                design_text,
                _PROGRAM_SNIPPET,
                17,
                format_failures(
                    EvalReport(
                        outcomes=(report.outcomes[0],),
                        passed_count=17,
                        failed_count=1,
                        early_stopped=True,
                        tests_total=48,
                    )
                ),
            ),
        )
    )
    out.append(
        (
            "analyst_alt_program",
            prompts.render_analyst(
                TOY_PREDICATES, design_text, _PROGRAM_SNIPPET + "\n# revision 2\n", 30, failures
            ),
        )
    )

    out.append(("test_engineer_50", prompts.render_test_engineer(TOY_PREDICATES, EXAMPLES, 50)))
    out.append(("test_engineer_10", prompts.render_test_engineer(TOY_PREDICATES, EXAMPLES, 10)))
    out.append(
        (
            "test_engineer_alt",
            prompts.render_test_engineer(
                ALT_PREDICATES,
                {
                    "country": RDFTriple("Bacon Explosion", "country", "United States"),
                    "main ingredient": RDFTriple("Bacon Explosion", "main ingredient", "Bacon"),
                    "region": RDFTriple("Ajoblanco", "region", "Andalusia"),
                },
                50,
            ),
        )
    )

    out.append(
        ("output_judge_chopin", prompts.render_output_judge(CHOPIN.triples, "Chopin was born in 1810 in Poland."))
    )
    out.append(
        (
            "output_judge_school",
            prompts.render_output_judge(
                SCHOOL.triples,
                "Denmark's School of Business has an academic staff size of 737 people.",
            ),
        )
    )
    out.append(
        ("output_judge_partial", prompts.render_output_judge(PONTIAC.triples, "Pontiac Rageous."))
    )

    for probe, tag in (("grammaticality", "gram"), ("additions", "add"), ("omissions", "om")):
        out.append(
            (
                f"judge_{tag}_chopin",
                prompts.render_reference_less_judge(
                    probe, CHOPIN.triples, "Chopin was born in 1810 in Poland."
                ),
            )
        )
        out.append(
            (
                f"judge_{tag}_school",
                prompts.render_reference_less_judge(
                    probe,
                    SCHOOL.triples,
                    "Denmark's School of Business has an academic staff size of 737 people.",
                ),
            )
        )
        out.append(
            (
                f"judge_{tag}_short",
                prompts.render_reference_less_judge(probe, PONTIAC.triples, "A car"),
            )
        )
    return out
