from __future__ import annotations

from types import SimpleNamespace

import pytest

from conftest import GOLDEN

from golden_cases import (
    CHOPIN,
    EXAMPLES,
    TOY_PREDICATES,
    _failing_report,
    _toy_design_text,
    cases,
)

from nlgsmith import prompts
from nlgsmith.agents import format_failures


@pytest.mark.parametrize("name,rendered", cases(), ids=lambda c: c if isinstance(c, str) else "")
def test_rendered_prompt_matches_golden(name, rendered):
    golden_path = GOLDEN / f"{name}.txt"
    assert golden_path.exists(), f"golden file missing; run tests/make_goldens.py ({name})"
    assert rendered == golden_path.read_text(encoding="utf-8")


class TestFullTemplateSubstitution:
    """Full renders must equal the raw template with placeholders substituted.

    This is the independent oracle: plain str.format on the asset text, with
    no elision logic in the loop.
    """

    def test_architect_reentry_is_pure_substitution(self):
        report = _failing_report()
        template = prompts.load_template("architect.txt")
        expected = template.format(
            possible_predicates=prompts.format_predicates(TOY_PREDICATES),
            design=_toy_design_text(),
            num_test=report.passed_count,
            errors=format_failures(report),
        )
        rendered = prompts.render_architect(
            TOY_PREDICATES,
            prior_design_text=_toy_design_text(),
            num_passed=report.passed_count,
            failures_text=format_failures(report),
        )
        assert rendered == expected

    def test_engineer_refine_is_pure_substitution(self):
        report = _failing_report()
        template = prompts.load_template("engineer.txt")
        expected = template.format(
            possible_predicates=prompts.format_predicates(TOY_PREDICATES),
            program="PROGRAM",
            num_test=report.passed_count,
            errors=format_failures(report),
            idea="IDEA",
            func_name="realize_group",
        )
        rendered = prompts.render_engineer(
            "realize_group",
            TOY_PREDICATES,
            "PROGRAM",
            "IDEA",
            num_passed=report.passed_count,
            failures_text=format_failures(report),
        )
        assert rendered == expected

    def test_analyst_is_pure_substitution(self):
        template = prompts.load_template("analyst.txt")
        expected = template.format(
            possible_predicates=prompts.format_predicates(TOY_PREDICATES),
            idea="IDEA",
            program="PROGRAM",
            num_test=3,
            errors="ERRORS",
        )
        assert prompts.render_analyst(TOY_PREDICATES, "IDEA", "PROGRAM", 3, "ERRORS") == expected

    def test_test_engineer_is_pure_substitution(self):
        template = prompts.load_template("test_engineer.txt")
        expected = template.format(
            predicates=prompts.format_predicates(TOY_PREDICATES),
            examples=prompts.format_examples(EXAMPLES),
            examples_per_request=50,
        )
        assert prompts.render_test_engineer(TOY_PREDICATES, EXAMPLES, 50) == expected

    def test_output_judge_is_pure_substitution(self):
        template = prompts.load_template("output_judge.txt")
        expected = template.format(
            sample=SimpleNamespace(data=prompts.format_triples(CHOPIN.triples)),
            output="OUT",
        )
        assert prompts.render_output_judge(CHOPIN.triples, "OUT") == expected

    @pytest.mark.parametrize(
        "probe,asset",
        [("additions", "judge_additions.txt"), ("omissions", "judge_omissions.txt")],
    )
    def test_triple_judges_are_pure_substitution(self, probe, asset):
        template = prompts.load_template(asset)
        expected = template.format(
            sample=prompts.format_triples(CHOPIN.triples), output="OUT"
        )
        assert prompts.render_reference_less_judge(probe, CHOPIN.triples, "OUT") == expected

    def test_grammar_judge_sees_only_the_output(self):
        rendered = prompts.render_reference_less_judge(
            "grammaticality", CHOPIN.triples, "Some output."
        )
        assert "Chopin" not in rendered
        assert "Some output." in rendered


class TestElision:
    def test_first_call_architect_drops_reentry_sections(self):
        rendered = prompts.render_architect(TOY_PREDICATES)
        assert "# Previously, you came up with the following design." not in rendered
        assert "failed the following" not in rendered
        assert "# Please come up with a new design for the system." in rendered
        assert "Remember to include `verbalize_set_of_triples(triples)`" in rendered

    def test_first_pass_engineer_drops_failure_section(self):
        rendered = prompts.render_engineer("f", TOY_PREDICATES, "", "IDEA")
        assert "unit tests, but failed the following" not in rendered
        assert "# The design proposed by software architect is as follows." in rendered
        assert "Output only the code of the `f` function." in rendered


class TestFormatting:
    def test_format_triple_uses_constructor_style(self):
        triple = CHOPIN.triples[0]
        assert (
            prompts.format_triple(triple)
            == "RDFTriple(subject='Chopin', predicate='birthplace', object='Poland')"
        )

    def test_format_triple_escapes_quotes(self):
        from nlgsmith.kg import RDFTriple

        triple = RDFTriple("O'Hare", "name", 'the "L"')
        text = prompts.format_triple(triple)
        assert "O'Hare" in repr(triple.subject) or "O\\'Hare" in text
        # round-trips through the agents-side parser
        from nlgsmith.agents import parse_te_examples

        examples, bad = parse_te_examples(f"Input: [{text}]\nOutput: 'x'")
        assert bad == 0
        assert examples[0][0][0] == triple

    def test_unknown_probe_rejected(self):
        with pytest.raises(ValueError):
            prompts.render_reference_less_judge("fluency", CHOPIN.triples, "x")
