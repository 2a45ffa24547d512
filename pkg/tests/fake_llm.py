"""Deterministic stand-in for the model provider, for tests and fixture recording.

Dispatches on the rendered prompt's opening line to impersonate each role.
Every reply is a pure function of the request, so record/replay transcripts
built on top of it are stable. The simulated engineer first produces a
program whose group realization drops triples (an omission bug) and produces
the fixed version once the prompt carries failure details, which drives the
evaluate → analyze → refactor → converge path end to end.
"""

from __future__ import annotations

import ast
import hashlib
import json
import random
import re

from nlgsmith.gateway import ChatRequest


def _parse_triple_calls(src: str) -> list[dict]:
    """Parse RDFTriple(...) constructor calls out of a prompt snippet."""
    node = ast.parse(src.strip(), mode="eval").body
    elements = node.elts if isinstance(node, ast.List) else [node]
    triples = []
    for elt in elements:
        fields = {}
        for kw in elt.keywords:
            fields[kw.arg] = kw.value.value
        for pos, arg in zip(("subject", "predicate", "object"), elt.args):
            fields[pos] = arg.value
        triples.append(fields)
    return triples


# --- the toy generator program the fake engineer writes -------------------

PHRASE_TABLE = """\
    templates = {
        "birthplace": "was born in {}",
        "birth year": "has the birth year {}",
        "academic staff size": "has an academic staff size of {}",
        "birth country": "has the birth country {}",
        "assembly": "was assembled in {}",
        "production start year": "started production in {}",
    }
"""

REALIZE_BROKEN = """\
def realize_group(self, subject, triples):
    triples = triples[:2]
    phrases = [self.phrase_for_triple(t) for t in triples]
    return subject + " " + ", ".join(phrases) + "."
"""

REALIZE_FIXED = """\
def realize_group(self, subject, triples):
    phrases = [self.phrase_for_triple(t) for t in triples]
    return subject + " " + ", ".join(phrases) + "."
"""

FUNCTION_SOURCES = {
    "verbalize_set_of_triples": """\
def verbalize_set_of_triples(self, triples):
    groups = self.group_triples_by_subject(triples)
    sentences = [self.realize_group(subject, items) for subject, items in groups]
    return " ".join(sentences)
""",
    "group_triples_by_subject": """\
def group_triples_by_subject(self, triples):
    order = []
    groups = {}
    for triple in triples:
        if triple.subject not in groups:
            groups[triple.subject] = []
            order.append(triple.subject)
        groups[triple.subject].append(triple)
    return [(subject, groups[subject]) for subject in order]
""",
    "realize_group": REALIZE_FIXED,
    "phrase_for_triple": f"""\
def phrase_for_triple(self, triple):
{PHRASE_TABLE}\
    template = templates.get(triple.predicate, triple.predicate + " {{}}")
    return template.format(triple.object)
""",
}

DESIGN_OBJ = {
    "architecture_notes": (
        "Group the input triples by subject, realize each group as one sentence "
        "using a per-predicate phrase lexicon, then join the sentences."
    ),
    "functions": [
        {
            "name": "verbalize_set_of_triples",
            "signature": "verbalize_set_of_triples(self, triples)",
            "description": "Entry point converting a list of RDF triples into plain text.",
            "inputs": "list of RDFTriple objects",
            "outputs": "text",
        },
        {
            "name": "group_triples_by_subject",
            "signature": "group_triples_by_subject(self, triples)",
            "description": "Group triples by subject, preserving first-seen subject order.",
            "inputs": "list of RDFTriple objects",
            "outputs": "list of (subject, triples) pairs",
        },
        {
            "name": "realize_group",
            "signature": "realize_group(self, subject, triples)",
            "description": "Build one sentence covering every triple of a subject group.",
            "inputs": "subject text and its triples",
            "outputs": "sentence text",
        },
        {
            "name": "phrase_for_triple",
            "signature": "phrase_for_triple(self, triple)",
            "description": "Phrase for one triple: predicate template filled with the object.",
            "inputs": "one RDFTriple",
            "outputs": "phrase text",
        },
    ],
}

COUNTRIES = ["Norway", "Chile", "Kenya", "Austria", "Portugal", "Finland", "Peru", "Iceland"]
REGIONS = ["Bavaria", "Texas", "Osaka", "Quebec", "Ohio", "Piedmont"]
SUBJECTS = [
    "Haydn", "Mozart", "Verdi", "Elgar", "Smetana", "Sibelius",
    "North College", "River University", "Delta Academy", "Coastal Institute",
    "Falcon", "Mustang", "Skyline", "Aurora", "Comet", "Meteor",
]


class FakeAgentModel:
    """Callable provider impersonating all five agent roles deterministically."""

    def __init__(self, judge_rule: str = "objects-present"):
        self.judge_rule = judge_rule
        self.calls: dict[str, int] = {}

    def __call__(self, request: ChatRequest) -> str:
        prompt = request.user_prompt
        if prompt.startswith("You are an expert data generator."):
            return self._count("test_engineer", self._test_engineer(prompt))
        if prompt.startswith("You are an experienced software architect"):
            return self._count("architect", json.dumps(DESIGN_OBJ, indent=2))
        if prompt.startswith("You are a skilled software engineer"):
            return self._count("engineer", self._engineer(prompt))
        if prompt.startswith("You are an intelligent code analysis agent"):
            return self._count("analyst", self._analyst())
        if prompt.startswith("You are a careful evaluator of NLG systems."):
            return self._count("output_judge", self._output_judge(prompt))
        if prompt.startswith("You are an expert evaluator of data-to-text generation task."):
            return self._count("metrics_judge", self._metrics_judge(prompt))
        raise AssertionError(f"fake model got an unrecognized prompt: {prompt[:80]!r}")

    def _count(self, kind: str, reply: str) -> str:
        self.calls[kind] = self.calls.get(kind, 0) + 1
        return reply

    # -- test engineer ------------------------------------------------------

    def _test_engineer(self, prompt: str) -> str:
        m = re.search(
            r"possible `predicate` values of RDF triple are: (.*)\.\n", prompt
        )
        predicates = list(ast.literal_eval(f"[{m.group(1)}]"))
        m = re.search(r"Generate (\d+) diverse examples", prompt)
        count = int(m.group(1))
        seed = int(hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:12], 16)
        rng = random.Random(seed)
        bogus = "capital" if "capital" not in predicates else "predicate_from_nowhere"

        lines = []
        for i in range(count):
            n_triples = 1 + i % 3
            subject = SUBJECTS[(seed + i) % len(SUBJECTS)] + f" {i}"
            chosen = [predicates[(i + j) % len(predicates)] for j in range(n_triples)]
            if i in (5, 17):
                chosen[0] = bogus
            triples = []
            for predicate in chosen:
                obj = self._object_for(predicate, rng)
                triples.append(
                    f"RDFTriple(subject={subject!r}, predicate={predicate!r}, object={obj!r})"
                )
            verbalization = subject + " " + "; ".join(
                f"{p} {t.split('object=')[1][1:-2]}" for p, t in zip(chosen, triples)
            ) + "."
            lines.append(f"Input: [{', '.join(triples)}]")
            lines.append(f"Output: '{verbalization}'")
            lines.append("")
        return "\n".join(lines)

    @staticmethod
    def _object_for(predicate: str, rng: random.Random) -> str:
        if "year" in predicate:
            return str(rng.randrange(1700, 2020))
        if "size" in predicate or "staff" in predicate:
            return str(rng.randrange(100, 2500))
        if "country" in predicate or predicate == "birthplace":
            return rng.choice(COUNTRIES)
        if predicate == "assembly":
            return rng.choice(REGIONS)
        return rng.choice(COUNTRIES + REGIONS)

    # -- engineer -----------------------------------------------------------

    def _engineer(self, prompt: str) -> str:
        m = re.search(r"you should rewrite `(\w+)` function from your code", prompt)
        func_name = m.group(1)
        refinement = "# This implementation passed" in prompt
        if func_name == "realize_group" and not refinement:
            body = REALIZE_BROKEN
        else:
            body = FUNCTION_SOURCES[func_name]
        return f"```python\n{body}```"

    # -- analyst ------------------------------------------------------------

    @staticmethod
    def _analyst() -> str:
        return json.dumps(
            {
                "kind": "refactor",
                "functions_to_fix": ["realize_group"],
                "feedback": (
                    "realize_group truncates each subject group to its first two "
                    "triples, so larger groups lose facts. Realize every triple."
                ),
            }
        )

    # -- judges --------------------------------------------------------------

    def _output_judge(self, prompt: str) -> str:
        m = re.search(
            r"Input: (\[.*?\])\nSystem output: (.*)\n\nIs the system output correct\?",
            prompt,
            re.DOTALL,
        )
        triples = _parse_triple_calls(m.group(1))
        output = m.group(2)
        if self.judge_rule == "always-correct":
            return "correct"
        ok = all(t["object"] in output for t in triples)
        return "correct" if ok else "incorrect"

    def _metrics_judge(self, prompt: str) -> str:
        output_match = re.search(r"System output: (.*)\n\nAssess", prompt, re.DOTALL)
        output = output_match.group(1)
        if "grammatical correctness" in prompt:
            return "1" if output.rstrip().endswith(".") else "0"
        triples_match = re.search(r"Input triples: (\[.*?\])\nSystem output:", prompt, re.DOTALL)
        triples = _parse_triple_calls(triples_match.group(1))
        if "omissions of the input triples" in prompt:
            omitted = any(t["object"] not in output for t in triples)
            return "1" if omitted else "0"
        # additions probe: the EXTRA marker simulates a hallucinated fact
        return "1" if "EXTRA" in output else "0"
