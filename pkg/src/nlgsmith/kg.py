"""Knowledge-graph ingestion: triples, instances, and the predicate inventory.

Input files are JSON Lines, one instance per line:

    {"instance_id": "<text>", "category": "<text, optional>",
     "triples": [["<subject>","<predicate>","<object>"], ...],
     "references": ["<text>", ...]}   # optional, ignored here

Strings pass through verbatim: no underscore/camel-case normalization is
applied at load time. That is deliberately left to the synthesized program.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator


class GraphFormatError(ValueError):
    """Unreadable file or malformed instance record (message carries the line number)."""


class EmptyGraphError(ValueError):
    """No triples survived loading and filtering."""


@dataclass(frozen=True, slots=True)
class RDFTriple:
    """One (subject, predicate, object) fact. Equality is exact string equality."""

    subject: str
    predicate: str
    object: str

    def __post_init__(self) -> None:
        for name in ("subject", "predicate", "object"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value.strip():
                raise ValueError(f"triple {name} must be non-empty text, got {value!r}")

    def as_list(self) -> list[str]:
        return [self.subject, self.predicate, self.object]


@dataclass(frozen=True, slots=True)
class TripleSet:
    """An ordered input instance of one or more triples."""

    triples: tuple[RDFTriple, ...]
    instance_id: str = ""

    def __post_init__(self) -> None:
        if len(self.triples) < 1:
            raise ValueError("a TripleSet needs at least one triple")

    def predicates(self) -> set[str]:
        return {t.predicate for t in self.triples}


@dataclass(frozen=True, slots=True)
class InstanceRecord:
    """One parsed JSONL record: a TripleSet plus optional category and references."""

    instance: TripleSet
    category: str | None = None
    references: tuple[str, ...] = ()


@dataclass(frozen=True, slots=True)
class KnowledgeGraph:
    """Deduplicated triples from one or more instances, optionally category-scoped."""

    triples: tuple[RDFTriple, ...]
    category: str | None = None

    def predicate_inventory(self) -> list[str]:
        """All distinct predicate strings, sorted for deterministic iteration."""
        return sorted({t.predicate for t in self.triples})


def iter_records(path: str | Path) -> Iterator[tuple[int, InstanceRecord]]:
    """Yield (line_number, record) pairs from a JSON Lines instance file."""
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise GraphFormatError(f"cannot read {path}: {exc}") from exc
    for line_no, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        yield line_no, _parse_record(path, line_no, line)


def _parse_record(path: Path, line_no: int, line: str) -> InstanceRecord:
    where = f"{path}:{line_no}"
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"{where}: invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise GraphFormatError(f"{where}: record must be a JSON object")
    instance_id = obj.get("instance_id")
    if not isinstance(instance_id, str) or not instance_id:
        raise GraphFormatError(f"{where}: missing or empty 'instance_id'")
    category = obj.get("category")
    if category is not None and not isinstance(category, str):
        raise GraphFormatError(f"{where}: 'category' must be text")
    raw_triples = obj.get("triples")
    if not isinstance(raw_triples, list) or not raw_triples:
        raise GraphFormatError(f"{where}: 'triples' must be a non-empty array")
    triples = []
    for i, item in enumerate(raw_triples):
        if (
            not isinstance(item, list)
            or len(item) != 3
            or not all(isinstance(part, str) for part in item)
        ):
            raise GraphFormatError(
                f"{where}: triple #{i} must be a [subject, predicate, object] string array"
            )
        try:
            triples.append(RDFTriple(*item))
        except ValueError as exc:
            raise GraphFormatError(f"{where}: triple #{i}: {exc}") from exc
    references = obj.get("references", [])
    if not isinstance(references, list) or not all(isinstance(r, str) for r in references):
        raise GraphFormatError(f"{where}: 'references' must be an array of text")
    return InstanceRecord(
        instance=TripleSet(tuple(triples), instance_id=instance_id),
        category=category,
        references=tuple(references),
    )


def load_instances(
    path: str | Path, category_filter: str | None = None
) -> list[InstanceRecord]:
    """Load instance records, optionally keeping only one category.

    Records without a category match only the no-filter case.
    """
    records = [
        record
        for _, record in iter_records(path)
        if category_filter is None or record.category == category_filter
    ]
    if not records:
        raise EmptyGraphError(
            f"no instances in {path}"
            + (f" with category {category_filter!r}" if category_filter else "")
        )
    return records


def load_graph(path: str | Path, category_filter: str | None = None) -> KnowledgeGraph:
    """Load every matching instance and union its triples, deduplicated field-wise."""
    records = load_instances(path, category_filter)
    seen: dict[RDFTriple, None] = {}
    for record in records:
        for triple in record.instance.triples:
            seen.setdefault(triple, None)
    return KnowledgeGraph(triples=tuple(seen), category=category_filter)


def dump_graph(graph: KnowledgeGraph, path: str | Path) -> None:
    """Write a graph back out as one single-triple instance per line."""
    lines = []
    for i, triple in enumerate(graph.triples):
        record = {"instance_id": f"t{i:04d}", "triples": [triple.as_list()]}
        if graph.category is not None:
            record["category"] = graph.category
        lines.append(json.dumps(record, ensure_ascii=False))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def predicates_with_examples(
    graph: KnowledgeGraph, rng_seed: int
) -> dict[str, RDFTriple]:
    """Pick one example triple per predicate, uniformly and reproducibly.

    The returned mapping has exactly the predicate inventory as its keys,
    in sorted order; the same seed always selects the same triples.
    """
    if not graph.triples:
        raise EmptyGraphError("graph has no triples")
    rng = random.Random(rng_seed)
    examples: dict[str, RDFTriple] = {}
    for predicate in graph.predicate_inventory():
        candidates = [t for t in graph.triples if t.predicate == predicate]
        examples[predicate] = rng.choice(candidates)
    return examples
