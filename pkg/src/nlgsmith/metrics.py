"""Output scoring: corpus BLEU and the three reference-less judge probes.

BLEU follows the classic corpus-level definition: modified (clipped) n-gram
precisions aggregated over the corpus, combined by a uniform geometric mean
and multiplied by the brevity penalty. Tokenization is deliberately simple
and documented: lowercase, punctuation characters split off as their own
tokens, then whitespace split. There is no smoothing unless asked for
(add-one on the precision ratios), so single short sentences can score 0.

The judge probes ask for a single binary digit per aspect: grammaticality
(1 = correct), additions (1 = unsupported facts present) and omissions
(1 = some input triple not verbalized). Unparsable verdicts after one
re-ask leave the instance unjudged; unjudged instances are excluded from
the rate denominators and reported separately.
"""

from __future__ import annotations

import json
import math
import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .gateway import ChatRequest, Gateway, GatewayError
from .kg import TripleSet, load_instances
from . import prompts

PROBES = ("grammaticality", "additions", "omissions")


def tokenize(text: str) -> list[str]:
    """Lowercase, isolate punctuation as single tokens, split on whitespace."""
    out: list[str] = []
    for ch in text.lower():
        if unicodedata.category(ch).startswith("P"):
            out.append(f" {ch} ")
        else:
            out.append(ch)
    return "".join(out).split()


def ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


@dataclass(frozen=True, slots=True)
class BleuStatistics:
    clipped: tuple[int, ...]
    totals: tuple[int, ...]
    hyp_length: int
    ref_length: int
    precisions: tuple[float, ...]
    brevity_penalty: float
    score: float


def _closest_ref_length(hyp_len: int, ref_lens: Iterable[int]) -> int:
    """Closest reference length; ties break toward the shorter reference."""
    return min(ref_lens, key=lambda r: (abs(r - hyp_len), r))


def bleu_statistics(
    hypotheses: Sequence[str],
    references: Sequence[Sequence[str]],
    max_n: int = 4,
    smooth: bool = False,
) -> BleuStatistics:
    """Corpus-level clipped-count statistics and the resulting BLEU score."""
    if len(hypotheses) != len(references):
        raise ValueError(
            f"hypothesis/reference length mismatch: {len(hypotheses)} vs {len(references)}"
        )
    if max_n <= 0:
        raise ValueError("max_n must be positive")
    clipped = [0] * max_n
    totals = [0] * max_n
    hyp_length = 0
    ref_length = 0
    for hyp, refs in zip(hypotheses, references):
        if not refs:
            raise ValueError("every instance needs at least one reference")
        hyp_tokens = tokenize(hyp)
        ref_token_lists = [tokenize(r) for r in refs]
        hyp_length += len(hyp_tokens)
        ref_length += _closest_ref_length(len(hyp_tokens), [len(r) for r in ref_token_lists])
        for n in range(1, max_n + 1):
            hyp_ngrams = ngram_counts(hyp_tokens, n)
            if not hyp_ngrams:
                continue
            max_ref: Counter = Counter()
            for ref_tokens in ref_token_lists:
                for gram, count in ngram_counts(ref_tokens, n).items():
                    if count > max_ref[gram]:
                        max_ref[gram] = count
            for gram, count in hyp_ngrams.items():
                clipped[n - 1] += min(count, max_ref[gram])
                totals[n - 1] += count

    if smooth:
        precisions = [(clipped[i] + 1) / (totals[i] + 1) for i in range(max_n)]
    else:
        precisions = [
            clipped[i] / totals[i] if totals[i] > 0 else 0.0 for i in range(max_n)
        ]
    if hyp_length == 0:
        bp = 0.0
    elif hyp_length > ref_length:
        bp = 1.0
    else:
        bp = math.exp(1.0 - ref_length / hyp_length)
    if min(precisions) <= 0.0:
        score = 0.0
    else:
        score = bp * math.exp(sum(math.log(p) for p in precisions) / max_n)
    return BleuStatistics(
        clipped=tuple(clipped),
        totals=tuple(totals),
        hyp_length=hyp_length,
        ref_length=ref_length,
        precisions=tuple(precisions),
        brevity_penalty=bp,
        score=score,
    )


def corpus_bleu(
    hypotheses: Sequence[str],
    references: Sequence[Sequence[str]],
    max_n: int = 4,
    smooth: bool = False,
) -> float:
    """Corpus BLEU in [0, 1]."""
    return bleu_statistics(hypotheses, references, max_n=max_n, smooth=smooth).score


# ---------------------------------------------------------------------------
# Reference-less judging


_JUDGE_REASK = "\n\nAnswer with a single number 1 or 0, without any other text."


def parse_binary(reply: str) -> int | None:
    stripped = reply.strip()
    if stripped[:1] in ("0", "1"):
        # a leading digit followed by more digits would be a different number
        if len(stripped) > 1 and stripped[1].isdigit():
            return None
        return int(stripped[0])
    return None


def judge_reference_less(
    gateway: Gateway,
    model_id: str,
    instance: TripleSet,
    output_text: str,
    probe: str,
    temperature: float = 0.0,
    max_tokens: int = 8,
) -> int | None:
    """One binary probe verdict, or None when the judge stays unparsable."""
    if probe not in PROBES:
        raise ValueError(f"unknown probe {probe!r}")
    if not output_text:
        raise ValueError("cannot judge an empty output")
    prompt = prompts.render_reference_less_judge(probe, instance.triples, output_text)
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
        except GatewayError:
            return None
        verdict = parse_binary(reply)
        if verdict is not None:
            return verdict
    return None


@dataclass(frozen=True, slots=True)
class ScoredInstance:
    instance_id: str
    bleu_contrib: BleuStatistics | None = None
    judge_gram: int | None = None
    judge_add: int | None = None
    judge_om: int | None = None


@dataclass(frozen=True, slots=True)
class CorpusScore:
    """Aggregate scores; gram_rate counts correct, add/om rates count errors."""

    n: int
    bleu: float | None = None
    gram_rate: float | None = None
    add_rate: float | None = None
    om_rate: float | None = None
    unjudged: dict | None = None


def _rate(verdicts: list[int | None]) -> float | None:
    judged = [v for v in verdicts if v is not None]
    if not judged:
        return None
    return sum(judged) / len(judged)


def score_run(
    outputs_path: str | Path,
    dataset_path: str | Path,
    probes: Iterable[str] = (),
    gateway: Gateway | None = None,
    judge_model: str = "",
    category: str | None = None,
    max_n: int = 4,
    smooth: bool = False,
    compute_bleu: bool = True,
) -> tuple[CorpusScore, list[ScoredInstance]]:
    """Score an outputs file against its dataset.

    Failed/missing outputs contribute empty hypotheses to BLEU and are never
    sent to a judge (counted as unjudged). Instance order follows the dataset.
    """
    from .inference import read_outputs

    probes = tuple(probes)
    unknown = [p for p in probes if p not in PROBES]
    if unknown:
        raise ValueError(f"unknown probes: {unknown}")
    if probes and gateway is None:
        raise ValueError("judge probes need a configured gateway")

    records = load_instances(dataset_path, category)
    outputs = read_outputs(outputs_path)
    dataset_ids = [r.instance.instance_id for r in records]
    missing = [i for i in dataset_ids if i not in outputs]
    extra = [i for i in outputs if i not in set(dataset_ids)]
    if missing or extra:
        raise ValueError(
            f"outputs do not align with dataset (missing {len(missing)}, extra {len(extra)}); "
            f"first missing: {missing[:3]}, first extra: {extra[:3]}"
        )

    bleu_value = None
    if compute_bleu:
        without_refs = [r.instance.instance_id for r in records if not r.references]
        if without_refs:
            raise ValueError(
                f"BLEU requested but {len(without_refs)} instance(s) have no references, "
                f"e.g. {without_refs[:3]}"
            )
        hyps = [outputs[r.instance.instance_id] or "" for r in records]
        refs = [list(r.references) for r in records]
        bleu_value = corpus_bleu(hyps, refs, max_n=max_n, smooth=smooth)

    scored: list[ScoredInstance] = []
    gram: list[int | None] = []
    add: list[int | None] = []
    om: list[int | None] = []
    unjudged = {p: 0 for p in probes}
    for record in records:
        iid = record.instance.instance_id
        text = outputs[iid]
        verdicts: dict[str, int | None] = {}
        for probe in probes:
            if not text:
                verdicts[probe] = None
            else:
                verdicts[probe] = judge_reference_less(
                    gateway, judge_model, record.instance, text, probe
                )
            if verdicts[probe] is None:
                unjudged[probe] += 1
        if "grammaticality" in probes:
            gram.append(verdicts["grammaticality"])
        if "additions" in probes:
            add.append(verdicts["additions"])
        if "omissions" in probes:
            om.append(verdicts["omissions"])
        scored.append(
            ScoredInstance(
                instance_id=iid,
                judge_gram=verdicts.get("grammaticality"),
                judge_add=verdicts.get("additions"),
                judge_om=verdicts.get("omissions"),
            )
        )

    score = CorpusScore(
        n=len(records),
        bleu=bleu_value,
        gram_rate=_rate(gram) if "grammaticality" in probes else None,
        add_rate=_rate(add) if "additions" in probes else None,
        om_rate=_rate(om) if "omissions" in probes else None,
        unjudged=unjudged if probes else None,
    )
    return score, scored


def score_report_obj(score: CorpusScore, judge_model: str, config_digest: str = "") -> dict:
    """Report JSON; meteor/bertscore/bleurt are reserved for external tooling."""
    return {
        "n": score.n,
        "bleu": score.bleu,
        "gram_rate": score.gram_rate,
        "add_rate": score.add_rate,
        "om_rate": score.om_rate,
        "meteor": None,
        "bertscore": None,
        "bleurt": None,
        "unjudged_counts": score.unjudged,
        "judge_model": judge_model or None,
        "config_digest": config_digest or None,
    }


def save_score_report(
    score: CorpusScore, path: str | Path, judge_model: str = "", config_digest: str = ""
) -> None:
    Path(path).write_text(
        json.dumps(score_report_obj(score, judge_model, config_digest), indent=2) + "\n",
        encoding="utf-8",
    )
