"""nlgsmith: multi-agent synthesis of rule-based RDF-to-text generators.

Five model roles collaborate to write, test, and refine a single-file
generator program; the frozen program then runs without any model in the
loop. See README.md for the workflow and file formats.
"""

from .kg import KnowledgeGraph, RDFTriple, TripleSet, load_graph, load_instances
from .gateway import ChatRequest, ChatResponse, Gateway, TranscriptStore, fingerprint
from .agents import AnalystDecision, FunctionSpec, SystemDesign, UnitTest
from .sandbox import CandidateProgram, RunResult, ShimConfig, assemble, run_once
from .evaluator import EvalReport, Evaluator, TestOutcome
from .trainer import TrainingConfig, TrainingRunRecord, export_program, train, train_once
from .inference import InferenceResult, infer_batch
from .metrics import CorpusScore, corpus_bleu, judge_reference_less, score_run

__version__ = "0.1.0"

__all__ = [
    "AnalystDecision",
    "CandidateProgram",
    "ChatRequest",
    "ChatResponse",
    "CorpusScore",
    "EvalReport",
    "Evaluator",
    "FunctionSpec",
    "Gateway",
    "InferenceResult",
    "KnowledgeGraph",
    "RDFTriple",
    "RunResult",
    "ShimConfig",
    "SystemDesign",
    "TestOutcome",
    "TrainingConfig",
    "TrainingRunRecord",
    "TranscriptStore",
    "TripleSet",
    "UnitTest",
    "assemble",
    "corpus_bleu",
    "export_program",
    "fingerprint",
    "infer_batch",
    "judge_reference_less",
    "load_graph",
    "load_instances",
    "run_once",
    "score_run",
    "train",
    "train_once",
]
