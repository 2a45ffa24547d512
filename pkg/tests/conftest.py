from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fake_llm import DESIGN_OBJ, FUNCTION_SOURCES, FakeAgentModel  # noqa: E402

from nlgsmith.agents import FunctionSpec, SystemDesign
from nlgsmith.gateway import CallableProvider, Gateway, TranscriptStore
from nlgsmith.kg import load_graph
from nlgsmith.sandbox import ShimConfig, assemble
from nlgsmith.trainer import TrainingConfig

FIXTURES = Path(__file__).parent / "fixtures"
SHIMS = FIXTURES / "shims"
TOY_GRAPH = FIXTURES / "toy_graph.jsonl"
MIXED_GRAPH = FIXTURES / "mixed_categories.jsonl"
TRANSCRIPTS = FIXTURES / "transcripts"
GOLDEN = FIXTURES / "golden"

MODEL_ROLES = {
    "test_engineer": "fake-coder-1",
    "architect": "fake-coder-1",
    "engineer": "fake-coder-1",
    "analyst": "fake-coder-1",
    "evaluator": "fake-judge-1",
}


def shim_config(script: str) -> ShimConfig:
    return ShimConfig(command=(sys.executable, str(SHIMS / script), "{source}"))


def toy_design() -> SystemDesign:
    return SystemDesign(
        architecture_notes=DESIGN_OBJ["architecture_notes"],
        functions=tuple(FunctionSpec(**f) for f in DESIGN_OBJ["functions"]),
    )


def toy_program():
    return assemble(toy_design(), FUNCTION_SOURCES)


def live_fake_gateway(judge_rule: str = "objects-present") -> tuple[Gateway, FakeAgentModel]:
    fake = FakeAgentModel(judge_rule=judge_rule)
    gateway = Gateway(provider=CallableProvider(fake), mode="live")
    return gateway, fake


def fixture_training_config() -> TrainingConfig:
    """The exact config the bundled train_toy transcript was recorded with."""
    return TrainingConfig(
        max_iterations=3,
        restarts=2,
        failure_budget=5,
        batch_size=50,
        min_per_predicate=3,
        timeout=10.0,
        workers=1,
        rng_seed=7,
        model_roles=dict(MODEL_ROLES),
        shim=shim_config("exec_shim.py"),
    )


@pytest.fixture
def toy_graph():
    return load_graph(TOY_GRAPH)


@pytest.fixture
def exec_shim() -> ShimConfig:
    return shim_config("exec_shim.py")


@pytest.fixture
def echo_shim() -> ShimConfig:
    return shim_config("echo_shim.py")


@pytest.fixture
def fake_gateway():
    return live_fake_gateway()


@pytest.fixture
def replay_gateway():
    path = TRANSCRIPTS / "train_toy.jsonl"
    if not path.exists():
        pytest.skip("bundled transcript missing; run tests/record_fixtures.py")
    return Gateway(mode="replay", transcript=TranscriptStore(path))
