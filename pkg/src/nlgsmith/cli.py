"""Operator entry point: train, infer, eval, gen-tests, inspect.

Configuration comes from an optional JSON config file plus flags; flags win.
Endpoint and API key may also come from NLGSMITH_ENDPOINT / NLGSMITH_API_KEY.
Every command that produces artifacts writes a run manifest next to them so
a run can be reproduced from its recorded config digest and transcripts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import uuid
from pathlib import Path

from . import agents as ag
from . import inference, kg, metrics, trainer
from .gateway import Gateway, HttpProvider, TranscriptStore
from .sandbox import ShimConfig, default_shim

DEFAULT_ROLES = ("test_engineer", "architect", "engineer", "analyst", "evaluator")


class ConfigError(ValueError):
    pass


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load config {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return obj


def _build_gateway(args, config: dict) -> Gateway:
    mode = getattr(args, "mode", None) or config.get("mode")
    transcript_path = getattr(args, "transcript", None) or config.get("transcript")
    if getattr(args, "replay", None):
        mode, transcript_path = "replay", args.replay
    if getattr(args, "record", None):
        mode, transcript_path = "record", args.record
    if mode is None:
        raise ConfigError(
            "no gateway mode configured: use --replay/--record, --mode live, "
            "or set 'mode' in the config file"
        )
    transcript = TranscriptStore(transcript_path) if transcript_path else None
    provider = None
    if mode in ("live", "record"):
        endpoint = (
            getattr(args, "endpoint", None)
            or config.get("endpoint")
            or os.environ.get("NLGSMITH_ENDPOINT")
        )
        if not endpoint:
            raise ConfigError(f"mode {mode!r} needs an endpoint (--endpoint or NLGSMITH_ENDPOINT)")
        api_key = config.get("api_key") or os.environ.get("NLGSMITH_API_KEY", "")
        provider = HttpProvider(endpoint, api_key)
    try:
        return Gateway(provider=provider, mode=mode, transcript=transcript)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _model_roles(args, config: dict) -> dict[str, str]:
    roles = dict(config.get("model_roles", {}))
    default_model = getattr(args, "model", None) or config.get("model")
    if default_model:
        for role in DEFAULT_ROLES:
            roles.setdefault(role, default_model)
    if getattr(args, "judge_model", None):
        roles["evaluator"] = args.judge_model
    missing = [r for r in DEFAULT_ROLES if r not in roles]
    if missing:
        raise ConfigError(
            f"no model configured for role(s): {', '.join(missing)} "
            "(set model_roles in the config file or pass --model)"
        )
    return roles


def _shim_config(args, config: dict) -> ShimConfig:
    cmd = getattr(args, "shim_cmd", None) or config.get("shim_command")
    if cmd:
        if isinstance(cmd, str):
            cmd = cmd.split()
        return ShimConfig(command=tuple(cmd))
    return default_shim()


def _write_manifest(out_dir: Path, config_digest: str, artifacts: dict[str, str], command: str) -> Path:
    for role, p in artifacts.items():
        if not Path(p).exists():
            raise ConfigError(f"manifest artifact {role} missing on disk: {p}")
    manifest = {
        "run_id": uuid.uuid4().hex[:12],
        "command": command,
        "config_digest": config_digest,
        "artifacts": artifacts,
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def _training_config(args, config: dict, model_roles: dict[str, str]) -> trainer.TrainingConfig:
    def pick(flag: str, key: str, fallback):
        v = getattr(args, flag, None)
        if v is not None:
            return v
        return config.get(key, fallback)

    max_iterations = pick("max_iterations", "max_iterations", None)
    if max_iterations is None:
        max_iterations = trainer.default_max_iterations(model_roles["architect"])
    static_design = None
    if getattr(args, "design_file", None):
        obj = json.loads(Path(args.design_file).read_text(encoding="utf-8"))
        static_design = ag.SystemDesign(
            architecture_notes=obj["architecture_notes"],
            functions=tuple(
                ag.FunctionSpec(
                    name=f["name"],
                    signature=f["signature"],
                    description=f["description"],
                    inputs=f.get("inputs", ""),
                    outputs=f.get("outputs", ""),
                )
                for f in obj["functions"]
            ),
        )
    external_tests = None
    if getattr(args, "tests_file", None):
        external_tests = tuple(ag.load_unit_tests(args.tests_file))
    return trainer.TrainingConfig(
        max_iterations=max_iterations,
        restarts=pick("restarts", "restarts", 3),
        failure_budget=pick("failure_budget", "failure_budget", 5),
        batch_size=pick("batch_size", "batch_size", 50),
        min_per_predicate=pick("min_per_predicate", "min_per_predicate", 3),
        te_round_cap=config.get("te_round_cap", 20),
        timeout=pick("timeout", "timeout_s", 10.0),
        workers=pick("workers", "workers", 1),
        rng_seed=pick("seed", "rng_seed", 0),
        model_roles=model_roles,
        shim=_shim_config(args, config),
        max_wall_seconds=config.get("max_wall_seconds"),
        static_design=static_design,
        external_tests=external_tests,
    )


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    config = _load_config(args.config)
    gateway = _build_gateway(args, config)
    model_roles = _model_roles(args, config)
    tcfg = _training_config(args, config, model_roles)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    categories: list[str | None]
    if args.per_category:
        all_records = kg.load_instances(args.graph)
        categories = sorted({r.category for r in all_records if r.category is not None})
        if not categories:
            raise ConfigError("--per-category given but no record has a category")
    else:
        categories = [args.category]

    artifacts: dict[str, str] = {}
    all_converged = True
    for category in categories:
        graph = kg.load_graph(args.graph, category)
        best, records = trainer.train(graph, tcfg, gateway)
        label = category or "all"
        program_path = out_dir / f"program_{label}.py"
        trainer.export_program(best, program_path, tcfg)
        artifacts[f"program:{label}"] = str(program_path)
        artifacts[f"sidecar:{label}"] = str(program_path) + ".json"
        tests_path = out_dir / f"tests_{label}.jsonl"
        ag.save_unit_tests(best.tests, tests_path)
        artifacts[f"tests:{label}"] = str(tests_path)
        events_path = out_dir / f"events_{label}.txt"
        events_path.write_text(
            "".join(trainer.event_log_text(r) for r in records), encoding="utf-8"
        )
        artifacts[f"events:{label}"] = str(events_path)
        all_converged = all_converged and best.converged
        print(
            f"[{label}] converged={best.converged} iterations={best.iterations_used} "
            f"passed={best.passed_count}/{best.final_report.tests_total if best.final_report else 0} "
            f"restart={best.restart_index}"
        )

    _write_manifest(out_dir, tcfg.digest(), artifacts, "train")
    if args.ok_on_complete:
        return 0
    return 0 if all_converged else 1


def cmd_infer(args) -> int:
    config = _load_config(args.config)
    program = trainer.load_exported(args.program)
    records = kg.load_instances(args.dataset, args.category)
    instances = [r.instance for r in records]
    shim = _shim_config(args, config)
    started = time.monotonic()
    results = inference.infer_batch(
        program,
        instances,
        timeout=args.timeout,
        workers=args.workers,
        shim=shim,
        persistent=args.persistent_process,
    )
    total = time.monotonic() - started
    inference.write_outputs(results, args.out)
    summary = inference.timing_summary(results, total)
    if args.summary:
        Path(args.summary).write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(summary))
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args.config)
    probes = tuple(p.strip() for p in args.probes.split(",") if p.strip()) if args.probes else ()
    gateway = None
    judge_model = ""
    if probes:
        gateway = _build_gateway(args, config)
        judge_model = args.judge_model or config.get("model_roles", {}).get("evaluator", "")
        if not judge_model:
            raise ConfigError("judge probes need --judge-model or model_roles.evaluator")
    score, _ = metrics.score_run(
        args.outputs,
        args.dataset,
        probes=probes,
        gateway=gateway,
        judge_model=judge_model,
        category=args.category,
        smooth=args.smooth,
        compute_bleu=not args.no_bleu,
    )
    metrics.save_score_report(score, args.report, judge_model=judge_model)
    print(f"{'metric':<12} value")
    for name, value in (
        ("n", score.n),
        ("bleu", score.bleu),
        ("gram_rate", score.gram_rate),
        ("add_rate", score.add_rate),
        ("om_rate", score.om_rate),
    ):
        if value is not None:
            shown = f"{value:.4f}" if isinstance(value, float) else value
            print(f"{name:<12} {shown}")
    return 0


def cmd_gen_tests(args) -> int:
    config = _load_config(args.config)
    gateway = _build_gateway(args, config)
    model_roles = _model_roles(args, config)
    graph = kg.load_graph(args.graph, args.category)
    ctx = ag.AgentContext(gateway=gateway, model_roles=model_roles)
    examples = kg.predicates_with_examples(graph, args.seed)
    try:
        generation = ag.te_generate_tests(
            ctx,
            graph,
            examples,
            batch_size=args.batch_size,
            min_per_predicate=args.min_per_predicate,
            rng_seed=args.seed,
            max_rounds=config.get("te_round_cap", 20),
            fallback=not args.no_fallback,
        )
    except ag.CoverageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    ag.save_unit_tests(generation.tests, args.out)
    print(
        f"wrote {len(generation.tests)} tests to {args.out} "
        f"(rounds={generation.rounds}, discarded={generation.discarded}, "
        f"fallback={list(generation.fallback_predicates)})"
    )
    return 0


def cmd_inspect(args) -> int:
    run_dir = Path(args.run)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        print(f"error: no manifest.json under {run_dir}", file=sys.stderr)
        return 1
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    print(f"run {manifest['run_id']} ({manifest['command']}), config {manifest['config_digest'][:12]}")
    for role, path in sorted(manifest["artifacts"].items()):
        status = "ok" if Path(path).exists() else "MISSING"
        print(f"  {role:<16} {path} [{status}]")
        if role.startswith("sidecar:") and Path(path).exists():
            sidecar = json.loads(Path(path).read_text(encoding="utf-8"))
            print(
                f"    converged={sidecar['converged']} iterations={sidecar['iterations_used']} "
                f"passed={sidecar['passed_count']}/{sidecar['tests_total']}"
            )
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_gateway_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--replay", metavar="TRANSCRIPT", help="replay mode from this transcript")
    p.add_argument("--record", metavar="TRANSCRIPT", help="record mode into this transcript")
    p.add_argument("--mode", choices=["live", "record", "replay"], help="gateway mode")
    p.add_argument("--transcript", help="transcript path for --mode record/replay")
    p.add_argument("--endpoint", help="chat-completions endpoint URL")
    p.add_argument("--model", help="default model id for all roles")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlgsmith", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="synthesize a generator program from a graph")
    _add_gateway_flags(p)
    p.add_argument("--graph", required=True, help="JSONL instance file")
    p.add_argument("--category", help="train on one thematic category")
    p.add_argument("--per-category", action="store_true", help="one program per category")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="training RNG seed")
    p.add_argument("--max-iterations", type=int, dest="max_iterations")
    p.add_argument("--restarts", type=int)
    p.add_argument("--failure-budget", type=int, dest="failure_budget")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--min-per-predicate", type=int, dest="min_per_predicate")
    p.add_argument("--timeout", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--judge-model", dest="judge_model", help="model id for the evaluator role")
    p.add_argument("--shim-cmd", nargs="+", dest="shim_cmd", help="shim command ({source} placeholder)")
    p.add_argument("--design-file", dest="design_file", help="static design JSON (skips the architect)")
    p.add_argument("--tests-file", dest="tests_file", help="external unit tests JSONL (skips test generation)")
    p.add_argument(
        "--ok-on-complete",
        action="store_true",
        help="exit 0 on completion even without convergence",
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="run a frozen program over a dataset")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--program", required=True, help="exported program path")
    p.add_argument("--dataset", required=True, help="JSONL instance file")
    p.add_argument("--category", help="only instances of this category")
    p.add_argument("--out", required=True, help="outputs JSONL path")
    p.add_argument("--summary", help="timing summary JSON path")
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--persistent-process", action="store_true", dest="persistent_process")
    p.add_argument("--shim-cmd", nargs="+", dest="shim_cmd")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score outputs with BLEU and judge probes")
    _add_gateway_flags(p)
    p.add_argument("--outputs", required=True, help="outputs JSONL from infer")
    p.add_argument("--dataset", required=True, help="JSONL instance file with references")
    p.add_argument("--category", help="only instances of this category")
    p.add_argument("--report", required=True, help="score report JSON path")
    p.add_argument("--probes", help="comma list: grammaticality,additions,omissions")
    p.add_argument("--judge-model", dest="judge_model")
    p.add_argument("--no-bleu", action="store_true", dest="no_bleu")
    p.add_argument("--smooth", action="store_true", help="add-one smoothing for BLEU")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen-tests", help="generate unit tests for inspection/reuse")
    _add_gateway_flags(p)
    p.add_argument("--graph", required=True)
    p.add_argument("--category")
    p.add_argument("--out", required=True, help="tests JSONL path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, dest="batch_size", default=50)
    p.add_argument("--min-per-predicate", type=int, dest="min_per_predicate", default=3)
    p.add_argument("--no-fallback", action="store_true", dest="no_fallback")
    p.set_defaults(func=cmd_gen_tests)

    p = sub.add_parser("inspect", help="summarize a run directory")
    p.add_argument("--run", required=True, help="run directory containing manifest.json")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, kg.GraphFormatError, kg.EmptyGraphError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except trainer.TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
