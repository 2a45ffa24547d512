"""LLM-free batch execution of a frozen generator program.

Two execution modes share the same wire protocol:

* per-process (default): one fresh subprocess per instance, exactly the
  training-time semantics;
* persistent: long-lived shim processes answering many request lines each,
  trading isolation for throughput.

Both modes produce one result per instance, in input order.
"""

from __future__ import annotations

import json
import queue
import subprocess
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .kg import TripleSet
from .sandbox import (
    CandidateProgram,
    ShimConfig,
    _scrubbed_env,
    default_shim,
    parse_response_line,
    request_line_for,
    run_once,
)


@dataclass(frozen=True, slots=True)
class InferenceResult:
    instance_id: str
    output_text: str | None
    status: str
    wall_time: float


class _PersistentShim:
    """One long-lived shim process with line framing and per-request deadlines."""

    def __init__(self, shim: ShimConfig, source: str):
        self._shim = shim
        self._scratch = Path(tempfile.mkdtemp(prefix="nlginfer-"))
        self._source_path = self._scratch / "program.py"
        self._source_path.write_text(source, encoding="utf-8")
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue[str | None] = queue.Queue()

    def _spawn(self) -> None:
        self._proc = subprocess.Popen(
            self._shim.argv(self._source_path, persistent=True),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            cwd=self._scratch,
            env=_scrubbed_env(self._scratch),
            start_new_session=True,
            text=True,
            encoding="utf-8",
        )
        self._lines = queue.Queue()
        proc = self._proc

        def pump() -> None:
            assert proc.stdout is not None
            for line in proc.stdout:
                self._lines.put(line)
            self._lines.put(None)

        threading.Thread(target=pump, daemon=True).start()

    def _ensure(self) -> None:
        if self._proc is None or self._proc.poll() is not None:
            self.close()
            self._spawn()

    def ask(self, instance: TripleSet, timeout: float) -> tuple[str, str | None]:
        """Returns (status, text); respawns the process after any failure."""
        self._ensure()
        assert self._proc is not None and self._proc.stdin is not None
        try:
            self._proc.stdin.write(request_line_for(instance) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            self.close()
            return "runtime_error", None
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            self.close()
            return "timeout", None
        if line is None:  # EOF: process died
            self.close()
            return "runtime_error", None
        try:
            return "ok", parse_response_line(line.strip())
        except (ValueError, json.JSONDecodeError):
            self.close()
            return "protocol_error", None

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()
            try:
                self._proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                pass
        self._proc = None

    def __del__(self) -> None:  # best effort
        try:
            self.close()
        except Exception:
            pass


def infer_batch(
    program: CandidateProgram,
    instances: Sequence[TripleSet],
    timeout: float = 10.0,
    workers: int = 1,
    shim: ShimConfig | None = None,
    persistent: bool = False,
) -> list[InferenceResult]:
    """Run every instance through the program; one result each, input order."""
    if not instances:
        raise ValueError("infer_batch needs at least one instance")
    shim = shim or default_shim(program.generation_language_tag)
    if persistent:
        return _infer_persistent(program, instances, timeout, workers, shim)

    def one(instance: TripleSet) -> InferenceResult:
        run = run_once(program, instance, timeout=timeout, shim=shim)
        return InferenceResult(
            instance_id=instance.instance_id,
            output_text=run.output_text,
            status=run.status,
            wall_time=run.wall_time,
        )

    if workers == 1:
        return [one(inst) for inst in instances]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, instances))


def _infer_persistent(
    program: CandidateProgram,
    instances: Sequence[TripleSet],
    timeout: float,
    workers: int,
    shim: ShimConfig,
) -> list[InferenceResult]:
    results: list[InferenceResult | None] = [None] * len(instances)

    def run_shard(indices: list[int]) -> None:
        proc = _PersistentShim(shim, program.source)
        try:
            for i in indices:
                started = time.monotonic()
                status, text = proc.ask(instances[i], timeout)
                results[i] = InferenceResult(
                    instance_id=instances[i].instance_id,
                    output_text=text,
                    status=status,
                    wall_time=time.monotonic() - started,
                )
        finally:
            proc.close()

    shards = [list(range(k, len(instances), workers)) for k in range(workers)]
    shards = [s for s in shards if s]
    if len(shards) == 1:
        run_shard(shards[0])
    else:
        threads = [threading.Thread(target=run_shard, args=(s,)) for s in shards]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    return [r for r in results if r is not None]


def timing_summary(results: Sequence[InferenceResult], total_s: float) -> dict:
    """Aggregate wall-clock stats over successful instances; failures counted apart."""
    ok_times = sorted(r.wall_time for r in results if r.status == "ok")
    failures = sum(1 for r in results if r.status != "ok")

    def pct(p: float) -> float | None:
        if not ok_times:
            return None
        idx = min(len(ok_times) - 1, max(0, int(p * len(ok_times) + 0.999999) - 1))
        return round(ok_times[idx] * 1000, 3)

    return {
        "total_s": round(total_s, 3),
        "instances": len(results),
        "per_instance_ms_p50": pct(0.50),
        "per_instance_ms_p95": pct(0.95),
        "failures": failures,
    }


def write_outputs(results: Sequence[InferenceResult], path: str | Path) -> None:
    """Outputs as JSON Lines: {"instance_id", "text"} or {"instance_id", "error"}."""
    lines = []
    for r in results:
        if r.status == "ok":
            lines.append(json.dumps({"instance_id": r.instance_id, "text": r.output_text}, ensure_ascii=False))
        else:
            lines.append(json.dumps({"instance_id": r.instance_id, "error": r.status}, ensure_ascii=False))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_outputs(path: str | Path) -> dict[str, str | None]:
    """Map instance_id → text (None for failed instances)."""
    out: dict[str, str | None] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        out[obj["instance_id"]] = obj.get("text")
    return out
