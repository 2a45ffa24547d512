"""Isolated execution of candidate generator programs.

Each run spawns one fresh subprocess speaking a line-oriented JSON protocol:
the request ``{"triples": [{"subject": ..., "predicate": ..., "object": ...},
...]}`` goes to stdin (then stdin closes), exactly one response line
``{"text": "<verbalization>"}`` must come back on stdout, exit code 0.
Anything else is a protocol error. Timeouts kill the whole process group.

The subprocess environment is scrubbed to locale and path variables plus a
pinned ``PYTHONHASHSEED`` so that deterministic candidate programs stay
deterministic across runs; the working directory is a throwaway scratch dir.
"""

from __future__ import annotations

import ast
import json
import os
import shutil
import signal
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence, TYPE_CHECKING

if TYPE_CHECKING:  # pragma: no cover
    from .agents import SystemDesign
    from .kg import TripleSet

ENTRY_POINT = "verbalize_set_of_triples"

#: environment variables candidate programs are allowed to inherit
_ENV_WHITELIST = ("PATH", "LANG", "LANGUAGE", "LC_ALL", "LC_CTYPE", "TZ")


class AssemblyError(ValueError):
    """Missing or colliding function sources during program assembly."""


@dataclass(frozen=True)
class CandidateProgram:
    """Assembled source of a synthesized generator plus its per-function map."""

    source: str
    function_sources: dict[str, str]
    entry_point: str = ENTRY_POINT
    generation_language_tag: str = "python"

    def __post_init__(self) -> None:
        if self.entry_point not in self.function_sources:
            raise ValueError(f"entry point {self.entry_point!r} has no source")

    def sha256(self) -> str:
        import hashlib

        return hashlib.sha256(self.source.encode("utf-8")).hexdigest()


@dataclass(frozen=True, slots=True)
class RunResult:
    status: str  # ok | runtime_error | timeout | protocol_error
    output_text: str | None = None
    stderr_excerpt: str | None = None
    wall_time: float = 0.0


@dataclass(frozen=True, slots=True)
class ShimConfig:
    """Command used to execute a program source file behind the wire protocol.

    ``{source}`` in any argument is replaced with the path of the written
    source file; ``persistent_flag`` is appended for long-lived processes.
    """

    command: tuple[str, ...]
    persistent_flag: str = "--persistent"

    def argv(self, source_path: str | Path, persistent: bool = False) -> list[str]:
        argv = [arg.replace("{source}", str(source_path)) for arg in self.command]
        if persistent:
            argv.append(self.persistent_flag)
        return argv


def default_shim(language_tag: str = "python") -> ShimConfig:
    """Shim command for a generation language; the python shim is a separate package."""
    if language_tag == "python":
        return ShimConfig(command=(sys.executable, "-m", "nlgshim", "{source}"))
    raise ValueError(f"no shim registered for language {language_tag!r}")


def _snippet_defs(source: str) -> list[str]:
    try:
        tree = ast.parse(source)
    except SyntaxError as exc:
        raise AssemblyError(f"function source does not parse: {exc}") from exc
    return [n.name for n in tree.body if isinstance(n, (ast.FunctionDef, ast.AsyncFunctionDef))]


def _split_imports(source: str) -> tuple[list[str], str]:
    """Pull top-level import lines out of a snippet, returning (imports, rest)."""
    tree = ast.parse(source)
    lines = source.split("\n")
    import_spans: list[tuple[int, int]] = []
    for node in tree.body:
        if isinstance(node, (ast.Import, ast.ImportFrom)):
            import_spans.append((node.lineno - 1, (node.end_lineno or node.lineno) - 1))
    imports = []
    drop: set[int] = set()
    for start, end in import_spans:
        imports.append("\n".join(lines[start : end + 1]))
        drop.update(range(start, end + 1))
    rest = "\n".join(ln for i, ln in enumerate(lines) if i not in drop)
    return imports, rest


def _indent(block: str, by: str = "    ") -> str:
    return "\n".join(by + ln if ln.strip() else "" for ln in block.split("\n"))


def _build_source(order: Sequence[str], function_sources: Mapping[str, str]) -> str:
    header: list[str] = []
    bodies: list[str] = []
    for name in order:
        imports, rest = _split_imports(function_sources[name])
        for imp in imports:
            if imp not in header:
                header.append(imp)
        bodies.append(_indent(rest.strip("\n")))
    parts = []
    if header:
        parts.append("\n".join(header))
        parts.append("")
    parts.append("class NLGSystem:")
    parts.append("\n\n".join(bodies))
    return "\n".join(parts) + "\n"


def assemble(design: SystemDesign, function_sources: Mapping[str, str]) -> CandidateProgram:
    """Concatenate function sources in design order into the one-class program file.

    Top-level imports in snippets are hoisted to the file header (first
    occurrence wins); the remainder of each snippet is indented into the
    class body. The same inputs always produce byte-identical source.
    """
    order = [f.name for f in design.functions]
    missing = [name for name in order if name not in function_sources]
    if missing:
        raise AssemblyError(f"missing source for function(s): {', '.join(missing)}")
    for name in order:
        defined = _snippet_defs(function_sources[name])
        if name not in defined:
            raise AssemblyError(f"source for {name!r} does not define it")
        collisions = [d for d in defined if d != name and d in order]
        if collisions:
            raise AssemblyError(
                f"source for {name!r} also defines design function(s): {', '.join(collisions)}"
            )
    source = _build_source(order, function_sources)
    return CandidateProgram(source=source, function_sources=dict(function_sources))


def assemble_partial(design: SystemDesign, function_sources: Mapping[str, str]) -> str:
    """Source text of the program built so far (functions may be missing)."""
    order = [f.name for f in design.functions if f.name in function_sources]
    if not order:
        return ""
    return _build_source(order, function_sources)


def _scrubbed_env(scratch: Path) -> dict[str, str]:
    env = {k: os.environ[k] for k in _ENV_WHITELIST if k in os.environ}
    env["HOME"] = str(scratch)
    env["PYTHONIOENCODING"] = "utf-8"
    env["PYTHONHASHSEED"] = "0"
    return env


def _request_line(triples: TripleSet) -> str:
    return json.dumps(
        {
            "triples": [
                {"subject": t.subject, "predicate": t.predicate, "object": t.object}
                for t in triples.triples
            ]
        },
        ensure_ascii=False,
    )


def parse_response_line(line: str) -> str:
    """Validate one protocol response line and return its text field.

    Raises ValueError on any deviation from the bit-exact schema.
    """
    obj = json.loads(line)
    if not isinstance(obj, dict) or set(obj.keys()) != {"text"}:
        raise ValueError("response must be exactly {\"text\": ...}")
    if not isinstance(obj["text"], str):
        raise ValueError("response text must be a string")
    return obj["text"]


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        pass


def run_once(
    program: CandidateProgram,
    input: TripleSet,
    timeout: float,
    shim: ShimConfig | None = None,
    kill_grace: float = 1.0,
) -> RunResult:
    """Execute one test input in a fresh, isolated subprocess.

    Never raises for program misbehavior; every failure mode is encoded in
    the returned status.
    """
    if timeout <= 0:
        raise ValueError("timeout must be positive")
    shim = shim or default_shim(program.generation_language_tag)
    scratch = Path(tempfile.mkdtemp(prefix="nlgsandbox-"))
    started = time.monotonic()
    try:
        source_path = scratch / "program.py"
        source_path.write_text(program.source, encoding="utf-8")
        proc = subprocess.Popen(
            shim.argv(source_path),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            cwd=scratch,
            env=_scrubbed_env(scratch),
            start_new_session=True,
            text=True,
            encoding="utf-8",
        )
        try:
            stdout, stderr = proc.communicate(_request_line(input) + "\n", timeout=timeout)
        except subprocess.TimeoutExpired:
            _kill_group(proc)
            try:
                proc.communicate(timeout=kill_grace)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.communicate()
            return RunResult(status="timeout", wall_time=time.monotonic() - started)
        wall = time.monotonic() - started
        excerpt = stderr[-2000:] if stderr else None
        if proc.returncode != 0:
            return RunResult(
                status="runtime_error",
                stderr_excerpt=excerpt or f"exit code {proc.returncode}",
                wall_time=wall,
            )
        lines = [ln for ln in stdout.split("\n") if ln.strip()]
        if len(lines) != 1:
            return RunResult(
                status="protocol_error",
                stderr_excerpt=f"expected exactly one response line, got {len(lines)}",
                wall_time=wall,
            )
        try:
            text = parse_response_line(lines[0])
        except ValueError as exc:
            return RunResult(
                status="protocol_error", stderr_excerpt=str(exc), wall_time=wall
            )
        return RunResult(status="ok", output_text=text, wall_time=wall)
    finally:
        shutil.rmtree(scratch, ignore_errors=True)


def request_line_for(triples: TripleSet) -> str:
    """Public access to the protocol request framing (used by persistent runners)."""
    return _request_line(triples)
