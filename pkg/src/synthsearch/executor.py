"""Runs a workflow script in an isolated subprocess and validates its batch.

Contract: the script receives one JSON document on stdin
({"n", "task", "prompts", "llm_endpoint"}) and must emit exactly n JSON
objects, one per line, on stdout. stderr is captured verbatim for the run
log. Workflows originate from the configured optimizer LLM and are
human-reviewable; this is process isolation, not a security sandbox.
"""

from __future__ import annotations

import json
import os
import subprocess
import sys
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import BatchError, ExecutionError, ValidationError
from .workflow import Workflow

_STDERR_CAP = 64 * 1024


@dataclass
class Sample:
    payload: dict
    source_node: int
    index: int

    def validate(self) -> None:
        if not isinstance(self.payload, dict):
            raise BatchError(f"sample {self.index} payload is not a JSON object")
        if self.index < 0:
            raise ValidationError("sample index must be >= 0")

    def to_dict(self) -> dict:
        return {"payload": self.payload, "source_node": self.source_node, "index": self.index}

    @classmethod
    def from_dict(cls, data: dict) -> "Sample":
        return cls(payload=data["payload"], source_node=data["source_node"], index=data["index"])


@dataclass
class ExecutionLimits:
    wall_timeout: float = 300.0
    max_stdout_bytes: int = 8 * 1024 * 1024
    allowed_env: list[str] = field(default_factory=lambda: ["PATH", "LANG", "HOME"])
    network: str = "llm-endpoints-only"  # documented trust model, not enforced

    def validate(self) -> None:
        if self.wall_timeout <= 0:
            raise ValidationError("wall_timeout must be > 0")
        if self.max_stdout_bytes <= 0:
            raise ValidationError("max_stdout_bytes must be > 0")
        if self.network not in ("llm-endpoints-only", "none"):
            raise ValidationError(f"unknown network mode {self.network!r}")


class InterpreterRegistry:
    """Maps interpreter_hint to a launch argv prefix; unknown hints are errors."""

    def __init__(self, commands: Optional[dict[str, list[str]]] = None):
        self.commands = commands if commands is not None else {"python3": [sys.executable, "-I"]}

    def register(self, hint: str, argv: list[str]) -> None:
        self.commands[hint] = list(argv)

    def command_for(self, hint: str) -> list[str]:
        try:
            return list(self.commands[hint])
        except KeyError:
            raise ValidationError(f"interpreter hint {hint!r} is not registered") from None


class _CappedReader(threading.Thread):
    """Drains a pipe up to a byte cap; flags overflow instead of buffering it."""

    def __init__(self, stream, cap: int):
        super().__init__(daemon=True)
        self.stream = stream
        self.cap = cap
        self.chunks: list[bytes] = []
        self.size = 0
        self.overflowed = False

    def run(self) -> None:
        try:
            while True:
                chunk = self.stream.read(65536)
                if not chunk:
                    break
                if self.size + len(chunk) > self.cap:
                    self.chunks.append(chunk[: self.cap - self.size])
                    self.size = self.cap
                    self.overflowed = True
                    break  # the wait loop kills the child once it sees this
                self.chunks.append(chunk)
                self.size += len(chunk)
        except (OSError, ValueError):
            pass

    @property
    def data(self) -> bytes:
        return b"".join(self.chunks)


def execute_workflow(
    workflow: Workflow,
    n: int,
    limits: ExecutionLimits,
    registry: InterpreterRegistry,
    task: str = "",
    llm_endpoint: str = "",
    source_node: int = -1,
) -> list[Sample]:
    """Run the workflow script and return exactly n validated samples."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    limits.validate()
    workflow.validate()
    argv = registry.command_for(workflow.code.interpreter_hint)

    stdin_doc = json.dumps(
        {
            "n": n,
            "task": task,
            "prompts": workflow.prompts.templates,
            "llm_endpoint": llm_endpoint,
        }
    )
    env = {k: os.environ[k] for k in limits.allowed_env if k in os.environ}

    with tempfile.TemporaryDirectory(prefix="synthsearch-exec-") as tmp:
        script_path = Path(tmp) / "script.py"
        script_path.write_text(workflow.code.script, encoding="utf-8")
        proc = subprocess.Popen(
            argv + [str(script_path)],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            env=env,
            cwd=tmp,
        )
        out_reader = _CappedReader(proc.stdout, limits.max_stdout_bytes)
        err_reader = _CappedReader(proc.stderr, _STDERR_CAP)
        out_reader.start()
        err_reader.start()
        try:
            proc.stdin.write(stdin_doc.encode("utf-8"))
            proc.stdin.close()
        except BrokenPipeError:
            pass
        deadline = time.monotonic() + limits.wall_timeout
        while True:
            try:
                proc.wait(timeout=0.05)
                break
            except subprocess.TimeoutExpired:
                if out_reader.overflowed:
                    proc.kill()
                    proc.wait()
                    break
                if time.monotonic() >= deadline:
                    proc.kill()
                    proc.wait()
                    raise ExecutionError(
                        f"workflow {workflow.id} timed out after {limits.wall_timeout}s",
                        stderr=err_reader.data.decode("utf-8", "replace"),
                    ) from None
        out_reader.join(timeout=10)
        err_reader.join(timeout=10)

    stderr_text = err_reader.data.decode("utf-8", "replace")
    if out_reader.overflowed:
        raise ExecutionError(
            f"workflow {workflow.id} exceeded stdout limit of {limits.max_stdout_bytes} bytes",
            stderr=stderr_text,
        )
    if proc.returncode != 0:
        raise ExecutionError(
            f"workflow {workflow.id} exited with status {proc.returncode}", stderr=stderr_text
        )

    samples = _parse_jsonl(out_reader.data.decode("utf-8", "replace"), source_node)
    validate_batch(samples, n)
    return samples


def _parse_jsonl(text: str, source_node: int) -> list[Sample]:
    samples = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ExecutionError(f"malformed JSON on output line {lineno}: {exc.msg}") from exc
        samples.append(Sample(payload=payload, source_node=source_node, index=len(samples)))
    return samples


def validate_batch(samples: list[Sample], n: int) -> None:
    """Assert count == n, every payload is an object, indices are 0..n-1."""
    if len(samples) != n:
        raise BatchError(f"batch-size violation: expected {n} samples, got {len(samples)}")
    for sample in samples:
        if not isinstance(sample.payload, dict):
            raise BatchError(f"sample {sample.index} payload is not a JSON object")
    indices = sorted(s.index for s in samples)
    if indices != list(range(n)):
        raise BatchError(f"sample indices are not 0..{n - 1}: {indices}")
