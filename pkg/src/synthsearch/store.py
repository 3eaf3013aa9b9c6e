"""Run persistence: append-only event log, tree snapshots, replay, export.

One directory per run: `events.jsonl`, `tree.json`, `metrics/` per-iteration
snapshots, `export/`. Plain files, canonical JSON, diffable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional

from .errors import ExecutionError, LoadError, ValidationError
from .executor import Sample
from .jsonutil import canonical_dumps, digest
from .metrics import MetricSet
from .workflow import Node, SearchTree

EVENT_KINDS = (
    "init",
    "hitl-feedback",
    "selected",
    "refined",
    "executed",
    "metrics",
    "scored",
    "backpropagated",
    "converged",
    "aborted",
    "llm-call",
)

# Minimal per-kind payload contracts; extra keys are allowed.
_REQUIRED_KEYS = {
    "init": {"node"},
    "hitl-feedback": {"session", "round", "text"},
    "selected": {"iteration", "node"},
    "refined": {"iteration", "node", "parent"},
    "executed": {"iteration", "node", "ok"},
    "metrics": {"iteration", "metric_set"},
    "scored": {"iteration", "node", "hybrid_reward"},
    "backpropagated": {"iteration", "node", "reward", "experience"},
    "converged": {"iteration", "converged"},
    "aborted": {"iteration", "reason"},
    "llm-call": {"role", "prompt_digest", "ok"},
}

# Wall-clock and latency fields, stripped when comparing logs for determinism.
VOLATILE_KEYS = {"timestamp", "latency_ms", "created_at", "submitted_at"}


@dataclass
class RunEvent:
    seq: int
    timestamp: str
    kind: str
    payload: dict

    def to_dict(self) -> dict:
        return {"seq": self.seq, "timestamp": self.timestamp, "kind": self.kind, "payload": self.payload}


def validate_event(kind: str, payload: dict) -> None:
    if kind not in EVENT_KINDS:
        raise ValidationError(f"unknown event kind {kind!r}")
    missing = _REQUIRED_KEYS[kind] - payload.keys()
    if missing:
        raise ValidationError(f"event {kind!r} payload missing keys: {sorted(missing)}")


class RunStore:
    """Single-writer persistence for one run directory."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        (self.directory / "metrics").mkdir(exist_ok=True)
        (self.directory / "export").mkdir(exist_ok=True)
        self.events_path = self.directory / "events.jsonl"
        self._last_seq = 0
        if self.events_path.exists():
            for event in self.read_events():
                self._last_seq = event["seq"]

    @property
    def run_id(self) -> str:
        return self.directory.name

    # -- event log -----------------------------------------------------------

    def append_event(self, kind: str, payload: dict) -> RunEvent:
        validate_event(kind, payload)
        event = RunEvent(
            seq=self._last_seq + 1,
            timestamp=datetime.now(timezone.utc).isoformat(),
            kind=kind,
            payload=payload,
        )
        line = canonical_dumps(event.to_dict())
        with open(self.events_path, "a", encoding="utf-8") as f:
            f.write(line + "\n")
            f.flush()
            os.fsync(f.fileno())
        self._last_seq = event.seq
        return event

    def read_events(self, after_seq: int = 0) -> list[dict]:
        if not self.events_path.exists():
            return []
        events = []
        expected = 1
        with open(self.events_path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    event = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise LoadError(
                        f"corrupt event log at line {lineno}, byte offset {exc.pos}: {exc.msg}"
                    ) from exc
                if event["seq"] != expected:
                    raise LoadError(f"event seq gap: expected {expected}, found {event['seq']}")
                expected += 1
                if event["seq"] > after_seq:
                    events.append(event)
        return events

    # -- tree snapshots --------------------------------------------------------

    def save_tree(self, tree: SearchTree) -> None:
        # Write-then-rename so concurrent readers never see a partial snapshot.
        path = self.directory / "tree.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(canonical_dumps(tree.to_dict()) + "\n", encoding="utf-8")
        os.replace(tmp, path)

    def load_tree(self) -> SearchTree:
        path = self.directory / "tree.json"
        if not path.exists():
            raise LoadError(f"no tree snapshot in {self.directory}")
        text = path.read_text(encoding="utf-8")
        try:
            return SearchTree.from_dict(json.loads(text))
        except (json.JSONDecodeError, KeyError) as exc:
            offset = getattr(exc, "pos", 0)
            raise LoadError(f"corrupt tree snapshot at byte offset {offset}: {exc}") from exc

    def save_metric_set(self, iteration: int, metric_set: MetricSet) -> None:
        path = self.directory / "metrics" / f"iter_{iteration:03d}.json"
        path.write_text(canonical_dumps([m.to_dict() for m in metric_set.metrics]) + "\n", encoding="utf-8")

    # -- export ----------------------------------------------------------------

    def export_dataset(
        self,
        tree: SearchTree,
        node_id: int,
        count: int,
        batch_runner: Callable[..., list[Sample]],
        batch_size: int,
    ) -> Path:
        """Run the node's workflow in batches until `count` samples are
        collected; write `export/dataset.jsonl` plus `export/manifest.json`."""
        if count < 1:
            raise ValidationError("export count must be >= 1")
        node = tree.get(node_id)
        if node.reward is None:
            raise ValidationError(f"node {node_id} has not been evaluated")
        records: list[dict] = []
        consecutive_failures = 0
        while len(records) < count:
            try:
                samples = batch_runner(node.workflow, batch_size, node_id)
            except ExecutionError:
                consecutive_failures += 1
                if consecutive_failures >= 3:
                    raise
                continue
            consecutive_failures = 0
            for sample in samples:
                if len(records) >= count:
                    break
                record = dict(sample.payload)
                record["_meta"] = {"node": node_id, "iteration": tree.iteration_count}
                records.append(record)
        out = self.directory / "export" / "dataset.jsonl"
        with open(out, "w", encoding="utf-8") as f:
            for record in records:
                f.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
        manifest = {
            "run_id": self.run_id,
            "node_id": node_id,
            "workflow_digest": digest(node.workflow.to_dict()),
            "count": len(records),
            "created_at": datetime.now(timezone.utc).isoformat(),
        }
        (self.directory / "export" / "manifest.json").write_text(
            canonical_dumps(manifest) + "\n", encoding="utf-8"
        )
        return out


# -- replay ---------------------------------------------------------------


def replay_tree(events: list[dict]) -> SearchTree:
    """Reconstruct the search tree purely from the event log."""
    tree: Optional[SearchTree] = None
    for event in events:
        kind, payload = event["kind"], event["payload"]
        if kind == "init":
            node = Node.from_dict(payload["node"])
            tree = SearchTree()
            tree.nodes[node.id] = node
            tree.root = node.id
            tree._next_id = node.id + 1
        elif kind == "refined":
            if tree is None:
                raise LoadError("refined event before init")
            node = Node.from_dict(payload["node"])
            tree.nodes[node.id] = node
            tree.nodes[payload["parent"]].children.append(node.id)
            tree._next_id = max(tree._next_id, node.id + 1)
        elif kind == "scored":
            if tree is None:
                raise LoadError("scored event before init")
            if payload.get("eval_detail") is not None:
                tree.nodes[payload["node"]].eval_detail = payload["eval_detail"]
        elif kind == "backpropagated":
            if tree is None:
                raise LoadError("backpropagated event before init")
            from .workflow import Experience

            node_id = payload["node"]
            tree.nodes[node_id].reward = payload["reward"]
            for ancestor in tree.ancestors(node_id):
                tree.nodes[ancestor].experiences.append(Experience.from_dict(payload["experience"]))
            tree.iteration_count = payload["iteration"]
    if tree is None:
        raise LoadError("event log contains no init event")
    return tree


def _strip_volatile(value):
    if isinstance(value, dict):
        return {k: _strip_volatile(v) for k, v in value.items() if k not in VOLATILE_KEYS}
    if isinstance(value, list):
        return [_strip_volatile(v) for v in value]
    return value


def normalized_event_lines(path: str | Path) -> list[str]:
    """Event log lines with wall-clock fields removed, for determinism
    comparisons across runs."""
    lines = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                lines.append(canonical_dumps(_strip_volatile(json.loads(line))))
    return lines
