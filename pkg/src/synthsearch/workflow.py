"""Workflow and search-tree model.

A workflow is the unit under optimization: a set of named prompt templates
plus an executable script. The search tree holds one workflow per node
together with its exact reward and the experience records accumulated from
descendant expansions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from .errors import NotFoundError, StateError, ValidationError
from .jsonutil import canonical_dumps

ENTRY_CONTRACTS = ("stdin-json/stdout-jsonl",)

MODIFICATION_KINDS = ("prompt-edit", "code-edit", "structural", "mixed")

_PLACEHOLDER_RE = re.compile(r"\{([a-zA-Z_][a-zA-Z0-9_]*)\}")

REWARD_MIN = 1.0
REWARD_MAX = 5.0


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def check_reward(value: float, what: str = "reward") -> float:
    if not (REWARD_MIN <= value <= REWARD_MAX):
        raise ValidationError(f"{what} {value} outside [{REWARD_MIN}, {REWARD_MAX}]")
    return float(value)


@dataclass
class PromptSet:
    """Named prompt templates; placeholders must be declared before use."""

    templates: dict[str, str]
    placeholders: dict[str, list[str]] = field(default_factory=dict)

    def validate(self) -> None:
        if not self.templates:
            raise ValidationError("prompt set must contain at least one template")
        for name, text in self.templates.items():
            declared = set(self.placeholders.get(name, ()))
            referenced = set(_PLACEHOLDER_RE.findall(text))
            undeclared = referenced - declared
            if undeclared:
                raise ValidationError(
                    f"template {name!r} references undeclared placeholders: {sorted(undeclared)}"
                )

    def to_dict(self) -> dict:
        return {"templates": dict(self.templates), "placeholders": {k: list(v) for k, v in self.placeholders.items()}}

    @classmethod
    def from_dict(cls, data: dict) -> "PromptSet":
        return cls(templates=dict(data["templates"]), placeholders={k: list(v) for k, v in data.get("placeholders", {}).items()})


@dataclass
class CodeArtifact:
    """Executable script plus how to launch it."""

    script: str
    interpreter_hint: str = "python3"
    entry_contract: str = "stdin-json/stdout-jsonl"

    def validate(self) -> None:
        if not self.script:
            raise ValidationError("script must be non-empty")
        if self.entry_contract not in ENTRY_CONTRACTS:
            raise ValidationError(f"unknown entry contract {self.entry_contract!r}")

    def to_dict(self) -> dict:
        return {"script": self.script, "interpreter_hint": self.interpreter_hint, "entry_contract": self.entry_contract}

    @classmethod
    def from_dict(cls, data: dict) -> "CodeArtifact":
        return cls(script=data["script"], interpreter_hint=data.get("interpreter_hint", "python3"), entry_contract=data.get("entry_contract", ENTRY_CONTRACTS[0]))


@dataclass
class ModificationRecord:
    """Short description of how a child workflow differs from its parent."""

    description: str
    kind: str = "mixed"

    def validate(self) -> None:
        if not self.description:
            raise ValidationError("modification description must be non-empty")
        if len(self.description) > 500:
            raise ValidationError("modification description exceeds 500 characters")
        if self.kind not in MODIFICATION_KINDS:
            raise ValidationError(f"unknown modification kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"description": self.description, "kind": self.kind}

    @classmethod
    def from_dict(cls, data: dict) -> "ModificationRecord":
        return cls(description=data["description"], kind=data.get("kind", "mixed"))


@dataclass
class Workflow:
    """The optimized unit: prompt templates plus an executable script."""

    id: str
    prompts: PromptSet
    code: CodeArtifact
    created_at: str = field(default_factory=_now)
    parent_modification: Optional[ModificationRecord] = None

    def validate(self) -> None:
        if not self.id:
            raise ValidationError("workflow id must be non-empty")
        self.prompts.validate()
        self.code.validate()
        if self.parent_modification is not None:
            self.parent_modification.validate()

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "prompts": self.prompts.to_dict(),
            "code": self.code.to_dict(),
            "created_at": self.created_at,
            "parent_modification": self.parent_modification.to_dict() if self.parent_modification else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Workflow":
        mod = data.get("parent_modification")
        return cls(
            id=data["id"],
            prompts=PromptSet.from_dict(data["prompts"]),
            code=CodeArtifact.from_dict(data["code"]),
            created_at=data.get("created_at", _now()),
            parent_modification=ModificationRecord.from_dict(mod) if mod else None,
        )


@dataclass
class Experience:
    """Record of one expansion outcome, propagated to ancestor nodes."""

    modification: ModificationRecord
    reward: float
    feedback: str
    source_node: int
    iteration: int

    def validate(self) -> None:
        self.modification.validate()
        check_reward(self.reward, "experience reward")
        if self.iteration < 1:
            raise ValidationError("experience iteration must be >= 1")

    def to_dict(self) -> dict:
        return {
            "modification": self.modification.to_dict(),
            "reward": self.reward,
            "feedback": self.feedback,
            "source_node": self.source_node,
            "iteration": self.iteration,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Experience":
        return cls(
            modification=ModificationRecord.from_dict(data["modification"]),
            reward=data["reward"],
            feedback=data["feedback"],
            source_node=data["source_node"],
            iteration=data["iteration"],
        )


@dataclass
class Node:
    id: int
    workflow: Workflow
    reward: Optional[float] = None
    parent: Optional[int] = None
    children: list[int] = field(default_factory=list)
    experiences: list[Experience] = field(default_factory=list)
    eval_detail: Optional[dict] = None
    created_at: str = field(default_factory=_now)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "workflow": self.workflow.to_dict(),
            "reward": self.reward,
            "parent": self.parent,
            "children": list(self.children),
            "experiences": [e.to_dict() for e in self.experiences],
            "eval_detail": self.eval_detail,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Node":
        return cls(
            id=data["id"],
            workflow=Workflow.from_dict(data["workflow"]),
            reward=data.get("reward"),
            parent=data.get("parent"),
            children=list(data.get("children", [])),
            experiences=[Experience.from_dict(e) for e in data.get("experiences", [])],
            eval_detail=data.get("eval_detail"),
            created_at=data.get("created_at", _now()),
        )


class SearchTree:
    """Append-only tree of evaluated workflows with integer node ids."""

    def __init__(self) -> None:
        self.nodes: dict[int, Node] = {}
        self.root: Optional[int] = None
        self.iteration_count = 0
        self._next_id = 0

    # -- construction ------------------------------------------------------

    @classmethod
    def create_root(cls, workflow: Workflow, reward: float) -> "SearchTree":
        workflow.validate()
        check_reward(reward)
        tree = cls()
        node = Node(id=tree._next_id, workflow=workflow, reward=float(reward))
        tree._next_id += 1
        tree.nodes[node.id] = node
        tree.root = node.id
        return tree

    def add_child(self, parent_id: int, workflow: Workflow, modification: ModificationRecord) -> int:
        self._require(parent_id)
        workflow.validate()
        modification.validate()
        workflow.parent_modification = modification
        node = Node(id=self._next_id, workflow=workflow, parent=parent_id)
        self._next_id += 1
        self.nodes[node.id] = node
        self.nodes[parent_id].children.append(node.id)
        return node.id

    # -- queries -----------------------------------------------------------

    def _require(self, node_id: int) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise NotFoundError(f"node {node_id} not in tree") from None

    def get(self, node_id: int) -> Node:
        return self._require(node_id)

    def top_k_evaluated(self, k: int) -> list[int]:
        """Up to k evaluated node ids, best reward first; ties broken by
        earlier creation time then smaller id."""
        if k < 1:
            raise ValidationError("k must be >= 1")
        evaluated = [n for n in self.nodes.values() if n.reward is not None]
        evaluated.sort(key=lambda n: (-n.reward, n.created_at, n.id))
        return [n.id for n in evaluated[:k]]

    def ancestors(self, node_id: int) -> list[int]:
        """Path from the node's parent up to the root (node excluded)."""
        node = self._require(node_id)
        path = []
        while node.parent is not None:
            node = self._require(node.parent)
            path.append(node.id)
        return path

    def best_node(self) -> int:
        top = self.top_k_evaluated(1)
        if not top:
            raise StateError("tree has no evaluated node")
        return top[0]

    # -- mutation ----------------------------------------------------------

    def set_reward(self, node_id: int, reward: float) -> None:
        node = self._require(node_id)
        if node.reward is not None:
            raise StateError(f"node {node_id} reward already set to {node.reward}")
        node.reward = check_reward(reward)

    def append_experience(self, node_id: int, experience: Experience) -> None:
        node = self._require(node_id)
        experience.validate()
        if experience.source_node not in self.nodes:
            raise ValidationError(f"experience source node {experience.source_node} not in tree")
        node.experiences.append(experience)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "iteration_count": self.iteration_count,
            "next_id": self._next_id,
            "nodes": [self.nodes[i].to_dict() for i in sorted(self.nodes)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SearchTree":
        tree = cls()
        tree.root = data["root"]
        tree.iteration_count = data.get("iteration_count", 0)
        for node_data in data["nodes"]:
            node = Node.from_dict(node_data)
            tree.nodes[node.id] = node
        tree._next_id = data.get("next_id", max(tree.nodes, default=-1) + 1)
        return tree


def save_bundle(workflow: Workflow, directory: str | Path) -> Path:
    """Write a workflow to disk as `workflow.json` + `script`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "id": workflow.id,
        "interpreter_hint": workflow.code.interpreter_hint,
        "entry_contract": workflow.code.entry_contract,
        "prompts": workflow.prompts.to_dict(),
        "created_at": workflow.created_at,
    }
    (directory / "workflow.json").write_text(canonical_dumps(meta) + "\n", encoding="utf-8")
    (directory / "script").write_text(workflow.code.script, encoding="utf-8")
    return directory


def load_bundle(directory: str | Path) -> Workflow:
    directory = Path(directory)
    import json

    meta = json.loads((directory / "workflow.json").read_text(encoding="utf-8"))
    script = (directory / "script").read_text(encoding="utf-8")
    wf = Workflow(
        id=meta["id"],
        prompts=PromptSet.from_dict(meta["prompts"]),
        code=CodeArtifact(script=script, interpreter_hint=meta["interpreter_hint"], entry_contract=meta["entry_contract"]),
        created_at=meta.get("created_at", _now()),
    )
    wf.validate()
    return wf
