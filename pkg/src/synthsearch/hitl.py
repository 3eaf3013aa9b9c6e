"""Human-in-the-loop initialization: 1-3 rounds of review and feedback on a
generated workflow and its sample batch, ending in an approved baseline that
becomes the root of the search tree. `hitl_mode=auto` skips the human and
approves the first generated workflow immediately.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

from .engine import REFINE_SCHEMA, Evaluator, RunConfig
from .errors import FormatError, RefinementError, StateError, ValidationError
from .executor import Sample
from .gateway import ChatExchange, LlmGateway
from .jsonutil import canonical_dumps
from .prompts import PromptPack
from .store import RunStore
from .workflow import CodeArtifact, ModificationRecord, PromptSet, SearchTree, Workflow

MAX_ROUNDS = 3

INITIAL_SCHEMA = {
    "type": "object",
    "required": ["prompts", "script"],
    "properties": {
        "prompts": {
            "type": "object",
            "required": ["templates"],
            "properties": {"templates": {"type": "object", "minProperties": 1}, "placeholders": {"type": "object"}},
        },
        "script": {"type": "string", "minLength": 1},
        "notes": {"type": "string"},
    },
}

_session_counter = itertools.count(1)


@dataclass
class FeedbackSubmission:
    session_id: str
    text: str
    submitted_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    def validate(self) -> None:
        if not self.text:
            raise ValidationError("feedback text must be non-empty")
        if len(self.text) > 2000:
            raise ValidationError("feedback text exceeds 2000 characters")


@dataclass
class HitlSession:
    id: str
    task: str
    round: int
    current_workflow: Workflow
    current_samples: list[Sample]
    status: str  # awaiting-feedback | revising | approved
    feedback_history: list[FeedbackSubmission] = field(default_factory=list)
    root_node_id: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "task": self.task,
            "round": self.round,
            "status": self.status,
            "workflow": self.current_workflow.to_dict(),
            "samples": [s.to_dict() for s in self.current_samples],
            "feedback_history": [
                {"session_id": f.session_id, "text": f.text, "submitted_at": f.submitted_at}
                for f in self.feedback_history
            ],
            "root_node_id": self.root_node_id,
            "remaining_rounds": MAX_ROUNDS - self.round,
        }


class SessionManager:
    """Drives HITL sessions against the optimizer gateway and the executor."""

    def __init__(
        self,
        config: RunConfig,
        gateway: LlmGateway,
        evaluator: Evaluator,
        store: RunStore,
        pack: Optional[PromptPack] = None,
    ):
        self.config = config
        self.gateway = gateway
        self.evaluator = evaluator
        self.store = store
        self.pack = pack or PromptPack.load_default()
        self.sessions: dict[str, HitlSession] = {}

    def _generate_workflow(self, prompt: str, schema: dict, workflow_id: str, base: Optional[Workflow]) -> tuple[Workflow, Optional[ModificationRecord]]:
        exchange = ChatExchange(role="optimizer", messages=[{"speaker": "user", "text": prompt}], seed=self.config.rng_seed)
        try:
            data = self.gateway.complete_structured(exchange, schema)
        except FormatError as exc:
            raise RefinementError(f"optimizer response unparseable during initialization: {exc}") from exc
        workflow = Workflow(
            id=workflow_id,
            prompts=PromptSet.from_dict(data["prompts"]),
            code=CodeArtifact(
                script=data["script"],
                interpreter_hint=base.code.interpreter_hint if base else "python3",
                entry_contract=base.code.entry_contract if base else "stdin-json/stdout-jsonl",
            ),
        )
        workflow.validate()
        modification = None
        if "modification" in data:
            modification = ModificationRecord(
                description=data["modification"]["description"],
                kind=data["modification"].get("kind", "mixed"),
            )
        return workflow, modification

    def start_session(self, task: str) -> HitlSession:
        if not task:
            raise ValidationError("task description must be non-empty")
        session_id = f"session-{next(_session_counter)}"
        prompt = self.pack.render("initial_workflow", task=task)
        workflow, _ = self._generate_workflow(prompt, INITIAL_SCHEMA, f"wf-init-{session_id}-1", None)
        samples = self.evaluator.run_batch(workflow, self.config.batch_size)
        status = "approved" if self.config.hitl_mode == "auto" else "awaiting-feedback"
        session = HitlSession(
            id=session_id,
            task=task,
            round=1,
            current_workflow=workflow,
            current_samples=samples,
            status=status,
        )
        self.sessions[session_id] = session
        return session

    def submit_feedback(self, session: HitlSession, feedback: FeedbackSubmission) -> HitlSession:
        feedback.validate()
        if session.status != "awaiting-feedback":
            raise StateError(f"session {session.id} is {session.status}, not awaiting feedback")
        if session.round >= MAX_ROUNDS:
            raise StateError(f"session {session.id} reached the {MAX_ROUNDS}-round limit; approve to continue")
        prior_workflow, prior_samples = session.current_workflow, session.current_samples
        session.status = "revising"
        try:
            prompt = self.pack.render(
                "revise_workflow",
                task=session.task,
                prompts=canonical_dumps(session.current_workflow.prompts.to_dict()),
                script=session.current_workflow.code.script,
                samples=canonical_dumps([s.payload for s in session.current_samples]),
                feedback=feedback.text,
            )
            workflow, _ = self._generate_workflow(
                prompt, REFINE_SCHEMA, f"wf-init-{session.id}-{session.round + 1}", session.current_workflow
            )
            samples = self.evaluator.run_batch(workflow, self.config.batch_size)
        except Exception:
            session.current_workflow, session.current_samples = prior_workflow, prior_samples
            session.status = "awaiting-feedback"
            raise
        session.current_workflow = workflow
        session.current_samples = samples
        session.round += 1
        session.feedback_history.append(feedback)
        session.status = "awaiting-feedback"
        self.store.append_event(
            "hitl-feedback", {"session": session.id, "round": session.round, "text": feedback.text}
        )
        return session

    def approve(self, session: HitlSession) -> tuple[int, SearchTree]:
        """Evaluate the current workflow once and install it as the tree root.
        Idempotent: re-approving returns the existing root."""
        if session.status == "revising":
            raise StateError(f"session {session.id} is mid-revision")
        if session.root_node_id is not None:
            return session.root_node_id, self._tree
        result = self.evaluator.evaluate(session.current_workflow, iteration=0, source_node=0)
        tree = SearchTree.create_root(session.current_workflow, result.hybrid_reward)
        root = tree.get(tree.root)
        root.eval_detail = result.to_dict()
        for sample in result.samples:
            sample.source_node = root.id
        session.status = "approved"
        session.root_node_id = root.id
        self._tree = tree
        self.store.append_event("init", {"node": root.to_dict(), "session": session.id})
        self.store.save_tree(tree)
        return root.id, tree
