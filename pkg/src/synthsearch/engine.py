"""The optimization loop: probabilistic selection over the top-k evaluated
workflows, LLM-driven refinement, execution + judged evaluation, and
score-preserving backpropagation of experience records.

There is no rollout phase and no visit counting: evaluation of the single
expanded child is the simulation, and selection is reward-proportional
sampling over the current top-k rather than UCB.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from typing import Optional

from .errors import (
    EvaluationError,
    ExecutionError,
    FormatError,
    GatewayError,
    GenerationError,
    RefinementError,
    RunAbortedError,
    StateError,
    ValidationError,
)
from .executor import ExecutionLimits, InterpreterRegistry, Sample, execute_workflow
from .gateway import ChatExchange, LlmGateway
from .jsonutil import canonical_dumps
from .metrics import MAX_METRICS, MetricSet, metrics_for_iteration
from .prompts import PromptPack
from .rewards import (
    RewardWeights,
    ScoreMatrix,
    WorkflowQuality,
    aggregate_sample_score,
    collect_suggestions,
    hybrid_reward,
    score_samples,
    score_workflow,
)
from .store import RunStore
from .workflow import (
    CodeArtifact,
    Experience,
    ModificationRecord,
    PromptSet,
    SearchTree,
    Workflow,
)

logger = logging.getLogger(__name__)

FLOOR_REWARD = 1.0

REFINE_SCHEMA = {
    "type": "object",
    "required": ["prompts", "script", "modification"],
    "properties": {
        "prompts": {
            "type": "object",
            "required": ["templates"],
            "properties": {
                "templates": {"type": "object", "minProperties": 1},
                "placeholders": {"type": "object"},
            },
        },
        "script": {"type": "string", "minLength": 1},
        "modification": {
            "type": "object",
            "required": ["description"],
            "properties": {
                "description": {"type": "string", "minLength": 1, "maxLength": 500},
                "kind": {"enum": ["prompt-edit", "code-edit", "structural", "mixed"]},
            },
        },
    },
}


@dataclass
class RunConfig:
    task: str
    max_iterations: int = 30
    epsilon: float = 0.05
    batch_size: int = 5
    top_k: int = 3
    weights: RewardWeights = field(default_factory=RewardWeights)
    metric_mode: str = "iterative"
    hitl_mode: str = "interactive"
    rng_seed: int = 0
    metric_candidates: int = 3
    max_metrics: int = MAX_METRICS

    def validate(self) -> None:
        if not self.task:
            raise ValidationError("task description must be non-empty")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be > 0")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.top_k < 1:
            raise ValidationError("top_k must be >= 1")
        if self.metric_mode not in ("iterative", "once"):
            raise ValidationError(f"unknown metric_mode {self.metric_mode!r}")
        if self.hitl_mode not in ("interactive", "auto"):
            raise ValidationError(f"unknown hitl_mode {self.hitl_mode!r}")
        self.weights.validate()

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "max_iterations": self.max_iterations,
            "epsilon": self.epsilon,
            "batch_size": self.batch_size,
            "top_k": self.top_k,
            "weights": self.weights.to_dict(),
            "metric_mode": self.metric_mode,
            "hitl_mode": self.hitl_mode,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        kwargs = dict(data)
        if "weights" in kwargs:
            kwargs["weights"] = RewardWeights.from_dict(kwargs["weights"])
        return cls(**kwargs)


@dataclass
class EvaluationResult:
    samples: list[Sample]
    metric_set: MetricSet
    score_matrix: ScoreMatrix
    workflow_quality: WorkflowQuality
    sample_score: float
    workflow_score: float
    hybrid_reward: float
    suggestions: str

    def to_dict(self) -> dict:
        return {
            "samples": [s.to_dict() for s in self.samples],
            "metric_set": self.metric_set.to_dict(),
            "score_matrix": self.score_matrix.to_dict(),
            "workflow_quality": self.workflow_quality.to_dict(),
            "sample_score": self.sample_score,
            "workflow_score": self.workflow_score,
            "hybrid_reward": self.hybrid_reward,
            "suggestions": self.suggestions,
        }


@dataclass
class RunReport:
    best_node: int
    best_reward: float
    iterations_used: int
    converged: bool
    reward_trace: list[list[float]]

    def to_dict(self) -> dict:
        return {
            "best_node": self.best_node,
            "best_reward": self.best_reward,
            "iterations_used": self.iterations_used,
            "converged": self.converged,
            "reward_trace": self.reward_trace,
        }


# -- core operations ---------------------------------------------------------


def select(tree: SearchTree, top_k: int, rng: random.Random) -> int:
    """Sample one of the top-k evaluated nodes with probability proportional
    to its reward within that set."""
    candidates = tree.top_k_evaluated(top_k)
    if not candidates:
        raise StateError("selection requires at least one evaluated node")
    rewards = [tree.get(i).reward for i in candidates]
    total = sum(rewards)
    pick = rng.random() * total
    cumulative = 0.0
    for node_id, reward in zip(candidates, rewards):
        cumulative += reward
        if pick < cumulative:
            return node_id
    return candidates[-1]


def selection_probabilities(tree: SearchTree, top_k: int) -> dict[int, float]:
    candidates = tree.top_k_evaluated(top_k)
    total = sum(tree.get(i).reward for i in candidates)
    return {i: tree.get(i).reward / total for i in candidates}


def refine(
    selected_node: int,
    tree: SearchTree,
    config: RunConfig,
    gateway: LlmGateway,
    pack: PromptPack,
    new_workflow_id: str,
) -> tuple[Workflow, ModificationRecord]:
    """Ask the optimizer for one targeted modification of the selected
    workflow, given its accumulated child experiences and the improvement
    suggestions stored by its last evaluation."""
    node = tree.get(selected_node)
    experiences_text = "\n".join(
        f"- [{e.modification.kind}] {e.modification.description} -> reward {e.reward:.4f}; feedback: {e.feedback}"
        for e in node.experiences
    ) or "(none yet)"
    suggestions = ""
    if node.eval_detail:
        suggestions = node.eval_detail.get("suggestions", "")
    prompt = pack.render(
        "refine_workflow",
        task=config.task,
        prompts=canonical_dumps(node.workflow.prompts.to_dict()),
        script=node.workflow.code.script,
        experiences=experiences_text,
        suggestions=suggestions or "(none)",
    )
    exchange = ChatExchange(role="optimizer", messages=[{"speaker": "user", "text": prompt}], seed=config.rng_seed)
    try:
        data = gateway.complete_structured(exchange, REFINE_SCHEMA)
    except FormatError as exc:
        raise RefinementError(f"optimizer response unparseable: {exc}; raw payloads logged") from exc
    except GatewayError as exc:
        raise RefinementError(f"optimizer gateway failed: {exc}") from exc
    workflow = Workflow(
        id=new_workflow_id,
        prompts=PromptSet.from_dict(data["prompts"]),
        code=CodeArtifact(
            script=data["script"],
            interpreter_hint=node.workflow.code.interpreter_hint,
            entry_contract=node.workflow.code.entry_contract,
        ),
    )
    modification = ModificationRecord(
        description=data["modification"]["description"],
        kind=data["modification"].get("kind", "mixed"),
    )
    try:
        workflow.validate()
        modification.validate()
    except ValidationError as exc:
        raise RefinementError(f"optimizer returned an invalid workflow: {exc}") from exc
    return workflow, modification


def backpropagate(tree: SearchTree, new_node_id: int, reward: float, feedback: str, iteration: int) -> Experience:
    """Set the new node's exact reward (never averaged) and append the
    experience record to its parent and every ancestor up to the root."""
    tree.set_reward(new_node_id, reward)
    node = tree.get(new_node_id)
    modification = node.workflow.parent_modification or ModificationRecord(description="(root)", kind="mixed")
    experience = Experience(
        modification=modification,
        reward=reward,
        feedback=feedback,
        source_node=new_node_id,
        iteration=iteration,
    )
    for ancestor in tree.ancestors(new_node_id):
        tree.append_experience(ancestor, experience)
    return experience


def check_convergence(reward_trace: list[list[float]], epsilon: float, top_k: int) -> bool:
    """True iff each of the top-k ranked rewards moved by at most epsilon
    between the last two iterations. Ranks missing in both compare equal;
    a rank present in only one iteration blocks convergence."""
    if len(reward_trace) < 2:
        return False
    prev, curr = reward_trace[-2], reward_trace[-1]
    for rank in range(top_k):
        has_prev, has_curr = rank < len(prev), rank < len(curr)
        if not has_prev and not has_curr:
            continue
        if has_prev != has_curr:
            return False
        if abs(curr[rank] - prev[rank]) > epsilon:
            return False
    return True


# -- evaluation pipeline -------------------------------------------------------


class Evaluator:
    """Runs a workflow and computes its full EvaluationResult: samples,
    metric set (per metric_mode, with caching for 'once'), score matrix,
    workflow quality, and the hybrid reward."""

    def __init__(
        self,
        config: RunConfig,
        gateway: LlmGateway,
        pack: PromptPack,
        registry: Optional[InterpreterRegistry] = None,
        limits: Optional[ExecutionLimits] = None,
        llm_endpoint: str = "",
    ):
        self.config = config
        self.gateway = gateway
        self.pack = pack
        self.registry = registry or InterpreterRegistry()
        self.limits = limits or ExecutionLimits()
        self.llm_endpoint = llm_endpoint
        self.cached_metrics: Optional[MetricSet] = None
        self.metric_generations = 0

    def run_batch(self, workflow: Workflow, n: int, source_node: int = -1) -> list[Sample]:
        return execute_workflow(
            workflow,
            n,
            self.limits,
            self.registry,
            task=self.config.task,
            llm_endpoint=self.llm_endpoint,
            source_node=source_node,
        )

    def metrics_for(self, samples: list[Sample], iteration: int) -> MetricSet:
        if self.config.metric_mode == "once":
            effective = 1 if self.cached_metrics is None else max(iteration, 2)
        else:
            effective = iteration
        metric_set = metrics_for_iteration(
            self.config.metric_mode,
            effective,
            self.cached_metrics,
            self.config.task,
            samples,
            self.gateway,
            self.pack,
            count=self.config.metric_candidates,
            max_metrics=self.config.max_metrics,
        )
        if metric_set.provenance == "selected":
            self.metric_generations += 1
            self.cached_metrics = metric_set
        metric_set.iteration = iteration
        return metric_set

    def evaluate(self, workflow: Workflow, iteration: int, source_node: int = -1) -> EvaluationResult:
        samples = self.run_batch(workflow, self.config.batch_size, source_node)
        metric_set = self.metrics_for(samples, iteration)
        matrix = score_samples(samples, metric_set, self.gateway, self.pack)
        sample_score = aggregate_sample_score(matrix)
        quality = score_workflow(workflow, self.gateway, self.pack)
        workflow_score = quality.mean()
        reward = hybrid_reward(sample_score, workflow_score, self.config.weights)
        return EvaluationResult(
            samples=samples,
            metric_set=metric_set,
            score_matrix=matrix,
            workflow_quality=quality,
            sample_score=sample_score,
            workflow_score=workflow_score,
            hybrid_reward=reward,
            suggestions=collect_suggestions(matrix),
        )


# -- run loop -------------------------------------------------------------------


class SearchEngine:
    def __init__(
        self,
        config: RunConfig,
        tree: SearchTree,
        gateway: LlmGateway,
        evaluator: Evaluator,
        store: RunStore,
        pack: Optional[PromptPack] = None,
    ):
        config.validate()
        self.config = config
        self.tree = tree
        self.gateway = gateway
        self.evaluator = evaluator
        self.store = store
        self.pack = pack or PromptPack.load_default()

    def _trace_entry(self) -> list[float]:
        return [self.tree.get(i).reward for i in self.tree.top_k_evaluated(self.config.top_k)]

    def run(self) -> RunReport:
        if self.tree.root is None or self.tree.get(self.tree.root).reward is None:
            raise StateError("run requires an evaluated root node")
        rng = random.Random(self.config.rng_seed)
        trace: list[list[float]] = []
        consecutive_skips = 0
        skip_errors: list[str] = []
        converged = False
        iteration = self.tree.iteration_count
        iterations_used = 0

        while iteration < self.config.max_iterations:
            iteration += 1
            iterations_used = iteration
            try:
                self._expand(iteration, rng, trace)
            except (RefinementError, EvaluationError, GenerationError, GatewayError) as exc:
                consecutive_skips += 1
                skip_errors.append(f"iteration {iteration}: {exc}")
                logger.warning("iteration %d skipped: %s", iteration, exc)
                if consecutive_skips >= 3:
                    diagnostic = {
                        "iteration": iteration,
                        "consecutive_skips": consecutive_skips,
                        "errors": skip_errors[-3:],
                    }
                    self.store.append_event(
                        "aborted", {"iteration": iteration, "reason": "3 consecutive skipped iterations", **diagnostic}
                    )
                    self.store.save_tree(self.tree)
                    raise RunAbortedError("run aborted after 3 consecutive skipped iterations", diagnostic)
                continue
            consecutive_skips = 0
            trace.append(self._trace_entry())
            if check_convergence(trace, self.config.epsilon, self.config.top_k):
                converged = True
                self.store.append_event("converged", {"iteration": iteration, "converged": True})
                break

        if not converged:
            self.store.append_event(
                "converged", {"iteration": iterations_used, "converged": False, "reason": "iteration cap"}
            )
        self.store.save_tree(self.tree)
        best = self.tree.best_node()
        return RunReport(
            best_node=best,
            best_reward=self.tree.get(best).reward,
            iterations_used=iterations_used,
            converged=converged,
            reward_trace=trace,
        )

    def _expand(self, iteration: int, rng: random.Random, trace: list[list[float]]) -> None:
        selected = select(self.tree, self.config.top_k, rng)
        self.store.append_event("selected", {"iteration": iteration, "node": selected})

        new_workflow_id = f"wf-{self.tree._next_id}"
        workflow, modification = refine(selected, self.tree, self.config, self.gateway, self.pack, new_workflow_id)
        node_id = self.tree.add_child(selected, workflow, modification)
        self.store.append_event(
            "refined",
            {"iteration": iteration, "node": self.tree.get(node_id).to_dict(), "parent": selected},
        )

        try:
            result = self.evaluator.evaluate(workflow, iteration, source_node=node_id)
        except ExecutionError as exc:
            # Crashing workflows score the scale floor but stay in the tree:
            # their failure feedback still informs future refinement.
            self.store.append_event(
                "executed",
                {"iteration": iteration, "node": node_id, "ok": False, "stderr": exc.stderr, "error": str(exc)},
            )
            reward = FLOOR_REWARD
            feedback = f"execution failed: {exc}"
            self._commit(node_id, iteration, reward, feedback)
            return

        for sample in result.samples:
            sample.source_node = node_id
        self.store.append_event(
            "executed",
            {"iteration": iteration, "node": node_id, "ok": True, "sample_count": len(result.samples)},
        )
        self.store.append_event(
            "metrics", {"iteration": iteration, "metric_set": result.metric_set.to_dict()}
        )
        self.store.save_metric_set(iteration, result.metric_set)
        node = self.tree.get(node_id)
        node.eval_detail = result.to_dict()
        self.store.append_event(
            "scored",
            {
                "iteration": iteration,
                "node": node_id,
                "sample_score": result.sample_score,
                "workflow_score": result.workflow_score,
                "hybrid_reward": result.hybrid_reward,
                "eval_detail": node.eval_detail,
            },
        )
        self._commit(node_id, iteration, result.hybrid_reward, result.suggestions)

    def _commit(self, node_id: int, iteration: int, reward: float, feedback: str) -> None:
        experience = backpropagate(self.tree, node_id, reward, feedback, iteration)
        self.tree.iteration_count = iteration
        self.store.append_event(
            "backpropagated",
            {
                "iteration": iteration,
                "node": node_id,
                "reward": reward,
                "experience": experience.to_dict(),
                "ancestors": self.tree.ancestors(node_id),
            },
        )
        self.store.save_tree(self.tree)
