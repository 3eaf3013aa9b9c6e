"""Search-based optimization of synthetic-data generation workflows.

Discovers and refines prompt+script workflows without any reference dataset:
tree search over executable workflows, guided by a hybrid LLM-judged reward
(sample quality against dynamically regenerated metrics plus introspective
workflow quality), bootstrapped by a short human-in-the-loop review phase.
"""

from .engine import (
    EvaluationResult,
    Evaluator,
    RunConfig,
    RunReport,
    SearchEngine,
    backpropagate,
    check_convergence,
    refine,
    select,
)
from .executor import ExecutionLimits, InterpreterRegistry, Sample, execute_workflow, validate_batch
from .gateway import ChatExchange, GatewayBudget, LlmGateway, OpenAIChatProvider, ScriptedProvider
from .metrics import Metric, MetricSet, metrics_for_iteration, propose_metric_sets, select_consistent, semantic_overlap
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
from .store import RunStore, replay_tree
from .workflow import (
    CodeArtifact,
    Experience,
    ModificationRecord,
    Node,
    PromptSet,
    SearchTree,
    Workflow,
)

__version__ = "0.1.0"
