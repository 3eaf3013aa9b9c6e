import json

import pytest

from synthsearch.engine import Evaluator, RunConfig
from synthsearch.executor import ExecutionLimits, InterpreterRegistry
from synthsearch.gateway import GatewayBudget, LlmGateway, ScriptedProvider
from synthsearch.prompts import PromptPack
from synthsearch.rewards import RewardWeights
from synthsearch.workflow import CodeArtifact, PromptSet, Workflow

# Emits n fixed-shape samples; deterministic.
STUB_SCRIPT = """\
import json, sys
cfg = json.load(sys.stdin)
for i in range(cfg["n"]):
    print(json.dumps({"text": "sample %d for %s" % (i, cfg["task"])}, sort_keys=True))
"""

CRASH_SCRIPT = "import sys; sys.stderr.write('boom\\n'); sys.exit(3)\n"


def make_workflow(wf_id="wf-0", script=STUB_SCRIPT):
    return Workflow(
        id=wf_id,
        prompts=PromptSet(templates={"system": "You generate study questions."}),
        code=CodeArtifact(script=script),
        created_at="2026-01-01T00:00:00+00:00",
    )


def metric_set_response(names=("clarity", "accuracy")):
    return json.dumps(
        {
            "metrics": [
                {
                    "name": name,
                    "definition": f"measures {name} of the sample",
                    "positive_exemplar": f"a sample with high {name}",
                    "negative_exemplar": f"a sample lacking {name}",
                }
                for name in names
            ]
        }
    )


def judge_response(score=4.0, justification="solid but could be tighter"):
    return json.dumps({"score": score, "justification": justification})


def workflow_quality_response(code=(4, 4, 4), prompt=(4, 4, 4)):
    return json.dumps(
        {
            "code": {"clarity": code[0], "efficiency": code[1], "robustness": code[2]},
            "prompt": {"clarity": prompt[0], "specificity": prompt[1], "effectiveness": prompt[2]},
            "rationale": "straightforward implementation",
        }
    )


def refine_response(description="Added a self-verification step", script=STUB_SCRIPT, kind="mixed"):
    return json.dumps(
        {
            "prompts": {"templates": {"system": "You generate verified study questions."}},
            "script": script,
            "modification": {"description": description, "kind": kind},
        }
    )


def initial_response(script=STUB_SCRIPT):
    return json.dumps(
        {
            "prompts": {"templates": {"system": "You generate study questions."}},
            "script": script,
            "notes": "baseline",
        }
    )


def default_rules(judge_scores=None, refine_scripts=None, metric_names=("clarity", "accuracy")):
    """Scripted rules covering every engine prompt; judge scores and refine
    scripts may be queues driving multi-iteration scenarios."""
    judge_scores = judge_scores or [4.0]
    refine_scripts = refine_scripts or [STUB_SCRIPT]
    return [
        {"contains": "candidate-nonce", "responses": [metric_set_response(metric_names)]},
        {"contains": "impartial judge scoring", "responses": [judge_response(s) for s in judge_scores]},
        {"contains": "reviewing the implementation quality", "responses": [workflow_quality_response()]},
        {
            "contains": "one targeted modification",
            "responses": [refine_response(f"Refinement #{i}", script) for i, script in enumerate(refine_scripts, 1)],
        },
        {"contains": "design a data-generation workflow", "responses": [initial_response()]},
        {"contains": "revising a data-generation workflow", "responses": [refine_response("Applied reviewer feedback")]},
    ]


def make_gateway(rules=None, event_sink=None, budget=None):
    provider = ScriptedProvider(rules if rules is not None else default_rules())
    return LlmGateway(
        {"optimizer": provider, "evaluator": provider},
        budget=budget or GatewayBudget(backoff_base_ms=1),
        event_sink=event_sink,
        sleep=lambda s: None,
    )


@pytest.fixture
def pack():
    return PromptPack.load_default()


@pytest.fixture
def registry():
    return InterpreterRegistry()


@pytest.fixture
def limits():
    return ExecutionLimits(wall_timeout=30.0)


def make_config(**kwargs):
    defaults = dict(
        task="generate short study questions about geometry",
        max_iterations=5,
        batch_size=2,
        weights=RewardWeights(),
        metric_mode="once",
        hitl_mode="auto",
        rng_seed=7,
    )
    defaults.update(kwargs)
    return RunConfig(**defaults)


def make_evaluator(config, gateway, pack):
    return Evaluator(config, gateway, pack, registry=InterpreterRegistry(), limits=ExecutionLimits(wall_timeout=30.0))
