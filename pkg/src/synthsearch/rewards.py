"""Dataset-free hybrid reward: judged sample quality plus introspective
workflow quality, combined as a weighted average on the shared 1-5 scale.

Out-of-range or malformed judge outputs are never clamped: the gateway
re-asks once and then the evaluation fails, so miscalibrated judge prompts
surface as errors instead of polluting rewards.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from .errors import EvaluationError, FormatError, ValidationError
from .executor import Sample
from .gateway import ChatExchange, LlmGateway
from .metrics import MetricSet
from .prompts import PromptPack
from .workflow import REWARD_MAX, REWARD_MIN, Workflow, check_reward

SAMPLE_JUDGE_SCHEMA = {
    "type": "object",
    "required": ["score", "justification"],
    "properties": {
        "score": {"type": "number", "minimum": REWARD_MIN, "maximum": REWARD_MAX},
        "justification": {"type": "string", "minLength": 1},
    },
}

_SUBSCORE = {"type": "number", "minimum": REWARD_MIN, "maximum": REWARD_MAX}

WORKFLOW_JUDGE_SCHEMA = {
    "type": "object",
    "required": ["code", "prompt", "rationale"],
    "properties": {
        "code": {
            "type": "object",
            "required": ["clarity", "efficiency", "robustness"],
            "properties": {"clarity": _SUBSCORE, "efficiency": _SUBSCORE, "robustness": _SUBSCORE},
        },
        "prompt": {
            "type": "object",
            "required": ["clarity", "specificity", "effectiveness"],
            "properties": {"clarity": _SUBSCORE, "specificity": _SUBSCORE, "effectiveness": _SUBSCORE},
        },
        "rationale": {"type": "string"},
    },
}


@dataclass
class RewardWeights:
    w_sample: float = 0.5
    w_workflow: float = 0.5

    def validate(self) -> None:
        if self.w_sample < 0 or self.w_workflow < 0:
            raise ValidationError("reward weights must be >= 0")
        if abs(self.w_sample + self.w_workflow - 1.0) > 1e-9:
            raise ValidationError(f"reward weights must sum to 1, got {self.w_sample + self.w_workflow}")

    def to_dict(self) -> dict:
        return {"w_sample": self.w_sample, "w_workflow": self.w_workflow}

    @classmethod
    def from_dict(cls, data: dict) -> "RewardWeights":
        return cls(w_sample=data["w_sample"], w_workflow=data["w_workflow"])


@dataclass
class ScoreMatrix:
    """Per-(sample, metric) judge scores with parallel justifications."""

    scores: list[list[float]]
    justifications: list[list[str]]
    metric_names: list[str] = field(default_factory=list)

    def validate(self) -> None:
        if not self.scores or not self.scores[0]:
            raise ValidationError("score matrix must be non-empty")
        width = len(self.scores[0])
        if any(len(row) != width for row in self.scores):
            raise ValidationError("ragged score matrix")
        if len(self.justifications) != len(self.scores) or any(
            len(row) != width for row in self.justifications
        ):
            raise ValidationError("justification matrix shape mismatch")
        for row in self.scores:
            for cell in row:
                check_reward(cell, "score cell")
        for row in self.justifications:
            for cell in row:
                if not cell:
                    raise ValidationError("empty justification cell")
        if self.metric_names and len(self.metric_names) != width:
            raise ValidationError("metric_names length mismatch")

    def to_dict(self) -> dict:
        return {"scores": self.scores, "justifications": self.justifications, "metric_names": self.metric_names}

    @classmethod
    def from_dict(cls, data: dict) -> "ScoreMatrix":
        return cls(
            scores=[list(r) for r in data["scores"]],
            justifications=[list(r) for r in data["justifications"]],
            metric_names=list(data.get("metric_names", [])),
        )


@dataclass
class WorkflowQuality:
    """Six introspective sub-scores on code and prompt quality."""

    code: dict[str, float]
    prompt: dict[str, float]
    rationale: str = ""

    CODE_KEYS = ("clarity", "efficiency", "robustness")
    PROMPT_KEYS = ("clarity", "specificity", "effectiveness")

    def validate(self) -> None:
        for key in self.CODE_KEYS:
            check_reward(self.code[key], f"code.{key}")
        for key in self.PROMPT_KEYS:
            check_reward(self.prompt[key], f"prompt.{key}")

    def sub_scores(self) -> list[float]:
        return [self.code[k] for k in self.CODE_KEYS] + [self.prompt[k] for k in self.PROMPT_KEYS]

    def mean(self) -> float:
        return sum(self.sub_scores()) / 6.0

    def to_dict(self) -> dict:
        return {"code": dict(self.code), "prompt": dict(self.prompt), "rationale": self.rationale}

    @classmethod
    def from_dict(cls, data: dict) -> "WorkflowQuality":
        return cls(code=dict(data["code"]), prompt=dict(data["prompt"]), rationale=data.get("rationale", ""))


def judge_request_payload(metric, sample: Sample) -> str:
    """The published judge wire format: {metric, sample, scale}."""
    return json.dumps(
        {"metric": metric.to_dict(), "sample": sample.payload, "scale": [1, 5]},
        sort_keys=True,
        ensure_ascii=False,
    )


def score_samples(
    samples: list[Sample],
    metric_set: MetricSet,
    gateway: LlmGateway,
    pack: PromptPack,
) -> ScoreMatrix:
    """One judge call per (sample, metric) pair, assembled in index order."""
    if not samples:
        raise ValidationError("score_samples requires a non-empty sample batch")
    if not metric_set.metrics:
        raise ValidationError("score_samples requires a non-empty metric set")
    scores: list[list[float]] = []
    justifications: list[list[str]] = []
    for sample in samples:
        score_row: list[float] = []
        just_row: list[str] = []
        for metric in metric_set.metrics:
            exchange = ChatExchange(
                role="evaluator",
                messages=[
                    {
                        "speaker": "user",
                        "text": pack.render("judge_sample", request=judge_request_payload(metric, sample)),
                    }
                ],
            )
            try:
                data = gateway.complete_structured(exchange, SAMPLE_JUDGE_SCHEMA)
            except FormatError as exc:
                raise EvaluationError(
                    f"judge failed for sample {sample.index}, metric {metric.name!r}: {exc}"
                ) from exc
            score_row.append(float(data["score"]))
            just_row.append(data["justification"])
        scores.append(score_row)
        justifications.append(just_row)
    matrix = ScoreMatrix(scores=scores, justifications=justifications, metric_names=[m.name for m in metric_set.metrics])
    matrix.validate()
    return matrix


def aggregate_sample_score(matrix: ScoreMatrix) -> float:
    """Flat mean over every (sample, metric) cell."""
    matrix.validate()
    cells = [cell for row in matrix.scores for cell in row]
    return sum(cells) / len(cells)


def score_workflow(workflow: Workflow, gateway: LlmGateway, pack: PromptPack) -> WorkflowQuality:
    """Introspective judge of the workflow itself (process, not product)."""
    workflow.validate()
    exchange = ChatExchange(
        role="optimizer",
        messages=[
            {
                "speaker": "user",
                "text": pack.render(
                    "judge_workflow",
                    prompts=json.dumps(workflow.prompts.templates, sort_keys=True, ensure_ascii=False),
                    script=workflow.code.script,
                ),
            }
        ],
    )
    try:
        data = gateway.complete_structured(exchange, WORKFLOW_JUDGE_SCHEMA)
    except FormatError as exc:
        raise EvaluationError(f"workflow quality judge failed: {exc}") from exc
    quality = WorkflowQuality.from_dict(data)
    quality.validate()
    return quality


def hybrid_reward(sample_score: float, workflow_score: float, weights: RewardWeights) -> float:
    weights.validate()
    check_reward(sample_score, "sample_score")
    check_reward(workflow_score, "workflow_score")
    return weights.w_sample * sample_score + weights.w_workflow * workflow_score


def collect_suggestions(matrix: ScoreMatrix) -> str:
    """All justifications in (sample, metric) order, tagged with sample index
    and metric name; stored as improvement suggestions for refinement."""
    matrix.validate()
    parts = []
    for i, row in enumerate(matrix.justifications):
        for j, justification in enumerate(row):
            name = matrix.metric_names[j] if matrix.metric_names else f"metric-{j}"
            parts.append(f"[sample {i} / {name}] {justification}")
    return "\n".join(parts)
