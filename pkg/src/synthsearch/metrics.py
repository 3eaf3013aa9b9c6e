"""Dynamic metric generation with a three-candidate self-consistency ensemble.

Candidate metric sets are generated independently; the one with the highest
mean semantic overlap with the others is kept, filtering idiosyncratic sets.
Overlap is symmetric best-match token-Jaccard pairing over metric name +
definition (deterministic and dependency-free; a different similarity hook
can be injected for embedding-based matching).
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .errors import FormatError, GenerationError, ValidationError
from .gateway import ChatExchange, LlmGateway
from .prompts import PromptPack

logger = logging.getLogger(__name__)

MAX_METRICS = 12

PROVENANCES = ("proposed", "selected", "cached")

METRIC_SET_SCHEMA = {
    "type": "object",
    "required": ["metrics"],
    "properties": {
        "metrics": {
            "type": "array",
            "minItems": 1,
            "maxItems": MAX_METRICS,
            "items": {
                "type": "object",
                "required": ["name", "definition", "positive_exemplar", "negative_exemplar"],
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "definition": {"type": "string", "minLength": 1},
                    "positive_exemplar": {"type": "string", "minLength": 1},
                    "negative_exemplar": {"type": "string", "minLength": 1},
                },
            },
        }
    },
}


@dataclass
class Metric:
    name: str
    definition: str
    positive_exemplar: str
    negative_exemplar: str

    def validate(self) -> None:
        for fname in ("name", "definition", "positive_exemplar", "negative_exemplar"):
            if not getattr(self, fname):
                raise ValidationError(f"metric field {fname!r} must be non-empty")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "definition": self.definition,
            "positive_exemplar": self.positive_exemplar,
            "negative_exemplar": self.negative_exemplar,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Metric":
        return cls(data["name"], data["definition"], data["positive_exemplar"], data["negative_exemplar"])


@dataclass
class MetricSet:
    metrics: list[Metric]
    iteration: int = 0
    provenance: str = "proposed"

    def validate(self, cap: int = MAX_METRICS) -> None:
        if not 1 <= len(self.metrics) <= cap:
            raise ValidationError(f"metric set size {len(self.metrics)} outside [1, {cap}]")
        names = [m.name for m in self.metrics]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate metric names: {names}")
        if self.provenance not in PROVENANCES:
            raise ValidationError(f"unknown provenance {self.provenance!r}")
        for metric in self.metrics:
            metric.validate()

    def to_dict(self) -> dict:
        return {
            "metrics": [m.to_dict() for m in self.metrics],
            "iteration": self.iteration,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricSet":
        return cls(
            metrics=[Metric.from_dict(m) for m in data["metrics"]],
            iteration=data.get("iteration", 0),
            provenance=data.get("provenance", "proposed"),
        )


# -- semantic overlap --------------------------------------------------------

_TOKEN_RE = re.compile(r"[a-z0-9]+")

SimilarityFn = Callable[[Metric, Metric], float]


def _tokens(metric: Metric) -> Counter:
    return Counter(_TOKEN_RE.findall(f"{metric.name} {metric.definition}".lower()))


def token_jaccard(a: Metric, b: Metric) -> float:
    """Multiset Jaccard over lowercased word tokens of name + definition."""
    ca, cb = _tokens(a), _tokens(b)
    union = sum((ca | cb).values())
    if union == 0:
        return 1.0
    return sum((ca & cb).values()) / union


def _directional_overlap(a: MetricSet, b: MetricSet, sim: SimilarityFn) -> float:
    """Best-match pass a->b: each metric of `a` claims a distinct metric of
    `b`, maximizing total similarity (exact assignment via bitmask DP, cheap
    at the set-size cap); metrics of `a` left unmatched contribute 0.
    Returns the mean over all of `a`."""
    la, lb = len(a.metrics), len(b.metrics)
    sims = [[sim(ma, mb) for mb in b.metrics] for ma in a.metrics]
    dp = [0.0] * (1 << lb)
    for i in range(la):
        nxt = list(dp)  # leaving a.metrics[i] unmatched is always allowed
        for mask, value in enumerate(dp):
            for j in range(lb):
                if not mask & (1 << j):
                    cand = value + sims[i][j]
                    if cand > nxt[mask | (1 << j)]:
                        nxt[mask | (1 << j)] = cand
        dp = nxt
    return max(dp) / la


def semantic_overlap(a: MetricSet, b: MetricSet, sim: SimilarityFn = token_jaccard) -> float:
    """Symmetric best-match overlap in [0, 1]."""
    if not a.metrics or not b.metrics:
        raise ValidationError("semantic_overlap requires non-empty metric sets")
    return (_directional_overlap(a, b, sim) + _directional_overlap(b, a, sim)) / 2.0


def select_consistent(candidates: list[MetricSet], sim: SimilarityFn = token_jaccard) -> MetricSet:
    """Candidate with the highest mean overlap with all other candidates;
    ties broken by earliest index."""
    if len(candidates) < 2:
        raise ValidationError("select_consistent needs at least 2 candidates")
    best_idx, best_mean = 0, -1.0
    for i, cand in enumerate(candidates):
        others = [semantic_overlap(cand, other, sim) for j, other in enumerate(candidates) if j != i]
        mean = sum(others) / len(others)
        if mean > best_mean:
            best_idx, best_mean = i, mean
    chosen = candidates[best_idx]
    return replace(chosen, metrics=list(chosen.metrics), provenance="selected")


# -- generation pipeline -----------------------------------------------------


def _samples_digest(samples: list) -> str:
    return json.dumps([s.payload for s in samples], sort_keys=True)[:4000]


def propose_metric_sets(
    task: str,
    samples: list,
    gateway: LlmGateway,
    pack: PromptPack,
    count: int = 3,
    iteration: int = 0,
    max_metrics: int = MAX_METRICS,
) -> list[MetricSet]:
    """`count` independently generated candidate sets (distinct stateless
    calls, distinct nonces). Candidates that fail validation after one
    re-ask are dropped; fewer than 2 survivors is a generation error."""
    if not samples:
        raise ValidationError("metric proposal requires a non-empty sample batch")
    survivors = []
    for nonce in range(count):
        candidate = None
        for attempt in range(2):
            exchange = ChatExchange(
                role="evaluator",
                messages=[
                    {
                        "speaker": "user",
                        "text": pack.render(
                            "propose_metrics",
                            task=task,
                            samples=_samples_digest(samples),
                            nonce=f"{nonce}.{attempt}",
                            max_metrics=max_metrics,
                        ),
                    }
                ],
                seed=nonce,
            )
            try:
                data = gateway.complete_structured(exchange, METRIC_SET_SCHEMA)
                candidate = MetricSet.from_dict({"metrics": data["metrics"]})
                candidate.iteration = iteration
                candidate.validate(cap=max_metrics)
                break
            except (FormatError, ValidationError) as exc:
                logger.warning("metric candidate %d attempt %d invalid: %s", nonce, attempt, exc)
                candidate = None
        if candidate is not None:
            survivors.append(candidate)
    if len(survivors) < 2:
        raise GenerationError(f"only {len(survivors)} valid metric candidates out of {count}")
    return survivors


def metrics_for_iteration(
    mode: str,
    iteration: int,
    cached: Optional[MetricSet],
    task: str,
    samples: list,
    gateway: LlmGateway,
    pack: PromptPack,
    count: int = 3,
    max_metrics: int = MAX_METRICS,
    sim: SimilarityFn = token_jaccard,
) -> MetricSet:
    """Metric set for one iteration: regenerated every call in `iterative`
    mode, generated once and reused (provenance=cached) in `once` mode."""
    if mode not in ("iterative", "once"):
        raise ValidationError(f"unknown metric mode {mode!r}")
    if mode == "once" and iteration > 1:
        if cached is None:
            raise ValidationError("metric mode 'once' past iteration 1 requires a cached set")
        return replace(cached, metrics=list(cached.metrics), iteration=iteration, provenance="cached")
    candidates = propose_metric_sets(
        task, samples, gateway, pack, count=count, iteration=iteration, max_metrics=max_metrics
    )
    selected = select_consistent(candidates, sim)
    selected.iteration = iteration
    return selected
