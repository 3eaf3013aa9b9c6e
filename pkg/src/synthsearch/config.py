"""Configuration loading: one TOML or JSON file, with CLI overrides applied
on top. Credentials come from environment variables named in the config,
never from the file itself.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Optional

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - version specific
    import tomli as tomllib

from .engine import Evaluator, RunConfig
from .errors import ValidationError
from .executor import ExecutionLimits, InterpreterRegistry
from .gateway import GatewayBudget, LlmGateway, OpenAIChatProvider, Provider, ScriptedProvider
from .prompts import PromptPack
from .rewards import RewardWeights

_RUN_KEYS = (
    "task",
    "max_iterations",
    "epsilon",
    "batch_size",
    "top_k",
    "metric_mode",
    "hitl_mode",
    "rng_seed",
)


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".toml":
        return tomllib.loads(text)
    return json.loads(text)


def run_config_from(data: dict, overrides: Optional[dict] = None) -> RunConfig:
    merged = {k: data[k] for k in _RUN_KEYS if k in data}
    if "weights" in data:
        merged["weights"] = RewardWeights.from_dict(data["weights"])
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    config = RunConfig(**merged)
    config.validate()
    return config


def _build_provider(role: str, spec: dict, base_dir: Path) -> Provider:
    if "scripted" in spec:
        return ScriptedProvider.from_file(base_dir / spec["scripted"])
    if "endpoint" in spec:
        api_key = os.environ.get(spec.get("api_key_env", ""), "")
        return OpenAIChatProvider(
            endpoint=spec["endpoint"],
            model=spec.get("model", ""),
            api_key=api_key,
            timeout=spec.get("timeout", 120.0),
        )
    raise ValidationError(f"provider for role {role!r} needs 'scripted' or 'endpoint'")


def build_gateway(data: dict, base_dir: Path, event_sink=None) -> LlmGateway:
    providers_cfg = data.get("providers", {})
    providers = {role: _build_provider(role, spec, base_dir) for role, spec in providers_cfg.items()}
    if not providers:
        raise ValidationError("config must define at least one provider under 'providers'")
    budget = GatewayBudget(**data.get("budget", {}))
    return LlmGateway(providers, budget=budget, event_sink=event_sink)


def build_registry(data: dict) -> InterpreterRegistry:
    registry = InterpreterRegistry()
    for hint, argv in data.get("interpreters", {}).items():
        registry.register(hint, argv)
    return registry


def build_limits(data: dict) -> ExecutionLimits:
    limits = ExecutionLimits(**data.get("limits", {}))
    limits.validate()
    return limits


def build_evaluator(
    data: dict, config: RunConfig, gateway: LlmGateway, pack: Optional[PromptPack] = None
) -> Evaluator:
    return Evaluator(
        config,
        gateway,
        pack or PromptPack.load_default(),
        registry=build_registry(data),
        limits=build_limits(data),
        llm_endpoint=data.get("providers", {}).get("evaluator", {}).get("endpoint", ""),
    )
