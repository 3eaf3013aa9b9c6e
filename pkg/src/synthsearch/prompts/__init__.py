"""Versioned prompt pack: every engine prompt lives here, not inline in code."""

import json
from importlib import resources
from pathlib import Path

from ..errors import ValidationError


class PromptPack:
    def __init__(self, version: int, templates: dict[str, str]):
        self.version = version
        self.templates = templates

    @classmethod
    def load_default(cls) -> "PromptPack":
        text = resources.files(__package__).joinpath("prompt_pack.json").read_text(encoding="utf-8")
        data = json.loads(text)
        return cls(data["version"], data["templates"])

    @classmethod
    def load(cls, path: str | Path) -> "PromptPack":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(data["version"], data["templates"])

    def render(self, name: str, **values: str) -> str:
        # Placeholders use <<name>> so JSON braces in template bodies stay literal.
        try:
            text = self.templates[name]
        except KeyError:
            raise ValidationError(f"unknown prompt template {name!r}") from None
        for key, value in values.items():
            text = text.replace(f"<<{key}>>", str(value))
        return text
