"""Exception hierarchy shared across the engine."""


class SynthSearchError(Exception):
    """Base class for all engine errors."""


class ValidationError(SynthSearchError):
    """A value violates a declared invariant (range, shape, emptiness)."""


class NotFoundError(SynthSearchError):
    """A referenced node, session, or run does not exist."""


class StateError(SynthSearchError):
    """Operation not legal in the current state (e.g. reward already set)."""


class GatewayError(SynthSearchError):
    """LLM transport failed after exhausting retries."""


class BudgetError(GatewayError):
    """The per-run call budget is exhausted."""


class FormatError(GatewayError):
    """Structured response failed validation after the corrective re-ask.

    Carries every raw payload seen so miscalibrated prompts can be debugged.
    """

    def __init__(self, message: str, raw_payloads: list[str] | None = None):
        super().__init__(message)
        self.raw_payloads = raw_payloads or []


class ScriptedMissError(GatewayError):
    """A scripted provider received a prompt no matcher covers."""

    def __init__(self, digest: str, preview: str = ""):
        super().__init__(f"no scripted response for prompt digest {digest}: {preview!r}")
        self.digest = digest


class TransportError(GatewayError):
    """A single provider call failed; retried by the gateway."""


class ExecutionError(SynthSearchError):
    """Workflow script failed: nonzero exit, timeout, or output overflow."""

    def __init__(self, message: str, stderr: str = ""):
        super().__init__(message)
        self.stderr = stderr


class BatchError(ValidationError):
    """Emitted sample batch violates the size or shape contract."""


class RefinementError(SynthSearchError):
    """Refinement step failed; the iteration is skipped."""


class EvaluationError(SynthSearchError):
    """Judge-based scoring failed; the iteration is skipped."""


class GenerationError(SynthSearchError):
    """Metric generation produced fewer than two valid candidate sets."""


class LoadError(SynthSearchError):
    """Persisted run data is corrupt or truncated."""


class RunAbortedError(SynthSearchError):
    """The optimization loop aborted after repeated consecutive failures."""

    def __init__(self, message: str, diagnostic: dict | None = None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}
