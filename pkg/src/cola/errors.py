"""Exception types shared across the engine.

Validation failures that a repair re-prompt can fix (malformed output,
inadmissible branch) are distinct from faults that end or park a session
(exhausted validation, exhausted playbook, budget). Environment faults keep
the failing action's target in a structured attribute so reviewers and logs
can show it verbatim.
"""

from __future__ import annotations


class ColaError(Exception):
    """Base class for every error raised by this package."""


class MalformedResponse(ColaError):
    """Completion text did not yield a schema-valid agent response."""

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class InadmissibleBranch(ColaError):
    """Branch value is valid JSON but not allowed for the emitting role."""

    def __init__(self, role: str, branch: object):
        super().__init__(f"branch {branch} is not admissible for role {role!r}")
        self.role = role
        self.branch = branch


class ValidationExhausted(ColaError):
    """Repair attempts ran out without producing a valid response."""

    def __init__(self, last_error: Exception):
        super().__init__(f"validation exhausted: {last_error}")
        self.last_error = last_error


class PlaybookExhausted(ColaError):
    """No scripted entry matches the pending completion request."""

    def __init__(self, role: str, step: int):
        super().__init__(f"no scripted response for role {role!r} at step {step}")
        self.role = role
        self.step = step


class TransportError(ColaError):
    """Remote completion failed after retries."""


class RateLimited(ColaError):
    """Remote endpoint returned 429."""

    def __init__(self, retry_after: float | None):
        super().__init__(f"rate limited (retry after {retry_after})")
        self.retry_after = retry_after


class EmbeddingFailure(ColaError):
    """Embedding provider returned an unusable vector."""


class DimensionMismatch(ColaError):
    """Vector dimension differs from the store's dimension."""

    def __init__(self, expected: int, got: int):
        super().__init__(f"expected dimension {expected}, got {got}")
        self.expected = expected
        self.got = got


class DuplicateAction(ColaError):
    """An action name was registered twice."""

    def __init__(self, name: str):
        super().__init__(f"action {name!r} is already registered")
        self.name = name


class EnvironmentFault(ColaError):
    """An action could not be applied; the environment is unchanged."""


class TargetNotFound(EnvironmentFault):
    def __init__(self, label: int):
        super().__init__(f"no control with label {label}")
        self.label = label


class AppNotFound(EnvironmentFault):
    def __init__(self, name: str):
        super().__init__(f"no application named {name!r}")
        self.name = name


class FileNotFound(EnvironmentFault):
    def __init__(self, path: str):
        super().__init__(f"no file at {path!r}")
        self.path = path


class SandboxError(EnvironmentFault):
    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ScenarioParseError(ColaError):
    """Scenario file is syntactically or semantically invalid."""

    def __init__(self, line: int | None, detail: str):
        at = f"line {line}: " if line is not None else ""
        super().__init__(f"{at}{detail}")
        self.line = line
        self.detail = detail


class UnboundPlaceholder(ColaError):
    """A prompt template placeholder has no binding."""

    def __init__(self, name: str):
        super().__init__(f"no binding for placeholder {{{name}}}")
        self.name = name


class BudgetExhausted(ColaError):
    """The decision-step budget was spent before the task finished."""

    def __init__(self, budget: int):
        super().__init__(f"decision-step budget of {budget} exhausted")
        self.budget = budget


class NoSuchStep(ColaError):
    """Rollback target is outside the event log."""

    def __init__(self, step: int, size: int):
        super().__init__(f"step {step} not in event log of length {size}")
        self.step = step
        self.size = size


class CommandNotAllowed(ColaError):
    """The command is not valid for the session's mode or phase."""


class UnknownRole(ColaError):
    """A role name that no registered dialog agent answers to."""

    def __init__(self, role: str):
        super().__init__(f"unknown role: {role!r}")
        self.role = role


class ConfigError(ColaError):
    """Service configuration is missing or contradictory."""
