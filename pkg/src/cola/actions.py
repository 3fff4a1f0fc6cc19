"""Action registry: what each decision agent is allowed to do.

Every action carries a domain, the set of pool roles authorized to invoke
it. Authorization is a total function returning a verdict value, never an
exception, so callers can route the outcome into a repair prompt. Prompt
rendering is deterministic: registration order, fixed formatting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from . import roles
from .errors import DuplicateAction
from .responses import ActionInvocation

PARAM_KINDS = ("text", "integer", "number", "boolean", "list", "choice")


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str
    description: str
    required: bool = True
    choices: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in PARAM_KINDS:
            raise ValueError(f"unknown parameter kind {self.kind!r}")
        if self.kind == "choice" and not self.choices:
            raise ValueError(f"parameter {self.name!r} is a choice but lists no choices")

    def accepts(self, value: object) -> bool:
        if self.kind == "text":
            return isinstance(value, str)
        if self.kind == "integer":
            return isinstance(value, int) and not isinstance(value, bool)
        if self.kind == "number":
            return isinstance(value, (int, float)) and not isinstance(value, bool)
        if self.kind == "boolean":
            return isinstance(value, bool)
        if self.kind == "list":
            return isinstance(value, list) and all(
                isinstance(item, (str, int, float, bool)) for item in value
            )
        return isinstance(value, str) and value in (self.choices or ())

    def rendered_kind(self) -> str:
        if self.kind == "choice":
            return "choice of " + "|".join(self.choices or ())
        return self.kind


@dataclass(frozen=True)
class ActionDescriptor:
    name: str
    description: str
    params: tuple[ParamSpec, ...]
    domain: frozenset[str]


# Authorization verdicts. authorize() returns None when the call is allowed.


@dataclass(frozen=True)
class DomainViolation:
    role: str
    action: str

    def __str__(self) -> str:
        return f"action {self.action!r} is outside the domain of role {self.role!r}"


@dataclass(frozen=True)
class UnknownAction:
    action: str

    def __str__(self) -> str:
        return f"no registered action named {self.action!r}"


@dataclass(frozen=True)
class BadArgs:
    action: str
    missing: tuple[str, ...] = ()
    extra: tuple[str, ...] = ()
    invalid: tuple[str, ...] = ()

    def __str__(self) -> str:
        parts = []
        if self.missing:
            parts.append("missing: " + ", ".join(self.missing))
        if self.extra:
            parts.append("unexpected: " + ", ".join(self.extra))
        if self.invalid:
            parts.append("invalid: " + "; ".join(self.invalid))
        return f"bad arguments for {self.action!r} ({'; '.join(parts)})"


AuthorizationProblem = DomainViolation | UnknownAction | BadArgs


class ActionRegistry:
    """Ordered collection of action descriptors with domain gating."""

    def __init__(self):
        self._actions: dict[str, ActionDescriptor] = {}

    def register(self, descriptor: ActionDescriptor) -> None:
        if descriptor.name in self._actions:
            raise DuplicateAction(descriptor.name)
        self._actions[descriptor.name] = descriptor

    def get(self, name: str) -> ActionDescriptor | None:
        return self._actions.get(name)

    def names(self) -> list[str]:
        return list(self._actions)

    def actions_for_role(self, role: str) -> list[ActionDescriptor]:
        role = roles.canonical_role(role)
        return [d for d in self._actions.values() if role in d.domain]

    def authorize(self, role: str, invocation: ActionInvocation) -> AuthorizationProblem | None:
        """Check an invocation; returns a verdict value, never raises."""
        role = roles.canonical_role(role)
        descriptor = self._actions.get(invocation.action)
        if descriptor is None:
            return UnknownAction(invocation.action)
        if role not in descriptor.domain:
            return DomainViolation(role, invocation.action)

        by_name = {spec.name: spec for spec in descriptor.params}
        missing = tuple(
            spec.name
            for spec in descriptor.params
            if spec.required and spec.name not in invocation.args
        )
        extra = tuple(name for name in invocation.args if name not in by_name)
        invalid = tuple(
            f"{name} must be {by_name[name].rendered_kind()}"
            for name, value in invocation.args.items()
            if name in by_name and not by_name[name].accepts(value)
        )
        if missing or extra or invalid:
            return BadArgs(invocation.action, missing=missing, extra=extra, invalid=invalid)
        return None


def render_action_prompt(registry: ActionRegistry, role: str) -> str:
    """Catalog of the role's actions, stable byte-for-byte across runs."""
    role = roles.canonical_role(role)
    lines = [f"Available actions for {roles.display_name(role)}:"]
    for descriptor in registry.actions_for_role(role):
        lines.append(f"- {descriptor.name}: {descriptor.description}")
        if descriptor.params:
            lines.append("  parameters:")
            for spec in descriptor.params:
                need = "required" if spec.required else "optional"
                lines.append(
                    f"    {spec.name} ({spec.rendered_kind()}, {need}): {spec.description}"
                )
    return "\n".join(lines)


def render_action_catalog(registry: ActionRegistry) -> str:
    """Every registered action with its description, parameters omitted."""
    return "\n".join(
        f"- {descriptor.name}: {descriptor.description}"
        for descriptor in registry._actions.values()
    )


def _p(name: str, kind: str, description: str, required: bool = True, choices=None) -> ParamSpec:
    return ParamSpec(
        name=name,
        kind=kind,
        description=description,
        required=required,
        choices=tuple(choices) if choices else None,
    )


_SEARCH_FILE = frozenset({roles.SEARCHER, roles.FILE_MANAGER})
_SEARCH_FILE_APP = frozenset({roles.SEARCHER, roles.FILE_MANAGER, roles.APPLICATION_MANAGER})

BUILTIN_ACTIONS: tuple[ActionDescriptor, ...] = (
    ActionDescriptor(
        name="click_input",
        description="Click the control with the given button and double-click if needed.",
        params=(
            _p("control_label", "integer", "label of the target control from the annotated view"),
            _p("button", "choice", "mouse button to click with", choices=("left", "right")),
            _p("double", "boolean", "double-click when true"),
        ),
        domain=_SEARCH_FILE,
    ),
    ActionDescriptor(
        name="keyboard_input",
        description="Use to simulate the keyboard input.",
        params=(
            _p("control_label", "integer", "control to focus before typing", required=False),
            _p("text", "text", "text to type"),
        ),
        domain=_SEARCH_FILE,
    ),
    ActionDescriptor(
        name="hotkey",
        description=(
            "Use this API to simulate the keyboard shortcut keys or press a single key. "
            "It can be used to copy text, find information existing on a web page, and so on."
        ),
        params=(_p("keys", "list", "key names pressed together, in order"),),
        domain=_SEARCH_FILE_APP,
    ),
    ActionDescriptor(
        name="scroll",
        description=(
            "Use to scroll the control item. It typical apply to a ScrollBar type of control "
            "item when user request is to scroll the control item, or the targeted control "
            "item is not visible nor available in the control item list, but you know the "
            "control item is in the application window and you need to scroll to find it."
        ),
        params=(
            _p("control_label", "integer", "label of the control to scroll"),
            _p("direction", "choice", "scroll direction", choices=("up", "down")),
            _p("amount", "integer", "number of scroll ticks"),
        ),
        domain=_SEARCH_FILE,
    ),
    ActionDescriptor(
        name="wait_for_loading",
        description="Waiting for functions to load.",
        params=(_p("seconds", "number", "how long to wait"),),
        domain=_SEARCH_FILE_APP,
    ),
    ActionDescriptor(
        name="open_application",
        description="Open the application with the given name.",
        params=(_p("name", "text", "application name as shown on the desktop"),),
        domain=frozenset({roles.APPLICATION_MANAGER}),
    ),
    ActionDescriptor(
        name="run_python_code",
        description="Run the given Python code.",
        params=(_p("code", "text", "python source to run"),),
        domain=frozenset({roles.PROGRAMMER}),
    ),
    ActionDescriptor(
        name="read_file",
        description="Read the contents of file.",
        params=(_p("path", "text", "path of the file to read"),),
        domain=frozenset({roles.FILE_MANAGER}),
    ),
)


def built_in_registry() -> ActionRegistry:
    registry = ActionRegistry()
    for descriptor in BUILTIN_ACTIONS:
        registry.register(descriptor)
    return registry


def load_manifest(path: str | Path) -> list[ActionDescriptor]:
    """Parse a JSON manifest of extra actions.

    Shape: a list of {name, description, domain, params?} objects, params
    being {name, kind, description, required?, choices?}. Domains must name
    pool roles; only pool agents emit operations.
    """
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise ValueError("action manifest must be a JSON list")
    descriptors: list[ActionDescriptor] = []
    for item in data:
        if not isinstance(item, dict):
            raise ValueError("manifest entries must be objects")
        name = item.get("name")
        description = item.get("description")
        if not isinstance(name, str) or not name:
            raise ValueError("manifest entry needs a non-empty 'name'")
        if not isinstance(description, str) or not description:
            raise ValueError(f"action {name!r} needs a non-empty 'description'")
        domain: set[str] = set()
        for raw_role in item.get("domain", []):
            folded = roles.canonical_role(str(raw_role))
            if folded not in roles.POOL_ROLES:
                raise ValueError(f"action {name!r} names non-pool role {raw_role!r} in its domain")
            domain.add(folded)
        params = tuple(
            _p(
                p["name"],
                p["kind"],
                p.get("description", ""),
                required=bool(p.get("required", True)),
                choices=p.get("choices"),
            )
            for p in item.get("params", [])
        )
        descriptors.append(
            ActionDescriptor(
                name=name, description=description, params=params, domain=frozenset(domain)
            )
        )
    return descriptors


def extend_registry(registry: ActionRegistry, descriptors: Iterable[ActionDescriptor]) -> None:
    for descriptor in descriptors:
        registry.register(descriptor)
