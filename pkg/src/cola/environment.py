"""Simulated desktop: snapshots, perception rendering, scripted transitions.

Snapshots are immutable values; applying an action returns a new snapshot
and an optional result text, and any fault (unknown control, unknown app,
missing file, unrunnable code) raises before anything changes. What an
action does to the world comes from a scenario script: an ordered list of
transition rules matched by foreground app, action name, and argument
patterns, first match wins. Perception is a pure render of the snapshot,
bit-exact for a given format version.
"""

from __future__ import annotations

import ast
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import (
    AppNotFound,
    FileNotFound,
    SandboxError,
    ScenarioParseError,
    TargetNotFound,
)
from .responses import ActionInvocation

PERCEPTION_FORMAT_VERSION = 1

DEFAULT_RECT = (0, 0, 1200, 800)


@dataclass(frozen=True)
class Control:
    label: int
    kind: str
    title: str
    rect: tuple[int, int, int, int] = DEFAULT_RECT
    enabled: bool = True

    def to_json_dict(self) -> dict:
        return {
            "label": self.label,
            "kind": self.kind,
            "title": self.title,
            "rect": list(self.rect),
            "enabled": self.enabled,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Control":
        return cls(
            label=int(data["label"]),
            kind=str(data["kind"]),
            title=str(data["title"]),
            rect=tuple(data.get("rect", DEFAULT_RECT)),
            enabled=bool(data.get("enabled", True)),
        )


@dataclass(frozen=True)
class AppState:
    name: str
    open: bool = False
    foreground: bool = False

    def to_json_dict(self) -> dict:
        return {"name": self.name, "open": self.open, "foreground": self.foreground}


@dataclass(frozen=True)
class EnvironmentSnapshot:
    """One observable desktop state. Values only; apply() returns new ones."""

    step: int
    apps: tuple[AppState, ...]
    controls: tuple[Control, ...]
    files: dict[str, str] = field(default_factory=dict)
    last_result: str | None = None

    def foreground_app(self) -> AppState | None:
        for app in self.apps:
            if app.foreground:
                return app
        return None

    def control(self, label: int) -> Control | None:
        for item in self.controls:
            if item.label == label:
                return item
        return None

    def to_json_dict(self) -> dict:
        return {
            "step": self.step,
            "apps": [app.to_json_dict() for app in self.apps],
            "controls": [control.to_json_dict() for control in self.controls],
            "files": dict(self.files),
            "last_result": self.last_result,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "EnvironmentSnapshot":
        return cls(
            step=int(data["step"]),
            apps=tuple(
                AppState(
                    name=app["name"], open=bool(app["open"]), foreground=bool(app["foreground"])
                )
                for app in data["apps"]
            ),
            controls=tuple(Control.from_json_dict(c) for c in data["controls"]),
            files=dict(data["files"]),
            last_result=data.get("last_result"),
        )


@dataclass(frozen=True)
class PerceptionBundle:
    """Three renderings of one snapshot, from raw to fully annotated."""

    raw_view: str
    annotated_view: str
    controls_listing: str
    format_version: int = PERCEPTION_FORMAT_VERSION


def perceive(env: EnvironmentSnapshot) -> PerceptionBundle:
    """Render the snapshot. Pure; equal snapshots give equal bundles."""
    open_apps = [app.name for app in env.apps if app.open]
    apps_line = "Open applications: " + (", ".join(open_apps) if open_apps else "none")
    foreground = env.foreground_app()
    if foreground is None:
        raw = "No window is in the foreground.\n" + apps_line
        return PerceptionBundle(raw_view=raw, annotated_view=raw, controls_listing="")

    ordered = sorted(env.controls, key=lambda control: control.label)
    header = f"Foreground window: {foreground.name}\n{apps_line}\nControls:"
    raw_lines = []
    annotated_lines = []
    listing_lines = []
    for control in ordered:
        suffix = "" if control.enabled else " (disabled)"
        raw_lines.append(f"  {control.kind} '{control.title}'{suffix}")
        annotated_lines.append(f"  [{control.label}] {control.kind} '{control.title}'{suffix}")
        listing_lines.append(f"{control.label} | {control.kind} | {control.title}")
    return PerceptionBundle(
        raw_view="\n".join([header, *raw_lines]),
        annotated_view="\n".join([header, *annotated_lines]),
        controls_listing="\n".join(listing_lines),
    )


def diff(before: EnvironmentSnapshot, after: EnvironmentSnapshot) -> str:
    """Human-readable change report between two snapshots.

    Compares apps, controls, and files; the step counter and last_result are
    bookkeeping, not observable desktop state.
    """
    lines: list[str] = []
    before_apps = {app.name: app for app in before.apps}
    after_apps = {app.name: app for app in after.apps}
    for name, app in after_apps.items():
        was = before_apps.get(name)
        if app.open and (was is None or not was.open):
            lines.append(f"opened application: {name}")
        if was is not None and was.open and not app.open:
            lines.append(f"closed application: {name}")
    before_fg = before.foreground_app()
    after_fg = after.foreground_app()
    if (before_fg.name if before_fg else None) != (after_fg.name if after_fg else None):
        lines.append(f"foreground is now: {after_fg.name if after_fg else 'none'}")

    before_controls = {(c.label, c.kind, c.title) for c in before.controls}
    after_controls = {(c.label, c.kind, c.title) for c in after.controls}
    for label, kind, title in sorted(after_controls - before_controls):
        lines.append(f"control added: [{label}] {kind} '{title}'")
    for label, kind, title in sorted(before_controls - after_controls):
        lines.append(f"control removed: [{label}] {kind} '{title}'")

    for path in sorted(set(before.files) | set(after.files)):
        if path not in before.files:
            lines.append(f"file created: {path}")
        elif path not in after.files:
            lines.append(f"file deleted: {path}")
        elif before.files[path] != after.files[path]:
            lines.append(f"file modified: {path}")

    return "\n".join(lines) if lines else "no observable change"


@dataclass(frozen=True)
class Transition:
    """One scripted rule: when an action matches, the desktop reacts."""

    app: str | None  # foreground app name; None = requires no foreground
    any_app: bool  # True when the rule does not look at the foreground
    action: str
    args_match: dict
    opens: tuple[str, ...]
    closes: tuple[str, ...]
    foreground: str | None
    sets_foreground: bool
    controls: tuple[Control, ...] | None
    result: str | None
    has_result: bool
    files: dict[str, str | None]

    def matches(self, env: EnvironmentSnapshot, invocation: ActionInvocation) -> bool:
        if invocation.action != self.action:
            return False
        if not self.any_app:
            foreground = env.foreground_app()
            if (foreground.name if foreground else None) != self.app:
                return False
        for key, pattern in self.args_match.items():
            if key not in invocation.args:
                return False
            value = invocation.args[key]
            if isinstance(pattern, dict):
                needle = pattern.get("contains", "")
                if needle not in str(value):
                    return False
            elif value != pattern:
                return False
        return True


@dataclass
class ScenarioScript:
    """Parsed scenario: app roster, seed files, ordered transition rules."""

    apps: tuple[str, ...]
    files: dict[str, str]
    transitions: tuple[Transition, ...]
    python_eval: bool = False

    def initial_snapshot(self) -> EnvironmentSnapshot:
        return EnvironmentSnapshot(
            step=0,
            apps=tuple(AppState(name=name) for name in self.apps),
            controls=(),
            files=dict(self.files),
            last_result=None,
        )

    def find_transition(
        self, env: EnvironmentSnapshot, invocation: ActionInvocation
    ) -> Transition | None:
        for transition in self.transitions:
            if transition.matches(env, invocation):
                return transition
        return None


def _default_window_control(app_name: str) -> Control:
    return Control(label=0, kind="Window", title=app_name)


_ALLOWED_EVAL_NODES = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Constant,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.FloorDiv,
    ast.Mod,
    ast.Pow,
    ast.USub,
    ast.UAdd,
    ast.Tuple,
)


def evaluate_arithmetic(code: str) -> str:
    """Evaluate a pure arithmetic expression; anything else is a sandbox fault."""
    try:
        tree = ast.parse(code.strip(), mode="eval")
    except SyntaxError as err:
        raise SandboxError(f"code is not a single expression: {err.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_EVAL_NODES):
            raise SandboxError(f"unsupported construct: {type(node).__name__}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise SandboxError("only numeric literals are supported")
    try:
        value = eval(compile(tree, "<arithmetic>", "eval"), {"__builtins__": {}}, {})
    except ArithmeticError as err:
        raise SandboxError(str(err)) from None
    return str(value)


def apply(
    env: EnvironmentSnapshot,
    invocation: ActionInvocation,
    script: ScenarioScript,
) -> tuple[EnvironmentSnapshot, str | None]:
    """Apply one authorized action; returns (next snapshot, result text).

    Faults raise without touching the snapshot. Result text is None unless
    the action inherently produces output (read_file, run_python_code) or
    the matching transition provides one.
    """
    action = invocation.action
    args = invocation.args

    if action == "open_application":
        name = str(args.get("name", ""))
        if name not in {app.name for app in env.apps}:
            raise AppNotFound(name)
    if "control_label" in args and args["control_label"] is not None:
        label = int(args["control_label"])
        if env.control(label) is None:
            raise TargetNotFound(label)
    if action == "read_file":
        path = str(args.get("path", ""))
        if path not in env.files:
            raise FileNotFound(path)

    transition = script.find_transition(env, invocation)

    result: str | None = None
    if action == "read_file":
        result = env.files[str(args["path"])]
    elif action == "run_python_code":
        if transition is not None and transition.has_result:
            result = transition.result
        elif script.python_eval:
            result = evaluate_arithmetic(str(args.get("code", "")))
        else:
            raise SandboxError("no scripted output for this code and evaluation is disabled")

    apps = list(env.apps)
    controls: tuple[Control, ...] | None = None
    files = dict(env.files)

    if action == "open_application":
        name = str(args["name"])
        apps = [
            replace(app, open=app.open or app.name == name, foreground=app.name == name)
            for app in apps
        ]
        controls = (_default_window_control(name),)

    if transition is not None:
        by_name = {app.name: app for app in apps}
        for name in transition.opens:
            by_name[name] = replace(by_name[name], open=True)
        for name in transition.closes:
            by_name[name] = replace(by_name[name], open=False, foreground=False)
        if transition.sets_foreground:
            for name, app in by_name.items():
                by_name[name] = replace(
                    app,
                    open=app.open or name == transition.foreground,
                    foreground=name == transition.foreground,
                )
        apps = [by_name[app.name] for app in apps]
        if transition.controls is not None:
            controls = transition.controls
        if transition.has_result and action != "run_python_code":
            result = transition.result
        for path, content in transition.files.items():
            if content is None:
                files.pop(path, None)
            else:
                files[path] = content

    next_env = EnvironmentSnapshot(
        step=env.step + 1,
        apps=tuple(apps),
        controls=env.controls if controls is None else controls,
        files=files,
        last_result=result,
    )
    foreground = next_env.foreground_app()
    if foreground is None and next_env.controls:
        next_env = replace(next_env, controls=())
    elif foreground is not None and not next_env.controls:
        next_env = replace(next_env, controls=(_default_window_control(foreground.name),))
    return next_env, result


def _fail(line: int | None, detail: str) -> ScenarioParseError:
    return ScenarioParseError(line, detail)


def _parse_transition(index: int, item: object, apps: set[str]) -> Transition:
    where = f"transitions[{index}]"
    if not isinstance(item, dict):
        raise _fail(None, f"{where} must be an object")
    when = item.get("when")
    if not isinstance(when, dict) or not isinstance(when.get("action"), str):
        raise _fail(None, f"{where}.when needs an 'action' name")
    then = item.get("then", {})
    if not isinstance(then, dict):
        raise _fail(None, f"{where}.then must be an object")

    any_app = "app" not in when
    app = when.get("app")
    if app is not None and not isinstance(app, str):
        raise _fail(None, f"{where}.when.app must be a string or null")
    if isinstance(app, str) and app not in apps:
        raise _fail(None, f"{where}.when.app names unknown application {app!r}")
    args_match = when.get("args_match", {})
    if not isinstance(args_match, dict):
        raise _fail(None, f"{where}.when.args_match must be an object")

    def app_list(key: str) -> tuple[str, ...]:
        names = then.get(key, [])
        if not isinstance(names, list) or any(not isinstance(n, str) for n in names):
            raise _fail(None, f"{where}.then.{key} must be a list of application names")
        for name in names:
            if name not in apps:
                raise _fail(None, f"{where}.then.{key} names unknown application {name!r}")
        return tuple(names)

    sets_foreground = "foreground" in then
    foreground = then.get("foreground")
    if foreground is not None and (not isinstance(foreground, str) or foreground not in apps):
        raise _fail(None, f"{where}.then.foreground names unknown application {foreground!r}")

    controls = None
    if "controls" in then:
        raw_controls = then["controls"]
        if not isinstance(raw_controls, list):
            raise _fail(None, f"{where}.then.controls must be a list")
        try:
            controls = tuple(Control.from_json_dict(c) for c in raw_controls)
        except (KeyError, TypeError, ValueError) as err:
            raise _fail(None, f"{where}.then.controls is malformed: {err}") from None
        labels = [c.label for c in controls]
        if len(labels) != len(set(labels)):
            raise _fail(None, f"{where}.then.controls has duplicate labels")

    raw_files = then.get("files", {})
    if not isinstance(raw_files, dict):
        raise _fail(None, f"{where}.then.files must be an object")

    return Transition(
        app=app,
        any_app=any_app,
        action=when["action"],
        args_match=dict(args_match),
        opens=app_list("open"),
        closes=app_list("close"),
        foreground=foreground,
        sets_foreground=sets_foreground,
        controls=controls,
        result=then.get("result"),
        has_result="result" in then,
        files={str(k): (None if v is None else str(v)) for k, v in raw_files.items()},
    )


def _when_key(transition: Transition) -> str:
    return json.dumps(
        {
            "app": "*" if transition.any_app else transition.app,
            "action": transition.action,
            "args_match": transition.args_match,
        },
        sort_keys=True,
    )


def load_scenario(path: str | Path) -> tuple[EnvironmentSnapshot, ScenarioScript]:
    """Parse a scenario file into its initial snapshot and script."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ScenarioParseError(None, f"cannot read scenario {path}: {err}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise _fail(err.lineno, f"invalid JSON: {err.msg}") from None
    if not isinstance(data, dict):
        raise _fail(None, "scenario root must be an object")

    raw_apps = data.get("apps")
    if not isinstance(raw_apps, list) or not raw_apps:
        raise _fail(None, "scenario needs a non-empty 'apps' list")
    if any(not isinstance(name, str) or not name for name in raw_apps):
        raise _fail(None, "application names must be non-empty strings")
    if len(set(raw_apps)) != len(raw_apps):
        raise _fail(None, "duplicate application name in 'apps'")
    apps = set(raw_apps)

    raw_files = data.get("files", {})
    if not isinstance(raw_files, dict):
        raise _fail(None, "'files' must be an object of path -> content")

    raw_transitions = data.get("transitions", [])
    if not isinstance(raw_transitions, list):
        raise _fail(None, "'transitions' must be a list")
    transitions = [
        _parse_transition(index, item, apps) for index, item in enumerate(raw_transitions)
    ]
    seen: dict[str, int] = {}
    for index, transition in enumerate(transitions):
        key = _when_key(transition)
        if key in seen:
            raise _fail(
                None,
                f"transitions[{index}] duplicates the when-clause of transitions[{seen[key]}]",
            )
        seen[key] = index

    script = ScenarioScript(
        apps=tuple(raw_apps),
        files={str(k): str(v) for k, v in raw_files.items()},
        transitions=tuple(transitions),
        python_eval=bool(data.get("python_eval", False)),
    )
    return script.initial_snapshot(), script


class EnvironmentAdapter(ABC):
    """Contract every environment backend satisfies.

    The simulator below is the only implementation shipped; a real desktop
    adapter would satisfy the same three methods.
    """

    @abstractmethod
    def initial(self) -> EnvironmentSnapshot: ...

    @abstractmethod
    def perceive(self, env: EnvironmentSnapshot) -> PerceptionBundle: ...

    @abstractmethod
    def apply(
        self, env: EnvironmentSnapshot, invocation: ActionInvocation
    ) -> tuple[EnvironmentSnapshot, str | None]: ...


class SimulatedDesktop(EnvironmentAdapter):
    def __init__(self, script: ScenarioScript):
        self.script = script

    def initial(self) -> EnvironmentSnapshot:
        return self.script.initial_snapshot()

    def perceive(self, env: EnvironmentSnapshot) -> PerceptionBundle:
        return perceive(env)

    def apply(
        self, env: EnvironmentSnapshot, invocation: ActionInvocation
    ) -> tuple[EnvironmentSnapshot, str | None]:
        return apply(env, invocation, self.script)


class RealDesktop(EnvironmentAdapter):
    """Placeholder for a live desktop integration; not implemented here."""

    def initial(self) -> EnvironmentSnapshot:
        raise NotImplementedError("live desktop integration is not part of this package")

    def perceive(self, env: EnvironmentSnapshot) -> PerceptionBundle:
        raise NotImplementedError("live desktop integration is not part of this package")

    def apply(
        self, env: EnvironmentSnapshot, invocation: ActionInvocation
    ) -> tuple[EnvironmentSnapshot, str | None]:
        raise NotImplementedError("live desktop integration is not part of this package")
