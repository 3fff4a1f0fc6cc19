"""Agent reply envelope: branch control flow, role payloads, parsing.

Every dialog turn produces one JSON object. Four envelope fields are common
to all roles (branch, problem, message, summary); the rest of the object is
the role's payload, kept flat on the wire exactly as the model emits it.
Parsing is tolerant of the usual completion noise (code fences, leading
prose, trailing commentary, unknown keys) but strict about the schema:
missing required fields, bad types, inadmissible branches, and a problem
text that disagrees with the branch are all rejected so the repair loop can
re-prompt.
"""

from __future__ import annotations

import json
import string
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from . import roles
from .errors import InadmissibleBranch, MalformedResponse


class BranchType(Enum):
    """Control-flow signal carried by every agent response."""

    CONTINUE = "Continue"
    INTERRUPT = "Interrupt"
    REMAKE_SUBTASKS = "RemakeSubtasks"
    ROLE_TASK_FINISH = "RoleTaskFinish"
    TASK_MISMATCH = "TaskMismatch"


# Branches that must carry a non-empty problem description.
PROBLEM_BRANCHES: frozenset[BranchType] = frozenset(
    {BranchType.INTERRUPT, BranchType.REMAKE_SUBTASKS, BranchType.TASK_MISMATCH}
)

_POOL_BRANCHES = frozenset(
    {
        BranchType.CONTINUE,
        BranchType.ROLE_TASK_FINISH,
        BranchType.TASK_MISMATCH,
        BranchType.INTERRUPT,
    }
)

ADMISSIBLE_BRANCHES: dict[str, frozenset[BranchType]] = {
    roles.PLANNER: frozenset({BranchType.CONTINUE, BranchType.INTERRUPT}),
    roles.REVIEWER: frozenset({BranchType.CONTINUE, BranchType.INTERRUPT}),
    roles.TASK_SCHEDULER: frozenset(
        {BranchType.CONTINUE, BranchType.REMAKE_SUBTASKS, BranchType.INTERRUPT}
    ),
    **{role: _POOL_BRANCHES for role in roles.POOL_ROLES},
}


@dataclass
class PlannerPayload:
    """Coarse-grained decomposition plus the extracted final-format question."""

    sub_tasks: list[str]
    question: str = ""

    def to_json_dict(self) -> dict:
        return {"sub_tasks": list(self.sub_tasks), "question": self.question}


@dataclass
class RoleAssignment:
    """One scheduler row: a pool role and the subtasks routed to it."""

    role: str
    role_tasks: list[str]

    def to_json_dict(self) -> dict:
        return {"role": self.role, "role_tasks": list(self.role_tasks)}


@dataclass
class SchedulerPayload:
    """Distribution of the coarse plan across the decision-agent pool."""

    distribution: list[RoleAssignment]

    def to_json_dict(self) -> dict:
        return {"distribution": [entry.to_json_dict() for entry in self.distribution]}


Scalar = str | int | float | bool


@dataclass
class ActionInvocation:
    """A named action with concrete arguments, ready for authorization."""

    action: str
    args: dict[str, object] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {"action": self.action, "args": dict(self.args)}


@dataclass
class DecisionPayload:
    """Fine-grained reasoning step from a pool agent.

    The extras beyond thought_process/local_plan/intention/operation are
    role-flavoured (observation and information for agents that read the
    screen, selected_control for control targeting, analyze and answer for
    agents that conclude) and default to empty for the roles that do not
    use them.
    """

    thought_process: list[str]
    local_plan: list[str]
    intention: str
    operation: ActionInvocation | None = None
    observation: str = ""
    information: str = ""
    selected_control: str | None = None
    analyze: str = ""
    answer: str = ""

    def to_json_dict(self) -> dict:
        return {
            "observation": self.observation,
            "thought_process": list(self.thought_process),
            "local_plan": list(self.local_plan),
            "intention": self.intention,
            "operation": self.operation.to_json_dict() if self.operation else "",
            "selected_control": self.selected_control if self.selected_control is not None else "",
            "information": self.information,
            "analyze": self.analyze,
            "answer": self.answer,
        }


_VERDICT_STRIP = string.punctuation + string.whitespace + "*`"


@dataclass
class ReviewerPayload:
    """Reviewer analysis plus the judgement text the verdict is read from."""

    analyze: str
    judgement: str

    @property
    def verdict(self) -> str:
        """"Success" or "Failure", read from the judgement's last token.

        Case-insensitive; anything other than a trailing SUCCESS is Failure,
        including an empty judgement.
        """
        tokens = self.judgement.split()
        if not tokens:
            return "Failure"
        last = tokens[-1].strip(_VERDICT_STRIP).casefold()
        return "Success" if last == "success" else "Failure"

    def to_json_dict(self) -> dict:
        return {"analyze": self.analyze, "judgement": self.judgement}


Payload = PlannerPayload | SchedulerPayload | DecisionPayload | ReviewerPayload


@dataclass
class AgentResponse:
    """Envelope around one dialog turn's payload."""

    role: str
    branch: BranchType
    problem: str
    message: str
    summary: str
    payload: Payload

    def to_json_dict(self) -> dict:
        body: dict = {
            "role": self.role,
            "branch": self.branch.value,
            "problem": self.problem,
            "message": self.message,
            "summary": self.summary,
        }
        body.update(self.payload.to_json_dict())
        return body


def serialize_agent_response(response: AgentResponse) -> str:
    """Render a response back to its flat wire object.

    The output re-parses to an equal response for the same role; the extra
    "role" key is ignored by the parser like any unknown key.
    """
    return json.dumps(response.to_json_dict(), ensure_ascii=False, indent=2)


_decoder = json.JSONDecoder()


def extract_first_json_object(raw: str) -> dict:
    """Return the first balanced JSON object found in free-form text.

    Scans forward over every "{" and attempts a decode at each; code fences,
    prose, and trailing commentary are skipped naturally. Non-object JSON
    values (arrays, strings) never match.
    """
    index = raw.find("{")
    while index != -1:
        try:
            value, _ = _decoder.raw_decode(raw, index)
        except json.JSONDecodeError:
            value = None
        if isinstance(value, dict):
            return value
        index = raw.find("{", index + 1)
    raise MalformedResponse("no JSON object found in completion text")


def _required_str(data: dict, key: str) -> str:
    if key not in data:
        raise MalformedResponse(f"missing required field: {key}")
    value = data[key]
    if value is None:
        return ""
    if not isinstance(value, str):
        raise MalformedResponse(f"field {key!r} must be a string")
    return value


def _optional_str(data: dict, key: str, default: str = "") -> str:
    value = data.get(key)
    if value is None:
        return default
    if not isinstance(value, str):
        raise MalformedResponse(f"field {key!r} must be a string")
    return value


def _str_list(data: dict, key: str, *, required: bool) -> list[str]:
    if key not in data or data[key] is None:
        if required:
            raise MalformedResponse(f"missing required field: {key}")
        return []
    value = data[key]
    if not isinstance(value, list) or any(not isinstance(item, str) for item in value):
        raise MalformedResponse(f"field {key!r} must be a list of strings")
    return list(value)


def _parse_operation(value: object) -> ActionInvocation | None:
    if value is None or value == "" or value == {}:
        return None
    if not isinstance(value, dict):
        raise MalformedResponse("field 'operation' must be an object or empty")
    action = value.get("action")
    if not isinstance(action, str) or not action:
        raise MalformedResponse("operation needs a non-empty 'action' name")
    args = value.get("args", {})
    if args is None:
        args = {}
    if not isinstance(args, dict):
        raise MalformedResponse("operation 'args' must be an object")
    for name, arg in args.items():
        if isinstance(arg, (str, int, float, bool)):
            continue
        if isinstance(arg, list) and all(isinstance(item, (str, int, float, bool)) for item in arg):
            continue
        raise MalformedResponse(
            f"operation argument {name!r} must be a scalar or a flat list of scalars"
        )
    return ActionInvocation(action=action, args=dict(args))


def _parse_payload(role: str, branch: BranchType, data: dict) -> Payload:
    if role == roles.PLANNER:
        sub_tasks = _str_list(data, "sub_tasks", required=True)
        if branch is BranchType.CONTINUE and not sub_tasks:
            raise MalformedResponse("planner must produce at least one subtask on Continue")
        return PlannerPayload(sub_tasks=sub_tasks, question=_optional_str(data, "question"))

    if role == roles.TASK_SCHEDULER:
        raw = data.get("distribution")
        if raw is None:
            if branch is not BranchType.CONTINUE:
                return SchedulerPayload(distribution=[])
            raise MalformedResponse("missing required field: distribution")
        if not isinstance(raw, list):
            raise MalformedResponse("field 'distribution' must be a list")
        entries: list[RoleAssignment] = []
        for item in raw:
            if not isinstance(item, dict):
                raise MalformedResponse("distribution entries must be objects")
            name = item.get("role")
            if not isinstance(name, str) or not name:
                raise MalformedResponse("distribution entry needs a non-empty 'role'")
            tasks = item.get("role_tasks")
            if not isinstance(tasks, list) or any(not isinstance(t, str) for t in tasks):
                raise MalformedResponse("distribution entry 'role_tasks' must be a list of strings")
            entries.append(RoleAssignment(role=name, role_tasks=list(tasks)))
        return SchedulerPayload(distribution=entries)

    if role == roles.REVIEWER:
        return ReviewerPayload(
            analyze=_optional_str(data, "analyze"),
            judgement=_required_str(data, "judgement"),
        )

    # Pool roles share one payload shape.
    selected = data.get("selected_control")
    if selected is not None and not isinstance(selected, str):
        raise MalformedResponse("field 'selected_control' must be a string")
    payload = DecisionPayload(
        thought_process=_str_list(data, "thought_process", required=True),
        local_plan=_str_list(data, "local_plan", required=True),
        intention=_required_str(data, "intention"),
        operation=_parse_operation(data.get("operation")),
        observation=_optional_str(data, "observation"),
        information=_optional_str(data, "information"),
        selected_control=selected if selected else None,
        analyze=_optional_str(data, "analyze"),
        answer=_optional_str(data, "answer"),
    )
    if role == roles.PROGRAMMER and payload.answer and branch is not BranchType.ROLE_TASK_FINISH:
        raise MalformedResponse(
            "a non-empty 'answer' requires branch RoleTaskFinish"
        )
    return payload


def parse_agent_response(raw: str, role: str) -> AgentResponse:
    """Parse completion text into a validated response for the given role.

    Raises MalformedResponse for schema problems and InadmissibleBranch when
    the branch value is real but not allowed for this role. Unknown keys in
    the object are ignored.
    """
    role = roles.canonical_role(role)
    if role not in roles.DIALOG_ROLES:
        raise ValueError(f"{role!r} is not a dialog role")
    data = extract_first_json_object(raw)

    branch_raw = data.get("branch")
    if not isinstance(branch_raw, str):
        raise MalformedResponse("missing required field: branch")
    try:
        branch = BranchType(branch_raw)
    except ValueError:
        raise MalformedResponse(f"unknown branch value: {branch_raw!r}") from None
    if branch not in ADMISSIBLE_BRANCHES[role]:
        raise InadmissibleBranch(role, branch.value)

    problem = _required_str(data, "problem")
    message = _required_str(data, "message")
    summary = _required_str(data, "summary")
    if branch in PROBLEM_BRANCHES and not problem.strip():
        raise MalformedResponse(f"branch {branch.value} requires a non-empty 'problem'")
    if branch not in PROBLEM_BRANCHES and problem.strip():
        raise MalformedResponse(f"branch {branch.value} must leave 'problem' empty")

    payload = _parse_payload(role, branch, data)
    return AgentResponse(
        role=role,
        branch=branch,
        problem=problem,
        message=message,
        summary=summary,
        payload=payload,
    )


@dataclass(frozen=True)
class Violation:
    """One scheduler-distribution defect, reportable back to the scheduler."""

    kind: str  # UnknownRole | MissingSubtask | DuplicateSubtask | UnexpectedSubtask
    value: str

    def __str__(self) -> str:
        return f"{self.kind}({self.value!r})"


def validate_distribution(
    payload: SchedulerPayload,
    subtasks: Sequence[str],
    roster: Iterable[str],
) -> list[Violation]:
    """Check a distribution against the plan it claims to cover.

    Valid means: every named role is on the roster, and the union of all
    role_tasks equals the subtask list as a multiset (string identity after
    trimming). Returns all defects, deterministically ordered: unknown roles
    in distribution order, then missing subtasks in plan order, then
    duplicated and invented subtasks in encounter order.
    """
    known = {roles.canonical_role(name) for name in roster}
    violations: list[Violation] = []
    for entry in payload.distribution:
        if roles.canonical_role(entry.role) not in known:
            violations.append(Violation("UnknownRole", entry.role))

    expected = Counter(task.strip() for task in subtasks)
    assigned_in_order: list[str] = [
        task.strip() for entry in payload.distribution for task in entry.role_tasks
    ]
    assigned = Counter(assigned_in_order)

    seen_missing: set[str] = set()
    for task in subtasks:
        text = task.strip()
        if assigned[text] < expected[text] and text not in seen_missing:
            violations.append(Violation("MissingSubtask", text))
            seen_missing.add(text)

    flagged: set[str] = set()
    for text in assigned_in_order:
        if text in flagged:
            continue
        if expected[text] and assigned[text] > expected[text]:
            violations.append(Violation("DuplicateSubtask", text))
            flagged.add(text)
        elif not expected[text]:
            violations.append(Violation("UnexpectedSubtask", text))
            flagged.add(text)
    return violations


_SCHEMA_FIELDS: dict[str, str] = {
    roles.PLANNER: '"branch", "problem", "message", "summary", "sub_tasks" (list of strings), "question"',
    roles.TASK_SCHEDULER: '"branch", "problem", "message", "summary", "distribution" (list of {"role", "role_tasks"})',
    roles.REVIEWER: '"branch", "problem", "message", "summary", "analyze", "judgement"',
}
_DECISION_FIELDS = (
    '"observation", "thought_process" (list of strings), "local_plan" (list of strings), '
    '"intention", "operation" ({"action", "args"} or ""), "selected_control", "information", '
    '"branch", "problem", "message", "summary", "analyze", "answer"'
)


def schema_hint(role: str) -> str:
    """One-line description of the JSON object expected from a role."""
    role = roles.canonical_role(role)
    fields = _SCHEMA_FIELDS.get(role, _DECISION_FIELDS)
    branches = ", ".join(sorted(b.value for b in ADMISSIBLE_BRANCHES[role]))
    return (
        f"Reply with a single JSON object containing the fields {fields}. "
        f"Allowed branch values: {branches}. The 'problem' field must be non-empty "
        f"exactly when branch is one of Interrupt, RemakeSubtasks, TaskMismatch; "
        f"otherwise set it to an empty string."
    )
