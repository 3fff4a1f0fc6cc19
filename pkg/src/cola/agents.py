"""Dialog agents: role descriptors, prompt assembly, validated responses.

Each role's system prompt lives in a text asset next to this module;
placeholders ({role_capabilities}, {action_description},
{all_action_description}) are bound at agent construction. The user message
for a turn is assembled from fixed-order parts: the task, retrieved
long-term memories, the agent's recent responses, live context sections,
and finally any operator guidance. Assembly is deterministic so scripted
runs replay byte-identically.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import roles
from .actions import ActionRegistry, render_action_catalog, render_action_prompt
from .errors import UnboundPlaceholder
from .gateway import ChatMessage, ChatRequest, complete_validated
from .memory import MemoryRecord, ShortTermEntry
from .responses import (
    ActionInvocation,
    AgentResponse,
    Violation,
    serialize_agent_response,
)

DEFAULT_MAX_REPAIRS = 2

# Decision agents run with a tighter memory budget than the planning tier:
# they are called far more often, and their prompts already carry the
# perception bundle.
POOL_LT_N, POOL_ST_M = 2, 6
TIER_LT_N, TIER_ST_M = 3, 10


@dataclass(frozen=True)
class RoleDescriptor:
    """A pool role as the planner and scheduler see it."""

    name: str
    capability: str


BUILTIN_POOL: tuple[RoleDescriptor, ...] = (
    RoleDescriptor(
        name=roles.APPLICATION_MANAGER,
        capability="Can open applications such as browsers, explorers, chat software, etc.",
    ),
    RoleDescriptor(
        name=roles.FILE_MANAGER,
        capability=(
            "Can open, create, and delete files, such as txt, xlsx, pdf, png, mp4 "
            "and other documents."
        ),
    ),
    RoleDescriptor(
        name=roles.SEARCHER,
        capability=(
            "Can use an opened browser to search for information, open web pages, etc. "
            "Can also do everything related to web pages, such as playing videos in web "
            "pages, opening files, reading documents in web pages, and so on."
        ),
    ),
    RoleDescriptor(
        name=roles.PROGRAMMER,
        capability=(
            "Possesses logical reasoning and analytical skills. Can reason to arrive at "
            "an answer to a question or write Python code to get the result."
        ),
    ),
)


@dataclass
class AgentConfig:
    role: str
    lt_n: int
    st_m: int
    model: str = "default"
    temperature: float = 0.0
    max_repairs: int = DEFAULT_MAX_REPAIRS


def default_config(role: str) -> AgentConfig:
    role = roles.canonical_role(role)
    if roles.is_pool_role(role):
        return AgentConfig(role=role, lt_n=POOL_LT_N, st_m=POOL_ST_M)
    return AgentConfig(role=role, lt_n=TIER_LT_N, st_m=TIER_ST_M)


_PLACEHOLDER = re.compile(r"\{([a-z_][a-z0-9_]*)\}")


def load_template(role: str, prompt_dir: str | Path | None = None) -> str:
    """Read a role's system prompt template, from prompt_dir if overridden."""
    role = roles.canonical_role(role)
    if prompt_dir is not None:
        return (Path(prompt_dir) / f"{role}.txt").read_text(encoding="utf-8")
    return (resources.files("cola") / "prompts" / f"{role}.txt").read_text(encoding="utf-8")


def render_template(template: str, bindings: dict[str, str]) -> str:
    """Substitute {name} placeholders; unknown names are an error.

    Only bare lowercase identifiers in braces count as placeholders; the
    JSON examples inside templates never match.
    """

    def substitute(match: re.Match) -> str:
        name = match.group(1)
        if name not in bindings:
            raise UnboundPlaceholder(name)
        return bindings[name]

    return _PLACEHOLDER.sub(substitute, template)


def role_capabilities_json(pool: tuple[RoleDescriptor, ...]) -> str:
    return json.dumps(
        {roles.display_name(member.name): member.capability for member in pool},
        ensure_ascii=False,
        indent=2,
    )


def template_bindings(
    role: str, registry: ActionRegistry, pool: tuple[RoleDescriptor, ...]
) -> dict[str, str]:
    role = roles.canonical_role(role)
    if role in (roles.PLANNER, roles.TASK_SCHEDULER):
        return {"role_capabilities": role_capabilities_json(pool)}
    if role == roles.REVIEWER:
        return {"all_action_description": render_action_catalog(registry)}
    return {"action_description": render_action_prompt(registry, role)}


@dataclass
class PromptContext:
    """Everything that goes into one turn's user message."""

    task: str
    lt_records: list[MemoryRecord] = field(default_factory=list)
    st_entries: list[ShortTermEntry] = field(default_factory=list)
    sections: list[tuple[str, str]] = field(default_factory=list)
    guidance: str = ""


def build_prompt(
    config: AgentConfig,
    system_text: str,
    context: PromptContext,
    session_id: str | None = None,
) -> ChatRequest:
    """Compose the ChatRequest for one turn. Pure and deterministic."""
    parts: list[str] = [f"Task: {context.task}"]
    if context.lt_records:
        lines = ["Relevant long-term memory:"]
        lines += [f"- {record.summary}" for record in context.lt_records]
        parts.append("\n".join(lines))
    if context.st_entries:
        lines = ["Your recent responses:"]
        lines += [
            json.dumps(entry.response.to_json_dict(), ensure_ascii=False)
            for entry in context.st_entries
        ]
        parts.append("\n".join(lines))
    for title, body in context.sections:
        parts.append(f"{title}:\n{body}")
    if context.guidance:
        parts.append(f"Operator guidance (follow this first):\n{context.guidance}")
    return ChatRequest(
        messages=(
            ChatMessage(role="system", content=system_text),
            ChatMessage(role="user", content="\n\n".join(parts)),
        ),
        model=config.model,
        temperature=config.temperature,
        agent_role=config.role,
        session_id=session_id,
    )


class Agent:
    """One dialog role bound to its rendered system prompt and a backend."""

    def __init__(self, config: AgentConfig, system_text: str, backend):
        self.config = config
        self.system_text = system_text
        self.backend = backend

    @property
    def role(self) -> str:
        return self.config.role

    def build_request(self, context: PromptContext, session_id: str | None = None) -> ChatRequest:
        return build_prompt(self.config, self.system_text, context, session_id)

    def respond(self, context: PromptContext, session_id: str | None = None) -> AgentResponse:
        request = self.build_request(context, session_id)
        return complete_validated(
            self.backend, request, self.config.role, max_repairs=self.config.max_repairs
        )


def make_agent(
    role: str,
    backend,
    registry: ActionRegistry,
    pool: tuple[RoleDescriptor, ...] = BUILTIN_POOL,
    config: AgentConfig | None = None,
    prompt_dir: str | Path | None = None,
) -> Agent:
    role = roles.canonical_role(role)
    template = load_template(role, prompt_dir)
    system_text = render_template(template, template_bindings(role, registry, pool))
    return Agent(config or default_config(role), system_text, backend)


# Context builders: one per dialog position in the workflow. Titles and
# ordering are part of the replay contract; change them only with care.


def plan_context(task: str, problem: str = "", guidance: str = "") -> PromptContext:
    sections: list[tuple[str, str]] = []
    if problem:
        sections.append(
            ("A downstream agent reported a problem with the previous plan", problem)
        )
    sections.append(
        ("Instruction", "Decompose the task into coarse-grained subtasks and extract the question.")
    )
    return PromptContext(task=task, sections=sections, guidance=guidance)


def schedule_context(
    task: str,
    sub_tasks: list[str],
    violations: list[Violation] | None = None,
    problem: str = "",
    guidance: str = "",
) -> PromptContext:
    sections: list[tuple[str, str]] = []
    if problem:
        sections.append(
            ("A downstream agent reported a problem with the previous distribution", problem)
        )
    sections.append(
        ("Subtasks to distribute", json.dumps(sub_tasks, ensure_ascii=False, indent=2))
    )
    if violations:
        lines = "\n".join(f"- {violation}" for violation in violations)
        sections.append(("Your previous distribution was invalid", lines))
    sections.append(
        (
            "Instruction",
            "Assign every subtask to exactly one downstream role, copying each "
            "subtask string verbatim.",
        )
    )
    return PromptContext(task=task, sections=sections, guidance=guidance)


def decide_context(
    task: str,
    assignment: list[str],
    raw_view: str,
    annotated_view: str,
    controls_listing: str,
    judgement: str = "",
    message: str = "",
    rejection: str = "",
    guidance: str = "",
) -> PromptContext:
    sections = [
        ("Your current assignment", json.dumps(assignment, ensure_ascii=False)),
    ]
    if message:
        sections.append(("Message from the previous agent", message))
    sections.append(("Desktop view", raw_view))
    sections.append(("Desktop view with control labels", annotated_view))
    if controls_listing:
        sections.append(("Controls", controls_listing))
    if judgement:
        sections.append(("Reviewer feedback on your previous operation", judgement))
    if rejection:
        sections.append(("Your previous operation was rejected", rejection))
    return PromptContext(task=task, sections=sections, guidance=guidance)


def review_context(
    task: str,
    intention: str,
    operation: ActionInvocation | None,
    result: str | None,
    before_view: str,
    after_view: str,
    change_report: str,
) -> PromptContext:
    op_text = (
        json.dumps(operation.to_json_dict(), ensure_ascii=False) if operation else "(none)"
    )
    sections = [
        ("The agent's intention", intention),
        ("The operation", op_text),
        ("Desktop before the operation", before_view),
        ("Desktop after the operation", after_view),
        ("Observed changes", change_report),
        ("Result text returned by the operation", result if result is not None else "(none)"),
    ]
    return PromptContext(task=task, sections=sections)


def finalize_context(
    task: str,
    question: str,
    gathered: list[str],
    guidance: str = "",
) -> PromptContext:
    if question:
        instruction = (
            "All subtasks are complete. Answer the question in the `message` field, "
            "in the format the question asks for. Keep `branch` set to Continue and "
            "carry the completed plan in `sub_tasks`."
        )
        sections = [("Question to answer", question)]
    else:
        instruction = (
            "All subtasks are complete. The task needs no answer, so put a short "
            "completion summary in the `message` field. Keep `branch` set to Continue "
            "and carry the completed plan in `sub_tasks`."
        )
        sections = []
    if gathered:
        sections.append(("Information gathered during the run", "\n".join(gathered)))
    sections.append(("Instruction", instruction))
    return PromptContext(task=task, sections=sections, guidance=guidance)


def response_summary_text(response: AgentResponse) -> str:
    """The line that goes into long-term memory for one response."""
    return response.summary.strip()


def transcript_text(responses: list[AgentResponse]) -> str:
    """Concatenated wire forms, used as long-term memory content."""
    return "\n".join(serialize_agent_response(response) for response in responses)
