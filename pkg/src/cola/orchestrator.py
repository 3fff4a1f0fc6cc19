"""Session state machine: plan, schedule, decide/execute/review, finalize.

advance() runs exactly one step and appends a StepRecord whose state_blob
captures everything needed to resume from that point: phase, task context,
environment snapshot, short-term windows, and the scripted-backend cursor.
Long-term stores and the event log itself stay outside the blob; rollback
truncates the log and restores the blob at the target step.

Timestamps are logical (the record index) so that two runs with the same
scenario, playbook, and commands produce byte-identical logs.
"""

from __future__ import annotations

import base64
import hashlib
import json
import uuid
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from . import roles
from .actions import ActionRegistry, built_in_registry
from .agents import (
    BUILTIN_POOL,
    Agent,
    PromptContext,
    RoleDescriptor,
    decide_context,
    finalize_context,
    make_agent,
    plan_context,
    review_context,
    schedule_context,
    transcript_text,
)
from .environment import EnvironmentAdapter, PerceptionBundle, SimulatedDesktop, diff, load_scenario
from .errors import (
    BudgetExhausted,
    ColaError,
    CommandNotAllowed,
    EnvironmentFault,
    NoSuchStep,
    UnknownRole,
    ValidationExhausted,
)
from .memory import (
    LongTermStore,
    ShortTermWindow,
    StubEmbeddingProvider,
    load_store,
    lt_insert,
    lt_retrieve,
    save_store,
)
from .responses import (
    ActionInvocation,
    AgentResponse,
    BranchType,
    DecisionPayload,
    parse_agent_response,
    validate_distribution,
)

DEFAULT_BUDGET = 20

PLANNING = "planning"
SCHEDULING = "scheduling"
DECIDING = "deciding"
FINALIZING = "finalizing"
HALTED = "halted"
DONE = "done"


def canonical_json(value: object) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class InteractionMode(Enum):
    AUTOMATIC = "automatic"
    PASSIVE = "passive"
    ACTIVE = "active"


@dataclass(frozen=True)
class Phase:
    """Where the session is in the workflow; extra fields qualify the kind."""

    kind: str
    role: str = ""
    assignment_index: int = 0
    reason: str = ""
    answer: str = ""

    @classmethod
    def planning(cls) -> "Phase":
        return cls(PLANNING)

    @classmethod
    def scheduling(cls) -> "Phase":
        return cls(SCHEDULING)

    @classmethod
    def deciding(cls, role: str, assignment_index: int) -> "Phase":
        return cls(DECIDING, role=role, assignment_index=assignment_index)

    @classmethod
    def finalizing(cls) -> "Phase":
        return cls(FINALIZING)

    @classmethod
    def halted(cls, reason: str) -> "Phase":
        return cls(HALTED, reason=reason)

    @classmethod
    def done(cls, answer: str) -> "Phase":
        return cls(DONE, answer=answer)

    @property
    def terminal(self) -> bool:
        return self.kind in (HALTED, DONE)

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "role": self.role,
            "assignment_index": self.assignment_index,
            "reason": self.reason,
            "answer": self.answer,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Phase":
        return cls(
            kind=data["kind"],
            role=data.get("role", ""),
            assignment_index=data.get("assignment_index", 0),
            reason=data.get("reason", ""),
            answer=data.get("answer", ""),
        )


@dataclass(frozen=True)
class Command:
    """One steering instruction from the operator."""

    kind: str  # resume | guide | switch_role | rollback | abort
    text: str = ""
    role: str = ""
    step: int = -1


@dataclass
class Assignment:
    role: str
    role_tasks: list[str]

    def to_json_dict(self) -> dict:
        return {"role": self.role, "role_tasks": list(self.role_tasks)}

    @classmethod
    def from_json_dict(cls, data: dict) -> "Assignment":
        return cls(role=data["role"], role_tasks=list(data["role_tasks"]))


@dataclass
class TaskContext:
    """Mutable task state threaded between steps."""

    sub_tasks: list[str] = field(default_factory=list)
    question: str = ""
    assignments: list[Assignment] = field(default_factory=list)
    gathered: list[str] = field(default_factory=list)
    pending_problem: str = ""
    last_judgement: str = ""
    handoff: str = ""

    def to_json_dict(self) -> dict:
        return {
            "sub_tasks": list(self.sub_tasks),
            "question": self.question,
            "assignments": [entry.to_json_dict() for entry in self.assignments],
            "gathered": list(self.gathered),
            "pending_problem": self.pending_problem,
            "last_judgement": self.last_judgement,
            "handoff": self.handoff,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "TaskContext":
        return cls(
            sub_tasks=list(data["sub_tasks"]),
            question=data["question"],
            assignments=[Assignment.from_json_dict(entry) for entry in data["assignments"]],
            gathered=list(data["gathered"]),
            pending_problem=data["pending_problem"],
            last_judgement=data["last_judgement"],
            handoff=data["handoff"],
        )


def _response_from_wire(data: dict | None) -> AgentResponse | None:
    if data is None:
        return None
    return parse_agent_response(json.dumps(data), data["role"])


@dataclass
class StepRecord:
    """One completed step, with enough state to restore the session after it."""

    index: int
    phase: Phase
    acting_role: str
    response: AgentResponse | None
    invocation: ActionInvocation | None
    result: str | None
    review: AgentResponse | None
    env_before_hash: str
    env_after_hash: str
    guidance: str
    t: int
    state_blob: str

    def to_json_dict(self) -> dict:
        return {
            "index": self.index,
            "phase": self.phase.to_json_dict(),
            "acting_role": self.acting_role,
            "response": self.response.to_json_dict() if self.response else None,
            "invocation": self.invocation.to_json_dict() if self.invocation else None,
            "result": self.result,
            "review": self.review.to_json_dict() if self.review else None,
            "env_before_hash": self.env_before_hash,
            "env_after_hash": self.env_after_hash,
            "guidance": self.guidance,
            "t": self.t,
            "state_blob": self.state_blob,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "StepRecord":
        invocation = None
        if data["invocation"] is not None:
            invocation = ActionInvocation(
                action=data["invocation"]["action"], args=dict(data["invocation"]["args"])
            )
        return cls(
            index=data["index"],
            phase=Phase.from_json_dict(data["phase"]),
            acting_role=data["acting_role"],
            response=_response_from_wire(data["response"]),
            invocation=invocation,
            result=data["result"],
            review=_response_from_wire(data["review"]),
            env_before_hash=data["env_before_hash"],
            env_after_hash=data["env_after_hash"],
            guidance=data["guidance"],
            t=data["t"],
            state_blob=data["state_blob"],
        )

    def digest(self) -> str:
        return _sha256(canonical_json(self.to_json_dict()))


def build_agents(
    backend,
    registry: ActionRegistry,
    pool: tuple[RoleDescriptor, ...] = BUILTIN_POOL,
    prompt_dir: str | Path | None = None,
) -> dict[str, Agent]:
    """One agent per dialog role: planner, scheduler, reviewer, and the pool."""
    members = [roles.PLANNER, roles.TASK_SCHEDULER, roles.REVIEWER]
    members += [descriptor.name for descriptor in pool]
    return {
        role: make_agent(role, backend, registry, pool=pool, prompt_dir=prompt_dir)
        for role in members
    }


class Session:
    """Single-writer workflow session over one environment and one backend."""

    def __init__(
        self,
        *,
        request: str,
        mode: InteractionMode,
        agents: dict[str, Agent],
        adapter: EnvironmentAdapter,
        registry: ActionRegistry,
        backend,
        pool: tuple[RoleDescriptor, ...] = BUILTIN_POOL,
        budget: int = DEFAULT_BUDGET,
        session_id: str | None = None,
        session_dir: str | Path | None = None,
        memory_dir: str | Path | None = None,
        stores: dict[str, LongTermStore] | None = None,
        embedder=None,
        paused: bool = False,
    ):
        if not request.strip():
            raise ValueError("request must be non-empty")
        if budget < 1:
            raise ValueError("budget must be positive")
        for role in (roles.PLANNER, roles.TASK_SCHEDULER, roles.REVIEWER):
            if role not in agents:
                raise ValueError(f"missing agent for role {role!r}")
        for descriptor in pool:
            if descriptor.name not in agents:
                raise ValueError(f"missing agent for pool role {descriptor.name!r}")

        self.id = session_id or uuid.uuid4().hex[:12]
        self.request = request
        self.mode = mode
        self.agents = agents
        self.adapter = adapter
        self.registry = registry
        self.backend = backend
        self.pool = pool
        self.budget = budget
        self.embedder = embedder or StubEmbeddingProvider()

        self.phase = Phase.planning()
        self.phase_before_halt = Phase.planning()
        self.steps_used = 0
        self.context = TaskContext()
        self.env = adapter.initial()
        self.event_log: list[StepRecord] = []
        self.archived: list[StepRecord] = []
        self.windows = {
            role: ShortTermWindow(agent.config.st_m) for role, agent in agents.items()
        }
        self.awaiting_human = False
        self.memories_committed = False
        self.started = not paused
        self._armed = False
        self._pending_guidance: list[str] = []
        self._switch_to: str | None = None

        self.memory_dir = Path(memory_dir) if memory_dir else None
        self.stores = stores if stores is not None else self._open_stores()

        self.session_dir = Path(session_dir) if session_dir else None
        if self.session_dir:
            self.session_dir.mkdir(parents=True, exist_ok=True)
            self._save_meta()

    # -- store and file plumbing ------------------------------------------

    def _open_stores(self) -> dict[str, LongTermStore]:
        stores = {}
        for role in self.agents:
            path = self.memory_dir / f"{role}.jsonl" if self.memory_dir else None
            if path and path.exists():
                stores[role] = load_store(path)
            else:
                stores[role] = LongTermStore(owner_role=role, dimension=self.embedder.dimension)
        return stores

    def _save_meta(self) -> None:
        if not self.session_dir:
            return
        meta = {
            "id": self.id,
            "request": self.request,
            "mode": self.mode.value,
            "budget": self.budget,
            "phase": self.phase.to_json_dict(),
            "steps_used": self.steps_used,
            "awaiting_human": self.awaiting_human,
            "started": self.started,
            "records": len(self.event_log),
        }
        (self.session_dir / "meta.json").write_text(canonical_json(meta), encoding="utf-8")

    def _append_event(self, record: StepRecord) -> None:
        if not self.session_dir:
            return
        with open(self.session_dir / "events.jsonl", "a", encoding="utf-8") as handle:
            handle.write(canonical_json(record.to_json_dict()) + "\n")

    def _rewrite_events(self, archived_suffix: list[StepRecord]) -> None:
        if not self.session_dir:
            return
        lines = [canonical_json(record.to_json_dict()) for record in self.event_log]
        (self.session_dir / "events.jsonl").write_text(
            "".join(line + "\n" for line in lines), encoding="utf-8"
        )
        with open(self.session_dir / "archived.jsonl", "a", encoding="utf-8") as handle:
            for record in archived_suffix:
                handle.write(canonical_json(record.to_json_dict()) + "\n")

    # -- serialized state --------------------------------------------------

    def _env_hash(self) -> str:
        return _sha256(canonical_json(self.env.to_json_dict()))

    def state_blob(self) -> str:
        backend_state = None
        if hasattr(self.backend, "snapshot_state"):
            backend_state = self.backend.snapshot_state(self.id)
        state = {
            "phase": self.phase.to_json_dict(),
            "phase_before_halt": self.phase_before_halt.to_json_dict(),
            "steps_used": self.steps_used,
            "context": self.context.to_json_dict(),
            "env": self.env.to_json_dict(),
            "windows": {
                role: window.to_json_list() for role, window in sorted(self.windows.items())
            },
            "awaiting_human": self.awaiting_human,
            "memories_committed": self.memories_committed,
            "backend": backend_state,
        }
        return base64.b64encode(canonical_json(state).encode("utf-8")).decode("ascii")

    def restore_blob(self, blob: str) -> None:
        state = json.loads(base64.b64decode(blob.encode("ascii")))
        self.phase = Phase.from_json_dict(state["phase"])
        self.phase_before_halt = Phase.from_json_dict(state["phase_before_halt"])
        self.steps_used = state["steps_used"]
        self.context = TaskContext.from_json_dict(state["context"])
        self.env = type(self.env).from_json_dict(state["env"])
        self.windows = {
            role: ShortTermWindow.from_json_list(
                self.agents[role].config.st_m, state["windows"][role]
            )
            for role in self.agents
        }
        self.awaiting_human = state["awaiting_human"]
        self.memories_committed = state["memories_committed"]
        if state["backend"] is not None and hasattr(self.backend, "restore_state"):
            self.backend.restore_state(self.id, state["backend"])
        self._pending_guidance.clear()
        self._switch_to = None
        self._armed = False

    # -- operator commands -------------------------------------------------

    def _window_open(self) -> bool:
        if self.phase.terminal:
            return False
        return (not self.started) or self.awaiting_human or self.mode is InteractionMode.ACTIVE

    def resume(self) -> None:
        if self.phase.terminal:
            raise CommandNotAllowed(f"session is {self.phase.kind}")
        acted = False
        if not self.started:
            self.started = True
            acted = True
        if self.awaiting_human:
            self.awaiting_human = False
            acted = True
        if self.mode is InteractionMode.ACTIVE:
            self._armed = True
            acted = True
        if not acted:
            raise CommandNotAllowed("session is already running")
        self._save_meta()

    def inject_guidance(self, text: str) -> None:
        if not text.strip():
            raise CommandNotAllowed("guidance must be non-empty")
        if not self._window_open():
            raise CommandNotAllowed("session is not awaiting operator input")
        self._pending_guidance.append(text)
        if self.mode is InteractionMode.ACTIVE:
            self._armed = True

    def switch_role(self, role: str) -> None:
        target = roles.canonical_role(role)
        if target not in self.agents:
            raise UnknownRole(role)
        if target == roles.REVIEWER:
            raise CommandNotAllowed("the reviewer reacts to operations; it cannot lead a turn")
        halted_interrupt = self.phase.kind == HALTED and self.phase.reason == "interrupt"
        if not (self._window_open() or halted_interrupt):
            raise CommandNotAllowed("session is not awaiting operator input")
        effective = self.phase_before_halt if halted_interrupt else self.phase
        if roles.is_pool_role(target) and effective.kind != DECIDING:
            raise CommandNotAllowed("no active assignment to hand to a decision agent")
        if halted_interrupt:
            self.phase = self.phase_before_halt
            self.awaiting_human = True
        self._switch_to = target
        self._save_meta()

    def rollback(self, to_step: int) -> None:
        if not 0 <= to_step < len(self.event_log):
            raise NoSuchStep(to_step, len(self.event_log))
        suffix = self.event_log[to_step + 1 :]
        self.event_log = self.event_log[: to_step + 1]
        self.archived.extend(suffix)
        self.restore_blob(self.event_log[-1].state_blob)
        self._rewrite_events(suffix)
        self._save_meta()

    def abort(self) -> None:
        if self.phase.kind == DONE:
            raise CommandNotAllowed("session already finished")
        self.phase_before_halt = self.phase if self.phase.kind != HALTED else self.phase_before_halt
        self.phase = Phase.halted("abort")
        self.awaiting_human = False
        self._save_meta()

    def apply_command(self, command: Command) -> None:
        if command.kind == "resume":
            self.resume()
        elif command.kind == "guide":
            self.inject_guidance(command.text)
        elif command.kind == "switch_role":
            self.switch_role(command.role)
        elif command.kind == "rollback":
            self.rollback(command.step)
        elif command.kind == "abort":
            self.abort()
        else:
            raise CommandNotAllowed(f"unknown command kind: {command.kind!r}")

    # -- the step machine ----------------------------------------------------

    def ready_to_advance(self) -> bool:
        if self.phase.terminal or self.awaiting_human or not self.started:
            return False
        if self.mode is InteractionMode.ACTIVE and not self._armed:
            return False
        return True

    def advance(self) -> StepRecord:
        if self.phase.terminal:
            raise CommandNotAllowed(f"session is {self.phase.kind}")
        if self.awaiting_human:
            raise CommandNotAllowed("session awaits operator input")
        if not self.started:
            raise CommandNotAllowed("session is paused; resume it first")
        if self.mode is InteractionMode.ACTIVE:
            if not self._armed:
                raise CommandNotAllowed("active mode: each step needs a resume or guidance")
            self._armed = False

        guidance = "\n".join(self._pending_guidance)
        self._pending_guidance.clear()
        switch = self._switch_to
        self._switch_to = None

        try:
            if switch is not None:
                record = self._switched_step(switch, guidance)
            elif self.phase.kind == PLANNING:
                record = self._plan_step(guidance)
            elif self.phase.kind == SCHEDULING:
                record = self._schedule_step(guidance)
            elif self.phase.kind == DECIDING:
                record = self._decide_step(guidance)
            elif self.phase.kind == FINALIZING:
                record = self._finalize_step(guidance)
            else:  # pragma: no cover - phase kinds are closed
                raise ColaError(f"cannot advance from phase {self.phase.kind!r}")
        except ValidationExhausted:
            self._need_assistance("validation")
            self._save_meta()
            raise
        except BudgetExhausted:
            self._save_meta()
            raise

        self.event_log.append(record)
        self._append_event(record)
        self._save_meta()
        return record

    def run(self) -> Phase:
        """Advance until the session finishes or needs the operator."""
        while self.ready_to_advance():
            try:
                self.advance()
            except (BudgetExhausted, ValidationExhausted):
                break
        return self.phase

    # -- helpers shared by the step kinds ---------------------------------

    def _need_assistance(self, reason: str) -> None:
        if self.mode is InteractionMode.AUTOMATIC:
            self.phase_before_halt = self.phase
            self.phase = Phase.halted(reason)
        else:
            self.awaiting_human = True

    def _interrupted(self) -> None:
        self._need_assistance("interrupt")

    def _attach_memory(self, context: PromptContext, role: str, query: str) -> None:
        agent = self.agents[role]
        context.lt_records = lt_retrieve(self.stores[role], query, agent.config.lt_n, self.embedder)
        context.st_entries = self.windows[role].last(agent.config.st_m)

    def _note_response(self, role: str, response: AgentResponse) -> None:
        self.windows[role].append(len(self.event_log), response)
        if role != roles.REVIEWER and response.message.strip():
            self.context.handoff = response.message

    def _gather(self, *texts: str) -> None:
        for text in texts:
            if text and text.strip() and text not in self.context.gathered:
                self.context.gathered.append(text)

    def _finish(
        self,
        *,
        phase_before: Phase,
        acting_role: str,
        response: AgentResponse | None,
        guidance: str,
        env_before_hash: str,
        env_after_hash: str,
        invocation: ActionInvocation | None = None,
        result: str | None = None,
        review: AgentResponse | None = None,
    ) -> StepRecord:
        index = len(self.event_log)
        return StepRecord(
            index=index,
            phase=phase_before,
            acting_role=acting_role,
            response=response,
            invocation=invocation,
            result=result,
            review=review,
            env_before_hash=env_before_hash,
            env_after_hash=env_after_hash,
            guidance=guidance,
            t=index,
            state_blob=self.state_blob(),
        )

    # -- step kinds --------------------------------------------------------

    def _plan_step(self, guidance: str) -> StepRecord:
        phase_before = self.phase
        context = plan_context(self.request, problem=self.context.pending_problem, guidance=guidance)
        self._attach_memory(context, roles.PLANNER, self.request)
        response = self.agents[roles.PLANNER].respond(context, self.id)
        env_hash = self._env_hash()
        self._note_response(roles.PLANNER, response)
        if response.branch is BranchType.CONTINUE:
            self.context.sub_tasks = list(response.payload.sub_tasks)
            self.context.question = response.payload.question
            self.context.pending_problem = ""
            self.phase = Phase.scheduling()
        else:
            self._interrupted()
        return self._finish(
            phase_before=phase_before,
            acting_role=roles.PLANNER,
            response=response,
            guidance=guidance,
            env_before_hash=env_hash,
            env_after_hash=env_hash,
        )

    def _roster(self) -> list[str]:
        return [descriptor.name for descriptor in self.pool]

    def _accept_distribution(self, response: AgentResponse) -> None:
        self.context.assignments = [
            Assignment(role=roles.canonical_role(entry.role), role_tasks=list(entry.role_tasks))
            for entry in response.payload.distribution
            if entry.role_tasks
        ]
        self.context.pending_problem = ""
        self.context.last_judgement = ""
        first = self.context.assignments[0]
        self.phase = Phase.deciding(first.role, 0)

    def _schedule_step(self, guidance: str) -> StepRecord:
        phase_before = self.phase
        scheduler = self.agents[roles.TASK_SCHEDULER]
        context = schedule_context(
            self.request,
            self.context.sub_tasks,
            problem=self.context.pending_problem,
            guidance=guidance,
        )
        self._attach_memory(context, roles.TASK_SCHEDULER, self.request)
        response = scheduler.respond(context, self.id)
        if response.branch is BranchType.CONTINUE:
            violations = validate_distribution(
                response.payload, self.context.sub_tasks, self._roster()
            )
            if violations:
                # One repair turn; a still-invalid distribution sends the
                # problem back to the planner instead of looping here.
                repair = schedule_context(
                    self.request, self.context.sub_tasks, violations=violations
                )
                self._attach_memory(repair, roles.TASK_SCHEDULER, self.request)
                response = scheduler.respond(repair, self.id)
                if response.branch is BranchType.CONTINUE:
                    violations = validate_distribution(
                        response.payload, self.context.sub_tasks, self._roster()
                    )
                    if violations:
                        summary = "; ".join(str(violation) for violation in violations)
                        self.context.pending_problem = (
                            f"The distribution did not match the plan: {summary}"
                        )
                        self.phase = Phase.planning()
                    else:
                        self._accept_distribution(response)
            else:
                self._accept_distribution(response)
        if response.branch is BranchType.REMAKE_SUBTASKS:
            self.context.pending_problem = response.problem
            self.phase = Phase.planning()
        elif response.branch is BranchType.INTERRUPT:
            self._interrupted()
        env_hash = self._env_hash()
        self._note_response(roles.TASK_SCHEDULER, response)
        return self._finish(
            phase_before=phase_before,
            acting_role=roles.TASK_SCHEDULER,
            response=response,
            guidance=guidance,
            env_before_hash=env_hash,
            env_after_hash=env_hash,
        )

    def _review_turn(
        self,
        decision: DecisionPayload,
        invocation: ActionInvocation,
        result: str | None,
        before: PerceptionBundle,
        env_before,
    ) -> AgentResponse:
        after = self.adapter.perceive(self.env)
        context = review_context(
            self.request,
            intention=decision.intention,
            operation=invocation,
            result=result,
            before_view=before.raw_view,
            after_view=after.raw_view,
            change_report=diff(env_before, self.env),
        )
        self._attach_memory(context, roles.REVIEWER, decision.intention or self.request)
        review = self.agents[roles.REVIEWER].respond(context, self.id)
        self._note_response(roles.REVIEWER, review)
        return review

    def _decide_step(self, guidance: str) -> StepRecord:
        if self.steps_used >= self.budget:
            self.phase_before_halt = self.phase
            self.phase = Phase.halted("budget")
            raise BudgetExhausted(self.budget)
        phase_before = self.phase
        role = self.phase.role
        assignment = self.context.assignments[self.phase.assignment_index]
        agent = self.agents[role]
        bundle = self.adapter.perceive(self.env)
        env_before = self.env
        before_hash = self._env_hash()

        def prompt(rejection: str = "", extra_guidance: str = "") -> PromptContext:
            context = decide_context(
                self.request,
                assignment.role_tasks,
                raw_view=bundle.raw_view,
                annotated_view=bundle.annotated_view,
                controls_listing=bundle.controls_listing,
                judgement=self.context.last_judgement,
                message=self.context.handoff,
                rejection=rejection,
                guidance=extra_guidance,
            )
            self._attach_memory(context, role, " ".join(assignment.role_tasks))
            return context

        response = agent.respond(prompt(extra_guidance=guidance), self.id)
        self.steps_used += 1
        self.context.handoff = ""
        invocation: ActionInvocation | None = None
        result: str | None = None
        review: AgentResponse | None = None

        if response.branch is BranchType.CONTINUE and response.payload.operation is not None:
            verdict = self.registry.authorize(role, response.payload.operation)
            if verdict is not None:
                # One repair turn with the refusal quoted back.
                response = agent.respond(prompt(rejection=str(verdict)), self.id)
                if (
                    response.branch is BranchType.CONTINUE
                    and response.payload.operation is not None
                ):
                    verdict = self.registry.authorize(role, response.payload.operation)
                else:
                    verdict = None
                if verdict is not None:
                    invocation = response.payload.operation
                    result = str(verdict)
                    self._note_response(role, response)
                    self._need_assistance("validation")
                    return self._finish(
                        phase_before=phase_before,
                        acting_role=role,
                        response=response,
                        guidance=guidance,
                        env_before_hash=before_hash,
                        env_after_hash=before_hash,
                        invocation=invocation,
                        result=result,
                    )

        self._note_response(role, response)

        if response.branch is BranchType.CONTINUE:
            payload = response.payload
            if payload.operation is not None:
                invocation = payload.operation
                try:
                    self.env, result = self.adapter.apply(self.env, invocation)
                except EnvironmentFault as fault:
                    result = f"Operation failed: {fault}"
                review = self._review_turn(payload, invocation, result, bundle, env_before)
                self.context.last_judgement = review.payload.judgement
                if review.branch is BranchType.INTERRUPT:
                    self._interrupted()
            self._gather(payload.information, payload.answer, result or "")
        elif response.branch is BranchType.ROLE_TASK_FINISH:
            self._gather(response.payload.information, response.payload.answer)
            self.context.last_judgement = ""
            next_index = phase_before.assignment_index + 1
            if next_index < len(self.context.assignments):
                following = self.context.assignments[next_index]
                self.phase = Phase.deciding(following.role, next_index)
            else:
                self.phase = Phase.finalizing()
        elif response.branch is BranchType.TASK_MISMATCH:
            self.context.pending_problem = response.problem
            self.context.last_judgement = ""
            self.phase = Phase.scheduling()
        else:
            self._interrupted()

        return self._finish(
            phase_before=phase_before,
            acting_role=role,
            response=response,
            guidance=guidance,
            env_before_hash=before_hash,
            env_after_hash=self._env_hash(),
            invocation=invocation,
            result=result,
            review=review,
        )

    def _finalize_step(self, guidance: str) -> StepRecord:
        phase_before = self.phase
        context = finalize_context(
            self.request, self.context.question, self.context.gathered, guidance=guidance
        )
        self._attach_memory(context, roles.PLANNER, self.context.question or self.request)
        response = self.agents[roles.PLANNER].respond(context, self.id)
        env_hash = self._env_hash()
        self._note_response(roles.PLANNER, response)
        if response.branch is BranchType.CONTINUE:
            answer = response.message.strip() or response.summary.strip()
            self.phase = Phase.done(answer)
        else:
            self._interrupted()
        return self._finish(
            phase_before=phase_before,
            acting_role=roles.PLANNER,
            response=response,
            guidance=guidance,
            env_before_hash=env_hash,
            env_after_hash=env_hash,
        )

    def _switched_step(self, role: str, guidance: str) -> StepRecord:
        if role == roles.PLANNER:
            if self.phase.kind == FINALIZING:
                return self._finalize_step(guidance)
            return self._plan_step(guidance)
        if role == roles.TASK_SCHEDULER:
            return self._schedule_step(guidance)
        # Pool role: take over the current assignment slot.
        self.phase = Phase.deciding(role, self.phase.assignment_index)
        return self._decide_step(guidance)

    # -- memory commit -------------------------------------------------------

    def commit_memories(self) -> None:
        """Store each acting agent's run, once, after the session ends."""
        if not self.phase.terminal:
            raise CommandNotAllowed("session is still running")
        if self.memories_committed:
            return
        transcripts: dict[str, list[AgentResponse]] = {}
        for record in self.event_log:
            if record.response is not None:
                transcripts.setdefault(record.acting_role, []).append(record.response)
            if record.review is not None:
                transcripts.setdefault(roles.REVIEWER, []).append(record.review)
        for role in sorted(transcripts):
            responses = transcripts[role]
            summary = "\n".join(
                response.summary.strip() for response in responses if response.summary.strip()
            )
            if not summary:
                continue
            lt_insert(self.stores[role], summary, transcript_text(responses), self.embedder)
            if self.memory_dir:
                save_store(self.stores[role], self.memory_dir / f"{role}.jsonl")
        self.memories_committed = True
        self._save_meta()


def checkpoint(session: Session) -> str:
    """Digest of the latest record; changes when any logged field changes."""
    if not session.event_log:
        raise ValueError("no step has completed yet")
    return session.event_log[-1].digest()


def create_session(
    request: str,
    *,
    scenario: str | Path,
    backend,
    mode: InteractionMode = InteractionMode.AUTOMATIC,
    budget: int = DEFAULT_BUDGET,
    registry: ActionRegistry | None = None,
    pool: tuple[RoleDescriptor, ...] = BUILTIN_POOL,
    prompt_dir: str | Path | None = None,
    session_id: str | None = None,
    session_dir: str | Path | None = None,
    memory_dir: str | Path | None = None,
    embedder=None,
    paused: bool = False,
) -> Session:
    """Wire a session from a scenario file and a chat backend."""
    registry = registry or built_in_registry()
    _, script = load_scenario(scenario)
    adapter = SimulatedDesktop(script)
    agents = build_agents(backend, registry, pool=pool, prompt_dir=prompt_dir)
    return Session(
        request=request,
        mode=mode,
        agents=agents,
        adapter=adapter,
        registry=registry,
        backend=backend,
        pool=pool,
        budget=budget,
        session_id=session_id,
        session_dir=session_dir,
        memory_dir=memory_dir,
        embedder=embedder,
        paused=paused,
    )


def load_session(
    session_dir: str | Path,
    *,
    scenario: str | Path,
    backend,
    registry: ActionRegistry | None = None,
    pool: tuple[RoleDescriptor, ...] = BUILTIN_POOL,
    prompt_dir: str | Path | None = None,
    memory_dir: str | Path | None = None,
    embedder=None,
) -> Session:
    """Rebuild a session from its persisted directory after a restart."""
    session_dir = Path(session_dir)
    meta = json.loads((session_dir / "meta.json").read_text(encoding="utf-8"))
    session = create_session(
        meta["request"],
        scenario=scenario,
        backend=backend,
        mode=InteractionMode(meta["mode"]),
        budget=meta["budget"],
        registry=registry,
        pool=pool,
        prompt_dir=prompt_dir,
        session_id=meta["id"],
        session_dir=session_dir,
        memory_dir=memory_dir,
        embedder=embedder,
        paused=True,
    )
    events_path = session_dir / "events.jsonl"
    if events_path.exists():
        for line in events_path.read_text(encoding="utf-8").splitlines():
            session.event_log.append(StepRecord.from_json_dict(json.loads(line)))
    archived_path = session_dir / "archived.jsonl"
    if archived_path.exists():
        for line in archived_path.read_text(encoding="utf-8").splitlines():
            session.archived.append(StepRecord.from_json_dict(json.loads(line)))
    if session.event_log:
        session.restore_blob(session.event_log[-1].state_blob)
    session.started = meta["started"]
    session._save_meta()
    return session
