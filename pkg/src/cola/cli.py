"""Command line front end: batch runs and the service launcher.

`cola run` drives one session to a terminal phase. Automatic sessions run
hands-off; Passive sessions stop for input only when the engine parks;
Active sessions prompt before every step. The final answer is the only
thing printed to stdout, so scripts can capture it; progress and prompts go
to stderr.

Exit codes: 0 done, 2 halted, 1 configuration or scenario problems.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import load_config
from .errors import (
    BudgetExhausted,
    ColaError,
    CommandNotAllowed,
    ConfigError,
    NoSuchStep,
    ScenarioParseError,
    UnknownRole,
    ValidationExhausted,
)
from .orchestrator import (
    DONE,
    Command,
    InteractionMode,
    canonical_json,
    create_session,
)

EXIT_DONE = 0
EXIT_ERROR = 1
EXIT_HALTED = 2


class _Parser(argparse.ArgumentParser):
    # Usage mistakes are configuration problems; keep exit 2 for halts.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self.prog + ": error: " + message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cola", description="role-based agent workflow runner")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run one task to completion")
    run.add_argument("--task", required=True, help="the user request to work on")
    run.add_argument("--scenario", required=True, help="scenario file for the simulated desktop")
    run.add_argument("--mode", choices=[mode.value for mode in InteractionMode])
    run.add_argument("--playbook", help="scripted backend playbook (overrides config)")
    run.add_argument("--config", help="KEY = VALUE config file")
    run.add_argument("--max-steps", type=int, help="decision-step budget for this run")
    run.add_argument("--out", help="write the event log here as JSON lines")

    serve = commands.add_parser("serve", help="start the HTTP/WebSocket service")
    serve.add_argument("--config", help="KEY = VALUE config file")
    serve.add_argument("--host")
    serve.add_argument("--port", type=int)
    return parser


def parse_operator_line(line: str) -> Command:
    """One REPL line to a Command; ValueError explains bad input."""
    parts = line.strip().split(None, 1)
    if not parts:
        return Command(kind="resume")
    head, rest = parts[0].lower(), parts[1].strip() if len(parts) > 1 else ""
    if head == "resume":
        return Command(kind="resume")
    if head == "abort":
        return Command(kind="abort")
    if head == "guide":
        if not rest:
            raise ValueError("usage: guide <text>")
        return Command(kind="guide", text=rest)
    if head in ("switch", "switch_role"):
        if not rest:
            raise ValueError("usage: switch <role>")
        return Command(kind="switch_role", role=rest)
    if head == "rollback":
        try:
            return Command(kind="rollback", step=int(rest))
        except ValueError:
            raise ValueError("usage: rollback <step index>") from None
    raise ValueError(f"unknown command {head!r}; try resume, guide, switch, rollback, abort")


def _status_line(session) -> str:
    phase = session.phase
    where = phase.kind if not phase.role else f"{phase.kind}({phase.role})"
    park = " [needs input]" if session.awaiting_human else ""
    return f"-- {where}, step {session.steps_used}/{session.budget}{park}"


def _record_line(record) -> str:
    branch = record.response.branch.value if record.response else "?"
    summary = record.response.summary if record.response else ""
    return f"[{record.index}] {record.acting_role} {branch}: {summary}"


def _operator_turn(session) -> bool:
    """Prompt for one command; False when stdin is exhausted."""
    print(_status_line(session), file=sys.stderr)
    print("cola> ", end="", file=sys.stderr, flush=True)
    try:
        line = input()
    except EOFError:
        return False
    try:
        command = parse_operator_line(line)
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return True
    try:
        session.apply_command(command)
    except (CommandNotAllowed, UnknownRole, NoSuchStep) as err:
        print(f"rejected: {err}", file=sys.stderr)
    return True


def _run(args) -> int:
    config = load_config(args.config)
    mode = InteractionMode(args.mode) if args.mode else config.default_mode
    budget = args.max_steps if args.max_steps is not None else config.default_budget
    backend = config.build_backend(args.playbook)
    session = create_session(
        args.task,
        scenario=args.scenario,
        backend=backend,
        mode=mode,
        budget=budget,
        prompt_dir=config.prompt_dir,
        memory_dir=config.memory_dir,
        embedder=config.build_embedder(),
    )

    while not session.phase.terminal:
        if session.ready_to_advance():
            try:
                record = session.advance()
            except (BudgetExhausted, ValidationExhausted):
                continue  # phase already reflects the halt or park
            print(_record_line(record), file=sys.stderr)
            continue
        if not _operator_turn(session):
            session.abort()
            print("stdin closed; aborting", file=sys.stderr)

    if args.out:
        lines = [canonical_json(record.to_json_dict()) for record in session.event_log]
        Path(args.out).write_text("".join(line + "\n" for line in lines), encoding="utf-8")

    if session.phase.kind == DONE:
        session.commit_memories()
        print(session.phase.answer)
        return EXIT_DONE
    print(f"halted: {session.phase.reason}", file=sys.stderr)
    return EXIT_HALTED


def _serve(args) -> int:
    from .service import serve

    config = load_config(args.config)
    if args.host:
        config = replace(config, host=args.host)
    if args.port:
        config = replace(config, port=args.port)
    serve(config)
    return EXIT_DONE


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "run":
            return _run(args)
        return _serve(args)
    except SystemExit as exit_:
        if isinstance(exit_.code, str):
            print(exit_.code, file=sys.stderr)
            return EXIT_ERROR
        raise
    except (ConfigError, ScenarioParseError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    except (ColaError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
