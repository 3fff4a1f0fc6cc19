"""Session machine: routing, budget, checkpoints, rollback, recovery.

The branch matrix and the rollback laws are the heart of this module. Both
run against real sessions driven by scripted playbooks, so they cover the
same code paths a live backend would hit.
"""

import hashlib
from itertools import product

import pytest

from cola import roles
from cola.errors import (
    BudgetExhausted,
    CommandNotAllowed,
    InadmissibleBranch,
    NoSuchStep,
    UnknownRole,
    ValidationExhausted,
)
from cola.gateway import ScriptedBackend
from cola.orchestrator import (
    DEFAULT_BUDGET,
    DECIDING,
    DONE,
    FINALIZING,
    HALTED,
    PLANNING,
    SCHEDULING,
    Command,
    InteractionMode,
    canonical_json,
    checkpoint,
    create_session,
    load_session,
)
from cola.responses import ADMISSIBLE_BRANCHES, BranchType, parse_agent_response

from drivers import (
    RecordingBackend,
    SCENARIO_PATH,
    WEATHER_ANSWER,
    WEATHER_TASK,
    entry,
    log_lines,
    matrix_session,
    weather_backend,
    weather_session,
)
from helpers import raw_response


class TestStart:
    def test_new_session_is_planning_at_step_zero(self):
        session = weather_session("start")
        assert session.phase.kind == PLANNING
        assert session.steps_used == 0
        assert session.event_log == []
        assert session.budget == DEFAULT_BUDGET

    def test_empty_request_rejected(self):
        with pytest.raises(ValueError):
            create_session("   ", scenario=SCENARIO_PATH, backend=weather_backend())

    def test_active_mode_first_advance_needs_a_command(self):
        session = weather_session("active", mode=InteractionMode.ACTIVE)
        with pytest.raises(CommandNotAllowed):
            session.advance()
        session.resume()
        record = session.advance()
        assert record.acting_role == roles.PLANNER

    def test_paused_session_waits_for_resume(self):
        session = weather_session("paused", paused=True)
        with pytest.raises(CommandNotAllowed):
            session.advance()
        session.resume()
        session.advance()


POOL = list(roles.POOL_ROLES)

# (role, branch, expected phase kind after the step) for automatic mode.
MATRIX = (
    [
        (roles.PLANNER, "Continue", SCHEDULING),
        (roles.PLANNER, "Interrupt", HALTED),
        (roles.TASK_SCHEDULER, "Continue", DECIDING),
        (roles.TASK_SCHEDULER, "RemakeSubtasks", PLANNING),
        (roles.TASK_SCHEDULER, "Interrupt", HALTED),
        (roles.REVIEWER, "Continue", DECIDING),
        (roles.REVIEWER, "Interrupt", HALTED),
    ]
    + [(role, "Continue", DECIDING) for role in POOL]
    + [(role, "RoleTaskFinish", DECIDING) for role in POOL]  # split assignment
    + [(role, "TaskMismatch", SCHEDULING) for role in POOL]
    + [(role, "Interrupt", HALTED) for role in POOL]
)


class TestBranchMatrix:
    @pytest.mark.parametrize("role,branch,expected", MATRIX)
    def test_admissible_transition(self, role, branch, expected):
        session = matrix_session(role, branch, session_id=f"m-{role}-{branch}")
        record = session.advance()
        assert session.phase.kind == expected
        if role == roles.REVIEWER:
            assert record.review is not None
            assert record.review.branch is BranchType(branch)
        else:
            assert record.acting_role == role
            assert record.response.branch is BranchType(branch)

    @pytest.mark.parametrize("role", POOL)
    def test_role_task_finish_with_single_assignment_finalizes(self, role):
        session = matrix_session(role, "RoleTaskFinish", split=False, session_id=f"f-{role}")
        session.advance()
        assert session.phase.kind == FINALIZING

    def test_role_task_finish_moves_to_next_assignment(self):
        session = matrix_session(roles.APPLICATION_MANAGER, "RoleTaskFinish", session_id="next")
        session.advance()
        assert session.phase.kind == DECIDING
        assert session.phase.role == roles.SEARCHER
        assert session.phase.assignment_index == 1

    def test_remake_subtasks_threads_problem_to_planner(self):
        session = matrix_session(roles.TASK_SCHEDULER, "RemakeSubtasks", session_id="remake")
        record = session.advance()
        assert session.phase.kind == PLANNING
        assert session.context.pending_problem == record.response.problem

    def test_task_mismatch_threads_problem_to_scheduler(self):
        session = matrix_session(roles.SEARCHER, "TaskMismatch", session_id="mismatch")
        record = session.advance()
        assert session.phase.kind == SCHEDULING
        assert session.context.pending_problem == record.response.problem

    def test_interrupt_parks_outside_automatic_mode(self):
        session = matrix_session(
            roles.SEARCHER, "Interrupt", mode=InteractionMode.PASSIVE, session_id="park"
        )
        session.advance()
        assert session.phase.kind == DECIDING
        assert session.awaiting_human

    def test_inadmissible_pairs_raise_at_parse(self):
        for role, branch in product(roles.DIALOG_ROLES, BranchType):
            if branch in ADMISSIBLE_BRANCHES[role]:
                continue
            with pytest.raises(InadmissibleBranch):
                parse_agent_response(raw_response(role, branch.value), role)


class TestWeatherRun:
    def test_full_run_reaches_the_answer(self):
        session = weather_session("full")
        phase = session.run()
        assert phase.kind == DONE
        assert phase.answer == WEATHER_ANSWER
        assert len(session.event_log) == 10
        assert session.steps_used == 7

    def test_scheduler_split_matches_the_fixture(self):
        session = weather_session("split")
        session.run()
        distribution = session.event_log[1].response.payload.distribution
        split = [(item.role, len(item.role_tasks)) for item in distribution]
        assert split == [("Application Manager", 1), ("Searcher", 3)]

    def test_environment_results_flow_into_records(self):
        session = weather_session("results")
        session.run()
        results = [record.result for record in session.event_log]
        assert results[4] == "The address bar is focused."
        assert results[5] == "Typed the query into the address bar."
        assert results[7] == "Opened the Paris Weather page."

    def test_replay_is_byte_identical(self):
        first = weather_session("replay-a")
        second = weather_session("replay-b")
        first.run()
        second.run()
        assert log_lines(first) == log_lines(second)

    def test_reviewer_judgement_feeds_the_next_decide_prompt(self):
        backend = RecordingBackend(weather_backend())
        session = weather_session("judgement", backend=backend)
        session.run()
        searcher_requests = backend.for_role(roles.SEARCHER)
        second = searcher_requests[1].last_user_content()
        assert "Reviewer feedback on your previous operation:" in second
        assert "The address bar is focused as intended. SUCCESS" in second

    def test_handoff_message_reaches_the_next_agent(self):
        backend = RecordingBackend(weather_backend())
        session = weather_session("handoff", backend=backend)
        session.run()
        first_searcher = backend.for_role(roles.SEARCHER)[0].last_user_content()
        assert "Message from the previous agent:\nThe browser is open and focused." in first_searcher

    def test_gathered_information_reaches_finalize(self):
        backend = RecordingBackend(weather_backend())
        session = weather_session("gather", backend=backend)
        session.run()
        finalize = backend.for_role(roles.PLANNER)[1].last_user_content()
        assert "Question to answer:\nWhat is the weather in Paris today?" in finalize
        assert "Paris weather today: sunny, 24 degrees this afternoon" in finalize


class TestBudget:
    def test_budget_two_halts_on_third_decision_step(self):
        session = weather_session("budget", budget=2)
        phase = session.run()
        assert phase.kind == HALTED
        assert phase.reason == "budget"
        assert session.steps_used == 2
        # plan, schedule, and exactly two decision records made it into the log
        assert len(session.event_log) == 4

    def test_advance_raises_budget_exhausted(self):
        session = weather_session("budget-raise", budget=1)
        for _ in range(3):
            session.advance()
        with pytest.raises(BudgetExhausted):
            session.advance()
        assert session.phase.kind == HALTED

    def test_default_budget_is_twenty(self):
        assert DEFAULT_BUDGET == 20


class TestCheckpoint:
    def test_every_blob_restores_bit_identically(self):
        session = weather_session("blob")
        session.run()
        for record in session.event_log:
            session.restore_blob(record.state_blob)
            assert session.state_blob() == record.state_blob

    def test_digest_recomputes_from_the_canonical_record(self):
        session = weather_session("digest")
        session.run()
        digests = []
        for record in session.event_log:
            expected = hashlib.sha256(
                canonical_json(record.to_json_dict()).encode("utf-8")
            ).hexdigest()
            assert record.digest() == expected
            digests.append(expected)
        assert len(set(digests)) == len(digests)
        assert checkpoint(session) == digests[-1]

    def test_checkpoint_requires_a_completed_step(self):
        with pytest.raises(ValueError):
            checkpoint(weather_session("fresh"))


class TestRollback:
    def test_laws_hold_for_every_step(self):
        reference = weather_session("rollback-ref")
        reference.run()
        before = log_lines(reference)
        for k in range(len(before)):
            session = weather_session(f"rollback-{k}")
            session.run()
            session.rollback(k)
            assert log_lines(session) == before[: k + 1]
            archived = [canonical_json(r.to_json_dict()) for r in session.archived]
            assert archived == before[k + 1 :]
            session.run()
            assert log_lines(session) == before

    def test_rollback_bounds(self):
        session = weather_session("bounds")
        session.run()
        with pytest.raises(NoSuchStep):
            session.rollback(-1)
        with pytest.raises(NoSuchStep):
            session.rollback(len(session.event_log))

    def test_guided_replay_diverges_at_the_next_step(self):
        session = weather_session("diverge", mode=InteractionMode.ACTIVE)
        while session.phase.kind not in (DONE, HALTED):
            session.resume()
            session.advance()
        before = log_lines(session)
        session.rollback(3)
        session.inject_guidance("use the search bar instead")
        record = session.advance()
        assert record.index == 4
        assert record.guidance == "use the search bar instead"
        assert log_lines(session)[:4] == before[:4]
        assert log_lines(session)[4] != before[4]

    def test_nothing_is_ever_dropped(self):
        session = weather_session("lossless")
        session.run()
        produced = set(log_lines(session))
        session.rollback(2)
        session.run()
        kept = set(log_lines(session)) | {
            canonical_json(r.to_json_dict()) for r in session.archived
        }
        assert produced <= kept


class TestCommands:
    def test_guide_rejected_mid_automatic_run(self):
        session = weather_session("noguide")
        session.advance()
        with pytest.raises(CommandNotAllowed):
            session.inject_guidance("stop")

    def test_switch_to_unknown_role(self):
        session = weather_session("unknown", mode=InteractionMode.ACTIVE)
        with pytest.raises(UnknownRole):
            session.switch_role("archivist")

    def test_reviewer_cannot_lead_a_turn(self):
        session = weather_session("noreviewer", mode=InteractionMode.ACTIVE)
        with pytest.raises(CommandNotAllowed):
            session.switch_role("reviewer")

    def test_switch_rejected_during_automatic_run(self):
        session = weather_session("noswitch")
        session.advance()
        with pytest.raises(CommandNotAllowed):
            session.switch_role("planner")

    def test_abort_halts(self):
        session = weather_session("abort")
        session.advance()
        session.abort()
        assert session.phase.kind == HALTED
        assert session.phase.reason == "abort"

    def test_active_mode_consumes_one_command_per_advance(self):
        session = weather_session("consume", mode=InteractionMode.ACTIVE)
        session.resume()
        session.advance()
        with pytest.raises(CommandNotAllowed):
            session.advance()

    def test_two_guidances_concatenate_in_order(self):
        session = weather_session("twoguides", mode=InteractionMode.ACTIVE)
        session.inject_guidance("first note")
        session.inject_guidance("second note")
        record = session.advance()
        assert record.guidance == "first note\nsecond note"

    def test_resume_on_running_automatic_session_rejected(self):
        session = weather_session("noresume")
        session.advance()
        with pytest.raises(CommandNotAllowed):
            session.resume()

    def test_apply_command_dispatches(self):
        session = weather_session("dispatch", mode=InteractionMode.ACTIVE)
        session.apply_command(Command(kind="resume"))
        session.advance()
        with pytest.raises(CommandNotAllowed):
            session.apply_command(Command(kind="flip"))


class TestInterruptRecovery:
    def test_parked_session_revives_via_switch_and_resume(self):
        backend = ScriptedBackend(
            [
                entry("planner", "Interrupt", step=0),
                entry("planner", step=1),
            ]
        )
        session = weather_session("revive", backend=backend, mode=InteractionMode.PASSIVE)
        session.advance()
        assert session.awaiting_human
        session.switch_role("planner")
        session.resume()
        session.advance()
        assert session.phase.kind == SCHEDULING

    def test_automatic_interrupt_halt_revives_via_switch(self):
        backend = ScriptedBackend(
            [
                entry("planner", "Interrupt", step=0),
                entry("planner", step=1),
            ]
        )
        session = weather_session("revive-auto", backend=backend)
        session.advance()
        assert session.phase.kind == HALTED
        assert session.phase.reason == "interrupt"
        session.switch_role("planner")
        assert session.phase.kind == PLANNING
        assert session.awaiting_human
        session.resume()
        session.advance()
        assert session.phase.kind == SCHEDULING

    def test_pool_switch_requires_an_active_assignment(self):
        backend = ScriptedBackend([entry("planner", "Interrupt")])
        session = weather_session("badswitch", backend=backend, mode=InteractionMode.PASSIVE)
        session.advance()
        with pytest.raises(CommandNotAllowed):
            session.switch_role("searcher")

    def test_switched_planner_replans_mid_deciding(self):
        backend = ScriptedBackend(
            [
                entry("planner", step=0),
                entry(
                    "task_scheduler",
                    step=0,
                    distribution=[
                        {
                            "role": "Searcher",
                            "role_tasks": [
                                "Open the browser.",
                                "Search for the weather today.",
                            ],
                        }
                    ],
                ),
                entry("searcher", "Interrupt", step=0,
                      problem="this subtask needs a different plan"),
                entry("planner", step=1,
                      sub_tasks=["Search for the weather today."], question=""),
                entry("task_scheduler", step=1, distribution=[
                    {"role": "Searcher", "role_tasks": ["Search for the weather today."]}
                ]),
            ]
        )
        session = weather_session(
            "replan", backend=backend, mode=InteractionMode.PASSIVE
        )
        for _ in range(3):
            session.advance()
        assert session.awaiting_human
        session.switch_role("planner")
        session.inject_guidance("skip the browser; the page is already open")
        session.resume()
        record = session.advance()
        assert record.acting_role == roles.PLANNER
        assert record.guidance == "skip the browser; the page is already open"
        assert session.phase.kind == SCHEDULING
        session.advance()
        assert session.phase.kind == DECIDING


class TestSchedulerRepair:
    def invalid_then(self, second_entry):
        return ScriptedBackend(
            [
                entry("planner"),
                entry(
                    "task_scheduler",
                    step=0,
                    distribution=[
                        {"role": "Searcher", "role_tasks": ["Open the browser."]}
                    ],
                ),
                second_entry,
            ]
        )

    def test_one_repair_turn_can_fix_the_distribution(self):
        backend = self.invalid_then(
            entry(
                "task_scheduler",
                step=1,
                contains="MissingSubtask",
            )
        )
        session = weather_session("fixable", backend=backend)
        session.advance()
        session.advance()
        assert session.phase.kind == DECIDING
        assert len(session.event_log) == 2

    def test_still_invalid_goes_back_to_the_planner(self):
        backend = self.invalid_then(
            entry(
                "task_scheduler",
                step=1,
                distribution=[{"role": "Searcher", "role_tasks": ["Something else entirely."]}],
            )
        )
        session = weather_session("unfixable", backend=backend)
        session.advance()
        session.advance()
        assert session.phase.kind == PLANNING
        assert "did not match the plan" in session.context.pending_problem
        assert "MissingSubtask" in session.context.pending_problem


class TestOperationRepair:
    def rejected_then(self, second_entry, mode=InteractionMode.AUTOMATIC, sid="op"):
        backend = ScriptedBackend(
            [
                entry("planner"),
                entry(
                    "task_scheduler",
                    distribution=[
                        {
                            "role": "Searcher",
                            "role_tasks": [
                                "Open the browser.",
                                "Search for the weather today.",
                            ],
                        }
                    ],
                ),
                entry(
                    "searcher",
                    step=0,
                    operation={"action": "open_application", "args": {"name": "Microsoft Edge"}},
                ),
                second_entry,
                entry("reviewer"),
            ]
        )
        session = weather_session(sid, backend=backend, mode=mode)
        session.advance()
        session.advance()
        return session

    def test_repaired_operation_executes(self):
        session = self.rejected_then(
            entry(
                "searcher",
                step=1,
                contains="was rejected",
                operation={
                    "action": "click_input",
                    "args": {"control_label": 0, "button": "left", "double": False},
                },
            ),
        )
        record = session.advance()
        assert record.invocation.action == "click_input"
        assert session.phase.kind == DECIDING
        assert not session.awaiting_human

    def test_double_rejection_halts_automatic_sessions(self):
        session = self.rejected_then(
            entry(
                "searcher",
                step=1,
                operation={"action": "read_file", "args": {"path": "weather_notes.txt"}},
            ),
            sid="op-halt",
        )
        record = session.advance()
        assert session.phase.kind == HALTED
        assert session.phase.reason == "validation"
        assert record.result is not None and "read_file" in record.result

    def test_double_rejection_parks_passive_sessions(self):
        session = self.rejected_then(
            entry(
                "searcher",
                step=1,
                operation={"action": "read_file", "args": {"path": "weather_notes.txt"}},
            ),
            mode=InteractionMode.PASSIVE,
            sid="op-park",
        )
        session.advance()
        assert session.awaiting_human
        assert session.phase.kind == DECIDING


class TestValidationExhausted:
    def garbage_backend(self):
        from cola.gateway import PlaybookEntry

        return ScriptedBackend(
            [PlaybookEntry(role="planner", response=f"not json at all #{i}") for i in range(3)]
        )

    def test_automatic_session_halts(self):
        session = weather_session("garbage-auto", backend=self.garbage_backend())
        with pytest.raises(ValidationExhausted):
            session.advance()
        assert session.phase.kind == HALTED
        assert session.phase.reason == "validation"

    def test_passive_session_parks(self):
        session = weather_session(
            "garbage-passive", backend=self.garbage_backend(), mode=InteractionMode.PASSIVE
        )
        with pytest.raises(ValidationExhausted):
            session.advance()
        assert session.awaiting_human
        assert session.phase.kind == PLANNING


class TestCrashRecovery:
    def test_reload_after_six_steps_finishes_identically(self, tmp_path):
        session_dir = tmp_path / "sess"
        session = weather_session("crash", session_dir=session_dir)
        for _ in range(6):
            session.advance()
        del session

        recovered = load_session(
            session_dir, scenario=SCENARIO_PATH, backend=weather_backend()
        )
        assert recovered.phase.kind == DECIDING
        assert len(recovered.event_log) == 6
        recovered.run()
        assert recovered.phase.kind == DONE

        reference = weather_session("crash-ref")
        reference.run()
        assert log_lines(recovered) == log_lines(reference)

    def test_rollback_targets_survive_recovery(self, tmp_path):
        session_dir = tmp_path / "sess"
        session = weather_session("crash-rb", session_dir=session_dir)
        session.run()
        before = log_lines(session)
        del session

        recovered = load_session(
            session_dir, scenario=SCENARIO_PATH, backend=weather_backend()
        )
        recovered.rollback(2)
        recovered.run()
        assert log_lines(recovered) == before

    def test_events_file_is_rewritten_on_rollback(self, tmp_path):
        session_dir = tmp_path / "sess"
        session = weather_session("rewrite", session_dir=session_dir)
        session.run()
        session.rollback(4)
        events = (session_dir / "events.jsonl").read_text(encoding="utf-8").splitlines()
        archived = (session_dir / "archived.jsonl").read_text(encoding="utf-8").splitlines()
        assert len(events) == 5
        assert len(archived) == 5
        assert events == log_lines(session)


class TestMemoryCommit:
    def test_each_acting_agent_gains_one_record(self):
        session = weather_session("commit")
        session.run()
        session.commit_memories()
        sizes = {role: len(store.records) for role, store in session.stores.items()}
        assert sizes == {
            roles.PLANNER: 1,
            roles.TASK_SCHEDULER: 1,
            roles.REVIEWER: 1,
            roles.APPLICATION_MANAGER: 1,
            roles.SEARCHER: 1,
            roles.FILE_MANAGER: 0,
            roles.PROGRAMMER: 0,
        }

    def test_second_commit_is_a_no_op(self):
        session = weather_session("commit-twice")
        session.run()
        session.commit_memories()
        session.commit_memories()
        assert len(session.stores[roles.PLANNER].records) == 1

    def test_summary_concatenates_per_step_summaries(self):
        session = weather_session("commit-summary")
        session.run()
        session.commit_memories()
        planner_record = session.stores[roles.PLANNER].records[0]
        assert planner_record.summary == (
            "Decomposed the weather query into four subtasks.\n"
            "Reported the Paris forecast as the final answer."
        )

    def test_commit_requires_a_finished_session(self):
        session = weather_session("commit-early")
        session.advance()
        with pytest.raises(CommandNotAllowed):
            session.commit_memories()

    def test_interrupt_only_run_commits_only_the_planner(self):
        backend = ScriptedBackend([entry("planner", "Interrupt")])
        session = weather_session("commit-interrupt", backend=backend)
        session.advance()
        session.commit_memories()
        sizes = {role: len(store.records) for role, store in session.stores.items()}
        assert sizes[roles.PLANNER] == 1
        assert sum(sizes.values()) == 1

    def test_stores_persist_to_memory_dir(self, tmp_path):
        session = weather_session("commit-disk", memory_dir=tmp_path)
        session.run()
        session.commit_memories()
        assert (tmp_path / "planner.jsonl").exists()
        assert not (tmp_path / "programmer.jsonl").exists()
