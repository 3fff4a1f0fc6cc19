"""Regenerate tests/fixtures/engine_frames.json from a real scripted session.

The console's tests replay traffic the engine actually produced rather than
hand-written frames. Run from the repository root after `pip install -e .`:

    python3 frontend/scripts/capture_frames.py

Four captures, each one ordered list of frames as received on the socket:
  timeline   backfill of six records, then a rollback to step 3
  reconnect  fresh socket on the same session, then replay to completion
  commands   switch_role + guide + resume acks, then three rejections
  park       a passive session parked by a planner interrupt
"""

import json
import sys
import tempfile
import time
from pathlib import Path

from starlette.testclient import TestClient

REPO = Path(__file__).resolve().parents[2]
sys.path.insert(0, str(REPO / "tests"))

from cola.config import ServiceConfig
from cola.service import SessionManager, create_app

SCENARIO = REPO / "src" / "cola" / "scenarios" / "gaia_case_1.json"
PLAYBOOK = REPO / "tests" / "fixtures" / "weather_playbook.json"
TASK = "Query today's weather in Paris with the browser and tell me the forecast."
OUT = REPO / "frontend" / "tests" / "fixtures" / "engine_frames.json"

INTERRUPT_PLAYBOOK = [
    {
        "role": "planner",
        "response": {
            "branch": "Interrupt",
            "problem": "screen is blank",
            "message": "",
            "summary": "Asked for help.",
            "sub_tasks": [],
            "question": "",
        },
    }
]


def wait(client, sid, predicate, deadline=10.0):
    start = time.monotonic()
    while time.monotonic() - start < deadline:
        summary = client.get(f"/sessions/{sid}").json()
        if predicate(summary):
            return summary
        time.sleep(0.01)
    raise RuntimeError(f"timed out waiting on session {sid}")


def resume(client, sid):
    response = client.post(f"/sessions/{sid}/commands", json={"kind": "resume"})
    assert response.status_code == 202, response.text


def capture_timeline(client):
    """Active session stepped to six records, then rolled back to step 3."""
    body = {"task": TASK, "scenario": str(SCENARIO), "mode": "active"}
    sid = client.post("/sessions", json=body).json()["session_id"]
    for count in range(1, 7):
        resume(client, sid)
        wait(client, sid, lambda s, n=count: s["records"] == n)

    with client.websocket_connect(f"/sessions/{sid}/ws") as socket:
        frames = [socket.receive_json() for _ in range(7)]  # 6 records + status
        response = client.post(
            f"/sessions/{sid}/commands", json={"kind": "rollback", "step": 3}
        )
        assert response.status_code == 202, response.text
        frames.append(socket.receive_json())  # rollback
        frames.append(socket.receive_json())  # status

    # Reconnect: the backfill replays the truncated log, then the session
    # runs to completion on the same socket (3 frames per armed step).
    reconnect = []
    with client.websocket_connect(f"/sessions/{sid}/ws") as socket:
        reconnect.extend(socket.receive_json() for _ in range(5))  # 4 records + status
        for count in range(5, 11):
            resume(client, sid)
            wait(client, sid, lambda s, n=count: s["records"] == n)
            reconnect.extend(socket.receive_json() for _ in range(3))
    assert reconnect[-1]["body"]["phase"]["kind"] == "done", reconnect[-1]
    return frames, reconnect


def capture_commands(client):
    """Command traffic on a fresh paused session, acks and rejections."""
    body = {"task": TASK, "scenario": str(SCENARIO), "mode": "active"}
    sid = client.post("/sessions", json=body).json()["session_id"]

    def command(kind, **fields):
        payload = {"kind": kind, "text": "", "role": "", "step": -1}
        payload.update(fields)
        return {"v": 1, "kind": "command", "body": payload}

    sent = []
    received = []
    with client.websocket_connect(f"/sessions/{sid}/ws") as socket:
        received.append(socket.receive_json())  # backfill: status only

        for outbound, replies in (
            (command("switch_role", role="planner"), 2),  # status + ack
            (command("guide", text="Check the Paris forecast first."), 2),
            (command("resume"), 4),  # status + ack + one step's record + status
            (command("switch_role", role="reviewer"), 1),  # rejected
            (command("rollback", step=99), 1),  # rejected
            (command("guide", text="   "), 1),  # rejected
        ):
            sent.append(outbound)
            socket.send_json(outbound)
            for _ in range(replies):
                received.append(socket.receive_json())
    return {"sent": sent, "received": received}


def capture_park(client, playbook_path):
    """Passive session parked by an interrupt; backfill shows the park."""
    body = {
        "task": TASK,
        "scenario": str(SCENARIO),
        "mode": "passive",
        "playbook": str(playbook_path),
    }
    sid = client.post("/sessions", json=body).json()["session_id"]
    resume(client, sid)
    wait(client, sid, lambda s: s["awaiting_human"])
    with client.websocket_connect(f"/sessions/{sid}/ws") as socket:
        return [socket.receive_json() for _ in range(2)]  # 1 record + status


def main():
    with tempfile.TemporaryDirectory() as scratch:
        root = Path(scratch)
        playbook_path = root / "interrupt.json"
        playbook_path.write_text(json.dumps(INTERRUPT_PLAYBOOK), encoding="utf-8")
        config = ServiceConfig(
            sessions_dir=root / "sessions",
            memory_dir=root / "memory",
            backend_playbook=PLAYBOOK,
        )
        manager = SessionManager(config)
        client = TestClient(create_app(manager))
        try:
            timeline, reconnect = capture_timeline(client)
            commands = capture_commands(client)
            park = capture_park(client, playbook_path)
        finally:
            manager.shutdown()

    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(
        json.dumps(
            {
                "timeline": timeline,
                "reconnect": reconnect,
                "commands": commands,
                "park": park,
            },
            indent=2,
            ensure_ascii=False,
        )
        + "\n",
        encoding="utf-8",
    )
    print(f"wrote {OUT} ({OUT.stat().st_size} bytes)")


if __name__ == "__main__":
    main()
