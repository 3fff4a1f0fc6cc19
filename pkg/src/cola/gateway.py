"""Model access: chat requests, scripted playbooks, remote client, repair loop.

Agents never call a model directly; they build a ChatRequest and hand it to
a backend. The scripted backend replays canned responses matched by role,
per-role step index, and prompt substring, which makes whole sessions
reproducible offline. The remote backend speaks the common
/chat/completions JSON shape. complete_validated wraps any backend with
parse-and-repair: invalid output earns a corrective user message and one
more attempt, a bounded number of times.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import httpx

from . import roles
from .errors import (
    InadmissibleBranch,
    MalformedResponse,
    PlaybookExhausted,
    RateLimited,
    TransportError,
    ValidationExhausted,
)
from .responses import AgentResponse, parse_agent_response, schema_hint

DEFAULT_MAX_REPAIRS = 2


@dataclass(frozen=True)
class ChatMessage:
    role: str  # "system" | "user" | "assistant"
    content: str


@dataclass(frozen=True)
class ChatRequest:
    """One completion call: messages plus routing metadata.

    agent_role and session_id do not go over the wire; they let scripted
    backends and request recorders know who is asking.
    """

    messages: tuple[ChatMessage, ...]
    model: str = "default"
    temperature: float = 0.0
    max_tokens: int | None = None
    agent_role: str | None = None
    session_id: str | None = None

    def __post_init__(self):
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        if self.messages[0].role != "system":
            raise ValueError("the first chat message must be the system prompt")

    def last_user_content(self) -> str:
        for message in reversed(self.messages):
            if message.role == "user":
                return message.content
        return ""


@dataclass(frozen=True)
class PlaybookEntry:
    """One canned completion: who it is for and when it fires.

    step counts completions already served to (session, role); contains is a
    substring requirement on the latest user message. Either may be None to
    match unconditionally.
    """

    role: str
    response: str
    step: int | None = None
    contains: str | None = None


class ScriptedBackend:
    """Replays playbook entries; first unconsumed match wins, once each.

    Cursors (which entries are consumed, how many completions each role got)
    are tracked per session id and can be snapshotted and restored, so a
    rolled-back session replays the same script.
    """

    def __init__(self, entries: list[PlaybookEntry]):
        self.entries = list(entries)
        self._consumed: dict[str, set[int]] = {}
        self._served: dict[str, dict[str, int]] = {}

    def complete(self, request: ChatRequest) -> str:
        if request.agent_role is None:
            raise ValueError("the scripted backend needs agent_role on the request")
        role = roles.canonical_role(request.agent_role)
        session = request.session_id or ""
        consumed = self._consumed.setdefault(session, set())
        served = self._served.setdefault(session, {})
        step = served.get(role, 0)
        last_user = request.last_user_content()
        for index, entry in enumerate(self.entries):
            if index in consumed:
                continue
            if roles.canonical_role(entry.role) != role:
                continue
            if entry.step is not None and entry.step != step:
                continue
            if entry.contains is not None and entry.contains not in last_user:
                continue
            consumed.add(index)
            served[role] = step + 1
            return entry.response
        raise PlaybookExhausted(role, step)

    def snapshot_state(self, session_id: str | None) -> dict:
        session = session_id or ""
        return {
            "consumed": sorted(self._consumed.get(session, set())),
            "served": dict(self._served.get(session, {})),
        }

    def restore_state(self, session_id: str | None, state: dict) -> None:
        session = session_id or ""
        self._consumed[session] = set(state.get("consumed", []))
        self._served[session] = dict(state.get("served", {}))


def load_playbook(path: str | Path) -> list[PlaybookEntry]:
    """Parse a playbook file: a JSON list of {role, response, step?, contains?}.

    The response may be a string or a JSON object; objects are serialized as
    the completion text.
    """
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise ValueError("a playbook must be a JSON list")
    entries: list[PlaybookEntry] = []
    for index, item in enumerate(data):
        if not isinstance(item, dict):
            raise ValueError(f"playbook[{index}] must be an object")
        role = item.get("role")
        if not isinstance(role, str) or not role:
            raise ValueError(f"playbook[{index}] needs a non-empty 'role'")
        if "response" not in item:
            raise ValueError(f"playbook[{index}] needs a 'response'")
        response = item["response"]
        if isinstance(response, dict):
            response = json.dumps(response, ensure_ascii=False)
        elif not isinstance(response, str):
            raise ValueError(f"playbook[{index}] response must be a string or object")
        step = item.get("step")
        if step is not None and not isinstance(step, int):
            raise ValueError(f"playbook[{index}] step must be an integer")
        contains = item.get("contains")
        if contains is not None and not isinstance(contains, str):
            raise ValueError(f"playbook[{index}] contains must be a string")
        entries.append(PlaybookEntry(role=role, response=response, step=step, contains=contains))
    return entries


class RemoteChatBackend:
    """Client for an OpenAI-compatible /chat/completions endpoint.

    Transient failures (connection errors, 5xx) are retried with exponential
    backoff; 429 surfaces as RateLimited with the advertised delay; other
    4xx are permanent and fail immediately.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        max_retries: int = 3,
        client: httpx.Client | None = None,
    ):
        self.model = model
        self.max_retries = max_retries
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = client or httpx.Client(base_url=base_url, timeout=timeout, headers=headers)

    def complete(self, request: ChatRequest) -> str:
        payload: dict = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
        }
        if request.max_tokens is not None:
            payload["max_tokens"] = request.max_tokens

        last: Exception | None = None
        for attempt in range(1 + self.max_retries):
            try:
                response = self._client.post("/chat/completions", json=payload)
            except httpx.HTTPError as err:
                last = err
                if attempt < self.max_retries:
                    time.sleep(0.5 * (2**attempt))
                continue
            if response.status_code == 429:
                header = response.headers.get("Retry-After")
                raise RateLimited(float(header) if header else None)
            if response.status_code >= 500:
                last = TransportError(f"server error {response.status_code}")
                if attempt < self.max_retries:
                    time.sleep(0.5 * (2**attempt))
                continue
            if response.status_code >= 400:
                raise TransportError(f"request rejected: {response.status_code} {response.text}")
            try:
                return response.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError, ValueError) as err:
                raise TransportError(f"unexpected completion payload: {err}") from None
        raise TransportError(f"completion failed after {1 + self.max_retries} attempts: {last}")


def _repair_message(error: Exception, role: str) -> str:
    return (
        f"Your previous reply could not be used: {error}. "
        f"{schema_hint(role)} "
        f"Reply again with exactly one corrected JSON object and nothing else."
    )


def complete_validated(
    backend,
    request: ChatRequest,
    role: str,
    max_repairs: int = DEFAULT_MAX_REPAIRS,
) -> AgentResponse:
    """Complete and parse, re-prompting on invalid output.

    Makes at most 1 + max_repairs backend calls. Repairs append an assistant
    echo of the bad output and a corrective user message; the original
    message prefix is never rewritten. Raises ValidationExhausted carrying
    the last parse error once attempts run out.
    """
    current = request
    last_error: Exception | None = None
    for attempt in range(1 + max_repairs):
        text = backend.complete(current)
        try:
            return parse_agent_response(text, role)
        except (MalformedResponse, InadmissibleBranch) as err:
            last_error = err
            if attempt < max_repairs:
                current = replace(
                    current,
                    messages=current.messages
                    + (
                        ChatMessage(role="assistant", content=text),
                        ChatMessage(role="user", content=_repair_message(err, role)),
                    ),
                )
    raise ValidationExhausted(last_error if last_error else RuntimeError("no attempts made"))
