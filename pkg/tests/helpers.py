"""Shared test helpers: raw-response builders and independent oracles.

The oracles here deliberately avoid the production code paths: the JSON
extractor oracle is a hand-rolled brace/string scanner, and the retrieval
oracle in the memory tests does max-extraction instead of sorting. Oracle
agreement is the point, so keep them independent.
"""

from __future__ import annotations

import json
import random

from cola import roles
from cola.responses import PROBLEM_BRANCHES, BranchType

DEFAULT_PROBLEM = "something is blocking progress"

_PAYLOAD_DEFAULTS: dict[str, dict] = {
    roles.PLANNER: {
        "sub_tasks": ["Open the browser.", "Search for the weather today."],
        "question": "",
    },
    roles.TASK_SCHEDULER: {
        "distribution": [
            {"role": "Application Manager", "role_tasks": ["Open the browser."]},
            {"role": "Searcher", "role_tasks": ["Search for the weather today."]},
        ],
    },
    roles.REVIEWER: {
        "analyze": "The click landed on the address bar and the page reacted.",
        "judgement": "The operation achieved the stated intention. SUCCESS",
    },
}

_DECISION_DEFAULTS = {
    "observation": "The browser window is in the foreground.",
    "thought_process": ["The address bar is visible.", "Typing the query comes next."],
    "local_plan": ["Type the query.", "Press the Go button."],
    "intention": "Type the query into the address bar",
    "operation": "",
    "selected_control": "",
    "information": "",
    "analyze": "",
    "answer": "",
}


def response_dict(role: str, branch: str = "Continue", **overrides) -> dict:
    """A schema-valid wire object for the role, with field overrides."""
    body: dict = {
        "branch": branch,
        "problem": DEFAULT_PROBLEM if BranchType(branch) in PROBLEM_BRANCHES else "",
        "message": "",
        "summary": f"{role} acted",
    }
    body.update(_PAYLOAD_DEFAULTS.get(role, _DECISION_DEFAULTS))
    body.update(overrides)
    return body


def raw_response(role: str, branch: str = "Continue", **overrides) -> str:
    return json.dumps(response_dict(role, branch, **overrides), ensure_ascii=False)


def oracle_first_json_object(raw: str) -> dict | None:
    """Reference extractor: explicit brace/string-state scan, then json.loads.

    Returns the first balanced {...} span that parses as a JSON object, or
    None when there is none.
    """
    length = len(raw)
    for start in range(length):
        if raw[start] != "{":
            continue
        depth = 0
        in_string = False
        escaped = False
        for end in range(start, length):
            ch = raw[end]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    try:
                        value = json.loads(raw[start : end + 1])
                    except json.JSONDecodeError:
                        break
                    if isinstance(value, dict):
                        return value
                    break
    return None


_BASE_OBJECTS: list[dict] = [
    {"branch": "Continue", "problem": "", "sub_tasks": ["Open the browser."]},
    {"a": 1, "b": [1, 2, {"c": "}"}], "d": None},
    {"text": 'quote " and brace { inside', "n": -3.5},
    {"unicode": "空调 — ünïcode ✓", "emoji": "🙂"},
    {"nested": {"deep": {"deeper": [{}, {"x": True}]}}},
    {"escaped": "line\nbreak \\ backslash \" quote"},
    {},
    {"sci": 1e-9, "big": 123456789012345678},
]

_PREFIXES = [
    "",
    "Sure, here is the result:\n\n",
    "Thinking about { the task...\n",
    "[1, 2, 3] was my scratch list.\n",
    "```json\n",
    "```\n",
    "{oops, not json}\n",
    "{\"truncated\": \n... never mind:\n",
    "prose with a } stray closer\n",
]

_SUFFIXES = [
    "",
    "\n```",
    "\n```\nDoes this help?",
    "\nTrailing commentary with {braces} inside.",
    ' {"second": "object"}',
    "\n\n-- end of message",
]


def fuzz_corpus(count: int = 50, seed: int = 20260816) -> list[tuple[str, dict]]:
    """Deterministic corpus of (noisy_text, first_expected_object) pairs."""
    rng = random.Random(seed)
    cases: list[tuple[str, dict]] = []
    for base in _BASE_OBJECTS:
        text = json.dumps(base, ensure_ascii=False)
        cases.append((f"```json\n{text}\n```", base))
        cases.append((f"Here you go:\n{text}\nHope that works.", base))
    while len(cases) < count:
        base = rng.choice(_BASE_OBJECTS)
        prefix = rng.choice(_PREFIXES)
        suffix = rng.choice(_SUFFIXES)
        indent = rng.choice([None, 2])
        text = json.dumps(base, ensure_ascii=False, indent=indent)
        noisy = f"{prefix}{text}{suffix}"
        expected = base
        # A prefix that itself contains a complete object would win; none of
        # the pool entries do, and the stray-brace ones fail to parse.
        cases.append((noisy, expected))
    return cases[:count]


def random_text(rng: random.Random, min_size: int = 0, max_size: int = 30) -> str:
    alphabet = "abcdefghijklmnopqrstuvwxyz {}[]\"'\\\n.один二三🙂"
    size = rng.randint(min_size, max_size)
    return "".join(rng.choice(alphabet) for _ in range(size))
