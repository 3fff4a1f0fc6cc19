"""Canonical role identifiers.

Seven roles hold a dialog with the model; the executor does not (it only
applies operations, so nothing it does is ever parsed). Role names arriving
from model output may be spelled freely ("Application Manager",
"ApplicationManager", "application-manager"); :func:`canonical_role` folds
them onto one snake_case id.
"""

from __future__ import annotations

import re

PLANNER = "planner"
TASK_SCHEDULER = "task_scheduler"
REVIEWER = "reviewer"
EXECUTOR = "executor"

APPLICATION_MANAGER = "application_manager"
FILE_MANAGER = "file_manager"
SEARCHER = "searcher"
PROGRAMMER = "programmer"

# Pool order is also prompt rendering order.
POOL_ROLES: tuple[str, ...] = (APPLICATION_MANAGER, FILE_MANAGER, SEARCHER, PROGRAMMER)

DIALOG_ROLES: frozenset[str] = frozenset({PLANNER, TASK_SCHEDULER, REVIEWER, *POOL_ROLES})

_CAMEL_BOUNDARY = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")
_SEPARATORS = re.compile(r"[\s\-]+")


def canonical_role(name: str) -> str:
    """Fold a role spelling onto its snake_case id (no membership check)."""
    folded = _CAMEL_BOUNDARY.sub("_", name.strip())
    folded = _SEPARATORS.sub("_", folded).lower()
    return re.sub(r"_+", "_", folded).strip("_")


def display_name(role: str) -> str:
    """Human-facing spelling: "application_manager" -> "Application Manager"."""
    return " ".join(part.capitalize() for part in role.split("_"))


def is_pool_role(role: str) -> bool:
    return role in POOL_ROLES
