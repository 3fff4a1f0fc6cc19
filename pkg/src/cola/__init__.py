"""Role-based agent orchestration engine.

A task arrives as natural-language text, a planner decomposes it, a scheduler
distributes the pieces across a pool of specialised decision agents, and each
decision step runs through an executor and a reviewer before the loop
continues. Sessions are checkpointed after every step and can be rolled back,
steered, or resumed interactively over a CLI or an HTTP/WebSocket service.
"""

from __future__ import annotations

__version__ = "0.1.0"
