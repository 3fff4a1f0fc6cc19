"""Per-agent memory: long-term embedding store and short-term dialog window.

Long-term records carry a unit-norm embedding of their summary; retrieval is
an exact exhaustive cosine scan (stores are small, no index structure is
warranted) with ties broken toward the lower record id. The short-term
window keeps the agent's own recent responses, bounded in length. Each agent
owns its stores; nothing here is shared between roles.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Protocol

import httpx

from .errors import DimensionMismatch, EmbeddingFailure
from .responses import AgentResponse, parse_agent_response

STUB_DIMENSION = 64

_TOKEN = re.compile(r"[a-z0-9]+")


class EmbeddingProvider(Protocol):
    dimension: int

    def embed(self, text: str) -> list[float]: ...


class StubEmbeddingProvider:
    """Deterministic offline embedding: hashed-token bucket counts.

    Each token lands in one of 64 buckets chosen by a stable digest; the
    count vector is L2-normalized. Text with no tokens maps to the first
    basis vector so empty queries still retrieve something stable.
    """

    dimension = STUB_DIMENSION

    def embed(self, text: str) -> list[float]:
        counts = [0.0] * self.dimension
        for token in _TOKEN.findall(text.lower()):
            digest = hashlib.sha1(token.encode("utf-8")).digest()
            counts[int.from_bytes(digest[:4], "big") % self.dimension] += 1.0
        norm = math.sqrt(sum(c * c for c in counts))
        if norm == 0.0:
            counts[0] = 1.0
            return counts
        return [c / norm for c in counts]


class RemoteEmbeddingProvider:
    """OpenAI-compatible /embeddings client; failures become EmbeddingFailure."""

    def __init__(
        self,
        base_url: str,
        model: str,
        dimension: int,
        api_key: str | None = None,
        timeout: float = 30.0,
        max_retries: int = 3,
        client: httpx.Client | None = None,
    ):
        self.dimension = dimension
        self._model = model
        self._max_retries = max_retries
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = client or httpx.Client(
            base_url=base_url, timeout=timeout, headers=headers
        )

    def embed(self, text: str) -> list[float]:
        payload = {"model": self._model, "input": [text]}
        last: Exception | None = None
        for attempt in range(self._max_retries):
            try:
                response = self._client.post("/embeddings", json=payload)
                response.raise_for_status()
                vector = response.json()["data"][0]["embedding"]
                return [float(x) for x in vector]
            except (httpx.HTTPError, KeyError, IndexError, ValueError) as err:
                last = err
                if attempt + 1 < self._max_retries:
                    time.sleep(0.5 * (2**attempt))
        raise EmbeddingFailure(f"embedding request failed: {last}")


@dataclass
class MemoryRecord:
    id: int
    role: str
    summary: str
    embedding: list[float]
    content: str
    created_at: str

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "role": self.role,
            "summary": self.summary,
            "embedding": self.embedding,
            "content": self.content,
            "created_at": self.created_at,
        }


@dataclass
class LongTermStore:
    owner_role: str
    dimension: int
    records: list[MemoryRecord] = field(default_factory=list)


def _normalized(vector: list[float], dimension: int) -> list[float]:
    if len(vector) != dimension:
        raise DimensionMismatch(dimension, len(vector))
    norm = math.sqrt(sum(x * x for x in vector))
    if norm == 0.0 or not math.isfinite(norm):
        raise EmbeddingFailure("provider returned a zero or non-finite vector")
    return [x / norm for x in vector]


def lt_insert(
    store: LongTermStore,
    summary: str,
    content: str,
    provider: EmbeddingProvider,
) -> int:
    """Embed the summary and append a record; returns the new id."""
    if not summary.strip():
        raise ValueError("memory summary must be non-empty")
    if provider.dimension != store.dimension:
        raise DimensionMismatch(store.dimension, provider.dimension)
    embedding = _normalized(provider.embed(summary), store.dimension)
    next_id = store.records[-1].id + 1 if store.records else 0
    record = MemoryRecord(
        id=next_id,
        role=store.owner_role,
        summary=summary,
        embedding=embedding,
        content=content,
        created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )
    store.records.append(record)
    return next_id


def lt_retrieve(
    store: LongTermStore,
    query: str,
    n: int,
    provider: EmbeddingProvider,
) -> list[MemoryRecord]:
    """Top-n records by cosine similarity to the query; ties favor lower id.

    Exhaustive scan over the whole store. Embeddings are unit-norm, so the
    dot product is the cosine.
    """
    if n <= 0 or not store.records:
        return []
    if provider.dimension != store.dimension:
        raise DimensionMismatch(store.dimension, provider.dimension)
    query_vec = _normalized(provider.embed(query), store.dimension)
    scored = [
        (sum(a * b for a, b in zip(record.embedding, query_vec)), record)
        for record in store.records
    ]
    scored.sort(key=lambda pair: (-pair[0], pair[1].id))
    return [record for _, record in scored[:n]]


def save_store(store: LongTermStore, path: str | Path) -> None:
    """Write the store as JSONL: one header line, then one line per record."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        header = {"owner_role": store.owner_role, "dimension": store.dimension}
        handle.write(json.dumps(header, ensure_ascii=False) + "\n")
        for record in store.records:
            handle.write(json.dumps(record.to_json_dict(), ensure_ascii=False) + "\n")


def load_store(path: str | Path) -> LongTermStore:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"empty memory file: {path}")
    header = json.loads(lines[0])
    store = LongTermStore(owner_role=header["owner_role"], dimension=int(header["dimension"]))
    previous_id = -1
    for line in lines[1:]:
        if not line.strip():
            continue
        data = json.loads(line)
        record = MemoryRecord(
            id=int(data["id"]),
            role=data["role"],
            summary=data["summary"],
            embedding=[float(x) for x in data["embedding"]],
            content=data["content"],
            created_at=data["created_at"],
        )
        if record.id <= previous_id:
            raise ValueError(f"memory ids must increase: {record.id} after {previous_id}")
        if len(record.embedding) != store.dimension:
            raise DimensionMismatch(store.dimension, len(record.embedding))
        previous_id = record.id
        store.records.append(record)
    return store


@dataclass
class ShortTermEntry:
    step: int
    response: AgentResponse

    def to_json_dict(self) -> dict:
        return {"step": self.step, "response": self.response.to_json_dict()}


class ShortTermWindow:
    """Bounded window of (step, response) pairs, ordered by step."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("window capacity must be positive")
        self.capacity = capacity
        self.entries: list[ShortTermEntry] = []

    def append(self, step: int, response: AgentResponse) -> None:
        if self.entries and step <= self.entries[-1].step:
            raise ValueError(
                f"step {step} is not after the window's last step {self.entries[-1].step}"
            )
        self.entries.append(ShortTermEntry(step=step, response=response))
        if len(self.entries) > self.capacity:
            del self.entries[: len(self.entries) - self.capacity]

    def last(self, m: int) -> list[ShortTermEntry]:
        if m <= 0:
            return []
        return self.entries[-m:]

    def truncate_after(self, step: int) -> None:
        """Drop entries newer than the given step (rollback support)."""
        self.entries = [entry for entry in self.entries if entry.step <= step]

    def to_json_list(self) -> list[dict]:
        return [entry.to_json_dict() for entry in self.entries]

    @classmethod
    def from_json_list(cls, capacity: int, data: list[dict]) -> "ShortTermWindow":
        window = cls(capacity)
        for item in data:
            body = dict(item["response"])
            role = body.pop("role")
            window.append(item["step"], parse_agent_response(json.dumps(body), role))
        return window
