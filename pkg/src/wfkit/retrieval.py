"""Description embedding, top-k workflow retrieval and candidate aggregation."""

from __future__ import annotations

import hashlib
import json
import os
import re
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Protocol, Sequence

import numpy as np

from .errors import EmptyText, ProviderMismatch, ProviderUnavailable
from .ir import node_type_set

_TOKEN = re.compile(r"\w+", re.UNICODE)


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    provider_id: str

    @property
    def dim(self) -> int:
        return len(self.values)

    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    x, y = a.array(), b.array()
    return float(x @ y / (np.linalg.norm(x) * np.linalg.norm(y)))


def _normalize(values: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(values)
    if norm == 0:
        raise EmptyText("text has no embeddable content")
    return values / norm


class EmbeddingProvider(Protocol):
    provider_id: str

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]: ...


class HashingProvider:
    """Offline fallback: signed feature hashing of lower-cased word tokens."""

    def __init__(self, dim: int = 256, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self.provider_id = f"hashing-{dim}-{seed}"
        self._key = seed.to_bytes(8, "big")

    def _vector(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for token in _TOKEN.findall(text.lower()):
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=self._key).digest()
            h = int.from_bytes(digest, "big")
            vec[h % self.dim] += 1.0 if (h >> 63) & 1 else -1.0
        return vec

    def embed_batch(self, texts):
        return [self._vector(t) for t in texts]


class RemoteProvider:
    """OpenAI-style embeddings endpoint: POST {model, input: [...]} -> {data: [{embedding}]}."""

    def __init__(self, endpoint: str, model: str, api_key_env: Optional[str] = None, timeout: float = 30.0):
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.provider_id = f"remote-{model}"

    def embed_batch(self, texts):
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if not key:
                raise ProviderUnavailable(f"environment variable {self.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        body = json.dumps({"model": self.model, "input": list(texts)}).encode("utf-8")
        request = urllib.request.Request(self.endpoint, data=body, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                payload = json.loads(response.read().decode("utf-8"))
            vectors = [np.asarray(item["embedding"], dtype=np.float64) for item in payload["data"]]
        except (urllib.error.URLError, OSError, ValueError, KeyError, TypeError) as exc:
            raise ProviderUnavailable(f"embedding request failed: {exc}") from None
        if len(vectors) != len(texts):
            raise ProviderUnavailable("embedding response has the wrong number of vectors")
        return vectors


class CachedProvider:
    """Disk cache keyed by (provider id, SHA-256 of the text)."""

    def __init__(self, inner, cache_dir):
        self.inner = inner
        self.provider_id = inner.provider_id
        self.root = Path(cache_dir) / re.sub(r"[^A-Za-z0-9_.-]", "_", self.provider_id)

    def _path(self, text: str) -> Path:
        return self.root / (hashlib.sha256(text.encode("utf-8")).hexdigest() + ".json")

    def embed_batch(self, texts):
        out: list[Optional[np.ndarray]] = []
        missing = []
        for i, t in enumerate(texts):
            p = self._path(t)
            if p.exists():
                out.append(np.asarray(json.loads(p.read_text()), dtype=np.float64))
            else:
                out.append(None)
                missing.append(i)
        if missing:
            fresh = self.inner.embed_batch([texts[i] for i in missing])
            self.root.mkdir(parents=True, exist_ok=True)
            for i, vec in zip(missing, fresh):
                self._path(texts[i]).write_text(json.dumps([float(x) for x in vec]))
                out[i] = vec
        return out


def make_provider(provider: str = "hashing", *, dim: int = 256, endpoint: str = "", model: str = "",
                  api_key_env: Optional[str] = None, cache_dir=None, seed: int = 0):
    if provider == "hashing":
        inner = HashingProvider(dim, seed)
    elif provider == "remote":
        if not endpoint or not model:
            raise ProviderUnavailable("remote provider needs endpoint and model")
        inner = RemoteProvider(endpoint, model, api_key_env)
    else:
        raise ProviderUnavailable(f"unknown provider {provider!r}")
    return CachedProvider(inner, cache_dir) if cache_dir else inner


def embed_many(texts: Sequence[str], provider) -> list[EmbeddingVector]:
    for t in texts:
        if not t or not t.strip():
            raise EmptyText("cannot embed empty text")
    raw = provider.embed_batch(list(texts))
    return [EmbeddingVector(tuple(float(x) for x in _normalize(np.asarray(v, dtype=np.float64))), provider.provider_id) for v in raw]


def embed(text: str, provider) -> EmbeddingVector:
    return embed_many([text], provider)[0]


@dataclass(frozen=True)
class WorkflowIndex:
    entries: tuple[tuple[str, EmbeddingVector], ...]
    provider_id: str

    def __len__(self) -> int:
        return len(self.entries)

    def matrix(self) -> np.ndarray:
        return np.array([v.values for _, v in self.entries], dtype=np.float64)


def build_index(workflows, provider) -> WorkflowIndex:
    """One vector per KB entry, embedding its description."""
    entries = list(workflows)
    vectors = embed_many([e.description for e in entries], provider)
    return WorkflowIndex(tuple((e.id, v) for e, v in zip(entries, vectors)), provider.provider_id)


def top_k(query_text: str, index: WorkflowIndex, provider, k: int = 3) -> list[tuple[str, float]]:
    """Cosine ranking, ties broken by ascending workflow id."""
    if provider.provider_id != index.provider_id:
        raise ProviderMismatch(f"index built with {index.provider_id}, query uses {provider.provider_id}")
    if not index.entries:
        return []
    query = embed(query_text, provider).array()
    sims = index.matrix() @ query
    ranked = sorted(zip((eid for eid, _ in index.entries), sims.tolist()), key=lambda item: (-item[1], item[0]))
    return ranked[: max(k, 0)]


def candidates_from_workflows(ids: Iterable[str], kb) -> frozenset[str]:
    out: set[str] = set()
    for entry_id in ids:
        out |= node_type_set(kb.get(entry_id).graph)
    return frozenset(out)
