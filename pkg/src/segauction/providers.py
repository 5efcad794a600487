"""Relevance and generator providers.

Two pluggable surfaces feed the session runner: a relevance provider scores
one ad for the current query and segment, and a generator turns the segment's
winners into text.  Static and stub implementations are pure and fast; the
embedding and remote-LLM implementations talk to HTTP services and exist
behind the same interfaces so experiments can swap them in.
"""

from __future__ import annotations

import hashlib
import os
import time
from importlib import resources
from typing import Protocol, Sequence

import numpy as np
import requests

from .analytic import decompose_set_relevance, set_relevance_heuristic
from .core import (
    Ad,
    AuthMissingError,
    CombinatorialConfig,
    DimensionMismatchError,
    EmbeddingSpec,
    MissingRelevanceError,
    RelevanceVector,
    Scenario,
    ServiceUnavailableError,
)

__all__ = [
    "RelevanceProvider",
    "SetRelevanceProvider",
    "Generator",
    "StaticRelevance",
    "EmbeddingClient",
    "EmbeddingRelevance",
    "HeuristicSetRelevance",
    "StubGenerator",
    "RemoteGenerator",
    "output_similarity",
    "load_template",
    "multi_prompt",
    "build_providers",
]


class RelevanceProvider(Protocol):
    def score(self, query: str, ad: Ad, segment: int,
              context: Sequence[str]) -> float: ...


class SetRelevanceProvider(Protocol):
    def member_scores(self, query: str, ads: Sequence[Ad],
                      members: Sequence[int], segment: int,
                      context: Sequence[str]) -> np.ndarray: ...


class Generator(Protocol):
    def generate(self, query: str, winners: Sequence[Ad], segment: int,
                 context: Sequence[str], mode: str) -> str: ...


class StaticRelevance:
    """Relevance read off a fixed vector, optionally decayed per segment."""

    def __init__(self, ads: Sequence[Ad], vector: RelevanceVector):
        self._index = {ad.id: i for i, ad in enumerate(ads)}
        self._vector = vector

    def score(self, query: str, ad: Ad, segment: int,
              context: Sequence[str]) -> float:
        if ad.id not in self._index:
            raise MissingRelevanceError(f"no relevance entry for ad {ad.id!r}")
        q = self._vector.at_segment(segment)
        return float(q[self._index[ad.id]])


class EmbeddingClient:
    """Minimal embedding-service client: POST texts, get vectors back.

    Protocol: POST endpoint with JSON {"model": ..., "texts": [...]} and an
    Authorization bearer header; the response carries {"vectors": [[...]]}.
    Embeddings are cached by text digest; transient failures retry with
    exponential backoff before surfacing ServiceUnavailableError.  The
    credential is resolved eagerly so a missing token fails before any
    request goes out.
    """

    def __init__(self, spec: EmbeddingSpec, session=None, sleep=time.sleep):
        token = os.environ.get(spec.credential_env, "")
        if not token:
            raise AuthMissingError(
                f"environment variable {spec.credential_env} is not set"
            )
        self._spec = spec
        self._token = token
        self._session = session if session is not None else requests.Session()
        self._sleep = sleep
        self._cache: dict[str, np.ndarray] = {}
        self._dim: int | None = None

    def embed(self, text: str) -> np.ndarray:
        key = hashlib.sha256(text.encode("utf-8")).hexdigest()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        vec = self._fetch(text)
        self._cache[key] = vec
        return vec

    def _fetch(self, text: str) -> np.ndarray:
        spec = self._spec
        last_error: Exception | None = None
        for attempt in range(spec.max_retries + 1):
            if attempt:
                self._sleep(0.5 * 2 ** (attempt - 1))
            try:
                resp = self._session.post(
                    spec.endpoint,
                    json={"model": spec.model, "texts": [text]},
                    headers={"Authorization": f"Bearer {self._token}"},
                    timeout=spec.timeout,
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code >= 500:
                last_error = ServiceUnavailableError(
                    f"embedding service returned {resp.status_code}"
                )
                continue
            if resp.status_code != 200:
                raise ServiceUnavailableError(
                    f"embedding service returned {resp.status_code}"
                )
            vec = np.asarray(resp.json()["vectors"][0], dtype=np.float64)
            if self._dim is None:
                self._dim = vec.size
            elif vec.size != self._dim:
                raise DimensionMismatchError(
                    f"embedding dimension changed from {self._dim} to {vec.size}"
                )
            return vec
        raise ServiceUnavailableError(
            f"embedding service unreachable after {spec.max_retries + 1} attempts"
        ) from last_error

    def cosine(self, a: str, b: str) -> float:
        va, vb = self.embed(a), self.embed(b)
        denom = float(np.linalg.norm(va) * np.linalg.norm(vb))
        if denom == 0.0:
            return 0.0
        return float(np.dot(va, vb) / denom)


class EmbeddingRelevance:
    """Relevance as the clamped cosine between query and ad document."""

    def __init__(self, spec: EmbeddingSpec, session=None, sleep=time.sleep):
        self.client = EmbeddingClient(spec, session=session, sleep=sleep)

    def score(self, query: str, ad: Ad, segment: int,
              context: Sequence[str]) -> float:
        return min(1.0, max(0.0, self.client.cosine(query, ad.document)))


def output_similarity(text_a: str, text_b: str, client: EmbeddingClient) -> float:
    """Clamped cosine similarity between two generated outputs."""

    return min(1.0, max(0.0, client.cosine(text_a, text_b)))


class HeuristicSetRelevance:
    """Set relevance from per-ad scores: alpha * sum q_i + beta * pairwise.

    The set score is split back across members proportionally to their own
    relevance, which is what the set auction bids and the accounting use.
    """

    def __init__(self, base: RelevanceProvider, config: CombinatorialConfig):
        self._base = base
        self._config = config

    def member_scores(self, query: str, ads: Sequence[Ad],
                      members: Sequence[int], segment: int,
                      context: Sequence[str]) -> np.ndarray:
        q = np.array(
            [self._base.score(query, ads[i], segment, context) for i in members],
            dtype=np.float64,
        )
        c = self._config
        pairwise = None
        if c.beta != 0.0:
            if c.pairwise is None:
                raise ValueError("beta != 0 requires a pairwise similarity matrix")
            pairwise = [
                [c.pairwise[i][j] for j in members] for i in members
            ]
        local = tuple(range(len(members)))
        q_set = set_relevance_heuristic(q, pairwise, c.alpha, c.beta, local)
        return decompose_set_relevance(q_set, q, local)


class StubGenerator:
    """Deterministic offline generator for tests and dry runs.

    Integrated mode weaves the winners into the sentence; append mode
    answers first and tacks the ad copy on at the end.
    """

    def generate(self, query: str, winners: Sequence[Ad], segment: int,
                 context: Sequence[str], mode: str) -> str:
        names = ", ".join(f"{ad.id} ({ad.link})" if ad.link else ad.id
                          for ad in winners) or "no one"
        base = f"[segment {segment + 1}] Response to {query!r}"
        if mode == "append":
            ads = " ".join(f"[sponsored: {ad.id}] {ad.document}" for ad in winners)
            return f"{base}. {ads}".strip()
        return f"{base}, naturally mentioning {names}."


def load_template(name: str) -> str:
    """Read one of the packaged prompt templates (init/rest/multi)."""

    path = resources.files("segauction").joinpath("templates", f"{name}.txt")
    return path.read_text(encoding="utf-8")


_COUNT_WORDS = {2: "two", 3: "three", 4: "four", 5: "five",
                6: "six", 7: "seven", 8: "eight", 9: "nine"}


def multi_prompt(query: str, winners: Sequence[Ad]) -> str:
    """Multi-advertiser prompt for any winner count.

    Mirrors the packaged multi_query template, whose text fixes three ad
    slots; for three winners the two produce identical output.
    """

    count = _COUNT_WORDS.get(len(winners), str(len(winners)))
    blocks = "\n\n".join(
        f"({i}) advertise {ad.id} with this context >>\n{ad.document}"
        for i, ad in enumerate(winners, start=1)
    )
    return (
        f"{query}\n"
        f"please respond to this question for only {count} sentence while\n"
        f"{blocks}\n"
        "\n"
        "Make sure to connect the answer and the advertisement very naturally,\n"
        "not something like appending the ads after just answering the question.\n"
        "Focus on answering the question,\n"
        "there shouldn't be too much advertisment in the output.\n"
        f"Make sure to advertise all {count} brands and\n"
        f"ensure that the response is {count} sentences.\n"
    )


class RemoteGenerator:
    """Chat-completion generator filling the packaged prompt templates.

    The first segment uses init_query, later segments rest_query with the
    running output; multi-winner segments use multi_query.  Wire shape is
    the usual chat API: POST {model, messages, temperature, max_tokens},
    read choices[0].message.content.
    """

    def __init__(self, endpoint: str, model: str = "gpt-4-turbo",
                 credential_env: str = "SEGAUCTION_LLM_TOKEN",
                 temperature: float = 1.0, max_tokens: int = 300,
                 timeout: float = 60.0, max_retries: int = 3,
                 session=None, sleep=time.sleep):
        token = os.environ.get(credential_env, "")
        if not token:
            raise AuthMissingError(
                f"environment variable {credential_env} is not set"
            )
        self._endpoint = endpoint
        self._model = model
        self._token = token
        self._temperature = temperature
        self._max_tokens = max_tokens
        self._timeout = timeout
        self._max_retries = max_retries
        self._session = session if session is not None else requests.Session()
        self._sleep = sleep
        self._messages: list[dict[str, str]] = []

    def generate(self, query: str, winners: Sequence[Ad], segment: int,
                 context: Sequence[str], mode: str) -> str:
        if len(winners) == 3:
            prompt = load_template("multi_query").format(
                prompt=query,
                advertisers=[ad.id for ad in winners],
                ads=[ad.document for ad in winners],
            )
        elif len(winners) > 1:
            # The packaged multi_query template has exactly three ad slots;
            # other winner counts get the same prompt built for their count.
            prompt = multi_prompt(query, winners)
        elif segment == 0 or not context:
            prompt = load_template("init_query").format(
                prompt=query, advertiser=winners[0].id, ad=winners[0].document,
            )
        else:
            prompt = load_template("rest_query").format(
                previous_output=context[-1],
                advertiser=winners[0].id,
                ad=winners[0].document,
            )
        text = self._complete(prompt)
        if mode == "append":
            docs = " ".join(ad.document for ad in winners)
            text = f"{text} {docs}".strip()
        return text

    def _complete(self, prompt: str) -> str:
        self._messages.append({"role": "user", "content": prompt})
        payload = {
            "model": self._model,
            "temperature": self._temperature,
            "max_tokens": self._max_tokens,
            "messages": list(self._messages),
        }
        last_error: Exception | None = None
        for attempt in range(self._max_retries + 1):
            if attempt:
                self._sleep(0.5 * 2 ** (attempt - 1))
            try:
                resp = self._session.post(
                    self._endpoint,
                    json=payload,
                    headers={"Authorization": f"Bearer {self._token}"},
                    timeout=self._timeout,
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code >= 500:
                last_error = ServiceUnavailableError(
                    f"generator service returned {resp.status_code}"
                )
                continue
            if resp.status_code != 200:
                raise ServiceUnavailableError(
                    f"generator service returned {resp.status_code}"
                )
            text = resp.json()["choices"][0]["message"]["content"]
            self._messages.append({"role": "assistant", "content": text})
            return text
        raise ServiceUnavailableError(
            f"generator unreachable after {self._max_retries + 1} attempts"
        ) from last_error


def build_providers(scenario: Scenario, session=None):
    """(relevance, set_relevance, generator) appropriate for the scenario.

    Static scenarios are fully offline.  Embedding scenarios construct the
    HTTP-backed provider, which raises AuthMissingError immediately when
    the credential variable is absent.
    """

    if isinstance(scenario.relevance, RelevanceVector):
        relevance: RelevanceProvider = StaticRelevance(
            scenario.ads, scenario.relevance
        )
    else:
        relevance = EmbeddingRelevance(scenario.relevance, session=session)
    set_relevance = HeuristicSetRelevance(relevance, scenario.combinatorial)
    return relevance, set_relevance, StubGenerator()


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Plain cosine similarity; here so tests and tools share one definition."""

    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))
