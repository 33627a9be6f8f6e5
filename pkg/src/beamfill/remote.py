"""HTTP client for model servers speaking the conditionals protocol.

The server exposes vocabulary metadata, tokenization, and per-position
log-conditionals over JSON.  This client validates every response into a
:class:`CondDistribution` before the engine sees it, renormalizing tiny
float drift and rejecting anything worse.

Endpoints: GET /v1/meta, POST /v1/tokenize, POST /v1/detokenize,
POST /v1/conditionals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import requests

from beamfill.backends import ConditionalBackend
from beamfill.errors import (
    BackendUnavailable,
    InvalidDistribution,
    InvalidQuery,
    ProtocolError,
    TooLarge,
)
from beamfill.kernels import logsumexp
from beamfill.seqcore import CondDistribution, MASK_TOKEN, Vocab

#: Largest |logsumexp| a response may show and still be accepted
#: (after renormalization); anything beyond is a server bug.
RENORM_TOL = 1e-3

DEFAULT_TIMEOUT = 30.0


@dataclass(frozen=True)
class ServerMeta:
    vocab_size: int
    mask_token_id: int
    special_token_ids: tuple[int, ...]
    model_name: str


def _request(method: str, url: str, timeout: float, json_body: Optional[dict] = None):
    try:
        resp = requests.request(method, url, json=json_body, timeout=timeout)
    except requests.RequestException as exc:
        raise BackendUnavailable(f"{method} {url}: {exc}") from exc
    if resp.status_code >= 500 or resp.status_code == 503:
        raise BackendUnavailable(f"{url} returned {resp.status_code}")
    if resp.status_code >= 400:
        raise InvalidQuery(f"{url} rejected the request: {resp.status_code} {resp.text[:200]}")
    try:
        return resp.json()
    except ValueError as exc:
        raise ProtocolError(f"{url}: response is not JSON") from exc


def fetch_meta(endpoint: str, timeout: float = DEFAULT_TIMEOUT) -> ServerMeta:
    payload = _request("GET", f"{endpoint.rstrip('/')}/v1/meta", timeout)
    try:
        return ServerMeta(
            vocab_size=int(payload["vocab_size"]),
            mask_token_id=int(payload["mask_token_id"]),
            special_token_ids=tuple(int(i) for i in payload["special_token_ids"]),
            model_name=str(payload["model_name"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed meta payload: {payload!r}") from exc


def vocab_from_meta(meta: ServerMeta) -> Vocab:
    """Placeholder-name vocabulary mirroring the server's id space.

    Only ids matter engine-side; names exist for debugging.  The mask id
    is always treated as special even if the server's list omits it.
    """
    names = []
    for i in range(meta.vocab_size):
        names.append(MASK_TOKEN if i == meta.mask_token_id else f"<{i}>")
    specials = frozenset(meta.special_token_ids) | {meta.mask_token_id}
    return Vocab(tokens=tuple(names), mask_id=meta.mask_token_id, special_ids=specials)


def remote_tokenize(endpoint: str, text: str, timeout: float = DEFAULT_TIMEOUT) -> list[int]:
    payload = _request("POST", f"{endpoint.rstrip('/')}/v1/tokenize", timeout, {"text": text})
    try:
        return [int(i) for i in payload["token_ids"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed tokenize payload: {payload!r}") from exc


def remote_detokenize(
    endpoint: str, token_ids: Sequence[int], timeout: float = DEFAULT_TIMEOUT
) -> str:
    payload = _request(
        "POST",
        f"{endpoint.rstrip('/')}/v1/detokenize",
        timeout,
        {"token_ids": [int(i) for i in token_ids]},
    )
    try:
        return str(payload["text"])
    except (KeyError, TypeError) as exc:
        raise ProtocolError(f"malformed detokenize payload: {payload!r}") from exc


def _validate_logp(raw, vocab_size: int) -> CondDistribution:
    try:
        arr = np.asarray(raw, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ProtocolError("logp entry is not a float list") from exc
    if arr.ndim != 1 or arr.shape[0] != vocab_size:
        raise ProtocolError(f"logp length {arr.shape} != vocab size {vocab_size}")
    if not np.all(np.isfinite(arr)):
        raise ProtocolError("logp entries must be finite")
    drift = logsumexp(arr)
    if abs(drift) > RENORM_TOL:
        raise InvalidDistribution(
            f"response normalization off by {drift:.3e} (tolerance {RENORM_TOL})"
        )
    return CondDistribution(arr - drift)


class RemoteBackend(ConditionalBackend):
    """Conditional backend served over HTTP.

    Per-instance memoization caches responses for repeated (sequence,
    position) queries within a run; nothing persists across instances.
    """

    def __init__(
        self,
        endpoint: str,
        timeout: float = DEFAULT_TIMEOUT,
        batch_size: int = 64,
        meta: Optional[ServerMeta] = None,
    ) -> None:
        if batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        self.endpoint = endpoint.rstrip("/")
        self.timeout = float(timeout)
        self.batch_size = int(batch_size)
        self.meta = meta if meta is not None else fetch_meta(self.endpoint, self.timeout)
        self.vocab = vocab_from_meta(self.meta)
        self.name = f"remote({self.meta.model_name})"
        self._cache: dict[tuple[tuple[int, ...], int], CondDistribution] = {}

    def conditionals(self, context: Sequence[int], position: int) -> CondDistribution:
        key = (tuple(int(t) for t in context), int(position))
        hit = self._cache.get(key)
        if hit is None:
            hit = remote_conditionals(self, [key])[0]
            self._cache[key] = hit
        return hit


def remote_conditionals(
    backend: RemoteBackend,
    queries: Sequence[tuple[Sequence[int], int]],
) -> list[CondDistribution]:
    """One batched conditionals request; responses in query order."""
    if not queries:
        raise InvalidQuery("empty query batch")
    if len(queries) > backend.batch_size:
        raise TooLarge(f"batch of {len(queries)} exceeds limit {backend.batch_size}")
    body = {
        "queries": [
            {"token_ids": [int(t) for t in ctx], "position": int(pos)}
            for ctx, pos in queries
        ]
    }
    payload = _request(
        "POST", f"{backend.endpoint}/v1/conditionals", backend.timeout, body
    )
    try:
        results = payload["results"]
    except (KeyError, TypeError) as exc:
        raise ProtocolError(f"malformed conditionals payload: {payload!r}") from exc
    if not isinstance(results, list) or len(results) != len(queries):
        raise ProtocolError(
            f"expected {len(queries)} results, got {len(results) if isinstance(results, list) else type(results)}"
        )
    out = []
    for entry in results:
        if not isinstance(entry, dict) or "logp" not in entry:
            raise ProtocolError(f"malformed result entry: {entry!r}")
        out.append(_validate_logp(entry["logp"], backend.vocab.size))
    return out
