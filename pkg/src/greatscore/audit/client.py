"""HTTP client for remote prediction endpoints.

Wire protocol (one instance per request)::

    POST {url}
    {"instances": [{"id": "<string>", "input": [<real>, ...]}]}

    200 OK
    {"predictions": [{"id": "<string>", "probs": [<real>, ...]}]}

``probs`` may also be an object of named class probabilities such as
``{"Male": 0.9, "Female": 0.1}``; a class-order manifest maps it to a
vector. Responses are cached as content-addressed files keyed by the
endpoint url and the input payload, never by id.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence
from urllib.parse import urlparse

import numpy as np
import requests

from ..errors import EndpointError, InvalidInput, ProtocolError
from ..score import PredictionVector

logger = logging.getLogger(__name__)

AUTH_ENV = "GREATSCORE_AUTH_HEADER"
RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


@dataclass(frozen=True)
class EndpointConfig:
    url: str
    auth_header: Optional[str] = None
    timeout_ms: int = 10_000
    max_in_flight: int = 4
    rate_limit_per_s: float = 10.0
    max_retries: int = 3
    cache_dir: Optional[str] = None
    backoff_base_s: float = 0.1
    class_order: Optional[tuple] = None
    renormalize: bool = False

    def __post_init__(self):
        parsed = urlparse(self.url)
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise InvalidInput(f"endpoint url {self.url!r} is not an http(s) url")
        if self.timeout_ms <= 0 or self.max_in_flight < 1 or self.max_retries < 0:
            raise InvalidInput("timeout_ms and max_in_flight must be positive, max_retries non-negative")
        if not self.rate_limit_per_s > 0 or self.backoff_base_s < 0:
            raise InvalidInput("rate_limit_per_s must be positive and backoff_base_s non-negative")
        if self.auth_header is not None and ":" not in self.auth_header:
            raise InvalidInput("auth_header must look like 'Name: value'")
        if self.class_order is not None:
            object.__setattr__(self, "class_order", tuple(self.class_order))

    def headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        raw = self.auth_header or os.environ.get(AUTH_ENV)
        if raw:
            name, _, value = raw.partition(":")
            headers[name.strip()] = value.strip()
        return headers


class ItemError(EndpointError):
    """Failure of a single payload; returned in place of its prediction."""

    def __init__(self, item_id: str, kind: str, message: str):
        super().__init__(f"{item_id}: {kind}: {message}")
        self.item_id = item_id
        self.kind = kind


class TokenBucket:
    """Thread-safe token bucket holding at most ``capacity`` tokens."""

    def __init__(self, rate: float, capacity: float = 1.0, clock=time.monotonic, sleep=time.sleep):
        self.rate = rate
        self.capacity = capacity
        self._tokens = capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


def payload_key(url: str, payload_input) -> str:
    body = json.dumps({"url": url, "input": payload_input}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


class ResponseCache:
    """Content-addressed JSON files; writes are atomic renames."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str):
        try:
            return json.loads(self._path(key).read_text())
        except FileNotFoundError:
            return None

    def put(self, key: str, value) -> None:
        path = self._path(key)
        path.parent.mkdir(exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            json.dump(value, fh)
        os.replace(tmp, path)


def to_vector(raw, class_order=None, renormalize=False) -> list:
    """Adapt one response entry's ``probs`` to a list of floats."""
    if isinstance(raw, dict):
        if class_order is None:
            raise ProtocolError("named class probabilities need a class-order manifest")
        missing = [c for c in class_order if c not in raw]
        if missing:
            raise ProtocolError(f"response lacks classes {missing}")
        raw = [raw[c] for c in class_order]
    if not isinstance(raw, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw):
        raise ProtocolError("probs must be a list of numbers")
    vec = [float(v) for v in raw]
    if renormalize:
        total = math.fsum(vec)
        if not total > 0:
            raise ProtocolError("cannot renormalise probabilities that sum to zero")
        vec = [v / total for v in vec]
    return vec


class EndpointClient:
    """Rate-limited, retrying, caching client for one endpoint.

    ``sleep`` is used for retry backoff only (tests inject a recorder);
    the rate limiter always waits in real time.
    """

    def __init__(self, config: EndpointConfig, session: Optional[requests.Session] = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.session = session or requests.Session()
        self.sleep = sleep
        self.bucket = TokenBucket(config.rate_limit_per_s)
        self.cache = ResponseCache(config.cache_dir) if config.cache_dir else None
        self.network_calls = 0
        self._count_lock = threading.Lock()

    def _post(self, payload):
        self.bucket.acquire()
        with self._count_lock:
            self.network_calls += 1
        return self.session.post(self.config.url, json={"instances": [payload]},
                                 headers=self.config.headers(), timeout=self.config.timeout_ms / 1000.0)

    def _fetch(self, payload):
        item_id = payload["id"]
        cfg = self.config
        last = "no attempt made"
        for attempt in range(cfg.max_retries + 1):
            retry_after = 0.0
            try:
                resp = self._post(payload)
            except (requests.Timeout, requests.ConnectionError) as exc:
                last = f"transport error: {exc}"
            else:
                if resp.status_code == 200:
                    return self._parse(item_id, resp)
                if resp.status_code not in RETRYABLE_STATUS:
                    return ItemError(item_id, "http", f"permanent HTTP {resp.status_code}")
                last = f"HTTP {resp.status_code}"
                try:
                    retry_after = float(resp.headers.get("Retry-After", 0))
                except ValueError:
                    retry_after = 0.0
            if attempt < cfg.max_retries:
                delay = max(cfg.backoff_base_s * 2 ** attempt, retry_after)
                logger.debug("retrying %s after %s in %.3fs", item_id, last, delay)
                self.sleep(delay)
        return ItemError(item_id, "retries-exhausted", f"{cfg.max_retries + 1} attempts failed, last: {last}")

    def _parse(self, item_id, resp):
        try:
            body = resp.json()
            preds = body["predictions"]
            entry = next(p for p in preds if p.get("id") == item_id)
            return to_vector(entry["probs"], self.config.class_order, self.config.renormalize)
        except StopIteration:
            return ItemError(item_id, "protocol", "response does not echo the request id")
        except ProtocolError as exc:
            return ItemError(item_id, "protocol", str(exc))
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            return ItemError(item_id, "protocol", f"malformed response body: {exc}")

    def _lookup(self, payload):
        key = payload_key(self.config.url, payload["input"])
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return hit
        result = self._fetch(payload)
        if self.cache is not None and isinstance(result, list):
            self.cache.put(key, result)
        return result

    def query(self, batch: Sequence[dict]) -> list:
        if not batch:
            raise InvalidInput("empty batch")
        for p in batch:
            if not isinstance(p, dict) or "id" not in p or "input" not in p:
                raise InvalidInput("each payload needs 'id' and 'input'")
        if self.config.max_in_flight > 1 and len(batch) > 1:
            with ThreadPoolExecutor(max_workers=self.config.max_in_flight) as pool:
                raw = list(pool.map(self._lookup, batch))
        else:
            raw = [self._lookup(p) for p in batch]
        return _validate(batch, raw)


def _validate(batch, raw) -> list:
    # K comes from the first success in request order, so it is independent of completion order
    k = next((len(r) for r in raw if isinstance(r, list)), None)
    out = []
    for payload, r in zip(batch, raw):
        if isinstance(r, ItemError):
            out.append(r)
        elif len(r) != k:
            out.append(ItemError(payload["id"], "protocol", f"expected {k} classes, got {len(r)}"))
        else:
            try:
                out.append(PredictionVector(tuple(r)))
            except InvalidInput as exc:
                out.append(ItemError(payload["id"], "protocol", str(exc)))
    return out


def query_predictions(endpoint: EndpointConfig, batch: Sequence[dict], **kwargs) -> list:
    """One :class:`PredictionVector` or :class:`ItemError` per payload, in order."""
    return EndpointClient(endpoint, **kwargs).query(batch)


class RemoteClassifier:
    """Classifier handle backed by an endpoint; returns confidences.

    Any failed item raises :class:`EndpointError`, which aborts a scoring run.
    """

    def __init__(self, endpoint: EndpointConfig, **kwargs):
        self.client = EndpointClient(endpoint, **kwargs)
        self._counter = 0
        self._lock = threading.Lock()

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        with self._lock:
            start = self._counter
            self._counter += len(x)
        batch = [{"id": str(start + i), "input": row.tolist()} for i, row in enumerate(x)]
        results = self.client.query(batch)
        failed = [r for r in results if isinstance(r, ItemError)]
        if failed:
            raise EndpointError(f"{len(failed)} of {len(batch)} requests failed; first: {failed[0]}")
        return np.array([r.values for r in results])
