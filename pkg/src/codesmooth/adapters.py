"""Uniform black-box classifier interface with builtin, subprocess, and
HTTP transports.

Builtins are deterministic toy classifiers used by tests and oracles.
The subprocess transport speaks one JSON object per line over stdin and
stdout; the HTTP transport POSTs batches to /classify. Both reassemble
results by item id, so shuffled responses still come back aligned with
the request order.
"""

from __future__ import annotations

import hashlib
import json
import queue
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import httpx

from .code_model import (
    KIND_WHITESPACE,
    LANGUAGES,
    snippet_from_source,
    tokenize,
)
from .errors import DataError, ProtocolError, TransportError

DEFAULT_TIMEOUT = 30.0
DEFAULT_BATCH_LIMIT = 64
DEFAULT_MAX_ATTEMPTS = 3
DEFAULT_MAX_IN_FLIGHT = 4


@dataclass(frozen=True)
class ClassifyItem:
    """One classification request: an id, the code text, and its language."""

    id: str
    code: str
    language: str


@dataclass(frozen=True)
class ClassifyResult:
    """One classification answer echoing the request id."""

    id: str
    label: int


class ClassifierAdapter:
    """Base class: transports and builtins implement _classify_chunk."""

    kind = "builtin"
    spec = ""

    def __init__(
        self,
        label_space: Optional[Sequence[int]] = None,
        batch_limit: int = DEFAULT_BATCH_LIMIT,
    ):
        if batch_limit < 1:
            raise ValueError("batch_limit must be at least 1")
        self.label_space = list(label_space) if label_space is not None else None
        self.batch_limit = batch_limit

    def _classify_chunk(self, items: Sequence[ClassifyItem]) -> list[ClassifyResult]:
        raise NotImplementedError

    def _classify_chunks(
        self, chunks: Sequence[Sequence[ClassifyItem]]
    ) -> list[list[ClassifyResult]]:
        return [self._classify_chunk(chunk) for chunk in chunks]

    def close(self) -> None:
        pass

    def __enter__(self) -> "ClassifierAdapter":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def classify_batch(
    adapter: ClassifierAdapter, items: Sequence[ClassifyItem]
) -> list[ClassifyResult]:
    """Classify every item, returning results aligned with request order.

    Items are split into batch_limit chunks; each result id must echo a
    request id exactly once, labels must be integers, and labels must lie
    in the adapter's label space when one is declared.
    """
    if not items:
        raise ValueError("items must be nonempty")
    ids = [item.id for item in items]
    if len(set(ids)) != len(ids):
        raise ValueError("item ids must be unique within a batch")
    limit = adapter.batch_limit
    chunks = [items[i : i + limit] for i in range(0, len(items), limit)]
    chunk_results = adapter._classify_chunks(chunks)
    by_id: dict[str, ClassifyResult] = {}
    for chunk, results in zip(chunks, chunk_results):
        if len(results) != len(chunk):
            raise ProtocolError(
                f"expected {len(chunk)} results in chunk, got {len(results)}"
            )
        for result in results:
            if result.id in by_id:
                raise ProtocolError(f"duplicate result id {result.id!r}")
            by_id[result.id] = result
    ordered: list[ClassifyResult] = []
    for item in items:
        result = by_id.get(item.id)
        if result is None:
            raise ProtocolError(f"missing result for item {item.id!r}")
        if isinstance(result.label, bool) or not isinstance(result.label, int):
            raise ProtocolError(f"label for item {item.id!r} is not an integer")
        if adapter.label_space is not None and result.label not in adapter.label_space:
            raise ProtocolError(
                f"label {result.label} for item {item.id!r} is outside the label space"
            )
        ordered.append(result)
    return ordered


def _item_language(item: ClassifyItem) -> str:
    if item.language not in LANGUAGES:
        raise DataError(f"unsupported language {item.language!r} for item {item.id!r}")
    return item.language


class ConstantAdapter(ClassifierAdapter):
    """Answers every item with one fixed label."""

    kind = "builtin"

    def __init__(self, label: int = 0):
        super().__init__(label_space=[label])
        self.label = label
        self.spec = f"constant:label={label}"

    def _classify_chunk(self, items: Sequence[ClassifyItem]) -> list[ClassifyResult]:
        return [ClassifyResult(item.id, self.label) for item in items]


class IdentifierPresenceAdapter(ClassifierAdapter):
    """hit_label iff any identifier-table name of the snippet is watched."""

    kind = "builtin"

    def __init__(self, watch: Sequence[str] = (), hit_label: int = 1, miss_label: int = 0):
        super().__init__(label_space=sorted({hit_label, miss_label}))
        self.watch = frozenset(watch)
        self.hit_label = hit_label
        self.miss_label = miss_label
        self.spec = f"identifier_presence:watch={'|'.join(sorted(self.watch))}"

    def _classify_chunk(self, items: Sequence[ClassifyItem]) -> list[ClassifyResult]:
        results = []
        for item in items:
            snippet = snippet_from_source(item.code, _item_language(item))
            hit = any(name in self.watch for name in snippet.identifiers.names())
            results.append(
                ClassifyResult(item.id, self.hit_label if hit else self.miss_label)
            )
        return results


class KeywordDensityAdapter(ClassifierAdapter):
    """Label 1 iff trigger-token density among non-whitespace tokens is
    strictly above the threshold; identifier renames never change it when
    the triggers are keywords or punctuation."""

    kind = "builtin"

    def __init__(self, trigger_tokens: Sequence[str] = (), threshold: float = 0.1):
        super().__init__(label_space=[0, 1])
        self.trigger_tokens = frozenset(trigger_tokens)
        self.threshold = threshold
        self.spec = (
            f"keyword_density:triggers={'|'.join(sorted(self.trigger_tokens))},"
            f"threshold={threshold}"
        )

    def _classify_chunk(self, items: Sequence[ClassifyItem]) -> list[ClassifyResult]:
        results = []
        for item in items:
            tokens = tokenize(item.code, _item_language(item))
            visible = [t for t in tokens if t.kind != KIND_WHITESPACE]
            hits = sum(1 for t in visible if t.text in self.trigger_tokens)
            density = hits / len(visible) if visible else 0.0
            results.append(ClassifyResult(item.id, 1 if density > self.threshold else 0))
        return results


class TokenHashAdapter(ClassifierAdapter):
    """Stable 64-bit hash of the non-whitespace token texts, mod num_labels.

    Deterministic per input, but any identifier edit may flip the label,
    which makes it a maximally brittle stress-test classifier.
    """

    kind = "builtin"

    def __init__(self, num_labels: int = 2):
        if num_labels < 1:
            raise ValueError("num_labels must be at least 1")
        super().__init__(label_space=list(range(num_labels)))
        self.num_labels = num_labels
        self.spec = f"token_hash:labels={num_labels}"

    def _classify_chunk(self, items: Sequence[ClassifyItem]) -> list[ClassifyResult]:
        results = []
        for item in items:
            tokens = tokenize(item.code, _item_language(item))
            joined = "".join(t.text for t in tokens if t.kind != KIND_WHITESPACE)
            digest = hashlib.blake2b(joined.encode("utf-8"), digest_size=8).digest()
            value = int.from_bytes(digest, "big")
            results.append(ClassifyResult(item.id, value % self.num_labels))
        return results


class SubprocessAdapter(ClassifierAdapter):
    """Line-protocol child process classifier.

    The child reads {"id", "code", "language"} JSON objects one per stdin
    line and writes {"id", "label"} JSON objects one per stdout line. A
    blank line from the parent asks the child to shut down. Transport
    failures (dead child, timeout) restart the child and retry with
    exponential backoff; malformed output is not retried.
    """

    kind = "subprocess"

    def __init__(
        self,
        command: str | Sequence[str],
        label_space: Optional[Sequence[int]] = None,
        batch_limit: int = DEFAULT_BATCH_LIMIT,
        timeout: float = DEFAULT_TIMEOUT,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        backoff: float = 0.1,
    ):
        super().__init__(label_space=label_space, batch_limit=batch_limit)
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.spec = " ".join(self.command)
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff = backoff
        self._proc: Optional[subprocess.Popen] = None
        self._lines: "queue.Queue[Optional[str]]" = queue.Queue()
        self._lock = threading.Lock()

    def _reader(self, proc: subprocess.Popen, sink: "queue.Queue[Optional[str]]") -> None:
        assert proc.stdout is not None
        for line in proc.stdout:
            sink.put(line)
        sink.put(None)

    def _ensure_child(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            return
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._lines = queue.Queue()
        thread = threading.Thread(
            target=self._reader, args=(self._proc, self._lines), daemon=True
        )
        thread.start()

    def _kill_child(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()
        self._proc = None

    def _roundtrip(self, items: Sequence[ClassifyItem]) -> list[str]:
        self._ensure_child()
        assert self._proc is not None and self._proc.stdin is not None
        try:
            for item in items:
                request = {"id": item.id, "code": item.code, "language": item.language}
                self._proc.stdin.write(json.dumps(request) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise TransportError(f"classifier process pipe failed: {exc}") from exc
        lines: list[str] = []
        for _ in items:
            try:
                line = self._lines.get(timeout=self.timeout)
            except queue.Empty:
                raise TransportError(
                    f"classifier process produced no output within {self.timeout}s"
                ) from None
            if line is None:
                raise TransportError("classifier process closed its output")
            lines.append(line)
        return lines

    def _classify_chunk(self, items: Sequence[ClassifyItem]) -> list[ClassifyResult]:
        with self._lock:
            last: Optional[TransportError] = None
            for attempt in range(self.max_attempts):
                if attempt:
                    time.sleep(self.backoff * 2 ** (attempt - 1))
                try:
                    lines = self._roundtrip(items)
                    break
                except TransportError as exc:
                    self._kill_child()
                    last = exc
            else:
                assert last is not None
                raise last
        results = []
        for line in lines:
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ProtocolError(f"classifier emitted invalid JSON: {line!r}") from exc
            if not isinstance(payload, dict) or "id" not in payload or "label" not in payload:
                raise ProtocolError(f"classifier line missing id/label: {line!r}")
            results.append(ClassifyResult(str(payload["id"]), payload["label"]))
        return results

    def close(self) -> None:
        with self._lock:
            if self._proc is not None and self._proc.poll() is None:
                try:
                    assert self._proc.stdin is not None
                    self._proc.stdin.write("\n")
                    self._proc.stdin.flush()
                    self._proc.wait(timeout=5)
                except (OSError, subprocess.TimeoutExpired):
                    self._kill_child()
            self._proc = None


class HTTPAdapter(ClassifierAdapter):
    """HTTP transport: POST /classify with an item batch, GET /health.

    Connection failures and 502/503/504 answers are retried with
    exponential backoff; other non-200 answers and malformed bodies raise
    ProtocolError without retry. Up to max_in_flight chunks are posted
    concurrently.
    """

    kind = "http"

    def __init__(
        self,
        base_url: str,
        label_space: Optional[Sequence[int]] = None,
        batch_limit: int = DEFAULT_BATCH_LIMIT,
        timeout: float = DEFAULT_TIMEOUT,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
        backoff: float = 0.25,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        super().__init__(label_space=label_space, batch_limit=batch_limit)
        if "://" not in base_url:
            base_url = "http://" + base_url
        self.spec = base_url
        self.max_attempts = max_attempts
        self.max_in_flight = max_in_flight
        self.backoff = backoff
        self._client = httpx.Client(base_url=base_url, timeout=timeout, transport=transport)

    def health(self) -> dict:
        """GET /health; returns the parsed body."""
        try:
            response = self._client.get("/health")
        except httpx.HTTPError as exc:
            raise TransportError(f"health check failed: {exc}") from exc
        if response.status_code != 200:
            raise ProtocolError(f"health check returned HTTP {response.status_code}")
        try:
            return response.json()
        except ValueError as exc:
            raise ProtocolError("health check returned invalid JSON") from exc

    def _post_chunk(self, items: Sequence[ClassifyItem]) -> httpx.Response:
        payload = {
            "items": [
                {"id": item.id, "code": item.code, "language": item.language}
                for item in items
            ]
        }
        last: Optional[TransportError] = None
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                response = self._client.post("/classify", json=payload)
            except httpx.TransportError as exc:
                last = TransportError(f"classifier request failed: {exc}")
                continue
            if response.status_code in (502, 503, 504):
                last = TransportError(
                    f"classifier returned HTTP {response.status_code}"
                )
                continue
            return response
        assert last is not None
        raise last

    def _classify_chunk(self, items: Sequence[ClassifyItem]) -> list[ClassifyResult]:
        response = self._post_chunk(items)
        if response.status_code != 200:
            raise ProtocolError(f"classifier returned HTTP {response.status_code}")
        try:
            body = response.json()
        except ValueError as exc:
            raise ProtocolError("classifier returned invalid JSON") from exc
        rows = body.get("items") if isinstance(body, dict) else None
        if not isinstance(rows, list):
            raise ProtocolError("classifier response is missing the items list")
        results = []
        for row in rows:
            if not isinstance(row, dict) or "id" not in row or "label" not in row:
                raise ProtocolError(f"classifier item missing id/label: {row!r}")
            results.append(ClassifyResult(str(row["id"]), row["label"]))
        return results

    def _classify_chunks(
        self, chunks: Sequence[Sequence[ClassifyItem]]
    ) -> list[list[ClassifyResult]]:
        if len(chunks) == 1:
            return [self._classify_chunk(chunks[0])]
        from concurrent.futures import ThreadPoolExecutor

        workers = min(self.max_in_flight, len(chunks))
        with ThreadPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(self._classify_chunk, chunks))

    def close(self) -> None:
        self._client.close()


_BUILTIN_NAMES = ("constant", "identifier_presence", "keyword_density", "token_hash")


def _parse_params(text: str) -> dict[str, str]:
    params: dict[str, str] = {}
    if not text:
        return params
    for part in text.split(","):
        if "=" not in part:
            raise DataError(f"malformed builtin parameter {part!r}; expected key=value")
        key, value = part.split("=", 1)
        params[key.strip()] = value.strip()
    return params


def _int_param(params: Mapping[str, str], key: str, default: int) -> int:
    if key not in params:
        return default
    try:
        return int(params[key])
    except ValueError:
        raise DataError(f"builtin parameter {key}={params[key]!r} is not an integer") from None


def make_builtin(name: str, params: Optional[Mapping[str, str]] = None) -> ClassifierAdapter:
    """Construct a builtin classifier from its name and parameter map."""
    params = dict(params or {})
    if name == "constant":
        return ConstantAdapter(label=_int_param(params, "label", 0))
    if name == "identifier_presence":
        watch = [w for w in params.get("watch", "").split("|") if w]
        return IdentifierPresenceAdapter(
            watch=watch,
            hit_label=_int_param(params, "hit", 1),
            miss_label=_int_param(params, "miss", 0),
        )
    if name == "keyword_density":
        triggers = [t for t in params.get("triggers", "").split("|") if t]
        try:
            threshold = float(params.get("threshold", "0.1"))
        except ValueError:
            raise DataError("keyword_density threshold must be a number") from None
        return KeywordDensityAdapter(trigger_tokens=triggers, threshold=threshold)
    if name == "token_hash":
        labels = _int_param(params, "labels", _int_param(params, "num_labels", 2))
        return TokenHashAdapter(num_labels=labels)
    raise DataError(f"unknown builtin classifier {name!r}; expected one of {_BUILTIN_NAMES}")


def make_adapter(spec: str) -> ClassifierAdapter:
    """Build an adapter from a spec string.

    Forms: "builtin:NAME" or "builtin:NAME:key=value,...",
    "subprocess:COMMAND", and "http:URL" (a bare http(s)://... URL also
    works).
    """
    if not spec:
        raise DataError("empty model spec")
    if spec.startswith(("http://", "https://")):
        return HTTPAdapter(spec)
    scheme, _, rest = spec.partition(":")
    if scheme == "builtin":
        name, _, params = rest.partition(":")
        if not name:
            raise DataError("builtin spec is missing a name")
        return make_builtin(name, _parse_params(params))
    if scheme == "subprocess":
        if not rest:
            raise DataError("subprocess spec is missing a command")
        return SubprocessAdapter(rest)
    if scheme == "http":
        if not rest:
            raise DataError("http spec is missing a URL")
        return HTTPAdapter(rest)
    raise DataError(
        f"unknown model spec {spec!r}; expected builtin:NAME, subprocess:CMD, or http:URL"
    )
