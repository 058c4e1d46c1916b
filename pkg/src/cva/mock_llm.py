"""A deterministic chat-completions endpoint for offline pipeline runs.

Real model output is not reproducible, so CI exercises the surrounding
pipeline against this server instead. Behaviors are scripted per model (or
globally) and, given a seed, every response is a pure function of the
request plus the server-side request counter:

* ``echo-valid-mapping``   answer each column with glossary ids, matching
                           by label when possible (so a glossary built from
                           the corpus's own labels scores hit@1 = 1.0);
* ``inject-hallucinations``  same, plus ids that are not in the glossary,
                           to exercise the client-side filter;
* ``fail-rate(p)``         return HTTP 500 with probability p;
* ``timeout``              hold the response long enough for clients to
                           give up;
* ``refuse``               reply with a bare "failure" message.

The behavior script may be a single behavior name or a {model: behavior}
mapping with "*" as the fallback key.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Mapping

logger = logging.getLogger(__name__)

BEHAVIORS = ("echo-valid-mapping", "inject-hallucinations", "fail-rate", "timeout", "refuse")

_FAIL_RATE_RE = re.compile(r"fail-rate\((?P<p>[0-9.]+)\)")
_METADATA_START = "in json format:\n"
_METADATA_END = "\nEach json element"


def _parse_behavior(name: str) -> tuple[str, float]:
    match = _FAIL_RATE_RE.fullmatch(name.strip())
    if match:
        p = float(match.group("p"))
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"fail-rate probability must be in [0, 1], got {p}")
        return "fail-rate", p
    if name not in ("echo-valid-mapping", "inject-hallucinations", "timeout", "refuse"):
        raise ValueError(f"unknown mock behavior {name!r}")
    return name, 0.0


def extract_metadata_batch(user_content: str) -> list[dict]:
    """Pull the serialized metadata array back out of a rendered user message."""
    start = user_content.find(_METADATA_START)
    end = user_content.find(_METADATA_END)
    if start == -1 or end == -1 or end <= start:
        return []
    payload = user_content[start + len(_METADATA_START) : end]
    try:
        batch = json.loads(payload)
    except json.JSONDecodeError:
        return []
    return batch if isinstance(batch, list) else []


def extract_glossary(user_content: str) -> tuple[list[str], dict[str, str]]:
    """Recover (ids, label->id) from the glossary JSONL lines in the message."""
    ids: list[str] = []
    by_label: dict[str, str] = {}
    for line in user_content.splitlines():
        line = line.strip()
        if not line.startswith("{"):
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict) and "id" in obj and "label" in obj and "desc" in obj:
            ids.append(obj["id"])
            by_label.setdefault(str(obj["label"]).lower(), obj["id"])
    return ids, by_label


def _stable_int(*parts: str) -> int:
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).hexdigest()
    return int(digest[:12], 16)


def _mapping_lines(
    batch: list[dict],
    glossary_ids: list[str],
    by_label: dict[str, str],
    seed: int,
    hallucinate: bool,
) -> str:
    lines = []
    for column in batch:
        col_id = str(column.get("id", ""))
        label = str(column.get("label", "")).lower()
        ranked: list[str] = []
        matched = by_label.get(label)
        if matched is not None:
            ranked.append(matched)
        if glossary_ids:
            start = _stable_int(str(seed), col_id) % len(glossary_ids)
            for offset in range(len(glossary_ids)):
                if len(ranked) >= 5:
                    break
                candidate = glossary_ids[(start + offset) % len(glossary_ids)]
                if candidate not in ranked:
                    ranked.append(candidate)
        if hallucinate:
            fake = f"http://fake.example.org/made-up/{_stable_int(str(seed), col_id, 'fake') % 10_000}"
            ranked = [fake] + ranked + [fake + "-tail"]
        quoted = ", ".join(f"'{gid}'" for gid in ranked)
        lines.append(f"'colID': '{col_id}', 'propID': [{quoted}]")
    return "\n".join(lines)


class _MockChatHandler(BaseHTTPRequestHandler):
    server: "MockLlmServer"

    def log_message(self, format: str, *args) -> None:  # quiet the default stderr spam
        logger.debug("mock-llm: " + format, *args)

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self) -> None:  # noqa: N802 (http.server API)
        if self.path.rstrip("/") != "/v1/chat/completions":
            self._send_json(404, {"error": "unknown path"})
            return
        length = int(self.headers.get("Content-Length", "0"))
        try:
            request = json.loads(self.rfile.read(length).decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            self._send_json(400, {"error": "invalid JSON body"})
            return
        model = str(request.get("model", ""))
        behavior, fail_p = self.server.behavior_for(model)

        if behavior == "timeout":
            time.sleep(self.server.timeout_delay)
            self._send_json(504, {"error": "timed out"})
            return
        if behavior == "fail-rate":
            if self.server.next_failure_draw() < fail_p:
                self._send_json(500, {"error": "scripted failure"})
                return
            behavior = "echo-valid-mapping"
        if behavior == "refuse":
            self._respond_with_content("failure")
            return

        messages = request.get("messages", [])
        user_content = ""
        for message in messages:
            if isinstance(message, dict) and message.get("role") == "user":
                user_content = str(message.get("content", ""))
        batch = extract_metadata_batch(user_content)
        glossary_ids, by_label = extract_glossary(user_content)
        content = _mapping_lines(
            batch,
            glossary_ids,
            by_label,
            self.server.seed,
            hallucinate=(behavior == "inject-hallucinations"),
        )
        self._respond_with_content(content)

    def _respond_with_content(self, content: str) -> None:
        self._send_json(
            200,
            {
                "id": "mock-chat-1",
                "object": "chat.completion",
                "choices": [
                    {
                        "index": 0,
                        "message": {"role": "assistant", "content": content},
                        "finish_reason": "stop",
                    }
                ],
            },
        )


class MockLlmServer(ThreadingHTTPServer):
    """Scripted chat-completions server; start()/stop() or use as a context manager."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(
        self,
        behavior: str | Mapping[str, str] = "echo-valid-mapping",
        seed: int = 0,
        port: int = 0,
        host: str = "127.0.0.1",
        timeout_delay: float = 30.0,
    ):
        super().__init__((host, port), _MockChatHandler)
        if isinstance(behavior, str):
            self._behaviors = {"*": _parse_behavior(behavior)}
        else:
            self._behaviors = {model: _parse_behavior(b) for model, b in behavior.items()}
            self._behaviors.setdefault("*", ("echo-valid-mapping", 0.0))
        self.seed = seed
        self.timeout_delay = timeout_delay
        self._failure_lock = threading.Lock()
        self._failure_counter = 0
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def handle_error(self, request, client_address) -> None:
        # Clients time out on purpose (the "timeout" behavior); the resulting
        # broken pipes are expected, not worth a stderr traceback.
        logger.debug("mock-llm: error handling request from %s", client_address)

    def behavior_for(self, model: str) -> tuple[str, float]:
        return self._behaviors.get(model, self._behaviors["*"])

    def next_failure_draw(self) -> float:
        """Deterministic pseudo-uniform draw in [0, 1), one per fail-rate request."""
        with self._failure_lock:
            self._failure_counter += 1
            counter = self._failure_counter
        return (_stable_int(str(self.seed), str(counter)) % 10_000) / 10_000.0

    def start(self) -> "MockLlmServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        logger.info("mock chat endpoint listening on %s", self.url)
        return self

    def stop(self) -> None:
        self.shutdown()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
        self.server_close()

    def __enter__(self) -> "MockLlmServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()


def serve_mock_llm(
    port: int,
    behavior_script: str | Mapping[str, str],
    seed: int = 0,
    host: str = "127.0.0.1",
) -> MockLlmServer:
    """Start a mock endpoint on `port` (0 picks a free one) and return it running."""
    server = MockLlmServer(behavior=behavior_script, seed=seed, port=port, host=host)
    return server.start()
