"""Mock print server: an OctoPrint-style REST subset over a simulated job.

The server holds uploaded gcode files and one job slot per instance.  Job
progress is computed lazily from an injected clock, so a test that advances
a virtual clock by 337 seconds observes a finished key-fingertip print
without waiting.  Default job durations are the three measured fingertip
print times; a fault plan can make a job fail partway through.

Endpoint subset (header ``X-Api-Key`` required on every request):

  * ``POST /api/files/local``: multipart field ``file``, or a raw body
    with ``?filename=name``; re-upload overwrites.
  * ``POST /api/job``: JSON ``{"command": "start", "file": name}``.
  * ``GET /api/job``: JSON ``{phase, progress, seconds_remaining, file_name}``.
  * ``GET /api/files``: JSON ``{"files": [names]}``.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from email.parser import BytesParser
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Mapping
from urllib.parse import parse_qs, urlsplit

from .clock import Clock

__all__ = [
    "DEFAULT_DURATIONS",
    "FaultPlan",
    "MockPrintServer",
    "MockPrinterConfig",
    "PrinterSim",
    "mock_server",
]

# Measured print times per fingertip kind, in seconds.
DEFAULT_DURATIONS: Mapping[str, float] = {
    "key": 337.0,
    "ethernet_cable": 676.0,
    "battery": 592.0,
}


@dataclass(frozen=True)
class FaultPlan:
    """Fail jobs whose file name contains ``match`` at ``fail_at`` of the run."""

    fail_at: float
    match: str = ""

    def __post_init__(self) -> None:
        if not 0.0 <= self.fail_at <= 1.0:
            raise ValueError(f"fail_at must be within [0, 1], got {self.fail_at}")

    def applies_to(self, file_name: str) -> bool:
        return self.match in file_name


@dataclass(frozen=True)
class MockPrinterConfig:
    printer_id: str = "printer"
    api_key: str = "mock-key"
    durations: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_DURATIONS)
    )
    default_duration: float = 60.0
    faults: tuple[FaultPlan, ...] = ()

    def duration_for(self, file_name: str) -> float:
        # Longest matching kind wins so "key" cannot shadow a longer kind
        # that happens to contain it.
        best = None
        for kind in sorted(self.durations, key=len, reverse=True):
            if kind in file_name:
                best = self.durations[kind]
                break
        return self.default_duration if best is None else best

    def fault_for(self, file_name: str) -> FaultPlan | None:
        for plan in self.faults:
            if plan.applies_to(file_name):
                return plan
        return None


@dataclass
class _Job:
    file_name: str
    started_at: float
    duration: float
    fail_at: float | None
    finished: bool = False
    failed: bool = False
    final_progress: float = 0.0


class PrinterSim:
    """Single-printer state machine; all access serialized by one lock."""

    def __init__(self, config: MockPrinterConfig, clock: Clock) -> None:
        self.config = config
        self.clock = clock
        self._lock = threading.Lock()
        self._files: dict[str, bytes] = {}
        self._job: _Job | None = None

    def store_file(self, name: str, body: bytes) -> None:
        if not name:
            raise ValueError("file name must be non-empty")
        with self._lock:
            self._files[name] = body

    def file_names(self) -> list[str]:
        with self._lock:
            return sorted(self._files)

    def file_body(self, name: str) -> bytes:
        with self._lock:
            return self._files[name]

    def start_job(self, name: str) -> None:
        """Raises KeyError for unknown files, RuntimeError when not idle."""
        with self._lock:
            self._refresh()
            if name not in self._files:
                raise KeyError(name)
            if self._job is not None and not self._job.finished:
                raise RuntimeError(f"printer busy with {self._job.file_name}")
            if self._job is not None and self._job.failed:
                raise RuntimeError("printer in error state")
            fault = self.config.fault_for(name)
            self._job = _Job(
                file_name=name,
                started_at=self.clock.now(),
                duration=self.config.duration_for(name),
                fail_at=fault.fail_at if fault else None,
            )

    def job_state(self) -> dict:
        with self._lock:
            self._refresh()
            job = self._job
            if job is None:
                return {
                    "phase": "operational",
                    "progress": 0.0,
                    "seconds_remaining": None,
                    "file_name": None,
                }
            if job.failed:
                phase = "error"
            elif job.finished:
                phase = "operational"
            else:
                phase = "printing"
            if job.finished:
                progress = job.final_progress
                remaining = 0.0 if not job.failed else None
            else:
                elapsed = self.clock.now() - job.started_at
                progress = min(max(elapsed / job.duration, 0.0), 1.0)
                remaining = max(job.duration - elapsed, 0.0)
            return {
                "phase": phase,
                "progress": progress,
                "seconds_remaining": remaining,
                "file_name": job.file_name,
            }

    def _refresh(self) -> None:
        # Lazy progression: the job's fate is a pure function of the clock.
        job = self._job
        if job is None or job.finished:
            return
        elapsed = self.clock.now() - job.started_at
        if job.fail_at is not None and elapsed >= job.fail_at * job.duration:
            job.finished = True
            job.failed = True
            job.final_progress = job.fail_at
        elif elapsed >= job.duration:
            job.finished = True
            job.final_progress = 1.0


class _Handler(BaseHTTPRequestHandler):
    sim: PrinterSim  # set by the server factory
    protocol_version = "HTTP/1.1"

    def log_message(self, format: str, *args) -> None:
        pass

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        # One request per connection keeps handler threads from lingering.
        self.send_header("Connection", "close")
        self.end_headers()
        self.wfile.write(body)

    def _authorized(self) -> bool:
        if self.headers.get("X-Api-Key") == self.sim.config.api_key:
            return True
        self._send_json(401, {"error": "invalid or missing API key"})
        return False

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length", "0"))
        return self.rfile.read(length)

    def do_GET(self) -> None:
        if not self._authorized():
            return
        path = urlsplit(self.path).path
        if path == "/api/job":
            self._send_json(200, self.sim.job_state())
        elif path == "/api/files":
            self._send_json(200, {"files": self.sim.file_names()})
        else:
            self._send_json(404, {"error": f"no such endpoint: {path}"})

    def do_POST(self) -> None:
        if not self._authorized():
            return
        split = urlsplit(self.path)
        if split.path == "/api/files/local":
            self._handle_upload(split.query)
        elif split.path == "/api/job":
            self._handle_job_command()
        else:
            self._send_json(404, {"error": f"no such endpoint: {split.path}"})

    def _handle_upload(self, query: str) -> None:
        body = self._read_body()
        content_type = self.headers.get("Content-Type", "")
        name = None
        data = None
        if content_type.startswith("multipart/"):
            name, data = _parse_multipart(content_type, body)
        else:
            params = parse_qs(query)
            if "filename" in params:
                name = params["filename"][0]
                data = body
        if not name or data is None:
            self._send_json(
                400, {"error": "expected multipart field 'file' or ?filename="}
            )
            return
        self.sim.store_file(name, data)
        self._send_json(201, {"done": True, "files": {"local": {"name": name}}})

    def _handle_job_command(self) -> None:
        try:
            payload = json.loads(self._read_body())
        except json.JSONDecodeError:
            self._send_json(400, {"error": "body must be JSON"})
            return
        if payload.get("command") != "start":
            self._send_json(400, {"error": "only {'command': 'start'} is supported"})
            return
        name = payload.get("file")
        if not isinstance(name, str) or not name:
            self._send_json(400, {"error": "missing 'file'"})
            return
        try:
            self.sim.start_job(name)
        except KeyError:
            self._send_json(404, {"error": f"no uploaded file named {name!r}"})
        except RuntimeError as exc:
            self._send_json(409, {"error": str(exc)})
        else:
            # 204: started, no body.
            self.send_response(204)
            self.send_header("Connection", "close")
            self.end_headers()


def _parse_multipart(content_type: str, body: bytes) -> tuple[str | None, bytes | None]:
    header = f"Content-Type: {content_type}\r\n\r\n".encode()
    message = BytesParser().parsebytes(header + body)
    if not message.is_multipart():
        return None, None
    for part in message.get_payload():
        disposition = part.get("Content-Disposition", "")
        if 'name="file"' in disposition:
            payload = part.get_payload(decode=True)
            return part.get_filename(), payload
    return None, None


class MockPrintServer:
    """Threaded HTTP server around one PrinterSim.

    Binds eagerly (port 0 picks a free port; a taken port raises OSError)
    and serves from a daemon thread between start() and stop().
    """

    def __init__(
        self, config: MockPrinterConfig, clock: Clock, port: int = 0
    ) -> None:
        self.config = config
        self.sim = PrinterSim(config, clock)
        handler = type("BoundHandler", (_Handler,), {"sim": self.sim})
        self._server = ThreadingHTTPServer(("127.0.0.1", port), handler)
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def start(self) -> "MockPrintServer":
        self._thread = threading.Thread(
            # Small poll interval so stop() returns promptly.
            target=lambda: self._server.serve_forever(poll_interval=0.01),
            name=f"mock-{self.config.printer_id}",
            daemon=True,
        )
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self) -> "MockPrintServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()


def mock_server(
    config: MockPrinterConfig, clock: Clock, port: int = 0
) -> MockPrintServer:
    """Start a mock print server; caller is responsible for stop()."""
    return MockPrintServer(config, clock, port).start()
