"""HTTP client for the print-server protocol.

Speaks the OctoPrint-style subset served by :mod:`fingercell.mockserver`:
upload gcode, start a job, poll job state, and wait for completion.  All
waiting goes through an injected clock so tests run on virtual time.

Transient network errors are retried 3 times with a fixed 1 second backoff
before surfacing as :class:`NetworkError`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import requests

from .clock import Clock, RealClock

__all__ = [
    "AuthenticationError",
    "JobPhase",
    "JobState",
    "NetworkError",
    "PollTimeoutError",
    "PrinterBusyError",
    "PrinterEndpoint",
    "ProtocolError",
    "UnknownFileError",
    "await_completion",
    "get_job_state",
    "list_files",
    "next_poll_delay",
    "start_job",
    "upload_gcode",
]

RETRIES = 3
RETRY_BACKOFF_S = 1.0


class ProtocolError(Exception):
    """Print-server interaction failed."""


class AuthenticationError(ProtocolError):
    pass


class PrinterBusyError(ProtocolError):
    pass


class UnknownFileError(ProtocolError):
    pass


class NetworkError(ProtocolError):
    pass


class PollTimeoutError(ProtocolError):
    pass


class JobPhase(enum.Enum):
    OPERATIONAL = "operational"
    PRINTING = "printing"
    PAUSED = "paused"
    ERROR = "error"
    OFFLINE = "offline"


@dataclass(frozen=True)
class JobState:
    phase: JobPhase
    progress: float
    seconds_remaining: float | None
    file_name: str | None


@dataclass(frozen=True)
class PrinterEndpoint:
    base_url: str
    api_key: str
    poll_interval: float = 5.0

    def __post_init__(self) -> None:
        if not self.poll_interval > 0:
            raise ValueError(
                f"poll_interval must be positive, got {self.poll_interval}"
            )
        object.__setattr__(self, "base_url", self.base_url.rstrip("/"))


def _request(
    ep: PrinterEndpoint,
    clock: Clock,
    method: str,
    path: str,
    **kwargs,
) -> requests.Response:
    headers = {"X-Api-Key": ep.api_key}
    url = ep.base_url + path
    attempts = RETRIES + 1
    for attempt in range(attempts):
        try:
            response = requests.request(method, url, headers=headers, **kwargs)
            break
        except (requests.ConnectionError, requests.Timeout) as exc:
            if attempt == attempts - 1:
                raise NetworkError(
                    f"{method} {url} failed after {attempts} attempts: {exc}"
                ) from exc
            clock.sleep(RETRY_BACKOFF_S)
    if response.status_code == 401:
        raise AuthenticationError(f"{url}: rejected API key")
    if response.status_code == 404:
        raise UnknownFileError(f"{url}: {_error_text(response)}")
    if response.status_code == 409:
        raise PrinterBusyError(f"{url}: {_error_text(response)}")
    if response.status_code >= 400:
        raise ProtocolError(
            f"{method} {url} returned {response.status_code}: {_error_text(response)}"
        )
    return response


def _error_text(response: requests.Response) -> str:
    try:
        return response.json().get("error", response.text)
    except ValueError:
        return response.text


def upload_gcode(
    ep: PrinterEndpoint, name: str, body: bytes, clock: Clock | None = None
) -> dict:
    """Store ``body`` under ``name`` on the server; re-upload overwrites."""
    if not name:
        raise ValueError("upload name must be non-empty")
    response = _request(
        ep,
        clock or RealClock(),
        "POST",
        "/api/files/local",
        files={"file": (name, body, "application/octet-stream")},
    )
    return response.json()


def start_job(ep: PrinterEndpoint, name: str, clock: Clock | None = None) -> None:
    _request(
        ep,
        clock or RealClock(),
        "POST",
        "/api/job",
        json={"command": "start", "file": name},
    )


def get_job_state(ep: PrinterEndpoint, clock: Clock | None = None) -> JobState:
    payload = _request(ep, clock or RealClock(), "GET", "/api/job").json()
    return JobState(
        phase=JobPhase(payload["phase"]),
        progress=float(payload["progress"]),
        seconds_remaining=(
            None
            if payload.get("seconds_remaining") is None
            else float(payload["seconds_remaining"])
        ),
        file_name=payload.get("file_name"),
    )


def list_files(ep: PrinterEndpoint, clock: Clock | None = None) -> list[str]:
    return list(_request(ep, clock or RealClock(), "GET", "/api/files").json()["files"])


def next_poll_delay(state: JobState, poll_interval: float) -> float:
    """Nap length before the next poll.

    Capped by the reported remaining time so the final poll lands exactly
    on the completion instant under a virtual clock.
    """
    delay = poll_interval
    if state.seconds_remaining is not None:
        delay = min(delay, state.seconds_remaining)
    return delay if delay > 0 else poll_interval


def await_completion(
    ep: PrinterEndpoint,
    clock: Clock | None = None,
    timeout_s: float | None = None,
) -> JobState:
    """Poll until the phase leaves ``printing``; returns the terminal state."""
    clock = clock or RealClock()
    deadline = None if timeout_s is None else clock.now() + timeout_s
    while True:
        state = get_job_state(ep, clock)
        if state.phase is not JobPhase.PRINTING:
            return state
        if deadline is not None and clock.now() >= deadline:
            raise PollTimeoutError(
                f"job still printing after {timeout_s} s: {state}"
            )
        clock.sleep(next_poll_delay(state, ep.poll_interval))
