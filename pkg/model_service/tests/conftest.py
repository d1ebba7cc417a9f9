"""Shared fixtures and the acceptance-line terminal summary."""

from __future__ import annotations

import time

import pytest

from model_service import create_app, load_config

# (criterion name, passed) tuples appended by acceptance-marked tests.
ACCEPTANCE_RESULTS: list[tuple[str, bool]] = []

WATCH = frozenset({"total", "getenv", "printf", "vmask0"})
WATCH_PARAM = "|".join(sorted(WATCH))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}")


def toy_config(**overrides):
    merged = {"watch": WATCH, **overrides}
    return load_config(env={}, overrides=merged)


def wait_ready(client, timeout: float = 5.0):
    """Poll /health until the background loader finishes."""
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        response = client.get("/health")
        if response.status_code == 200:
            return response
        time.sleep(0.01)
    raise RuntimeError("service did not become ready")


@pytest.fixture
def client():
    from fastapi.testclient import TestClient

    test_client = TestClient(create_app(toy_config()))
    wait_ready(test_client)
    return test_client
