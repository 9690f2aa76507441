import threading
import time

import pytest
import uvicorn

from crop_vqa.backends.stubserver import StubModelServer


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: acceptance-criteria gate")


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL/SKIP line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed", "skipped"):
        for report in terminalreporter.stats.get(outcome, []):
            if getattr(report, "when", "call") != "call" and outcome != "skipped":
                continue
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            lines.append((nodeid.split("::", 1)[1], outcome.upper()))
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, outcome in sorted(set(lines)):
            terminalreporter.write_line(f"[{outcome}] {name}")


@pytest.fixture
def stub_server():
    """Start a StubModelServer configured by the test; stops on teardown."""
    servers = []

    def factory(**kwargs) -> StubModelServer:
        server = StubModelServer(**kwargs)
        server.start()
        servers.append(server)
        return server

    yield factory
    for server in servers:
        server.stop()


class ServiceUnderTest:
    """Real uvicorn server on an ephemeral port, for CLI round trips."""

    def __init__(self, app):
        config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning")
        self.server = uvicorn.Server(config)
        self.thread = threading.Thread(target=self.server.run, daemon=True)

    def __enter__(self) -> str:
        self.thread.start()
        deadline = time.time() + 10
        while not self.server.started:
            if time.time() > deadline:
                raise RuntimeError("service did not start in time")
            time.sleep(0.01)
        port = self.server.servers[0].sockets[0].getsockname()[1]
        return f"http://127.0.0.1:{port}"

    def __exit__(self, *exc_info) -> None:
        self.server.should_exit = True
        self.thread.join(timeout=10)


@pytest.fixture
def live_service():
    """Start the evaluation service in-process behind real HTTP."""
    from crop_vqa.service import create_app

    contexts = []

    def factory(**kwargs) -> str:
        ctx = ServiceUnderTest(create_app(**kwargs))
        url = ctx.__enter__()
        contexts.append(ctx)
        return url

    yield factory
    for ctx in contexts:
        ctx.__exit__(None, None, None)
