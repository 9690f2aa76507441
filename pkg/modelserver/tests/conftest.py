import threading
import time

import pytest
import uvicorn

from modelserver import ServerConfig, create_app


def wait_until_loaded(get_health, timeout_s=15.0) -> None:
    """Poll /health until no configured capability is still loading."""
    deadline = time.time() + timeout_s
    while time.time() < deadline:
        states = get_health()["capabilities"].values()
        if "loading" not in states:
            return
        time.sleep(0.02)
    raise RuntimeError("engines did not finish loading in time")


@pytest.fixture
def toy_client():
    from fastapi.testclient import TestClient

    with TestClient(create_app(ServerConfig.all_toy())) as client:
        wait_until_loaded(lambda: client.get("/health").json())
        yield client


@pytest.fixture
def live_server():
    """Serve a config over real HTTP on an ephemeral port."""
    import requests

    running = []

    def start(cfg: ServerConfig, wait: bool = True) -> str:
        config = uvicorn.Config(create_app(cfg), host="127.0.0.1", port=0, log_level="warning")
        server = uvicorn.Server(config)
        thread = threading.Thread(target=server.run, daemon=True)
        thread.start()
        deadline = time.time() + 10
        while not server.started:
            if time.time() > deadline:
                raise RuntimeError("server did not start")
            time.sleep(0.01)
        running.append((server, thread))
        port = server.servers[0].sockets[0].getsockname()[1]
        url = f"http://127.0.0.1:{port}"
        if wait:
            wait_until_loaded(lambda: requests.get(f"{url}/health", timeout=5).json(), 300.0)
        return url

    yield start
    for server, thread in running:
        server.should_exit = True
        thread.join(timeout=10)
