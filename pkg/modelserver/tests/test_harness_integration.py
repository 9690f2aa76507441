"""Full stack: the evaluation harness driving this shim over real HTTP.

Everything flows through installed CLIs: `crop-vqa fixture` builds a dataset,
`crop-vqa serve` hosts the evaluation service, and `crop-vqa run` points its
remote backends at this server's toy engines. Toy answers are semantically
meaningless, so only pipeline health is asserted, not accuracy.
"""

import json
import shutil
import socket
import subprocess
import time

import pytest
import requests

from modelserver import ServerConfig

crop_vqa = shutil.which("crop-vqa")
pytestmark = pytest.mark.skipif(
    crop_vqa is None, reason="crop-vqa CLI not installed in this environment"
)


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture
def evaluation_service():
    port = free_port()
    process = subprocess.Popen(
        [crop_vqa, "serve", "--port", str(port)],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    url = f"http://127.0.0.1:{port}"
    try:
        deadline = time.time() + 15
        while time.time() < deadline:
            try:
                if requests.get(f"{url}/health", timeout=1).status_code == 200:
                    break
            except requests.RequestException:
                time.sleep(0.1)
        else:
            raise RuntimeError("evaluation service did not come up")
        yield url
    finally:
        process.terminate()
        process.wait(timeout=10)


def test_remote_run_against_toy_shim(live_server, evaluation_service, tmp_path):
    shim_url = live_server(ServerConfig.all_toy())

    fixture = subprocess.run(
        [crop_vqa, "fixture", "--out", str(tmp_path / "data"), "--n", "4", "--seed", "1"],
        capture_output=True,
        text=True,
        timeout=60,
    )
    assert fixture.returncode == 0, fixture.stderr
    records = tmp_path / "data" / "records.jsonl"

    run = subprocess.run(
        [
            crop_vqa,
            "--service",
            evaluation_service,
            "run",
            "--dataset",
            f"records:{records}",
            "--strategy",
            "iterative",
            "--iterations",
            "3",
            "--backends",
            "remote",
            "--scorer-url",
            shim_url,
            "--vqa-url",
            shim_url,
            "--out",
            str(tmp_path / "run"),
            "--poll-interval",
            "0.2",
        ],
        capture_output=True,
        text=True,
        timeout=300,
    )
    assert run.returncode in (0, 2), run.stdout + run.stderr

    report = json.loads((tmp_path / "run" / "report.json").read_text())
    assert report["aggregates"]["overall"]["n_evaluated"] + report["aggregates"]["errors"][
        "n_errored"
    ] == 4
    records_lines = (tmp_path / "run" / "records.jsonl").read_text().strip().splitlines()
    assert len(records_lines) == 4
    first = json.loads(records_lines[0])
    assert first["crop_rect"] is not None  # the shim's scorer really drove cropping
