import re
import subprocess
import sys

import pytest


@pytest.fixture(scope="session")
def world_file(tmp_path_factory):
    """A 10-building world produced through the simulator CLI."""
    path = tmp_path_factory.mktemp("world") / "city.json"
    result = subprocess.run(
        [sys.executable, "-m", "uamsim", "generate-world", "--seed", "7",
         "--buildings", "10", "--out", str(path)],
        capture_output=True, text=True)
    assert result.returncode == 0, result.stderr
    return path


class ServerProcess:
    """One `uamsim serve` subprocess; the server exits when its session ends."""

    def __init__(self, world_file, n_envs=2, seed=3):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "uamsim", "serve", "--port", "0",
             "--world", str(world_file), "--n-envs", str(n_envs),
             "--seed", str(seed)],
            stdout=subprocess.PIPE, text=True)
        line = self.proc.stdout.readline()
        match = re.search(r"listening on .*:(\d+)", line)
        assert match, f"unexpected server banner: {line!r}"
        self.port = int(match.group(1))

    def wait(self, timeout=10.0) -> int:
        return self.proc.wait(timeout)

    def kill(self):
        if self.proc.poll() is None:
            self.proc.kill()
            self.proc.wait(5.0)
        self.proc.stdout.close()


@pytest.fixture
def server(world_file):
    handle = ServerProcess(world_file)
    yield handle
    handle.kill()


@pytest.fixture
def make_server(world_file):
    handles = []

    def factory(**kwargs):
        handle = ServerProcess(world_file, **kwargs)
        handles.append(handle)
        return handle

    yield factory
    for handle in handles:
        handle.kill()
