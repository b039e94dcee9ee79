"""Spawns the broker server binary; the client is tested only against the
published interfaces (CLI + wire bytes + fixture file)."""

import subprocess
import sys
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parents[2]
FIXTURES = REPO_ROOT / "fixtures"


@pytest.fixture(scope="session")
def broker_address():
    proc = subprocess.Popen(
        [sys.executable, "-m", "relexi.broker", "--bind", "127.0.0.1:0"],
        stdout=subprocess.PIPE, text=True)
    line = proc.stdout.readline()          # "broker listening on host:port"
    address = line.strip().split()[-1]
    yield address
    proc.terminate()
    proc.wait(timeout=10)
