"""Shared fixtures: cached datasets, a live broker, tmp run dirs.

Dataset generation is deterministic per seed, so generated files are cached
under tests/.cache (override with RLX_TEST_CACHE) to keep repeated runs fast.
"""

import os
from pathlib import Path

import numpy as np
import pytest

from relexi.broker import Client, Server
from relexi.config import from_preset
from relexi.sim.dataset import generate_dns_dataset, load_dataset, save_dataset

CACHE_DIR = Path(os.environ.get("RLX_TEST_CACHE",
                                Path(__file__).parent / ".cache"))

SMOKE_SEED = 7
PRESET_SEED = 11


def cached_dataset(preset: str, seed: int) -> Path:
    """Generate (once) and return the dataset path for a preset."""
    CACHE_DIR.mkdir(parents=True, exist_ok=True)
    cfg = from_preset(preset, seed=seed)
    path = CACHE_DIR / f"dns_{preset}_s{seed}_n{cfg.dns_snapshots}.rlxd"
    if not path.exists():
        ds = generate_dns_dataset(cfg.dns_grid(), cfg.grid(), cfg.dns_solver(),
                                  cfg.dns_snapshots, seed)
        save_dataset(ds, path)
    return path


@pytest.fixture(scope="session")
def smoke_dataset_path() -> Path:
    return cached_dataset("smoke", SMOKE_SEED)


@pytest.fixture(scope="session")
def smoke_dataset(smoke_dataset_path):
    return load_dataset(smoke_dataset_path)


@pytest.fixture(scope="session")
def preset_dataset_path() -> Path:
    return cached_dataset("24dof", PRESET_SEED)


@pytest.fixture(scope="session")
def preset_dataset(preset_dataset_path):
    return load_dataset(preset_dataset_path)


@pytest.fixture()
def broker_server():
    server = Server("127.0.0.1:0")
    thread = server.start()
    yield server
    server.shutdown()
    thread.join(timeout=5)


@pytest.fixture()
def broker_client(broker_server):
    with Client(broker_server.address) as client:
        yield client


def smoke_config(smoke_dataset_path, tmp_path, **overrides):
    kw = dict(dataset=str(smoke_dataset_path), out_dir=str(tmp_path / "run"),
              seed=SMOKE_SEED)
    kw.update(overrides)
    return from_preset("smoke", **kw)
