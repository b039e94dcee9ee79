"""Live-broker behavior of the standalone client and the demo environment."""

import struct
import subprocess
import sys
import threading
import time

import pytest

from rlx_client import BrokerClient, BrokerUnavailable, PollTimeout
from rlx_client.demo import run_demo
from rlx_client.wire import Dtype, Tensor


def test_put_get_roundtrip(broker_address):
    with BrokerClient(broker_address) as cli:
        t = Tensor.from_values(Dtype.F64, (3,), [1.0, -2.0, 3.5])
        cli.put("k", t)
        back = cli.get("k")
        assert back == t


def test_get_missing(broker_address):
    with BrokerClient(broker_address) as cli:
        assert cli.get("missing-key") is None


def test_exists_delete_ping(broker_address):
    with BrokerClient(broker_address) as cli:
        cli.ping()
        assert not cli.exists("e")
        cli.put("e", Tensor(Dtype.U8, (1,), b"\x07"))
        assert cli.exists("e")
        cli.delete("e")
        assert not cli.exists("e")


def test_poll_timeout_contract(broker_address):
    with BrokerClient(broker_address) as cli:
        t0 = time.monotonic()
        with pytest.raises(PollTimeout):
            cli.poll("never-written", interval=0.01, timeout=0.1)
        assert time.monotonic() - t0 >= 0.1


def test_unavailable_broker():
    with pytest.raises(BrokerUnavailable):
        BrokerClient("127.0.0.1:1", connect_timeout=0.3)


def test_demo_environment_episode(broker_address):
    """10-step episode against a scripted driver; state follows x += a."""
    n = 10
    collected = {}

    def drive():
        with BrokerClient(broker_address) as cli:
            for t in range(n + 1):
                cli.poll(f"d.env0.done.{t}", interval=0.002, timeout=20.0)
                state = cli.get(f"d.env0.state.{t}")
                collected[t] = state.values()
                cli.delete(f"d.env0.state.{t}")
                cli.delete(f"d.env0.done.{t}")
                if t < n:
                    cli.put(f"d.env0.action.{t}",
                            Tensor.from_values(Dtype.F64, (2,),
                                               [0.5, float(t)]))

    driver = threading.Thread(target=drive)
    driver.start()
    rc = run_demo(broker_address, "d", 0, n, poll_interval=0.002)
    driver.join(timeout=30)
    assert rc == 0
    assert collected[0] == [0.0, 0.0]
    assert collected[n] == [0.5 * n, float(sum(range(n)))]


def test_demo_exit_2_without_broker():
    assert run_demo("127.0.0.1:1", "x", 0, 3, poll_timeout=0.3) == 2


def test_demo_cli(broker_address):
    n = 4
    def drive():
        with BrokerClient(broker_address) as cli:
            for t in range(n + 1):
                cli.poll(f"c.env1.done.{t}", interval=0.002, timeout=20.0)
                if t < n:
                    cli.put(f"c.env1.action.{t}",
                            Tensor.from_values(Dtype.F64, (2,), [1.0, 1.0]))

    driver = threading.Thread(target=drive)
    driver.start()
    proc = subprocess.run(
        [sys.executable, "-m", "rlx_client.demo", "--broker", broker_address,
         "--run-id", "c", "--env-id", "1", "--steps", str(n)],
        timeout=60)
    driver.join(timeout=30)
    assert proc.returncode == 0
