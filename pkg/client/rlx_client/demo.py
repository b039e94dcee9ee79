"""Demo environment: a 2-state linear integrator driven over the broker.

Speaks the full episode key protocol of the real environment workers
(state/done written by the environment, action read back per step) with
trivial dynamics x_{t+1} = x_t + a_t, proving the protocol end to end
without any solver dependencies.

Usage: python -m rlx_client.demo --broker HOST:PORT --run-id R --env-id N --steps K
"""

from __future__ import annotations

import argparse
import sys

from .client import BrokerClient, BrokerUnavailable, PollTimeout
from .wire import Dtype, Tensor

STATE_DIM = 2


def run_demo(broker: str, run_id: str, env_id: int, n_steps: int,
             poll_interval: float = 0.005, poll_timeout: float = 30.0) -> int:
    try:
        client = BrokerClient(broker, connect_timeout=poll_timeout)
    except BrokerUnavailable as exc:
        print(f"demo env{env_id}: {exc}", file=sys.stderr)
        return 2

    prefix = f"{run_id}.env{env_id}"
    x = [0.0] * STATE_DIM
    with client:
        client.put(f"{prefix}.state.0",
                   Tensor.from_values(Dtype.F64, (STATE_DIM,), x))
        client.put(f"{prefix}.done.0", Tensor(Dtype.U8, (1,), b"\x00"))
        for t in range(n_steps):
            try:
                action = client.poll(f"{prefix}.action.{t}",
                                     interval=poll_interval,
                                     timeout=poll_timeout)
            except PollTimeout as exc:
                print(f"demo env{env_id}: {exc}", file=sys.stderr)
                return 2
            client.delete(f"{prefix}.action.{t}")
            a = action.values()
            x = [xi + ai for xi, ai in zip(x, a)]
            client.put(f"{prefix}.state.{t + 1}",
                       Tensor.from_values(Dtype.F64, (STATE_DIM,), x))
            flag = b"\x01" if t + 1 == n_steps else b"\x00"
            client.put(f"{prefix}.done.{t + 1}", Tensor(Dtype.U8, (1,), flag))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="rlx_client.demo")
    parser.add_argument("--broker", required=True, metavar="HOST:PORT")
    parser.add_argument("--run-id", default="demo")
    parser.add_argument("--env-id", type=int, default=0)
    parser.add_argument("--steps", type=int, default=10)
    args = parser.parse_args(argv)
    return run_demo(args.broker, args.run_id, args.env_id, args.steps)


if __name__ == "__main__":
    raise SystemExit(main())
