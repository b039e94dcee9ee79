"""High-fidelity reference data: spin-up, sampling, filtering, file format.

Dataset container layout (``*.rlxd``):

    magic    4 bytes "RLXD"
    version  u32 LE (currently 1)
    meta     U8 tensor in wire layout, UTF-8 JSON (grids, physics, seed,
             hold-out index, calibration record)
    states   n_snapshots F64 tensors in wire layout, already filtered onto
             the LES grid; the hold-out state is one of these
    mean_spectrum  one F64 tensor: time-averaged reference energy spectrum
             at full resolution

Everything after the header reuses the broker's tensor framing so any
protocol implementation can read it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .. import wire
from ..spectra import energy_spectrum
from .grid import FlowField, Grid, SolverConfig
from .solver import advance, spectral_filter

DATASET_MAGIC = b"RLXD"
DATASET_VERSION = 1


class NotStatisticallySteady(RuntimeError):
    """Spin-up never met the steadiness criterion."""


class HoldOutViolation(ValueError):
    """Training-mode load of the reserved evaluation state."""


@dataclass
class Dataset:
    meta: dict
    states: list[np.ndarray]          # LES-resolution velocity snapshots
    mean_spectrum: np.ndarray

    @property
    def holdout_index(self) -> int:
        return self.meta["holdout_index"]

    @property
    def n_states(self) -> int:
        return len(self.states)

    def train_indices(self) -> list[int]:
        return [i for i in range(self.n_states) if i != self.holdout_index]

    def les_grid(self) -> Grid:
        m = self.meta
        return Grid(m["les_n_points"], m["les_n_elements"], m["domain_length"])

    def initial_state(self, index: int, test: bool = False) -> FlowField:
        """LES-resolution initial condition; training mode rejects the hold-out."""
        if not 0 <= index < self.n_states:
            raise IndexError(f"state index {index} out of range")
        if index == self.holdout_index and not test:
            raise HoldOutViolation(
                f"state {index} is reserved for evaluation")
        return FlowField(self.les_grid(), self.states[index].copy(), 0.0)


def _seed_field(grid: Grid, rng: np.random.Generator, u_rms: float = 1.0) -> FlowField:
    """Random large-scale field with prescribed rms as spin-up seed."""
    x = grid.x()
    u = np.zeros(grid.n_points)
    for k in range(1, 5):
        amp = 1.0 / k
        u += amp * np.sin(k * (2.0 * math.pi / grid.domain_length) * x
                          + rng.uniform(0.0, 2.0 * math.pi))
    u *= u_rms / max(np.sqrt(np.mean(u ** 2)), 1e-12)
    return FlowField(grid, u, 0.0)


def _total_energy(u: np.ndarray) -> float:
    return 0.5 * float(np.mean(u ** 2))


def _integral_time(u: np.ndarray) -> float:
    """Large-eddy turnover estimate from the spectrum: ell / u_rms."""
    e = energy_spectrum(u)
    k = np.arange(len(e), dtype=np.float64)
    num = np.sum(e[1:] / k[1:])
    den = np.sum(e[1:])
    u_rms = math.sqrt(max(2.0 * den, 1e-30))
    ell = (math.pi / 2.0) * num / max(den, 1e-30)
    return max(ell / u_rms, 1e-3)


def _respun_realization(mother: FlowField, cfg: SolverConfig,
                        rng: np.random.Generator, respin_time: float):
    """Fresh realization: random translation + high-k noise, then re-integration.

    The forced system is translation invariant and settles onto a shock-
    dominated attractor, so consecutive-time samples barely decorrelate.
    Shifting the converged state and perturbing its small scales, then
    integrating long enough for the perturbation to readjust nonlinearly,
    yields an independent on-attractor state.
    """
    n = mother.grid.n_points
    k = np.arange(n // 2 + 1)
    coeff = np.fft.rfft(mother.u)
    shift = rng.uniform(0.0, 2.0 * math.pi)
    coeff = coeff * np.exp(-1j * k * shift)
    noisy = k > 4
    noise = 1.0 + 0.05 * (rng.standard_normal(noisy.sum())
                          + 1j * rng.standard_normal(noisy.sum()))
    coeff[noisy] *= noise
    field = FlowField(mother.grid, np.fft.irfft(coeff, n), 0.0)
    zero_cs = np.zeros(mother.grid.n_elements)
    spec_acc = np.zeros(mother.grid.nyquist + 1)
    count = 0
    n_chunks = max(int(round(respin_time / 0.25)), 4)
    for i in range(n_chunks):
        field = advance(field, cfg, zero_cs, respin_time / n_chunks)
        if i >= n_chunks // 2:                   # spectra from the settled half
            spec_acc += energy_spectrum(field.u)
            count += 1
    return field, spec_acc, count


def generate_dns_dataset(dns_grid: Grid, les_grid: Grid, cfg: SolverConfig,
                         n_snapshots: int, seed: int,
                         spinup_time: float = 20.0,
                         max_spinup_rounds: int = 6,
                         steady_tol: float = 0.05) -> Dataset:
    """Run the reference simulation and package filtered initial states.

    Spin-up proceeds in rounds of `spinup_time` until the running-mean total
    energy varies by less than `steady_tol` over the last half of the spin-up
    record (NotStatisticallySteady after `max_spinup_rounds`).  Each snapshot
    is an independent realization re-spun from the converged state for at
    least one integral-time estimate, filtered onto `les_grid`; the last one
    is designated the hold-out.  Deterministic for a given seed.
    """
    if n_snapshots < 2:
        raise ValueError("need at least 2 snapshots (1 train + 1 hold-out)")
    rng = np.random.default_rng(seed)
    field = _seed_field(dns_grid, rng)
    zero_cs = np.zeros(dns_grid.n_elements)

    probe_dt = 0.25
    energies: list[float] = []
    rounds = 0
    while True:
        n_probe = int(round(spinup_time / probe_dt))
        for _ in range(n_probe):
            field = advance(field, cfg, zero_cs, probe_dt)
            energies.append(_total_energy(field.u))
        rounds += 1
        half = energies[len(energies) // 2:]
        running = np.cumsum(half) / np.arange(1, len(half) + 1)
        spread = (running.max() - running.min()) / max(running.mean(), 1e-30)
        if spread < steady_tol:
            break
        if rounds >= max_spinup_rounds:
            raise NotStatisticallySteady(
                f"running-mean energy spread {spread:.3f} after "
                f"{rounds * spinup_time:g} time units")

    t_int = _integral_time(field.u)
    spacing = max(2.0 * t_int, 1.0)
    states = []
    spec_acc = np.zeros(dns_grid.nyquist + 1)
    spec_count = 0
    for _ in range(n_snapshots):
        sample, spec, count = _respun_realization(field, cfg, rng, spacing)
        spec_acc += spec
        spec_count += count
        states.append(spectral_filter(sample, les_grid).u.copy())

    u_rms = math.sqrt(2.0 * _total_energy(field.u))
    meta = {
        "dns_n_points": dns_grid.n_points,
        "les_n_points": les_grid.n_points,
        "les_n_elements": les_grid.n_elements,
        "domain_length": dns_grid.domain_length,
        "viscosity": cfg.viscosity,
        "forcing_coefficient": cfg.forcing_coefficient,
        "dns_dt": cfg.dt,
        "seed": seed,
        "n_snapshots": n_snapshots,
        "holdout_index": n_snapshots - 1,
        "spinup_time": rounds * spinup_time,
        "integral_time": t_int,
        "snapshot_spacing": spacing,
        "u_rms": u_rms,
    }
    return Dataset(meta, states, spec_acc / spec_count)


def save_dataset(ds: Dataset, path) -> None:
    meta_bytes = json.dumps(ds.meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(DATASET_VERSION.to_bytes(4, "little"))
        fh.write(_tensor_bytes(np.frombuffer(meta_bytes, dtype=np.uint8)))
        for u in ds.states:
            fh.write(_tensor_bytes(np.asarray(u, dtype=np.float64)))
        fh.write(_tensor_bytes(np.asarray(ds.mean_spectrum, dtype=np.float64)))


def _tensor_bytes(arr: np.ndarray) -> bytes:
    out: list[bytes] = []
    wire._encode_tensor(wire.Tensor.from_numpy(arr), out)
    return b"".join(out)


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != DATASET_MAGIC:
        raise ValueError(f"{path} is not a dataset container")
    version = int.from_bytes(data[4:8], "little")
    if version != DATASET_VERSION:
        raise ValueError(f"unsupported dataset version {version}")
    cur = wire._Cursor(data)
    cur.take(8)
    meta = json.loads(wire._decode_tensor(cur).to_numpy().tobytes().decode("utf-8"))
    states = [wire._decode_tensor(cur).to_numpy()
              for _ in range(meta["n_snapshots"])]
    mean_spectrum = wire._decode_tensor(cur).to_numpy()
    cur.done()
    return Dataset(meta, states, mean_spectrum)
