"""Forced-Burgers LES/DNS operations: stepping, closure, filtering, stability.

The eddy-viscosity closure is the 1-D restriction of the Smagorinsky model:
with S = du/dx the only strain component, nu_t = (Cs*Delta)^2 * sqrt(2) * |S|,
where Delta is the element width and Cs is one coefficient per element.
"""

from __future__ import annotations

import math

import numpy as np

from . import kernels
from .grid import (BLOWUP_LIMIT, BlowUp, FlowField, Grid, IncompatibleGrids,
                   OutOfRangeCs, SolverConfig, dealias_cutoff)

SQRT2 = math.sqrt(2.0)
CS_MAX = 0.5


def _check_cs(cs: np.ndarray):
    if np.any(cs < 0.0) or np.any(cs > CS_MAX):
        raise OutOfRangeCs(f"Cs outside [0, {CS_MAX}]: "
                           f"range [{cs.min():.3g}, {cs.max():.3g}]")


def strain_rate(u: np.ndarray, domain_length: float) -> np.ndarray:
    """Spectral du/dx on the full periodic field."""
    n = len(u)
    k = np.arange(n // 2 + 1) * (2.0 * math.pi / domain_length)
    ik = 1j * k
    if n % 2 == 0:
        ik[-1] = 0.0
    return np.fft.irfft(ik * np.fft.rfft(u), n)


def eddy_viscosity_from_strain(strain_mag, cs, delta: float) -> np.ndarray:
    """nu_t = (Cs*Delta)^2 * sqrt(2) * |S|, broadcast over points."""
    cs = np.asarray(cs, dtype=np.float64)
    _check_cs(cs)
    return (cs * delta) ** 2 * SQRT2 * np.abs(np.asarray(strain_mag))


def eddy_viscosity(field: FlowField, cs_per_element) -> np.ndarray:
    """Pointwise turbulent viscosity for per-element coefficients.

    The derivative is taken spectrally on the full field, then each point
    uses its own element's coefficient.
    """
    g = field.grid
    cs = np.asarray(cs_per_element, dtype=np.float64)
    if cs.shape != (g.n_elements,):
        raise ValueError(f"expected {g.n_elements} coefficients, got {cs.shape}")
    _check_cs(cs)
    strain = strain_rate(field.u, g.domain_length)
    cs_points = np.repeat(cs, g.points_per_element)
    return eddy_viscosity_from_strain(strain, cs_points, g.element_width)


def _visc_coef(grid: Grid, cs_per_element) -> np.ndarray:
    cs = np.asarray(cs_per_element, dtype=np.float64)
    if cs.ndim == 0:
        cs = np.full(grid.n_elements, float(cs))
    if cs.shape != (grid.n_elements,):
        raise ValueError(f"expected {grid.n_elements} coefficients, got {cs.shape}")
    _check_cs(cs)
    cs_points = np.repeat(cs, grid.points_per_element)
    return (cs_points * grid.element_width) ** 2 * SQRT2


def stable_dt(cfg: SolverConfig, field: FlowField, cs_per_element=None) -> float:
    """CFL-type bound dt <= C*min(dx/|u|max, dx^2/(2(nu+nu_t,max))), C = 0.5.

    With no coefficients given the bound assumes the worst admissible
    Cs = 0.5 everywhere, which is what episode-start checks should use
    since the policy may request it later.
    """
    g = field.grid
    if cs_per_element is None:
        cs_per_element = np.full(g.n_elements, CS_MAX)
    nu_t = eddy_viscosity(field, cs_per_element)
    u_max = float(np.max(np.abs(field.u)))
    safety = 0.5
    diffusive = g.dx ** 2 / (2.0 * (cfg.viscosity + float(nu_t.max()) + 1e-300))
    if u_max > 0.0:
        return safety * min(g.dx / u_max, diffusive)
    return safety * diffusive


def _run(field: FlowField, cfg: SolverConfig, cs_per_element, dts: np.ndarray,
         duration: float) -> FlowField:
    g = field.grid
    kc = dealias_cutoff(g.n_points, cfg.dealias)
    coef = _visc_coef(g, cs_per_element)
    # The kernel differentiates with integer wavenumbers, i.e. a 2*pi box.
    # Other box sizes map onto it by rescaling time and coefficients.
    scale = 2.0 * math.pi / g.domain_length
    if abs(scale - 1.0) > 1e-12:
        kdts = dts * scale
        nu = cfg.viscosity * scale
        forcing = cfg.forcing_coefficient / scale
        coef = coef * scale ** 2
    else:
        kdts = dts
        nu = cfg.viscosity
        forcing = cfg.forcing_coefficient
    u_new, done = kernels.advance_kernel(field.u, kdts, nu, forcing, coef, kc)
    if done < len(dts):
        t_reached = field.time + float(np.sum(dts[:done]))
        raise BlowUp(f"|u| exceeded {BLOWUP_LIMIT:g} at t={t_reached:.6g}")
    out = FlowField(g, u_new, field.time + duration)
    out.check_finite()
    return out


def step(field: FlowField, cfg: SolverConfig, cs_per_element) -> FlowField:
    """One RK3 step of size cfg.dt."""
    return _run(field, cfg, cs_per_element, np.array([cfg.dt]), cfg.dt)


def advance(field: FlowField, cfg: SolverConfig, cs_per_element,
            duration: float) -> FlowField:
    """Advance by `duration` holding the coefficients fixed.

    Runs whole cfg.dt steps, shortening the last one to land exactly on
    `duration`; a zero duration is the identity.
    """
    if duration < 0:
        raise ValueError("duration must be non-negative")
    if duration == 0.0:
        return field.copy()
    n_full = int(math.floor(duration / cfg.dt + 1e-9))
    rem = duration - n_full * cfg.dt
    if rem > 1e-12 * max(1.0, n_full):
        dts = np.full(n_full + 1, cfg.dt)
        dts[-1] = rem
    else:
        dts = np.full(max(n_full, 1), cfg.dt)
        if n_full == 0:
            dts[0] = duration
    return _run(field, cfg, cs_per_element, dts, duration)


def spectral_filter(dns_field: FlowField, target_grid: Grid) -> FlowField:
    """Sharp low-pass onto a coarser grid of the same domain.

    Modes strictly below the target Nyquist are copied, everything else is
    discarded; filtering onto the same resolution is the identity.
    """
    src = dns_field.grid
    if abs(src.domain_length - target_grid.domain_length) > 1e-12:
        raise IncompatibleGrids("domain lengths differ")
    if target_grid.n_points > src.n_points:
        raise IncompatibleGrids("target grid is finer than the source")
    n_src, n_tgt = src.n_points, target_grid.n_points
    coeff = np.fft.rfft(dns_field.u) / n_src
    out = np.zeros(n_tgt // 2 + 1, dtype=complex)
    if n_tgt == n_src:
        out[:] = coeff
    else:
        out[:n_tgt // 2] = coeff[:n_tgt // 2]   # Nyquist bin stays empty
    u = np.fft.irfft(out * n_tgt, n_tgt)
    return FlowField(target_grid, u, dns_field.time)
