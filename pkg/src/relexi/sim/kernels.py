"""Stepping-kernel selection: compiled extension for small grids, numpy FFTs
otherwise.

The compiled kernel's dense-DFT transforms beat FFT call overhead only on
small grids, so routing is by grid size: LES-scale grids (<= CY_MAX_POINTS
points) use the extension when it imported, large DNS grids always use
numpy.  Selection depends only on the grid size (and the RLX_KERNEL
override), so every process in a run picks the same kernel and trajectories
stay bit-reproducible across the worker/oracle boundary.

RLX_KERNEL=py forces the fallback, RLX_KERNEL=cy forces the extension
(raising if it is unavailable); anything else means automatic.
"""

from __future__ import annotations

import math
import os

import numpy as np

from ._burgers_np import advance_kernel as _advance_np

try:
    from ._burgers_cy import advance_kernel_cy as _advance_cy
except ImportError:
    _advance_cy = None

CY_MAX_POINTS = 64

_dft_cache: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def have_extension() -> bool:
    return _advance_cy is not None


def _dft_tables(n: int):
    tabs = _dft_cache.get(n)
    if tabs is None:
        r = np.arange(n // 2 + 1)[:, None]
        j = np.arange(n)[None, :]
        ang = 2.0 * math.pi * r * j / n
        c = np.ascontiguousarray(np.cos(ang))
        s = np.ascontiguousarray(np.sin(ang))
        work = np.empty(10 * (n // 2 + 1) + 4 * n)
        tabs = (c, s, work)
        _dft_cache[n] = tabs
    return tabs


def kernel_name(n_points: int) -> str:
    forced = os.environ.get("RLX_KERNEL", "auto").lower()
    if forced == "py":
        return "py"
    if forced == "cy":
        if _advance_cy is None:
            raise RuntimeError("RLX_KERNEL=cy but the extension is not built")
        return "cy"
    if _advance_cy is not None and n_points <= CY_MAX_POINTS:
        return "cy"
    return "py"


def advance_kernel(u: np.ndarray, dts: np.ndarray, nu: float, forcing: float,
                   visc_coef: np.ndarray, kc: int, kernel: str | None = None):
    """Dispatch to the selected kernel; returns (u_new, steps_completed)."""
    name = kernel or kernel_name(u.shape[0])
    dts = np.ascontiguousarray(dts, dtype=np.float64)
    visc_coef = np.ascontiguousarray(visc_coef, dtype=np.float64)
    if name == "cy":
        c, s, work = _dft_tables(u.shape[0])
        out = np.array(u, dtype=np.float64)
        done = _advance_cy(out, dts, nu, forcing, visc_coef, kc, c, s, work)
        return out, done
    return _advance_np(u, dts, nu, forcing, visc_coef, kc)
