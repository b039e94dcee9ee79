"""Energy spectra and the spectrum-error reward.

Spectrum convention, fixed project-wide: with u_hat the DFT of u divided by
N, E(k) = (|u_hat_k|^2 + |u_hat_{-k}|^2) / 2 for k = 0..N/2.  The k=0 and
Nyquist bins have no distinct conjugate partner and contribute |u_hat|^2 / 2,
so sum_k E(k) equals half the mean-square velocity exactly (Parseval).
"""

from __future__ import annotations

import numpy as np


class ZeroReferenceMode(ValueError):
    """Reference spectrum vanishes inside the error band."""


def energy_spectrum(u: np.ndarray) -> np.ndarray:
    """Energy per integer wavenumber, length N/2 + 1."""
    u = np.asarray(u, dtype=np.float64)
    n = u.shape[-1]
    uhat = np.fft.rfft(u) / n
    e = np.abs(uhat) ** 2
    e[..., 0] *= 0.5
    if n % 2 == 0:
        e[..., -1] *= 0.5
    return e


def spectrum_error(e_les: np.ndarray, e_dns: np.ndarray, k_max: int) -> float:
    """Mean squared relative spectrum error over wavenumbers 1..k_max."""
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if k_max >= len(e_les) or k_max >= len(e_dns):
        raise ValueError(f"k_max {k_max} beyond spectrum length")
    ref = np.asarray(e_dns[1:k_max + 1], dtype=np.float64)
    les = np.asarray(e_les[1:k_max + 1], dtype=np.float64)
    if np.any(ref == 0.0):
        raise ZeroReferenceMode("reference spectrum has a zero mode in range")
    return float(np.mean(((ref - les) / ref) ** 2))


def reward(l: float, alpha: float, literal_form: bool = False) -> float:
    """Map spectrum error to a reward in (-1, 1].

    The default form 2*exp(-l/alpha) - 1 rewards small errors and is bounded;
    `literal_form` flips the exponent's sign (unbounded, >= 1) and exists only
    for auditing the alternative convention.
    """
    if l < 0:
        raise ValueError("spectrum error must be non-negative")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if literal_form:
        return 2.0 * float(np.exp(l / alpha)) - 1.0
    return 2.0 * float(np.exp(-l / alpha)) - 1.0
