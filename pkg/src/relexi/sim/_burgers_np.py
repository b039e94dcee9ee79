"""Pure-numpy stepping kernel for the forced viscous Burgers equation.

Reference implementation of the hot loop; the compiled kernel in
`_burgers_cy` implements the same scheme and must agree to round-off.

Scheme: pseudo-spectral in space, 3-stage low-storage Runge-Kutta
(Williamson) in time.  Per stage, on the band-limited field:

    du/dt = -1/2 d(u^2)/dx + d/dx[(nu + nu_t) du/dx] + A u
    nu_t  = visc_coef * |du/dx|        (visc_coef = (Cs*Delta)^2 * sqrt(2))

Products are evaluated pointwise and their derivatives truncated at the
cutoff wavenumber kc, which is the 2/3-rule cutoff when dealiasing is on.
"""

from __future__ import annotations

import numpy as np

RK_A = (0.0, -5.0 / 9.0, -153.0 / 128.0)
RK_B = (1.0 / 3.0, 15.0 / 16.0, 8.0 / 15.0)

BLOWUP_LIMIT = 1e6


def advance_kernel(u: np.ndarray, dts: np.ndarray, nu: float, forcing: float,
                   visc_coef: np.ndarray, kc: int):
    """Advance `u` through one RK3 step per entry of `dts`.

    Returns (u_new, n_done): n_done < len(dts) means the velocity crossed
    the blow-up threshold after step n_done and integration stopped there.
    """
    n = u.shape[0]
    k = np.arange(n // 2 + 1, dtype=np.float64)
    mask = k <= kc
    ikd = 1j * k * mask
    if kc >= n // 2:
        ikd[n // 2] = 0.0            # Nyquist derivative is not representable
    u = np.array(u, dtype=np.float64)

    for i, dt in enumerate(dts):
        q = np.zeros(n)
        for a, b in zip(RK_A, RK_B):
            uh = np.fft.rfft(u) * mask
            ud = np.fft.irfft(uh, n)
            ux = np.fft.irfft(ikd * uh, n)
            nl = np.fft.rfft(ud * ud)
            nu_t = visc_coef * np.abs(ux)
            flux = np.fft.rfft((nu + nu_t) * ux)
            rhs = np.fft.irfft(-0.5 * ikd * nl + ikd * flux + forcing * uh, n)
            q = a * q + dt * rhs
            u = ud + b * q
        if np.max(np.abs(u)) > BLOWUP_LIMIT:
            return u, i + 1
    return u, len(dts)
