# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled stepping kernel: same scheme as `_burgers_np`, with transforms
done as dense DFT matrix products.  That trades O(N log N) for O(N^2) per
transform, which wins below ~100 points where Python/FFT call overhead
dominates; the selector in `kernels.py` only routes small grids here.

The cos/sin matrices are precomputed by the caller so the kernel itself is
allocation-free apart from its scratch arrays.
"""

from libc.math cimport fabs

DEF RK_STAGES = 3

cdef double RK_A[3]
cdef double RK_B[3]
RK_A[0] = 0.0
RK_A[1] = -5.0 / 9.0
RK_A[2] = -153.0 / 128.0
RK_B[0] = 1.0 / 3.0
RK_B[1] = 15.0 / 16.0
RK_B[2] = 8.0 / 15.0

cdef double BLOWUP_LIMIT = 1e6


cdef inline void _forward(double[:, ::1] C, double[:, ::1] S, double[::1] u,
                          double[::1] re, double[::1] im, int nh, int n) noexcept nogil:
    cdef int r, j
    cdef double sr, si
    for r in range(nh + 1):
        sr = 0.0
        si = 0.0
        for j in range(n):
            sr += C[r, j] * u[j]
            si -= S[r, j] * u[j]
        re[r] = sr
        im[r] = si


cdef inline void _inverse(double[:, ::1] C, double[:, ::1] S, double[::1] re,
                          double[::1] im, double[::1] out, int nh, int n) noexcept nogil:
    cdef int r, j
    cdef double acc, w
    cdef double inv_n = 1.0 / n
    for j in range(n):
        acc = re[0] * C[0, j] - im[0] * S[0, j]
        for r in range(1, nh):
            acc += 2.0 * (re[r] * C[r, j] - im[r] * S[r, j])
        acc += re[nh] * C[nh, j] - im[nh] * S[nh, j]
        out[j] = acc * inv_n


def advance_kernel_cy(double[::1] u, double[::1] dts, double nu, double forcing,
                      double[::1] visc_coef, int kc,
                      double[:, ::1] C, double[:, ::1] S,
                      double[::1] work):
    """Advance `u` in place through one RK3 step per dt.

    `work` is scratch of length >= 10*(nh+1) + 4*n.  Returns the number of
    completed steps; fewer than len(dts) signals a blow-up.
    """
    cdef int n = u.shape[0]
    cdef int nh = n // 2
    cdef int n_steps = dts.shape[0]
    cdef int i, s, r, j
    cdef double dt, a, b, kd, m, umax

    cdef double[::1] re = work[0:nh + 1]
    cdef double[::1] im = work[nh + 1:2 * (nh + 1)]
    cdef double[::1] n_re = work[2 * (nh + 1):3 * (nh + 1)]
    cdef double[::1] n_im = work[3 * (nh + 1):4 * (nh + 1)]
    cdef double[::1] f_re = work[4 * (nh + 1):5 * (nh + 1)]
    cdef double[::1] f_im = work[5 * (nh + 1):6 * (nh + 1)]
    cdef double[::1] r_re = work[6 * (nh + 1):7 * (nh + 1)]
    cdef double[::1] r_im = work[7 * (nh + 1):8 * (nh + 1)]
    cdef int o = 8 * (nh + 1)
    cdef double[::1] ud = work[o:o + n]
    cdef double[::1] ux = work[o + n:o + 2 * n]
    cdef double[::1] w = work[o + 2 * n:o + 3 * n]
    cdef double[::1] q = work[o + 3 * n:o + 4 * n]

    cdef int done = n_steps
    with nogil:
        for i in range(n_steps):
            dt = dts[i]
            for j in range(n):
                q[j] = 0.0
            for s in range(RK_STAGES):
                a = RK_A[s]
                b = RK_B[s]
                _forward(C, S, u, re, im, nh, n)
                for r in range(nh + 1):
                    if r > kc:
                        re[r] = 0.0
                        im[r] = 0.0
                _inverse(C, S, re, im, ud, nh, n)
                # spectral derivative; Nyquist mode has no odd derivative
                for r in range(nh + 1):
                    kd = r if (r <= kc and r < nh) else 0.0
                    r_re[r] = -kd * im[r]
                    r_im[r] = kd * re[r]
                _inverse(C, S, r_re, r_im, ux, nh, n)
                for j in range(n):
                    w[j] = ud[j] * ud[j]
                _forward(C, S, w, n_re, n_im, nh, n)
                for j in range(n):
                    w[j] = (nu + visc_coef[j] * fabs(ux[j])) * ux[j]
                _forward(C, S, w, f_re, f_im, nh, n)
                for r in range(nh + 1):
                    kd = r if (r <= kc and r < nh) else 0.0
                    r_re[r] = 0.5 * kd * n_im[r] - kd * f_im[r] + forcing * re[r]
                    r_im[r] = -0.5 * kd * n_re[r] + kd * f_re[r] + forcing * im[r]
                _inverse(C, S, r_re, r_im, w, nh, n)
                for j in range(n):
                    q[j] = a * q[j] + dt * w[j]
                    u[j] = ud[j] + b * q[j]
            umax = 0.0
            for j in range(n):
                if fabs(u[j]) > umax:
                    umax = fabs(u[j])
            if umax > BLOWUP_LIMIT:
                done = i + 1
                break
    return done
