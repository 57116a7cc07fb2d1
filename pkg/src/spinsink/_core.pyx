# Compiled hot kernels: fused sparse term application with schedule-driven
# coefficients, and the adaptive DOPRI5(4) MCWF stepper with jump bisection.
# Semantics mirror the pure-Python fallback in spinsink.kernels.

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, fabs, floor, pow, sin, sqrt

cnp.import_array()

ctypedef double complex cplx

# schedule kinds (see spinsink.schedules)
DEF SK_CONST = 0
DEF SK_PWL = 1
DEF SK_SAW = 2


cdef double sched_value(long kind, const double* p, double t) noexcept nogil:
    cdef long n, lo, hi, mid, i
    cdef double w, frac
    if kind == SK_CONST:
        return p[0]
    if kind == SK_SAW:
        frac = (t - p[3]) / p[2]
        frac -= floor(frac)
        return p[0] + (p[1] - p[0]) * frac
    # piecewise linear: p = [n, times..., values..., cum...]
    n = <long> p[0]
    if t <= p[1]:
        return p[1 + n]
    if t >= p[n]:
        return p[2 * n]
    lo = 1
    hi = n  # p[lo..hi] are times
    while hi - lo > 1:  # rightmost index with time <= t
        mid = (lo + hi) // 2
        if p[mid] <= t:
            lo = mid
        else:
            hi = mid
    i = lo
    if p[i + 1] == p[i]:
        return p[1 + n + i]  # right-continuous at a duplicated breakpoint
    w = (t - p[i]) / (p[i + 1] - p[i])
    return p[n + i] + w * (p[n + i + 1] - p[n + i])


cdef double sched_anti_pwl(const double* p, double t) noexcept nogil:
    # antiderivative pinned to zero at the first breakpoint
    cdef long n = <long> p[0]
    cdef long lo, hi, mid, i
    cdef double vt
    if t <= p[1]:
        return p[1 + n] * (t - p[1])
    if t >= p[n]:
        return p[1 + 2 * n + n - 1] + p[2 * n] * (t - p[n])
    lo = 1
    hi = n
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if p[mid] <= t:
            lo = mid
        else:
            hi = mid
    i = lo
    vt = sched_value(SK_PWL, p, t)
    return p[1 + 2 * n + i - 1] + 0.5 * (p[n + i] + vt) * (t - p[i])


cdef double sched_integral(long kind, const double* p, double t) noexcept nogil:
    cdef double lo, hi, per, t0, u, n, tau, a_t, a_0
    if kind == SK_CONST:
        return p[0] * t
    if kind == SK_SAW:
        lo = p[0]; hi = p[1]; per = p[2]; t0 = p[3]
        u = (t - t0) / per
        n = floor(u)
        tau = (u - n) * per
        a_t = n * per * 0.5 * (lo + hi) + lo * tau + (hi - lo) * tau * tau / (2.0 * per)
        u = (0.0 - t0) / per
        n = floor(u)
        tau = (u - n) * per
        a_0 = n * per * 0.5 * (lo + hi) + lo * tau + (hi - lo) * tau * tau / (2.0 * per)
        return a_t - a_0
    return sched_anti_pwl(p, t) - sched_anti_pwl(p, 0.0)


cdef class CoreTermOperator:
    """sum_k c_k(t) A_k with CSR matrices pooled into flat arrays."""

    cdef public long dim
    cdef long n_terms
    cdef long[::1] term_ofs
    cdef cplx[::1] data_pool
    cdef long[::1] indices_pool
    cdef long[:, ::1] indptr
    cdef long[::1] ctypes
    cdef cplx[::1] amps
    cdef double[::1] omegas
    cdef long[::1] signs
    cdef long[::1] sched_kinds
    cdef double[::1] sched_pool
    cdef long[::1] sched_ofs

    def __init__(self, long dim, list indptr, list indices, list data,
                 cnp.ndarray ctypes, cnp.ndarray amps, cnp.ndarray omegas,
                 cnp.ndarray signs, cnp.ndarray sched_kinds, list sched_params):
        cdef long k, n = len(indptr)
        self.dim = dim
        self.n_terms = n
        ofs = np.zeros(n + 1, dtype=np.int64)
        for k in range(n):
            ofs[k + 1] = ofs[k] + len(data[k])
        self.term_ofs = ofs
        self.data_pool = np.ascontiguousarray(np.concatenate(data) if n else np.zeros(0, dtype=np.complex128), dtype=np.complex128)
        self.indices_pool = np.ascontiguousarray(np.concatenate(indices) if n else np.zeros(0, dtype=np.int64), dtype=np.int64)
        ip = np.zeros((n, dim + 1), dtype=np.int64)
        for k in range(n):
            ip[k, :] = indptr[k]
        self.indptr = ip
        self.ctypes = np.ascontiguousarray(ctypes, dtype=np.int64)
        self.amps = np.ascontiguousarray(amps, dtype=np.complex128)
        self.omegas = np.ascontiguousarray(omegas, dtype=np.float64)
        self.signs = np.ascontiguousarray(signs, dtype=np.int64)
        self.sched_kinds = np.ascontiguousarray(sched_kinds, dtype=np.int64)
        sofs = np.zeros(n + 1, dtype=np.int64)
        for k in range(n):
            sofs[k + 1] = sofs[k] + len(sched_params[k])
        self.sched_ofs = sofs
        self.sched_pool = np.ascontiguousarray(
            np.concatenate(sched_params) if n else np.zeros(0), dtype=np.float64
        )

    cdef cplx coeff(self, long k, double t) noexcept nogil:
        cdef long ctype = self.ctypes[k]
        cdef cplx amp = self.amps[k]
        cdef double phase
        cdef const double* sp_ = NULL
        if self.sched_ofs[k + 1] > self.sched_ofs[k]:
            sp_ = &self.sched_pool[self.sched_ofs[k]]
        if ctype == 0:
            return amp
        if ctype == 1:
            return amp * sched_value(self.sched_kinds[k], sp_, t)
        phase = self.omegas[k] * t
        if sp_ != NULL:
            phase -= sched_integral(self.sched_kinds[k], sp_, t)
        phase *= self.signs[k]
        return amp * (cos(phase) + 1j * sin(phase))

    cdef void c_apply(self, double t, const cplx* x, cplx* out) noexcept nogil:
        cdef long k, i, j, base
        cdef cplx c, acc
        for i in range(self.dim):
            out[i] = 0
        for k in range(self.n_terms):
            c = self.coeff(k, t)
            if c.real == 0.0 and c.imag == 0.0:
                continue
            base = self.term_ofs[k]
            for i in range(self.dim):
                acc = 0
                for j in range(self.indptr[k, i], self.indptr[k, i + 1]):
                    acc = acc + self.data_pool[base + j] * x[self.indices_pool[base + j]]
                out[i] = out[i] + c * acc

    def apply(self, double t, cplx[::1] x, cplx[::1] out):
        self.c_apply(t, &x[0], &out[0])


# Dormand-Prince 5(4) coefficients
cdef double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9
cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176, A65 = -5103.0 / 18656
cdef double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784, B6 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200, E6 = 22.0 / 525, E7 = -1.0 / 40


cdef void _rhs(CoreTermOperator op, double t, const cplx* y, cplx* k, cplx* tmp) noexcept nogil:
    cdef long i
    op.c_apply(t, y, tmp)
    for i in range(op.dim):
        k[i] = -1j * tmp[i]


cdef double _dopri_step(CoreTermOperator op, double t, const cplx* y, const cplx* k1,
                        double h, double rtol, double atol,
                        cplx* y5, cplx* k7,
                        cplx* k2, cplx* k3, cplx* k4, cplx* k5, cplx* k6,
                        cplx* yt, cplx* tmp) noexcept nogil:
    """One forced step; fills y5 and k7(=f(t+h, y5)), returns the error norm."""
    cdef long i, n = op.dim
    cdef double err2, sc, ay, ay5
    cdef cplx e
    for i in range(n):
        yt[i] = y[i] + h * A21 * k1[i]
    _rhs(op, t + C2 * h, yt, k2, tmp)
    for i in range(n):
        yt[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
    _rhs(op, t + C3 * h, yt, k3, tmp)
    for i in range(n):
        yt[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
    _rhs(op, t + C4 * h, yt, k4, tmp)
    for i in range(n):
        yt[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
    _rhs(op, t + C5 * h, yt, k5, tmp)
    for i in range(n):
        yt[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
    _rhs(op, t + h, yt, k6, tmp)
    for i in range(n):
        y5[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
    _rhs(op, t + h, y5, k7, tmp)
    err2 = 0.0
    for i in range(n):
        e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
        ay = sqrt(y[i].real * y[i].real + y[i].imag * y[i].imag)
        ay5 = sqrt(y5[i].real * y5[i].real + y5[i].imag * y5[i].imag)
        sc = atol + rtol * (ay if ay > ay5 else ay5)
        err2 += (e.real * e.real + e.imag * e.imag) / (sc * sc)
    return sqrt(err2 / n)


cdef double _norm2(const cplx* y, long n) noexcept nogil:
    cdef double s = 0.0
    cdef long i
    for i in range(n):
        s += y[i].real * y[i].real + y[i].imag * y[i].imag
    return s


def mcwf_integrate(CoreTermOperator op, cplx[::1] y, double t0, double t1,
                   double r_target, double rtol, double atol, double h0,
                   double h_max, double norm_tol, long max_steps):
    """Advance y in place; returns (status, t_reached, h_next, n_steps, n_rejected)."""
    cdef long n = op.dim
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] work = np.empty((10, n), dtype=np.complex128)
    cdef cplx* k1 = <cplx*> cnp.PyArray_GETPTR2(work, 0, 0)
    cdef cplx* k2 = <cplx*> cnp.PyArray_GETPTR2(work, 1, 0)
    cdef cplx* k3 = <cplx*> cnp.PyArray_GETPTR2(work, 2, 0)
    cdef cplx* k4 = <cplx*> cnp.PyArray_GETPTR2(work, 3, 0)
    cdef cplx* k5 = <cplx*> cnp.PyArray_GETPTR2(work, 4, 0)
    cdef cplx* k6 = <cplx*> cnp.PyArray_GETPTR2(work, 5, 0)
    cdef cplx* k7 = <cplx*> cnp.PyArray_GETPTR2(work, 6, 0)
    cdef cplx* yt = <cplx*> cnp.PyArray_GETPTR2(work, 7, 0)
    cdef cplx* tmp = <cplx*> cnp.PyArray_GETPTR2(work, 8, 0)
    cdef cplx* y5 = <cplx*> cnp.PyArray_GETPTR2(work, 9, 0)
    cdef cplx* yv = &y[0]
    cdef double t = t0, h = h0, err, fac, lo, hi, mid, nrm
    cdef long nsteps = 0, nrej = 0, i, it
    cdef int status = 0

    if r_target >= 0.0 and _norm2(yv, n) <= r_target:
        return 1, t0, h0, 0, 0

    _rhs(op, t, yv, k1, tmp)
    while t < t1 - 1e-14 * (1.0 if fabs(t1) < 1.0 else fabs(t1)):
        if h > t1 - t:
            h = t1 - t
        if h > h_max:
            h = h_max
        err = _dopri_step(op, t, yv, k1, h, rtol, atol, y5, k7, k2, k3, k4, k5, k6, yt, tmp)
        if nsteps + nrej > max_steps:
            raise RuntimeError("MCWF integrator exceeded the step budget")
        if err > 1.0:
            nrej += 1
            fac = 0.9 * pow(err, -0.2)
            if fac < 0.2:
                fac = 0.2
            h *= fac
            if h < 1e-15 * (1.0 if fabs(t) < 1.0 else fabs(t)):
                raise RuntimeError("step size underflow in MCWF integrator")
            continue
        nsteps += 1
        if r_target >= 0.0 and _norm2(y5, n) <= r_target:
            # bisect the crossing inside [t, t+h] with forced sub-steps
            lo = 0.0
            hi = h
            for it in range(200):
                mid = 0.5 * (lo + hi)
                _dopri_step(op, t, yv, k1, mid, rtol, atol, y5, k7, k2, k3, k4, k5, k6, yt, tmp)
                nrm = _norm2(y5, n)
                if fabs(nrm - r_target) <= norm_tol:
                    hi = mid
                    break
                if nrm > r_target:
                    lo = mid
                else:
                    hi = mid
                if hi - lo < 1e-15 * (1.0 if fabs(t) + h < 1.0 else fabs(t) + h):
                    break
            _dopri_step(op, t, yv, k1, hi, rtol, atol, y5, k7, k2, k3, k4, k5, k6, yt, tmp)
            for i in range(n):
                yv[i] = y5[i]
            return 1, t + hi, h, nsteps, nrej
        t += h
        for i in range(n):
            yv[i] = y5[i]
            k1[i] = k7[i]
        if err > 0.0:
            fac = 0.9 * pow(err, -0.2)
            if fac < 0.2:
                fac = 0.2
            if fac > 5.0:
                fac = 5.0
        else:
            fac = 5.0
        h *= fac
    return 0, t1, h, nsteps, nrej
