"""Hot-loop kernels: fused sparse operator application and the MCWF stepper.

A compiled Cython core (``spinsink._core``) is used when available; a
pure-Python/NumPy implementation with identical semantics is selected at
import time otherwise.  Set ``SPINSINK_PURE_PYTHON=1`` to force the fallback
(the benchmark suite compares the two).
"""

from __future__ import annotations

import os

import numpy as np
import scipy.sparse as sp

from .coefficients import Constant, ModulatedPhase, ScheduleCoefficient

__all__ = ["BACKEND", "TermOperator", "MCWFIntegrator", "STATUS_REACHED_END", "STATUS_JUMP"]

STATUS_REACHED_END = 0
STATUS_JUMP = 1

_FORCE_PY = os.environ.get("SPINSINK_PURE_PYTHON", "") not in ("", "0")
try:
    if _FORCE_PY:
        raise ImportError
    from . import _core  # type: ignore[attr-defined]

    BACKEND = "compiled"
except ImportError:
    _core = None
    BACKEND = "python"

# Dormand-Prince 5(4) tableau; the compiled core carries the same constants.
DOPRI_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
DOPRI_A = [
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
DOPRI_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
DOPRI_ERR = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)


def _pack_terms(terms, dim):
    """Split (matrix, coefficient) terms into a constant part + packed rest.

    Returns ``(const_csr, td_list)`` where each time-dependent entry is
    ``(ctype, amplitude, omega, sign, schedule, matrix)``.
    """
    const = sp.csr_matrix((dim, dim), dtype=complex)
    td = []
    for mat, coeff in terms:
        mat = sp.csr_matrix(mat, dtype=complex)
        if isinstance(coeff, Constant):
            const = const + coeff.amplitude * mat
        elif isinstance(coeff, ScheduleCoefficient):
            if coeff.is_constant:
                const = const + complex(coeff(0.0)) * mat
            else:
                td.append((1, complex(coeff.scale), 0.0, 1, coeff.schedule, mat))
        elif isinstance(coeff, ModulatedPhase):
            td.append((2, complex(coeff.amplitude), float(coeff.omega), int(coeff.sign), coeff.schedule, mat))
        else:
            raise TypeError(f"unsupported coefficient type {type(coeff).__name__}")
    const = const.tocsr()
    const.sum_duplicates()
    const.sort_indices()
    return const, td


def _eval_coeff(ctype, amp, omega, sign, schedule, t):
    if ctype == 1:
        return amp * schedule.value(t)
    phase = omega * t
    if schedule is not None:
        phase -= schedule.integral(t)
    return amp * np.exp(1j * sign * phase)


class TermOperator:
    """Applies ``A(t) x = (H_const + sum_k c_k(t) A_k) x`` efficiently."""

    def __init__(self, terms, dim):
        self.dim = dim
        self.const, self.td = _pack_terms(terms, dim)
        self.n_td = len(self.td)
        self._impl = None
        if _core is not None:
            self._impl = _core.CoreTermOperator(*self._core_args())

    def _core_args(self):
        mats = [self.const] + [entry[5] for entry in self.td]
        indptr = [np.asarray(m.indptr, dtype=np.int64) for m in mats]
        indices = [np.asarray(m.indices, dtype=np.int64) for m in mats]
        data = [np.asarray(m.data, dtype=np.complex128) for m in mats]
        ctypes = np.array([0] + [e[0] for e in self.td], dtype=np.int64)
        amps = np.array([1.0 + 0j] + [e[1] for e in self.td], dtype=np.complex128)
        omegas = np.array([0.0] + [e[2] for e in self.td], dtype=np.float64)
        signs = np.array([1] + [e[3] for e in self.td], dtype=np.int64)
        sk, sp_ = [], []
        for e in self.td:
            sched = e[4]
            if sched is None:
                sk.append(-1)
                sp_.append(np.zeros(0))
            else:
                kind, params = sched.descriptor()
                sk.append(kind)
                sp_.append(np.asarray(params, dtype=np.float64))
        sched_kinds = np.array([-1] + sk, dtype=np.int64)
        sched_params = [np.zeros(0)] + sp_
        return (self.dim, indptr, indices, data, ctypes, amps, omegas, signs, sched_kinds, sched_params)

    def coefficients(self, t):
        return np.array([_eval_coeff(c, a, o, s, sch, t) for c, a, o, s, sch, _ in self.td], dtype=complex)

    def apply(self, t, x, out=None):
        if self._impl is not None:
            if out is None:
                out = np.empty_like(x)
            self._impl.apply(float(t), x, out)
            return out
        res = self.const @ x
        for ctype, amp, omega, sign, sched, mat in self.td:
            c = _eval_coeff(ctype, amp, omega, sign, sched, t)
            res += c * (mat @ x)
        if out is None:
            return res
        out[:] = res
        return out

    def matrix_at(self, t) -> sp.csr_matrix:
        out = self.const.copy()
        for ctype, amp, omega, sign, sched, mat in self.td:
            out = out + _eval_coeff(ctype, amp, omega, sign, sched, t) * mat
        return out.tocsr()

    @property
    def is_constant(self):
        return self.n_td == 0


class MCWFIntegrator:
    """Adaptive RK45 propagation of ``dpsi/dt = -i H_eff(t) psi``.

    ``integrate`` advances until either the end time or the stochastic jump
    condition ``|psi|**2 <= r_target`` is met; the jump time is refined by
    bisection (single forced steps from the last accepted state) until the
    squared norm matches ``r_target`` to ``norm_tol``.
    """

    def __init__(self, op: TermOperator, rtol=1e-8, atol=1e-10, h_max=np.inf, norm_tol=1e-10, max_steps=50_000_000):
        self.op = op
        self.rtol = float(rtol)
        self.atol = float(atol)
        self.h_max = float(h_max)
        self.norm_tol = float(norm_tol)
        self.max_steps = int(max_steps)
        self.stats = {"steps": 0, "rejected": 0}

    # -- python reference implementation --------------------------------------
    def _rhs(self, t, y):
        return -1j * self.op.apply(t, y)

    def _step(self, t, y, h, k1):
        """One DOPRI5 step; returns (y5, err_norm, k7)."""
        ks = [k1]
        for i, arow in enumerate(DOPRI_A):
            yi = y + h * sum(a * k for a, k in zip(arow, ks) if a != 0.0)
            ks.append(self._rhs(t + DOPRI_C[i + 1] * h, yi))
        y5 = y + h * sum(b * k for b, k in zip(DOPRI_B5, ks) if b != 0.0)
        err = h * sum(e * k for e, k in zip(DOPRI_ERR, ks) if e != 0.0)
        sc = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y5))
        err_norm = np.sqrt(np.mean(np.abs(err / sc) ** 2))
        return y5, err_norm, ks[6]

    def integrate(self, psi, t0, t1, r_target=-1.0, h0=None):
        """Returns ``(status, t_reached, psi, h_next)``."""
        if self._core_available():
            return self._integrate_core(psi, t0, t1, r_target, h0)
        t = t0
        y = psi.astype(complex, copy=True)
        h = h0 if h0 else min(1e-4, (t1 - t0))
        k1 = self._rhs(t, y)
        nsteps = 0
        while t < t1 - 1e-14 * max(1.0, abs(t1)):
            h = min(h, t1 - t, self.h_max)
            y5, err, k7 = self._step(t, y, h, k1)
            nsteps += 1
            if nsteps > self.max_steps:
                raise RuntimeError("MCWF integrator exceeded the step budget")
            if err > 1.0:
                self.stats["rejected"] += 1
                h *= max(0.2, 0.9 * err**-0.2)
                if h < 1e-15 * max(1.0, abs(t)):
                    raise RuntimeError("step size underflow in MCWF integrator")
                continue
            self.stats["steps"] += 1
            if r_target >= 0.0 and np.vdot(y5, y5).real <= r_target:
                t_event, y_event = self._bisect_event(t, y, k1, h, r_target)
                return STATUS_JUMP, t_event, y_event, h
            t += h
            y = y5
            k1 = k7
            h = h * min(5.0, max(0.2, 0.9 * err**-0.2)) if err > 0 else h * 5.0
        return STATUS_REACHED_END, t1, y, h

    def _forced_step(self, t, y, k1, h):
        y5, _, _ = self._step(t, y, h, k1)
        return y5

    def _bisect_event(self, t, y, k1, h, r_target):
        lo, hi = 0.0, h
        y_hi = None
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            y_mid = self._forced_step(t, y, k1, mid)
            nrm = np.vdot(y_mid, y_mid).real
            if abs(nrm - r_target) <= self.norm_tol:
                return t + mid, y_mid
            if nrm > r_target:
                lo = mid
            else:
                hi = mid
                y_hi = y_mid
            if hi - lo < 1e-15 * max(1.0, abs(t) + h):
                break
        if y_hi is None:
            y_hi = self._forced_step(t, y, k1, hi)
        return t + hi, y_hi

    # -- compiled path ---------------------------------------------------------
    def _core_available(self):
        return self.op._impl is not None

    def _integrate_core(self, psi, t0, t1, r_target, h0):
        y = psi.astype(complex, copy=True)
        h = h0 if h0 else min(1e-4, (t1 - t0))
        status, t_reached, h_next, nsteps, nrej = _core.mcwf_integrate(
            self.op._impl, y, float(t0), float(t1),
            float(r_target if r_target is not None else -1.0),
            self.rtol, self.atol, float(h), float(self.h_max), self.norm_tol, self.max_steps,
        )
        self.stats["steps"] += nsteps
        self.stats["rejected"] += nrej
        return status, t_reached, y, h_next
