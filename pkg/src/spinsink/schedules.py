"""Time-dependent detuning schedules and detuning-protocol generators.

Schedules map time (units of inverse energy) to a detuning (energy units).
Three shapes cover everything the stabilization protocols need: constants,
piecewise-linear breakpoint tables (right-continuous at breakpoints), and
periodic sawtooth rasters.  Every schedule also exposes its running integral
``int_0^t Delta(s) ds`` in closed form, which the rotating-frame problem
construction needs for accumulated phases.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DetuningSchedule",
    "ConstantSchedule",
    "PiecewiseLinearSchedule",
    "SawtoothSchedule",
    "ProtocolSchedules",
    "ground_state_protocol",
    "highest_state_protocol",
    "excited_window_protocol",
    "default_spectrum_range",
    "schedule_to_csv",
    "schedule_from_csv",
]

# Descriptor codes shared with the compiled kernels.
KIND_CONSTANT = 0
KIND_PIECEWISE = 1
KIND_SAWTOOTH = 2


class DetuningSchedule:
    """Base class; concrete schedules implement value/integral/descriptor."""

    def value(self, t: float) -> float:
        raise NotImplementedError

    def integral(self, t: float) -> float:
        """Closed-form ``int_0^t Delta(s) ds``."""
        raise NotImplementedError

    def descriptor(self) -> tuple[int, np.ndarray]:
        """(kind code, packed parameters) consumed by the kernels."""
        raise NotImplementedError

    def __call__(self, t):
        if np.ndim(t) == 0:
            return self.value(float(t))
        return np.array([self.value(float(x)) for x in np.asarray(t).ravel()]).reshape(np.shape(t))


@dataclass(frozen=True)
class ConstantSchedule(DetuningSchedule):
    constant: float

    def value(self, t):
        return self.constant

    def integral(self, t):
        return self.constant * t

    def descriptor(self):
        return KIND_CONSTANT, np.array([self.constant], dtype=float)


@dataclass(frozen=True)
class PiecewiseLinearSchedule(DetuningSchedule):
    """Linear interpolation through ``(times, values)`` breakpoints.

    Evaluation at a breakpoint uses the right-continuous segment, so a
    repeated time with two values encodes a jump discontinuity.  Outside the
    table the end values extend as constants.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or len(t) < 1:
            raise ValueError("breakpoint arrays must be equal-length 1D")
        if np.any(np.diff(t) < 0):
            raise ValueError("breakpoint times must be non-decreasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        # cumulative integral at each breakpoint
        seg = np.diff(t) * 0.5 * (v[1:] + v[:-1])
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        object.__setattr__(self, "_cum", cum)

    def _segment(self, t: float) -> int:
        # rightmost index with times[i] <= t; right-continuity at breakpoints
        return int(np.searchsorted(self.times, t, side="right") - 1)

    def value(self, t):
        ts, vs = self.times, self.values
        if t <= ts[0]:
            return float(vs[0])
        if t >= ts[-1]:
            return float(vs[-1])
        i = self._segment(t)
        if ts[i + 1] == ts[i]:
            return float(vs[i + 1])
        w = (t - ts[i]) / (ts[i + 1] - ts[i])
        return float(vs[i] + w * (vs[i + 1] - vs[i]))

    def _anti(self, t):
        # antiderivative pinned to 0 at the first breakpoint
        ts, vs, cum = self.times, self.values, self._cum
        if t <= ts[0]:
            return vs[0] * (t - ts[0])
        if t >= ts[-1]:
            return cum[-1] + vs[-1] * (t - ts[-1])
        i = self._segment(t)
        return cum[i] + 0.5 * (vs[i] + self.value(t)) * (t - ts[i])

    def integral(self, t):
        return float(self._anti(t) - self._anti(0.0))

    def descriptor(self):
        n = len(self.times)
        params = np.concatenate([[n], self.times, self.values, self._cum])
        return KIND_PIECEWISE, params.astype(float)


@dataclass(frozen=True)
class SawtoothSchedule(DetuningSchedule):
    """Periodic linear ramp from ``minimum`` to ``maximum`` with instant reset."""

    minimum: float
    maximum: float
    period: float
    t0: float = 0.0

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("sawtooth period must be positive")

    def value(self, t):
        frac = (t - self.t0) / self.period
        frac -= np.floor(frac)
        return float(self.minimum + (self.maximum - self.minimum) * frac)

    def integral(self, t):
        lo, hi, p = self.minimum, self.maximum, self.period

        def anti(x):  # integral from t0 of the periodic ramp
            u = (x - self.t0) / p
            n = np.floor(u)
            tau = (u - n) * p
            return n * p * 0.5 * (lo + hi) + lo * tau + (hi - lo) * tau**2 / (2 * p)

        return float(anti(t) - anti(0.0))

    def descriptor(self):
        return KIND_SAWTOOTH, np.array([self.minimum, self.maximum, self.period, self.t0], dtype=float)


@dataclass
class ProtocolSchedules:
    """Per-auxiliary detuning schedules produced by a protocol generator."""

    sources: list[DetuningSchedule]
    sinks: list[DetuningSchedule]
    source_band: tuple[float, float] | None = None
    sink_bands: list[tuple[float, float]] = field(default_factory=list)
    note: str = ""


def _band_schedules(band, mode, n_aux, duration, raster_period):
    lo, hi = band
    if mode == "raster-single":
        period = duration / 10.0 if raster_period is None else raster_period
        return [SawtoothSchedule(lo, hi, period)]
    if mode == "static-multi":
        pts = [lo + (hi - lo) * k / (n_aux + 1) for k in range(1, n_aux + 1)]
        return [ConstantSchedule(p) for p in pts]
    raise ValueError(f"unknown protocol mode {mode!r}")


def ground_state_protocol(
    spectrum_range: tuple[float, float],
    omega_c: float,
    duration: float,
    mode: str = "raster-single",
    n_aux: int = 1,
    raster_period: float | None = None,
) -> ProtocolSchedules:
    """Detuning schedules that funnel population toward a ground state.

    Source detunings cover transition energies in ``[omega_lo, omega_c]``
    (excitation-adding), sink detunings cover ``[omega_c, omega_hi]``
    (excitation-removing).  ``raster-single`` sweeps one auxiliary per band as
    a sawtooth with period ``raster_period`` (default ``duration / 10``);
    ``static-multi`` returns ``n_aux`` constant detunings per band, evenly
    spaced at the interior fractions ``k / (n_aux + 1)``.
    """
    lo, hi = spectrum_range
    if not lo < omega_c < hi:
        raise ValueError(f"omega_c={omega_c} must lie inside the spectrum range ({lo}, {hi})")
    sources = _band_schedules((lo, omega_c), mode, n_aux, duration, raster_period)
    sinks = _band_schedules((omega_c, hi), mode, n_aux, duration, raster_period)
    return ProtocolSchedules(
        sources,
        sinks,
        source_band=(lo, omega_c),
        sink_bands=[(omega_c, hi)],
        note=f"ground-state protocol, omega_c={omega_c:g}, mode={mode}",
    )


def highest_state_protocol(
    spectrum_range: tuple[float, float],
    omega_c: float,
    duration: float,
    mode: str = "raster-single",
    n_aux: int = 1,
    raster_period: float | None = None,
) -> ProtocolSchedules:
    """Ground-state protocol with the source and sink bands exchanged."""
    flipped = ground_state_protocol(spectrum_range, omega_c, duration, mode, n_aux, raster_period)
    return ProtocolSchedules(
        sources=flipped.sinks,
        sinks=flipped.sources,
        source_band=flipped.sink_bands[0],
        sink_bands=[flipped.source_band],
        note=f"highest-state protocol, omega_c={omega_c:g}, mode={mode}",
    )


def excited_window_protocol(
    omega_minus: float,
    omega_plus: float,
    spectrum_range: tuple[float, float],
    duration: float,
    raster_period: float | None = None,
) -> ProtocolSchedules:
    """Stabilize states inside the transition-energy window ``[w-, w+]``.

    One source rasters the window; two sinks raster the flanking bands
    ``[omega_lo, w-]`` and ``[w+, omega_hi]``.  A window spanning the full
    range degenerates to a source-only protocol (empty sink bands are
    dropped).
    """
    lo, hi = spectrum_range
    if not omega_minus < omega_plus:
        raise ValueError("window must satisfy omega_minus < omega_plus")
    if omega_minus < lo or omega_plus > hi:
        raise ValueError("window must lie inside the spectrum range")
    period = duration / 10.0 if raster_period is None else raster_period
    sources = [SawtoothSchedule(omega_minus, omega_plus, period)]
    sink_bands = [(lo, omega_minus), (omega_plus, hi)]
    sink_bands = [(a, b) for a, b in sink_bands if b - a > 1e-12]
    sinks = [SawtoothSchedule(a, b, period) for a, b in sink_bands]
    note = f"excited-window protocol, window=({omega_minus:g}, {omega_plus:g})"
    if not sinks:
        note += " [degenerate window: source-only]"
    return ProtocolSchedules(sources, sinks, source_band=(omega_minus, omega_plus), sink_bands=sink_bands, note=note)


def default_spectrum_range(eig, s_op, pad: float = 0.10, element_tol: float = 1e-8):
    """Span of the adjacent-sector Bohr frequencies coupled by ``s_op``.

    Considers transitions ``|<a|s_op|b>| > element_tol`` between neighbouring
    filling sectors and pads the resulting interval by ``pad`` of its width on
    both ends.
    """
    v = eig.states
    m = np.abs(v.conj().T @ (s_op @ v))
    rows, cols = np.nonzero(m > element_tol)
    if eig.sectors is not None:
        keep = np.abs(eig.sectors[rows] - eig.sectors[cols]) == 1
        rows, cols = rows[keep], cols[keep]
    if len(rows) == 0:
        raise ValueError("operator couples no adjacent-sector transitions")
    omegas = eig.energies[rows] - eig.energies[cols]
    lo, hi = omegas.min(), omegas.max()
    w = hi - lo
    return lo - pad * w, hi + pad * w


def schedule_to_csv(schedule: DetuningSchedule, duration: float, path=None) -> str:
    """Write a schedule as a breakpoint table over ``[0, duration]``.

    Sawtooth rasters are expanded into their exact per-period breakpoints
    (with repeated times at the resets), so importing the table reproduces the
    schedule bit-exactly on ``[0, duration]``.
    """
    rows = []
    if isinstance(schedule, ConstantSchedule):
        rows = [(0.0, schedule.constant), (duration, schedule.constant)]
    elif isinstance(schedule, PiecewiseLinearSchedule):
        rows = list(zip(schedule.times, schedule.values))
    elif isinstance(schedule, SawtoothSchedule):
        lo, hi, p, t0 = schedule.minimum, schedule.maximum, schedule.period, schedule.t0
        k = int(np.floor((0.0 - t0) / p))
        t = t0 + k * p
        rows.append((0.0, schedule.value(0.0)))
        while t < duration:
            if t > 0.0:
                rows.append((t, hi))
                rows.append((t, lo))
            t += p
        rows.append((duration, schedule.value(duration)))
        rows = [(a, b) for a, b in rows if 0.0 <= a <= duration]
    else:
        raise TypeError(f"cannot serialize schedule of type {type(schedule).__name__}")
    buf = io.StringIO()
    buf.write("t,delta\n")
    for t, v in rows:
        buf.write(f"{float(t)!r},{float(v)!r}\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def schedule_from_csv(source) -> DetuningSchedule:
    """Read a breakpoint table written by :func:`schedule_to_csv`.

    All-equal tables import as constants (so constant detunings survive a
    round trip with their time-independence intact); everything else imports
    as a piecewise-linear schedule.
    """
    if hasattr(source, "read"):
        lines = source.read().splitlines()
    else:
        with open(source) as fh:
            lines = fh.read().splitlines()
    ts, vs = [], []
    for line in lines[1:]:
        if not line.strip():
            continue
        a, b = line.split(",")
        ts.append(float(a))
        vs.append(float(b))
    if len(set(vs)) == 1:
        return ConstantSchedule(vs[0])
    return PiecewiseLinearSchedule(np.asarray(ts), np.asarray(vs))
