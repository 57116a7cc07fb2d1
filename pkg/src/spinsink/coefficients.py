"""Time-dependent coefficients attached to operator terms.

Three families cover every construction in the package:

* ``Constant``           -- a fixed complex number,
* ``ScheduleCoefficient``-- ``scale * Delta(t)`` for a detuning schedule,
* ``ModulatedPhase``     -- ``amp * exp(i * sign * (omega t - int_0^t Delta))``,
  the rotating-frame phase of a frequency-resolved exchange term (the
  schedule is optional; without one the phase is a plain ``exp(i sign omega t)``).

Coefficients are evaluated continuously; the compiled kernels consume a flat
descriptor encoding produced by :func:`pack_terms`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .schedules import DetuningSchedule

__all__ = ["Constant", "ScheduleCoefficient", "ModulatedPhase", "Coefficient"]

CTYPE_CONST = 0
CTYPE_SCHEDULE = 1
CTYPE_PHASE = 2


class Coefficient:
    def __call__(self, t: float) -> complex:
        raise NotImplementedError

    @property
    def is_constant(self) -> bool:
        return False

    def conjugate(self) -> "Coefficient":
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(Coefficient):
    amplitude: complex

    def __call__(self, t):
        return self.amplitude

    @property
    def is_constant(self):
        return True

    def conjugate(self):
        return Constant(np.conj(self.amplitude))


@dataclass(frozen=True)
class ScheduleCoefficient(Coefficient):
    schedule: DetuningSchedule
    scale: complex = 1.0

    def __call__(self, t):
        return self.scale * self.schedule.value(t)

    @property
    def is_constant(self):
        from .schedules import ConstantSchedule

        return isinstance(self.schedule, ConstantSchedule)

    def conjugate(self):
        return ScheduleCoefficient(self.schedule, np.conj(self.scale))


@dataclass(frozen=True)
class ModulatedPhase(Coefficient):
    """``amplitude * exp(i * sign * (omega * t - int_0^t Delta(s) ds))``."""

    amplitude: complex
    omega: float
    schedule: DetuningSchedule | None = None
    sign: int = 1

    def __call__(self, t):
        phase = self.omega * t
        if self.schedule is not None:
            phase -= self.schedule.integral(t)
        return self.amplitude * np.exp(1j * self.sign * phase)

    def conjugate(self):
        return ModulatedPhase(np.conj(self.amplitude), self.omega, self.schedule, -self.sign)


def product_coefficient(a: Coefficient, b: Coefficient) -> Coefficient:
    """Coefficient of a product term, needed for ``L^dag L`` expansions."""
    if isinstance(a, Constant) and isinstance(b, Constant):
        return Constant(a.amplitude * b.amplitude)
    if isinstance(a, Constant) and isinstance(b, ModulatedPhase):
        return ModulatedPhase(a.amplitude * b.amplitude, b.omega, b.schedule, b.sign)
    if isinstance(a, ModulatedPhase) and isinstance(b, Constant):
        return ModulatedPhase(a.amplitude * b.amplitude, a.omega, a.schedule, a.sign)
    if isinstance(a, ModulatedPhase) and isinstance(b, ModulatedPhase):
        amp = a.amplitude * b.amplitude
        omega_eff = a.sign * a.omega + b.sign * b.omega
        if a.schedule is None and b.schedule is None:
            return ModulatedPhase(amp, omega_eff, None, 1)
        if a.schedule is b.schedule and a.sign == -b.sign:
            # accumulated detuning phases cancel pairwise
            return ModulatedPhase(amp, omega_eff, None, 1)
    raise NotImplementedError(f"cannot combine {type(a).__name__} with {type(b).__name__}")
