"""Wall trajectories L(t) for the expanding box.

Two built-in laws move the right wall from L0 to Lf in a time tf::

    linear       L(t) = L0 + (Lf - L0) t / tf
    square-root  L(t) = sqrt(L0**2 + (Lf**2 - L0**2) t / tf)

A custom law is given as a callable ``t -> (L, dL/dt)``.  For t > tf every
trajectory holds the wall at Lf with zero velocity.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

WALL_HOLD_CONVENTION = "wall held at Lf with zero velocity for t > tf"


class DomainError(ValueError):
    """Raised for times outside the trajectory's domain."""


class TrajectoryKind(str, enum.Enum):
    LINEAR = "linear"
    SQUARE_ROOT = "sqrt"
    CUSTOM = "custom"

    @classmethod
    def parse(cls, text: str) -> "TrajectoryKind":
        aliases = {"linear": cls.LINEAR, "lin": cls.LINEAR, "sqrt": cls.SQUARE_ROOT,
                   "square-root": cls.SQUARE_ROOT, "squareroot": cls.SQUARE_ROOT,
                   "custom": cls.CUSTOM}
        try:
            return aliases[text.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown trajectory kind {text!r}") from None


Hook = Callable[[float], "tuple[float, float]"]


def _scalar_or_array(values, like):
    return float(values) if np.ndim(like) == 0 else values


@dataclass(frozen=True)
class Trajectory:
    kind: TrajectoryKind
    L0: float
    Lf: float
    tf: float
    custom_hook: Optional[Hook] = None

    def __post_init__(self):
        problems = []
        if not self.L0 > 0:
            problems.append(f"L0 must be positive (got {self.L0!r})")
        if not self.tf > 0:
            problems.append(f"tf must be positive (got {self.tf!r})")
        if self.Lf < self.L0:
            problems.append(f"Lf must not be below L0 (got L0={self.L0!r}, Lf={self.Lf!r})")
        if self.kind is TrajectoryKind.CUSTOM and self.custom_hook is None:
            problems.append("custom trajectory requires a hook returning (L, dL/dt)")
        if problems:
            raise ValueError("; ".join(problems))

    # Lf == L0 is accepted as a static box; it is the degenerate test case
    # used by the oracles and the static recipe.

    @classmethod
    def linear(cls, L0, Lf, tf) -> "Trajectory":
        return cls(TrajectoryKind.LINEAR, float(L0), float(Lf), float(tf))

    @classmethod
    def square_root(cls, L0, Lf, tf) -> "Trajectory":
        return cls(TrajectoryKind.SQUARE_ROOT, float(L0), float(Lf), float(tf))

    @classmethod
    def custom(cls, hook: Hook, L0, Lf, tf) -> "Trajectory":
        return cls(TrajectoryKind.CUSTOM, float(L0), float(Lf), float(tf), hook)

    @property
    def is_static(self) -> bool:
        return self.kind is not TrajectoryKind.CUSTOM and self.Lf == self.L0

    @property
    def speed(self) -> float:
        """Constant wall speed of the linear law, (Lf - L0)/tf."""
        return (self.Lf - self.L0) / self.tf

    @property
    def area_rate(self) -> float:
        """(Lf**2 - L0**2)/tf, the constant rate of change of L**2 for the square-root law."""
        return (self.Lf**2 - self.L0**2) / self.tf

    def _check_time(self, t):
        if np.any(np.asarray(t) < 0):
            raise DomainError(f"trajectory evaluated at negative time {t!r}")

    def position(self, t):
        self._check_time(t)
        tt = np.minimum(np.asarray(t, dtype=float), self.tf)
        if self.kind is TrajectoryKind.LINEAR:
            L = self.L0 + self.speed * tt
        elif self.kind is TrajectoryKind.SQUARE_ROOT:
            L = np.sqrt(self.L0**2 + self.area_rate * tt)
        else:
            L = np.vectorize(lambda s: float(self.custom_hook(s)[0]))(tt)
        # the closed forms already give Lf at tf; pin it against round-off
        L = np.where(np.asarray(t) >= self.tf, self.Lf, L)
        return _scalar_or_array(L, t)

    def velocity(self, t):
        self._check_time(t)
        t_arr = np.asarray(t, dtype=float)
        tt = np.minimum(t_arr, self.tf)
        if self.kind is TrajectoryKind.LINEAR:
            v = np.full_like(tt, self.speed)
        elif self.kind is TrajectoryKind.SQUARE_ROOT:
            v = self.area_rate / (2.0 * np.sqrt(self.L0**2 + self.area_rate * tt))
        else:
            v = np.vectorize(lambda s: float(self.custom_hook(s)[1]))(tt)
        v = np.where(t_arr > self.tf, 0.0, v)
        return _scalar_or_array(v, t)

    def acceleration(self, t):
        """d2L/dt2 for the built-in laws (zero in the hold phase)."""
        self._check_time(t)
        t_arr = np.asarray(t, dtype=float)
        if self.kind is TrajectoryKind.LINEAR:
            a = np.zeros_like(t_arr)
        elif self.kind is TrajectoryKind.SQUARE_ROOT:
            L = np.sqrt(self.L0**2 + self.area_rate * np.minimum(t_arr, self.tf))
            a = -self.area_rate**2 / (4.0 * L**3)
        else:
            raise NotImplementedError("custom trajectories supply only L and dL/dt")
        a = np.where(t_arr > self.tf, 0.0, a)
        return _scalar_or_array(a, t)

    def phase_integral(self, t):
        """Integral of 1/L(t')**2 over [0, t]."""
        self._check_time(t)
        t_arr = np.asarray(t, dtype=float)
        tt = np.minimum(t_arr, self.tf)
        if self.is_static:
            val = tt / self.L0**2
        elif self.kind is TrajectoryKind.LINEAR:
            L = self.L0 + self.speed * tt
            val = (1.0 / self.L0 - 1.0 / L) / self.speed
        elif self.kind is TrajectoryKind.SQUARE_ROOT:
            c1 = self.area_rate
            # log1p keeps full precision for small c1*t
            val = np.log1p(c1 * tt / self.L0**2) / c1
        else:
            val = np.vectorize(self._custom_phase)(tt)
        val = val + np.maximum(t_arr - self.tf, 0.0) / self.Lf**2
        return _scalar_or_array(val, t)

    def _custom_phase(self, t: float) -> float:
        if t == 0:
            return 0.0
        val, _ = integrate.quad(lambda s: self.custom_hook(s)[0] ** -2, 0.0, t,
                                epsabs=0.0, epsrel=1e-10, limit=200)
        return val

    def time_at_phase(self, tau: float) -> float:
        """Inverse of :meth:`phase_integral` (scalar)."""
        if tau < 0:
            raise DomainError(f"negative phase {tau!r}")
        phase_f = float(self.phase_integral(self.tf))
        if tau >= phase_f:
            return self.tf + (tau - phase_f) * self.Lf**2
        if self.is_static:
            return tau * self.L0**2
        if self.kind is TrajectoryKind.LINEAR:
            L = 1.0 / (1.0 / self.L0 - self.speed * tau)
            return (L - self.L0) / self.speed
        if self.kind is TrajectoryKind.SQUARE_ROOT:
            c1 = self.area_rate
            return self.L0**2 * math.expm1(c1 * tau) / c1
        return optimize.brentq(lambda s: self._custom_phase(s) - tau, 0.0, self.tf,
                               xtol=1e-14 * self.tf, rtol=1e-13)

    def scaled(self, length_unit: float, time_unit: float) -> "Trajectory":
        """The same trajectory expressed in other units."""
        if self.custom_hook is None:
            return replace(self, L0=self.L0 / length_unit, Lf=self.Lf / length_unit,
                           tf=self.tf / time_unit)
        hook = self.custom_hook
        vel_unit = length_unit / time_unit

        def scaled_hook(s):
            L, v = hook(s * time_unit)
            return L / length_unit, v / vel_unit

        return replace(self, L0=self.L0 / length_unit, Lf=self.Lf / length_unit,
                       tf=self.tf / time_unit, custom_hook=scaled_hook)


def wall_position(traj: Trajectory, t):
    return traj.position(t)


def wall_velocity(traj: Trajectory, t):
    return traj.velocity(t)


def phase_integral(traj: Trajectory, t):
    return traj.phase_integral(t)
