"""Physical constants, particle presets and the internal dimensionless scaling.

All numerical engines run with hbar = m = L0 = 1.  A :class:`UnitScaling`
built from the particle and the initial box width converts to and from SI
at the I/O boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

from scipy import constants

HBAR = constants.hbar
ATOMIC_MASS = constants.physical_constants["atomic mass constant"][0]
RB87_MASS = 87.0 * ATOMIC_MASS


@dataclass(frozen=True)
class PhysicalSystem:
    """A single particle of given mass, with the value of hbar in the same unit system."""

    mass: float
    hbar: float = HBAR
    species_label: str = "custom"

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass!r}")
        if not self.hbar > 0:
            raise ValueError(f"hbar must be positive, got {self.hbar!r}")

    @classmethod
    def rb87(cls) -> "PhysicalSystem":
        return cls(mass=RB87_MASS, hbar=HBAR, species_label="Rb-87")

    @classmethod
    def dimensionless(cls) -> "PhysicalSystem":
        return cls(mass=1.0, hbar=1.0, species_label="dimensionless")

    @property
    def is_dimensionless(self) -> bool:
        return self.mass == 1.0 and self.hbar == 1.0

    def scaling(self, length_unit: float) -> "UnitScaling":
        return UnitScaling.for_system(self, length_unit)


PRESETS = {
    "rb87": PhysicalSystem.rb87,
    "dimensionless": PhysicalSystem.dimensionless,
}


@dataclass(frozen=True)
class UnitScaling:
    """Length, time and energy units making hbar = m = 1 with the length unit set to L0."""

    length_unit: float
    time_unit: float
    energy_unit: float

    @classmethod
    def for_system(cls, system: PhysicalSystem, length_unit: float) -> "UnitScaling":
        if not length_unit > 0:
            raise ValueError(f"length unit must be positive, got {length_unit!r}")
        m, hbar = system.mass, system.hbar
        return cls(
            length_unit=length_unit,
            time_unit=m * length_unit**2 / hbar,
            energy_unit=hbar**2 / (m * length_unit**2),
        )

    @property
    def velocity_unit(self) -> float:
        return self.length_unit / self.time_unit

    _DIMS = {"length": "length_unit", "time": "time_unit", "energy": "energy_unit",
             "velocity": "velocity_unit"}

    def _unit(self, kind: str) -> float:
        try:
            return getattr(self, self._DIMS[kind])
        except KeyError:
            raise ValueError(f"unknown quantity kind {kind!r}") from None

    def to_dimensionless(self, value, kind: str):
        return value / self._unit(kind)

    def to_si(self, value, kind: str):
        return value * self._unit(kind)
