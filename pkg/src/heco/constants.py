"""Physical constants in the meV / Angstrom / ps unit system.

Mass only enters through ``hbar2_over_2m``; everything else is derived from it
and from hbar.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

HBARC_EV_A = 1973.2698  # eV * Angstrom
HE4_MC2_MEV = 3727.379  # MeV
HBAR_MEV_PS = 0.6582119569  # meV * ps

HE4_HBAR2_OVER_2M = 0.5224  # meV * A^2


@dataclass(frozen=True)
class PhysicalConstants:
    """He-4 kinematics.

    Attributes:
        hbar2_over_2m: hbar^2 / 2m in meV A^2.
        hbar: reduced Planck constant in meV ps.
    """

    hbar2_over_2m: float = HE4_HBAR2_OVER_2M
    hbar: float = HBAR_MEV_PS

    def __post_init__(self):
        if not self.hbar2_over_2m > 0:
            raise ValueError("hbar2_over_2m must be positive")
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")

    @classmethod
    def from_first_principles(cls) -> "PhysicalConstants":
        """Build hbar^2/2m from hbar*c and the He-4 rest energy."""
        value = (HBARC_EV_A ** 2) / (2.0 * HE4_MC2_MEV * 1e6) * 1e3
        return cls(hbar2_over_2m=value)

    @property
    def hbar2_over_m(self) -> float:
        return 2.0 * self.hbar2_over_2m

    @property
    def mass(self) -> float:
        """Mass in meV ps^2 / A^2."""
        return self.hbar ** 2 / self.hbar2_over_m

    @property
    def hbar_over_m(self) -> float:
        """hbar/m in A^2/ps (velocity per unit wavenumber)."""
        return self.hbar2_over_m / self.hbar

    def wavenumber(self, energy):
        """k = sqrt(2 m E) / hbar in 1/A."""
        if energy <= 0:
            raise ValueError("energy must be positive")
        return math.sqrt(energy / self.hbar2_over_2m)

    def momentum(self, energy):
        """p = sqrt(2 m E) in meV ps / A."""
        return self.hbar * self.wavenumber(energy)

    def de_broglie_wavelength(self, energy):
        """lambda = h / sqrt(2 m E) in A."""
        return 2.0 * math.pi / self.wavenumber(energy)

    def speed(self, energy):
        return self.momentum(energy) / self.mass


HE4 = PhysicalConstants()
