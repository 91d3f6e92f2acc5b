"""Diffraction spectra shared by the analytic and wave-packet levels."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class DiffractionSpectrum:
    """Relative intensity against parallel momentum transfer.

    Attributes:
        delta_k: parallel momentum transfer (1/A), ascending.
        theta_d: deflection angle (rad) of each sample.
        intensity: peak-normalised intensity.
        components: extra named intensity columns on the same normalisation.
        level: model level that produced the spectrum ("hardwall", "tdse", ...).
    """

    delta_k: np.ndarray
    theta_d: np.ndarray
    intensity: np.ndarray
    E_i: float
    theta_i: float
    level: str
    components: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.delta_k)

    def peaks(self, min_abs_dk: float = 0.0, rel_height: float = 0.0):
        """Indices of interior local maxima with |delta_k| >= ``min_abs_dk``."""
        y = self.intensity
        j = np.flatnonzero((y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:])) + 1
        keep = (np.abs(self.delta_k[j]) >= min_abs_dk) & (y[j] >= rel_height * y.max())
        return j[keep]

    def shoulders(self, floor: float = 1e-8):
        """Shoulders on the flanks of intensity lobes.

        On each monotone stretch of log10(intensity) between neighbouring
        extrema, a plain lobe flank steepens or flattens monotonically (one
        hump in |slope|). A shoulder is an interior dip of |slope|: the
        flank levels off and then steepens again. Its prominence is the
        recovery of |slope| on the weaker side above the dip, in decades per
        sample.

        Returns:
            list of (delta_k at the dip centre, prominence), ascending delta_k.
        """
        y = np.log10(np.maximum(self.intensity, floor))
        s = np.diff(y)
        ext = np.flatnonzero(np.sign(s[1:]) != np.sign(s[:-1])) + 1
        bounds = np.concatenate([[0], ext, [len(y) - 1]])
        out = []
        for lo, hi in zip(bounds, bounds[1:]):
            mag = np.abs(s[lo:hi])
            for j in range(1, len(mag) - 1):
                if mag[j] < mag[j - 1] and mag[j] <= mag[j + 1]:
                    prom = min(mag[:j].max(), mag[j + 1:].max()) - mag[j]
                    centre = 0.5 * (self.delta_k[lo + j] + self.delta_k[lo + j + 1])
                    out.append((float(centre), float(prom)))
        return out
