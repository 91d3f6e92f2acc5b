"""Asymptotic hard-wall diffraction amplitudes.

The adsorbate is treated as a hard cylinder of radius ``a``; its asymptotic
(large ka) scattering amplitude is the sum of a backward illuminated-face
term and a forward Fraunhofer term. The flat wall is included by antisymmetric
combination with the mirrored direction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .constants import HE4, PhysicalConstants
from .kinematics import parallel_momentum_transfer
from .potential import HardWallParams
from .spectrum import DiffractionSpectrum


@dataclass
class AmplitudeDecomposition:
    """Cylinder amplitude split into its two asymptotic terms (units A^1/2)."""

    f_total: np.ndarray
    f_illuminated: np.ndarray
    f_fraunhofer: np.ndarray
    theta: np.ndarray


def illuminated_term(theta, k: float, a: float):
    s = np.sin(np.asarray(theta, dtype=float) / 2)
    return -np.sqrt(a * s / 2) * np.exp(-2j * k * a * s)


def fraunhofer_term(theta, k: float, a: float):
    """``e^{-i pi/4} / sqrt(2 pi k) (1 + cos t) / sin t  sin(ka sin t)``.

    Written as ``(1 + cos t) ka sinc(ka sin t)`` so that t = 0 (limit 2ka) and
    t = pi (zero) need no special case.
    """
    theta = np.asarray(theta, dtype=float)
    u = k * a * np.sin(theta)
    shape = (1 + np.cos(theta)) * k * a * np.sinc(u / np.pi)
    return np.exp(-1j * math.pi / 4) / math.sqrt(2 * math.pi * k) * shape


def cylinder_amplitude(theta, k: float, a: float) -> AmplitudeDecomposition:
    """Asymptotic amplitude of a hard cylinder at scattering angle ``theta`` in [0, pi]."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0) or np.any(theta > math.pi + 1e-12):
        raise ValueError("scattering angle must lie in [0, pi]")
    f1 = illuminated_term(theta, k, a)
    f2 = fraunhofer_term(theta, k, a)
    return AmplitudeDecomposition(f_total=f1 + f2, f_illuminated=f1, f_fraunhofer=f2,
                                  theta=theta)


def _mirror_arguments(theta_i, theta_d):
    theta_d = np.asarray(theta_d, dtype=float)
    direct = np.abs(theta_d - theta_i)
    mirrored = np.clip(math.pi - np.abs(theta_d + theta_i), 0.0, math.pi)
    return direct, mirrored


def symmetrized_amplitude(theta_i: float, theta_d, k: float, a: float):
    """Adsorbate-on-wall amplitude f(|td - ti|) - f(pi - |td + ti|)."""
    direct, mirrored = _mirror_arguments(theta_i, theta_d)
    return (cylinder_amplitude(direct, k, a).f_total
            - cylinder_amplitude(mirrored, k, a).f_total)


def symmetrized_components(theta_i: float, theta_d, k: float, a: float):
    """(illuminated, Fraunhofer) parts of :func:`symmetrized_amplitude`."""
    direct, mirrored = _mirror_arguments(theta_i, theta_d)
    d = cylinder_amplitude(direct, k, a)
    m = cylinder_amplitude(mirrored, k, a)
    return d.f_illuminated - m.f_illuminated, d.f_fraunhofer - m.f_fraunhofer


def mirror_phase_difference(theta, k: float, a: float):
    """Phase between the direct and mirrored illuminated terms at scattering angle
    ``theta``: 2ka (cos(theta/2) - sin(theta/2))."""
    theta = np.asarray(theta, dtype=float)
    return 2 * k * a * (np.cos(theta / 2) - np.sin(theta / 2))


def hardwall_intensity_scan(E_i: float, theta_i: float, n_angles: int = 2001,
                            geometry: HardWallParams = HardWallParams(),
                            constants: PhysicalConstants = HE4) -> DiffractionSpectrum:
    """Peak-normalised intensity over deflection angles in (-pi/2, pi/2).

    Angles sit at cell midpoints so the grid is symmetric about the normal.
    The illuminated-face and Fraunhofer intensities (each from its own
    symmetrised term) are returned in ``components`` on the same scale.
    """
    if n_angles < 2:
        raise ValueError("n_angles must be at least 2")
    k = constants.wavenumber(E_i)
    j = np.arange(n_angles)
    theta_d = -math.pi / 2 + (j + 0.5) * math.pi / n_angles
    f = symmetrized_amplitude(theta_i, theta_d, k, geometry.a)
    f_ill, f_fr = symmetrized_components(theta_i, theta_d, k, geometry.a)
    total = np.abs(f) ** 2
    peak = total.max()
    dk = parallel_momentum_transfer(E_i, theta_i, theta_d, constants)
    order = np.argsort(dk, kind="stable")
    return DiffractionSpectrum(
        delta_k=dk[order], theta_d=theta_d[order], intensity=(total / peak)[order],
        E_i=E_i, theta_i=theta_i, level="hardwall",
        components={"illuminated": (np.abs(f_ill) ** 2 / peak)[order],
                    "fraunhofer": (np.abs(f_fr) ** 2 / peak)[order]})


def spectrum_rows(spec: DiffractionSpectrum):
    for j in range(len(spec)):
        yield {
            "theta_d_deg": math.degrees(spec.theta_d[j]),
            "delta_k": spec.delta_k[j],
            "I_total": spec.intensity[j],
            "I_illum": spec.components["illuminated"][j],
            "I_fraun": spec.components["fraunhofer"][j],
        }


def predicted_next_peak(theta: float, k: float, a: float, cycles: float = 1.0):
    """Scattering angle at which the mirror phase has advanced by ``cycles`` turns
    from ``theta`` (towards larger angles)."""
    target = mirror_phase_difference(theta, k, a) - 2 * math.pi * cycles
    f = lambda t: float(mirror_phase_difference(t, k, a)) - target
    if f(math.pi / 2) > 0:
        return math.nan
    return float(optimize.brentq(f, theta, math.pi / 2, xtol=1e-14))


def interference_peak_spacing(spec: DiffractionSpectrum, min_abs_dk: float = 2.0,
                              geometry: HardWallParams = HardWallParams(),
                              constants: PhysicalConstants = HE4):
    """Measured vs mirror-phase-predicted spacing of large-angle intensity maxima.

    Only the positive-delta_k side is used, at normal incidence, where the
    scattering angle equals theta_d.

    Returns:
        list of (delta_k_peak, measured_spacing, predicted_spacing).
    """
    k = constants.wavenumber(spec.E_i)
    idx = spec.peaks(min_abs_dk=min_abs_dk)
    idx = idx[spec.delta_k[idx] > 0]
    out = []
    for j0, j1 in zip(idx, idx[1:]):
        th0 = abs(spec.theta_d[j0] - spec.theta_i)
        th_next = predicted_next_peak(th0, k, geometry.a)
        if not math.isfinite(th_next):
            continue
        dk_pred = k * (math.sin(th_next) - math.sin(th0))
        out.append((float(spec.delta_k[j0]), float(spec.delta_k[j1] - spec.delta_k[j0]),
                    dk_pred))
    return out
