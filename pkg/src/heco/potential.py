"""He-CO/Pt(111) interaction models and analytic Morse-well results.

Coordinates are centred on the CO centre of mass: ``x`` runs parallel to the
surface, ``z`` along the surface normal. Energies in meV, lengths in Angstrom.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from .constants import HE4, PhysicalConstants
from .errors import CalibrationError, DomainError, SingularInputError

# On-axis well depth above the adsorbate used to fix sigma (not printed).
ON_AXIS_WELL_DEPTH = 2.96
# Alternative constraint: depth at the adsorbate / flat-surface junction.
JUNCTION_WELL_DEPTH = 6.37
JUNCTION_X = 3.31

# Result of calibrate_sigma(2.96) with the default Morse and epsilon.
DEFAULT_SIGMA = 3.130656


class Variant(str, enum.Enum):
    FULL = "full"
    REPULSIVE_ADSORBATE = "repulsive"
    FLAT_SURFACE_ONLY = "flat"
    HARD_WALL = "hardwall"

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "").replace("-", "")
        aliases = {
            "full": cls.FULL,
            "repulsive": cls.REPULSIVE_ADSORBATE,
            "repulsiveadsorbate": cls.REPULSIVE_ADSORBATE,
            "flat": cls.FLAT_SURFACE_ONLY,
            "flatsurfaceonly": cls.FLAT_SURFACE_ONLY,
            "hardwall": cls.HARD_WALL,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown model variant {value!r}") from None


@dataclass(frozen=True)
class MorseParams:
    """He-Pt(111) Morse term ``D[1 - exp(-alpha (z - z_m))]^2 - D``."""

    D: float = 4.0
    alpha: float = 1.13
    z_m: float = 1.22

    def __post_init__(self):
        if not (self.D > 0 and self.alpha > 0):
            raise ValueError("Morse D and alpha must be positive")


@dataclass(frozen=True)
class LennardJonesParams:
    """He-CO 12-6 term ``4 eps [(sigma/r)^12 - (sigma/r)^6]``."""

    epsilon: float = 2.37
    sigma: float = DEFAULT_SIGMA

    def __post_init__(self):
        if not (self.epsilon > 0 and self.sigma > 0):
            raise ValueError("Lennard-Jones epsilon and sigma must be positive")


@dataclass(frozen=True)
class HardWallParams:
    """Half-disc of radius ``a`` cut by a flat wall at height ``z_r``."""

    a: float = 2.86
    z_r: float = 0.28

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("hard-wall radius must be positive")
        if not abs(self.z_r) < self.a:
            raise ValueError("flat wall must cut the adsorbate disc (|z_r| < a)")

    @property
    def foot(self) -> float:
        """Half-width of the adsorbate footprint on the flat wall."""
        return math.sqrt(self.a ** 2 - self.z_r ** 2)

    @property
    def corner_angle(self) -> float:
        """asin(z_r / a): elevation of the disc/wall junction seen from the centre."""
        return math.asin(self.z_r / self.a)


@dataclass(frozen=True)
class InteractionModel:
    variant: Variant = Variant.FULL
    morse: MorseParams = field(default_factory=MorseParams)
    lj: LennardJonesParams = field(default_factory=LennardJonesParams)
    hardwall: HardWallParams = field(default_factory=HardWallParams)

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))

    def with_variant(self, variant) -> "InteractionModel":
        return replace(self, variant=Variant.parse(variant))


@dataclass(frozen=True)
class BoundStateSet:
    energies: tuple
    hbar_omega: float

    @property
    def count(self) -> int:
        return len(self.energies)


def morse_potential(params: MorseParams, z):
    e = np.exp(-params.alpha * (np.asarray(z, dtype=float) - params.z_m))
    return params.D * (1.0 - e) ** 2 - params.D


def morse_derivative(params: MorseParams, z):
    e = np.exp(-params.alpha * (np.asarray(z, dtype=float) - params.z_m))
    return 2.0 * params.D * params.alpha * (1.0 - e) * e


def _require_evaluable(model: InteractionModel):
    if model.variant is Variant.HARD_WALL:
        raise DomainError("the hard-wall model is geometric and has no finite energy")


def _inverse_r2(x, z, variant):
    r2 = x * x + z * z
    if variant is not Variant.FLAT_SURFACE_ONLY and np.any(r2 == 0.0):
        raise SingularInputError("Lennard-Jones term is singular at r = 0")
    with np.errstate(divide="ignore"):
        return 1.0 / r2


def eval_potential(model: InteractionModel, x, z):
    """Interaction energy V(x, z) in meV (vectorised over x and z)."""
    _require_evaluable(model)
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    v = morse_potential(model.morse, z)
    if model.variant is Variant.FLAT_SURFACE_ONLY:
        return v + 0.0 * x
    s6 = (model.lj.sigma ** 2 * _inverse_r2(x, z, model.variant)) ** 3
    if model.variant is Variant.REPULSIVE_ADSORBATE:
        return v + 4.0 * model.lj.epsilon * s6 * s6
    return v + 4.0 * model.lj.epsilon * (s6 * s6 - s6)


def eval_gradient(model: InteractionModel, x, z):
    """Analytic (dV/dx, dV/dz) in meV/A."""
    _require_evaluable(model)
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    dz = morse_derivative(model.morse, z)
    if model.variant is Variant.FLAT_SURFACE_ONLY:
        return 0.0 * x + 0.0 * z, dz + 0.0 * x
    inv_r2 = _inverse_r2(x, z, model.variant)
    s6 = (model.lj.sigma ** 2 * inv_r2) ** 3
    eps4 = 4.0 * model.lj.epsilon
    if model.variant is Variant.REPULSIVE_ADSORBATE:
        dv_dr_over_r = -12.0 * eps4 * s6 * s6 * inv_r2
    else:
        dv_dr_over_r = eps4 * (-12.0 * s6 * s6 + 6.0 * s6) * inv_r2
    return dv_dr_over_r * x, dz + dv_dr_over_r * z


def morse_turning_points(params: MorseParams, E_z: float):
    """Classical turning points (z_minus, z_plus) of bound motion at energy E_z."""
    if not (-params.D <= E_z < 0):
        raise DomainError(f"E_z = {E_z} outside the bound range [-D, 0)")
    root = math.sqrt(max(0.0, 1.0 - abs(E_z) / params.D))
    z_minus = params.z_m - math.log(1.0 + root) / params.alpha
    z_plus = params.z_m - math.log(1.0 - root) / params.alpha
    return z_minus, z_plus


def morse_frequency(params: MorseParams, E_z: float, constants: PhysicalConstants = HE4):
    """Angular frequency (1/ps) of bound Morse motion at energy E_z."""
    if not (-params.D <= E_z < 0):
        raise DomainError(f"E_z = {E_z} outside the bound range [-D, 0)")
    return math.sqrt(2.0 * params.alpha ** 2 * abs(E_z) / constants.mass)


def harmonic_frequency(params: MorseParams, constants: PhysicalConstants = HE4):
    return math.sqrt(2.0 * params.alpha ** 2 * params.D / constants.mass)


def jump_length(params: MorseParams, E_i: float, E_z: float):
    """Distance covered along x during one period of trapped z-oscillation."""
    if E_z >= 0:
        raise DomainError("jump length needs bound perpendicular motion (E_z < 0)")
    if E_i <= 0:
        raise DomainError("incident energy must be positive")
    return 2.0 * math.pi / params.alpha * math.sqrt((E_i - E_z) / abs(E_z))


def morse_bound_states(params: MorseParams, constants: PhysicalConstants = HE4) -> BoundStateSet:
    """Morse eigenvalues referenced to the dissociation limit.

    States are kept while the level spacing E_{n+1} - E_n stays non-negative.
    """
    hw = constants.hbar * harmonic_frequency(params, constants)

    def level(n):
        q = hw * (n + 0.5)
        return q * (1.0 - q / (4.0 * params.D))

    energies = [level(0) - params.D]
    n = 0
    while level(n + 1) - level(n) >= 0:
        n += 1
        energies.append(level(n) - params.D)
    return BoundStateSet(energies=tuple(energies), hbar_omega=hw)


def on_axis_well_depth(model: InteractionModel, x: float = 0.0, z_max: float = 15.0):
    """Depth (positive, meV) of the deepest minimum of V along the line x = const."""
    _require_evaluable(model)
    z_lo = 0.05 if x == 0.0 else -2.0
    zs = np.linspace(z_lo, z_max, 4001)
    with np.errstate(over="ignore"):
        vs = eval_potential(model, x, zs)
    i = int(np.argmin(vs))
    lo, hi = zs[max(i - 1, 0)], zs[min(i + 1, len(zs) - 1)]
    res = optimize.minimize_scalar(
        lambda z: float(eval_potential(model, x, z)), bounds=(lo, hi),
        method="bounded", options={"xatol": 1e-10})
    return -float(res.fun)


def calibrate_sigma(target_well_depth: float = ON_AXIS_WELL_DEPTH,
                    morse: MorseParams = MorseParams(),
                    epsilon: float = 2.37,
                    x: float = 0.0,
                    bracket=(1.0, 6.0)) -> float:
    """Find the LJ sigma for which the well depth along ``x`` matches the target."""
    if not epsilon > 0:
        raise CalibrationError("calibration needs an adsorbate term (epsilon > 0)")

    def depth(sigma):
        model = InteractionModel(Variant.FULL, morse, LennardJonesParams(epsilon, sigma))
        return on_axis_well_depth(model, x=x)

    lo, hi = bracket
    f_lo = depth(lo) - target_well_depth
    f_hi = depth(hi) - target_well_depth
    if f_lo * f_hi > 0:
        scan = [(s, depth(s)) for s in np.linspace(lo, hi, 11)]
        table = ", ".join(f"{s:.2f}->{d:.3f}" for s, d in scan)
        raise CalibrationError(
            f"well depth {target_well_depth} meV not bracketed for sigma in "
            f"[{lo}, {hi}] A; scan: {table}")
    return float(optimize.brentq(lambda s: depth(s) - target_well_depth, lo, hi,
                                 xtol=1e-9, rtol=1e-12))


def equipotential_apex(model: InteractionModel, level: float = 10.0):
    """Height on the symmetry axis where V(0, z) drops through ``level``."""
    return float(optimize.brentq(
        lambda z: float(eval_potential(model, 0.0, z)) - level, 0.5, 10.0, xtol=1e-12))


def equipotential_halfwidth(model: InteractionModel, z: float, level: float = 10.0):
    """Largest |x| at height z inside the V >= level region around the adsorbate."""
    xs = np.linspace(0.0, 10.0, 20001)
    above = eval_potential(model, xs, z) >= level
    if not above[0]:
        return 0.0
    j = int(np.argmin(above))
    if above[j]:
        return math.inf
    return float(optimize.brentq(
        lambda x: float(eval_potential(model, x, z)) - level, xs[j - 1], xs[j], xtol=1e-12))
