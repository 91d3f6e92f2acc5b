"""Specular ray tracing on the hard-wall adsorbate model.

The adsorbate is a circle of radius ``a`` centred at the origin, cut by the
flat wall z = z_r; the wall exists for |x| >= sqrt(a^2 - z_r^2). A ray with
impact parameter b and incidence angle theta_i travels along the line through
(b, 0) with direction (sin theta_i, -cos theta_i). Deflection angles are
measured from the surface normal, positive towards +x (forward).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import DomainError, GeometryError
from .kinematics import LAUNCH_HEIGHT
from .potential import HardWallParams

TANGENCY_TOL = 1e-12
_EPS_T = 1e-12


class Surface(str, enum.Enum):
    ADSORBATE = "adsorbate"
    FLAT = "flat"


class BouncePattern(str, enum.Enum):
    FLAT_ONLY = "flat_only"
    ADSORBATE_ONLY = "adsorbate_only"
    FLAT_THEN_ADSORBATE = "flat_then_adsorbate"
    ADSORBATE_THEN_FLAT = "adsorbate_then_flat"


class Direction(str, enum.Enum):
    FORWARD = "forward"
    BACKWARD = "backward"
    NORMAL = "normal"
    GRAZING = "grazing"


@dataclass(frozen=True)
class RayClass:
    bounce_pattern: BouncePattern
    direction: Direction


@dataclass
class Ray:
    """A traced ray.

    Attributes:
        segments: list of ((x0, z0), (x1, z1)); the last one ends at a
            point ``escape_length`` beyond the final bounce.
        bounce_points: list of ((x, z), Surface).
        direction_out: final unit direction (d_x, d_z).
    """

    b: float
    theta_i: float
    segments: list
    bounce_points: list
    direction_out: tuple
    theta_d: float
    ray_class: RayClass

    @property
    def n_bounces(self) -> int:
        return len(self.bounce_points)

    @property
    def surfaces(self):
        return tuple(s for _, s in self.bounce_points)

    @property
    def scattering_angle(self) -> float:
        """Angle between incident and outgoing directions (pi = straight back)."""
        din = (math.sin(self.theta_i), -math.cos(self.theta_i))
        dot = din[0] * self.direction_out[0] + din[1] * self.direction_out[1]
        return math.acos(max(-1.0, min(1.0, dot)))

    def adsorbate_impact_angle(self) -> float:
        """Polar angle (from +x, counter-clockwise) of the adsorbate bounce."""
        for (x, z), s in self.bounce_points:
            if s is Surface.ADSORBATE:
                return math.atan2(z, x)
        raise GeometryError("ray does not touch the adsorbate")


@dataclass
class SeparatrixSet:
    """Separatrix impact parameters (A) at one incidence angle.

    ``F2p`` is the limit of the flat-then-adsorbate branch at the wall corner;
    it coincides with ``F2`` in b. ``theta_d_max`` is the most backward
    deflection reached on that branch. Names in ``degenerate`` collapse onto a
    neighbour (normal incidence); names in ``absent`` do not exist at this
    angle and hold NaN.
    """

    theta_i: float
    F1: float
    Falpha: float
    F2: float
    F2p: float
    F3: float
    F4: float
    Fbeta: float
    F5: float
    F6: float
    F7: float
    theta_d_max: float
    degenerate: tuple = field(default=())
    absent: tuple = field(default=())

    ORDER = ("F1", "Falpha", "F2", "F3", "F4", "Fbeta", "F5", "F6", "F7")

    def ordered(self):
        """(name, b) in the nominal order, skipping absent separatrices."""
        return [(name, getattr(self, name)) for name in self.ORDER
                if name not in self.absent]

    def is_ordered(self) -> bool:
        """Nominal order holds: strictly between distinct separatrices,
        with equality allowed for degenerate ones."""
        seq = self.ordered()
        for (n1, b1), (n2, b2) in zip(seq, seq[1:]):
            if b1 < b2:
                continue
            if b1 == b2 and (n1 in self.degenerate or n2 in self.degenerate):
                continue
            return False
        return True

    def as_dict(self):
        d = {name: getattr(self, name) for name in self.ORDER}
        d["F2p"] = self.F2p
        return d


def _check_theta(theta_i):
    if not 0.0 <= theta_i < math.pi / 2:
        raise DomainError("incidence angle must satisfy 0 <= theta_i < pi/2")


def _circle_hit(px, pz, dx, dz, geometry):
    """Entry distance along the ray to the clipped circle, or None."""
    a = geometry.a
    bq = px * dx + pz * dz
    cq = px * px + pz * pz - a * a
    disc = bq * bq - cq
    if disc <= TANGENCY_TOL:
        return None
    t = -bq - math.sqrt(disc)
    if t <= _EPS_T:
        return None
    if pz + t * dz < geometry.z_r:
        return None
    return t


def _flat_hit(px, pz, dx, dz, geometry):
    if dz >= 0:
        return None
    t = (geometry.z_r - pz) / dz
    if t <= _EPS_T:
        return None
    x = px + t * dx
    if abs(x) < geometry.foot:
        return None
    return t


def _classify(surfaces, theta_d, tol=1e-9):
    if surfaces == (Surface.FLAT,):
        pattern = BouncePattern.FLAT_ONLY
    elif surfaces == (Surface.ADSORBATE,):
        pattern = BouncePattern.ADSORBATE_ONLY
    elif surfaces == (Surface.FLAT, Surface.ADSORBATE):
        pattern = BouncePattern.FLAT_THEN_ADSORBATE
    elif surfaces == (Surface.ADSORBATE, Surface.FLAT):
        pattern = BouncePattern.ADSORBATE_THEN_FLAT
    else:
        raise GeometryError(f"unexpected bounce sequence {surfaces}")
    if abs(abs(theta_d) - math.pi / 2) < tol:
        direction = Direction.GRAZING
    elif abs(theta_d) < tol:
        direction = Direction.NORMAL
    elif theta_d > 0:
        direction = Direction.FORWARD
    else:
        direction = Direction.BACKWARD
    return RayClass(pattern, direction)


def trace_ray(b: float, theta_i: float, geometry: HardWallParams = HardWallParams(),
              z_start: float = LAUNCH_HEIGHT, escape_length: float = 5.0) -> Ray:
    """Follow one ray through all specular bounces."""
    if not math.isfinite(b):
        raise DomainError("impact parameter must be finite")
    if not abs(theta_i) < math.pi / 2:
        raise DomainError("incidence angle must satisfy |theta_i| < pi/2")
    dx, dz = math.sin(theta_i), -math.cos(theta_i)
    px, pz = b - z_start * math.tan(theta_i), z_start
    segments, bounces = [], []
    while True:
        tc = _circle_hit(px, pz, dx, dz, geometry)
        tf = _flat_hit(px, pz, dx, dz, geometry)
        if tc is None and tf is None:
            break
        if len(bounces) == 2:
            raise GeometryError(f"more than two bounces for b = {b}")
        if tf is None or (tc is not None and tc <= tf):
            t, surface = tc, Surface.ADSORBATE
        else:
            t, surface = tf, Surface.FLAT
        qx, qz = px + t * dx, pz + t * dz
        segments.append(((px, pz), (qx, qz)))
        bounces.append(((qx, qz), surface))
        if surface is Surface.FLAT:
            qz = geometry.z_r
            dz = -dz
        else:
            nx, nz = qx / geometry.a, qz / geometry.a
            dot = dx * nx + dz * nz
            dx, dz = dx - 2 * dot * nx, dz - 2 * dot * nz
            norm = math.hypot(dx, dz)
            dx, dz = dx / norm, dz / norm
        px, pz = qx, qz
    segments.append(((px, pz), (px + escape_length * dx, pz + escape_length * dz)))
    if not bounces:
        raise GeometryError(f"ray with b = {b} never reaches the surface")
    theta_d = math.atan2(dx, dz)
    return Ray(b=float(b), theta_i=theta_i, segments=segments, bounce_points=bounces,
               direction_out=(dx, dz), theta_d=theta_d,
               ray_class=_classify(tuple(s for _, s in bounces), theta_d))


def deflection_table(theta_i: float, geometry: HardWallParams = HardWallParams(),
                     b_range=None, n_samples: int = 4001):
    """Trace a uniform b grid; returns (b, list of rays)."""
    if b_range is None:
        half = geometry.a / math.cos(theta_i) + geometry.a
        b_range = (-half, half)
    bs = np.linspace(b_range[0], b_range[1], n_samples)
    return bs, [trace_ray(float(b), theta_i, geometry) for b in bs]


def shadow_length(theta_i: float, geometry: HardWallParams = HardWallParams()) -> float:
    """Closed-form shadow length with the wall height in the tan(theta_i/2) term.

    ``((1 - cos t) / cos t) * (a - z_r tan(t/2))``. See
    :func:`shadow_interval` for the value measured by direct ray tracing.
    """
    if not theta_i >= 0:
        raise DomainError("incidence angle must be non-negative")
    if theta_i >= math.pi / 2:
        return math.inf
    c = math.cos(theta_i)
    return (1 - c) / c * (geometry.a - geometry.z_r * math.tan(theta_i / 2))


def exact_shadow_length(theta_i: float, geometry: HardWallParams = HardWallParams()) -> float:
    """Flat-wall interval hidden behind the adsorbate, from the tangent ray."""
    _check_theta(theta_i)
    if theta_i <= geometry.corner_angle:
        return 0.0
    return (geometry.a / math.cos(theta_i) - geometry.z_r * math.tan(theta_i)
            - geometry.foot)


def shadow_interval(theta_i: float, geometry: HardWallParams = HardWallParams(),
                    n_samples: int = 20001):
    """Brute-force shadow: flat-wall points right of the adsorbate hit by no ray.

    Every flat-wall bounce (first or second) of a dense b scan is collected; the
    unreached interval is [foot, nearest hit].
    """
    _check_theta(theta_i)
    bs, rays = deflection_table(theta_i, geometry, n_samples=n_samples)
    hits = [p[0] for r in rays for p, s in r.bounce_points
            if s is Surface.FLAT and p[0] > 0]
    x_lo = geometry.foot
    x_hi = min(hits)
    return x_lo, x_hi


def _pattern(b, theta_i, geometry):
    return trace_ray(b, theta_i, geometry).ray_class.bounce_pattern


def _bisect_pattern(lo, hi, theta_i, geometry, tol=1e-11):
    p_lo = _pattern(lo, theta_i, geometry)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _pattern(mid, theta_i, geometry) == p_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _branches(theta_i, geometry, n_samples):
    """Runs of constant bounce pattern: list of (pattern, b_lo, b_hi) with
    pattern boundaries refined by bisection."""
    bs, rays = deflection_table(theta_i, geometry, n_samples=n_samples)
    pats = [r.ray_class.bounce_pattern for r in rays]
    edges = [float(bs[0])]
    kinds = [pats[0]]
    for j in range(1, len(bs)):
        if pats[j] != pats[j - 1]:
            edges.append(_bisect_pattern(float(bs[j - 1]), float(bs[j]), theta_i, geometry))
            kinds.append(pats[j])
    edges.append(float(bs[-1]))
    return [(kinds[i], edges[i], edges[i + 1]) for i in range(len(kinds))]


def _solve_on_branch(lo, hi, target, theta_i, geometry, n_grid=400):
    """All b in (lo, hi) with theta_d(b) = target, to ~1e-13 A."""
    pad = 1e-10 * max(1.0, hi - lo)
    grid = np.linspace(lo + pad, hi - pad, n_grid)
    vals = np.array([trace_ray(float(b), theta_i, geometry).theta_d for b in grid]) - target
    roots = []
    for j in range(len(grid) - 1):
        if vals[j] == 0:
            roots.append(float(grid[j]))
        elif vals[j] * vals[j + 1] < 0:
            roots.append(optimize.brentq(
                lambda b: trace_ray(b, theta_i, geometry).theta_d - target,
                grid[j], grid[j + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps))
    if vals[-1] == 0:
        roots.append(float(grid[-1]))
    return roots


def find_separatrices(theta_i: float, geometry: HardWallParams = HardWallParams(),
                      n_samples: int = 2001) -> SeparatrixSet:
    """Locate the separatrices from bounce-pattern changes and deflection targets."""
    _check_theta(theta_i)
    P = BouncePattern
    branches = _branches(theta_i, geometry, n_samples)
    kinds = [k for k, _, _ in branches]
    if kinds[0] is not P.FLAT_ONLY or kinds[-1] is not P.FLAT_ONLY:
        raise GeometryError("scan range does not reach unperturbed rays on both sides")
    single = [br for br in branches if br[0] is P.ADSORBATE_ONLY]
    if len(single) != 1:
        raise GeometryError(f"expected one single-collision branch, got {kinds}")
    _, s_lo, s_hi = single[0]
    i_single = kinds.index(P.ADSORBATE_ONLY)
    left = branches[1:i_single]
    right = branches[i_single + 1:-1]
    degenerate = []
    absent = []

    c_branch = [br for br in left if br[0] is P.FLAT_THEN_ADSORBATE]
    a_branch = [br for br in left if br[0] is P.ADSORBATE_THEN_FLAT]
    b_branch = [br for br in right if br[0] is P.ADSORBATE_THEN_FLAT]
    if len(a_branch) != 1 or len(b_branch) != 1 or len(c_branch) > 1:
        raise GeometryError(f"unexpected branch structure {kinds}")
    _, a_lo, a_hi = a_branch[0]
    _, b_lo, b_hi = b_branch[0]
    if c_branch:
        _, c_lo, c_hi = c_branch[0]
        F1, F2 = c_lo, c_hi
        theta_d_max = trace_ray(c_hi - 1e-9, theta_i, geometry).theta_d
        roots = _solve_on_branch(c_lo, c_hi, 0.0, theta_i, geometry)
        if len(roots) > 1:
            raise GeometryError("normal-deflection ray on the flat-first branch not unique")
        if roots:
            Falpha = roots[0]
        else:
            # theta_d_max > 0: the flat-first branch never reaches the normal
            Falpha = math.nan
            absent.append("Falpha")
    else:
        F1 = F2 = Falpha = a_lo
        degenerate.extend(["F1", "Falpha"])
        theta_d_max = trace_ray(a_lo + 1e-9, theta_i, geometry).theta_d
    F3 = a_hi
    F6 = b_lo
    F7 = b_hi

    def single_root(target, name):
        if theta_i == 0.0 and target == 0.0:
            return 0.0
        roots = _solve_on_branch(s_lo, s_hi, target, theta_i, geometry)
        if len(roots) != 1:
            raise GeometryError(f"{name}: expected one root, got {roots}")
        return roots[0]

    F4 = single_root(-theta_i, "F4")
    Fbeta = single_root(0.0, "Fbeta")
    F5 = single_root(theta_i, "F5")
    if theta_i == 0.0:
        degenerate.extend(["F4", "Fbeta", "F5"])
    return SeparatrixSet(theta_i=theta_i, F1=F1, Falpha=Falpha, F2=F2, F2p=F2, F3=F3,
                         F4=F4, Fbeta=Fbeta, F5=F5, F6=F6, F7=F7,
                         theta_d_max=theta_d_max, degenerate=tuple(degenerate),
                         absent=tuple(absent))


def homologous_pairs(theta_d: float, theta_i: float,
                     geometry: HardWallParams = HardWallParams(), n_samples: int = 2001):
    """Single-collision rays leaving at ``theta_d`` and their double-collision partners.

    Returns a list of (b_single, b_double) with ``b_double = None`` when no
    double-collision ray reaches that angle. Rays that only touch the flat wall
    are not paired.
    """
    _check_theta(theta_i)
    singles, doubles = [], []
    for kind, lo, hi in _branches(theta_i, geometry, n_samples):
        if kind is BouncePattern.FLAT_ONLY:
            continue
        roots = _solve_on_branch(lo, hi, theta_d, theta_i, geometry)
        (singles if kind is BouncePattern.ADSORBATE_ONLY else doubles).extend(roots)
    pairs = []
    for i, bs in enumerate(singles):
        pairs.append((bs, doubles[i] if i < len(doubles) else None))
    for bd in doubles[len(singles):]:
        pairs.append((None, bd))
    return pairs


def impact_arc_distance(b_single: float, b_double: float, theta_i: float,
                        geometry: HardWallParams = HardWallParams()) -> float:
    """Angle subtended at the adsorbate centre by the two adsorbate impact points."""
    p1 = trace_ray(b_single, theta_i, geometry).adsorbate_impact_angle()
    p2 = trace_ray(b_double, theta_i, geometry).adsorbate_impact_angle()
    d = abs(p1 - p2) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


def double_collision_sectors(theta_i: float, geometry: HardWallParams = HardWallParams(),
                             seps: SeparatrixSet = None):
    """Angular extent of the adsorbate arcs feeding the two adsorbate-first regions.

    Returns (sector_left, sector_right) in rad, measured between the impact
    points of the bounding separatrix rays.
    """
    if seps is None:
        seps = find_separatrices(theta_i, geometry)
    eps = 1e-9

    def angle(b):
        return trace_ray(b, theta_i, geometry).adsorbate_impact_angle()

    left = abs(angle(seps.F2 + eps) - angle(seps.F3 - eps))
    right = abs(angle(seps.F6 + eps) - angle(seps.F7 - eps))
    return left, right


def sector_formulas(theta_i: float, geometry: HardWallParams = HardWallParams()):
    """Closed forms pi/4 - theta_i/2 - asin(z_r/a) and pi/4 - theta_i/2."""
    base = math.pi / 4 - theta_i / 2
    return base - geometry.corner_angle, base


def ray_rows(ray: Ray):
    """Polyline vertices of a ray as CSV rows."""
    pts = [ray.segments[0][0]] + [seg[1] for seg in ray.segments]
    return [{"b": ray.b, "vertex": j, "x": x, "z": z} for j, (x, z) in enumerate(pts)]


def deflection_rows(bs, rays):
    for b, r in zip(bs, rays):
        yield {
            "b": float(b),
            "theta_d": r.theta_d,
            "n_bounces": r.n_bounces,
            "pattern": r.ray_class.bounce_pattern.value,
            "surfaces": "+".join(s.value for s in r.surfaces),
        }
