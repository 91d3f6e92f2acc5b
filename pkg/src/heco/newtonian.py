"""Classical trajectories on the smooth He-CO/Pt(111) potential.

Hamilton's equations are integrated with fixed-step RK4. All trajectories of a
scan advance in lock-step as numpy arrays; each one is retired as soon as its
asymptotic fate is known:

* it rises above ``escape_z`` with p_z > 0, or
* it is beyond ``x_cut`` and moving outwards, where V separates into the
  Morse term plus a negligible tail, so E_z = p_z^2/2m + V_Pt(z) is frozen.
  E_z < 0 there means surface trapping.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .constants import HE4, PhysicalConstants
from .errors import DomainError, IntegrationError
from .kinematics import LAUNCH_HEIGHT, initial_conditions
from .potential import (InteractionModel, Variant, eval_gradient, eval_potential,
                        morse_potential)

logger = logging.getLogger(__name__)

B_RANGE = (-10.6, 10.6)

ESCAPED = 0
TRAPPED = 1
TIMEOUT = 2


@dataclass(frozen=True)
class IntegratorConfig:
    """Step control and asymptotic-region settings.

    Attributes:
        dt: RK4 step (ps).
        t_max: hard stop (ps).
        escape_z: height above which an upward trajectory counts as reflected (A).
        x_cut: half-width of the adsorbate influence region (A).
        follow_trapped: keep integrating trapped trajectories until ``t_max``
            instead of retiring them once classified.
        record_every: store the phase-space point every n steps (0 = endpoints only).
        v_core: potential energy (meV) treated as an overshoot into the LJ core;
            the offending step is redone with halved sub-steps.
        max_halvings: sub-step refinements allowed before giving up.
    """

    dt: float = 1e-4
    t_max: float = 50.0
    escape_z: float = LAUNCH_HEIGHT
    x_cut: float = 10.6
    follow_trapped: bool = False
    record_every: int = 0
    v_core: float = 1e6
    max_halvings: int = 20

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if not self.x_cut > 0:
            raise ValueError("x_cut must be positive")


@dataclass
class TrajectoryRecord:
    """One classical trajectory.

    ``t, x, z, px, pz`` hold the recorded time series (at least start and end).
    ``theta_d`` is the asymptotic deflection angle, NaN when trapped;
    ``theta_inst`` is the instantaneous direction at the last step.
    """

    b: float
    theta_i: float
    E_i: float
    t: np.ndarray
    x: np.ndarray
    z: np.ndarray
    px: np.ndarray
    pz: np.ndarray
    energy: np.ndarray
    status: int
    theta_d: float
    theta_inst: float
    E_z: float
    E_x: float

    @property
    def trapped(self) -> bool:
        return self.status == TRAPPED

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energy - self.energy[0])) / self.E_i)


@dataclass
class DeflectionFunction:
    """Asymptotic outcome sampled over impact parameter."""

    b: np.ndarray
    theta_d: np.ndarray
    trapped: np.ndarray
    E_z: np.ndarray
    E_x: np.ndarray
    t_final: np.ndarray
    theta_inst: np.ndarray
    theta_i: float
    E_i: float
    variant: Variant
    status: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.b)

    def to_rows(self):
        for j in range(len(self.b)):
            yield {
                "b": self.b[j],
                "theta_d": self.theta_d[j],
                "trapped_flag": int(self.trapped[j]),
                "E_z": self.E_z[j],
                "E_x": self.E_x[j],
            }


@dataclass
class EnergyDiagram:
    """Asymptotic perpendicular energy E_z(b)."""

    b: np.ndarray
    E_z: np.ndarray
    theta_d: np.ndarray
    trapped: np.ndarray
    theta_i: float
    E_i: float
    variant: Variant

    @property
    def incident_perpendicular(self) -> float:
        return self.E_i * math.cos(self.theta_i) ** 2

    def minima(self):
        """Interior local minima of E_z over untrapped samples (rainbow candidates)."""
        return _local_extrema(self.b, self.E_z, ~self.trapped, kind="min")

    def maxima(self):
        return _local_extrema(self.b, self.E_z, ~self.trapped, kind="max")

    def trapping_intervals(self):
        """Impact-parameter intervals with E_z < 0, bounded by linear zero crossings."""
        neg = self.E_z < 0
        return _intervals_from_mask(self.b, neg, values=self.E_z)


@dataclass
class Rainbow:
    b: float
    theta_R: float
    delta_K_R: float
    kind: str


@dataclass
class RainbowReport:
    extrema: list

    def __len__(self):
        return len(self.extrema)

    def __iter__(self):
        return iter(self.extrema)


class _State:
    __slots__ = ("x", "z", "px", "pz")

    def __init__(self, x, z, px, pz):
        self.x, self.z, self.px, self.pz = x, z, px, pz


def _rhs(model, mass, x, z, px, pz):
    gx, gz = eval_gradient(model, x, z)
    return px / mass, pz / mass, -gx, -gz


def _rk4(model, mass, x, z, px, pz, h):
    k1 = _rhs(model, mass, x, z, px, pz)
    hh = 0.5 * h
    k2 = _rhs(model, mass, x + hh * k1[0], z + hh * k1[1], px + hh * k1[2], pz + hh * k1[3])
    k3 = _rhs(model, mass, x + hh * k2[0], z + hh * k2[1], px + hh * k2[2], pz + hh * k2[3])
    k4 = _rhs(model, mass, x + h * k3[0], z + h * k3[1], px + h * k3[2], pz + h * k3[3])
    s = h / 6.0
    return (x + s * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
            z + s * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
            px + s * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]),
            pz + s * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3]))


def _safe_step(model, mass, x, z, px, pz, h, config):
    """RK4 step; sub-divides entries whose end point lands in the LJ core."""
    with np.errstate(over="ignore", invalid="ignore"):
        nx, nz, npx, npz = _rk4(model, mass, x, z, px, pz, h)
        bad = ~np.isfinite(nx + nz + npx + npz)
        bad |= ~(eval_potential(model, np.where(bad, 0.0, nx), np.where(bad, 10.0, nz))
                 < config.v_core)
    if not bad.any():
        return nx, nz, npx, npz
    idx = np.flatnonzero(bad)
    for halving in range(1, config.max_halvings + 1):
        n_sub = 2 ** halving
        sx, sz, spx, spz = x[idx], z[idx], px[idx], pz[idx]
        ok = np.ones(len(idx), dtype=bool)
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(n_sub):
                sx, sz, spx, spz = _rk4(model, mass, sx, sz, spx, spz, h / n_sub)
                fin = np.isfinite(sx + sz + spx + spz)
                ok &= fin
                ok &= eval_potential(model, np.where(fin, sx, 0.0),
                                     np.where(fin, sz, 10.0)) < config.v_core
        if ok.all():
            nx[idx], nz[idx], npx[idx], npz[idx] = sx, sz, spx, spz
            return nx, nz, npx, npz
    raise IntegrationError(
        f"step still enters the repulsive core after {config.max_halvings} halvings")


def _asymptotics(model, mass, E_total, x, z, px, pz, status):
    """Asymptotic (theta_d, E_z, E_x) from the state at retirement."""
    E_z = np.where(status == ESCAPED, E_total - px * px / (2 * mass),
                   pz * pz / (2 * mass) + morse_potential(model.morse, z))
    E_x = E_total - E_z
    with np.errstate(invalid="ignore"):
        theta = np.arctan2(np.sign(px) * np.sqrt(np.clip(E_x, 0, None)),
                           np.sqrt(np.clip(E_z, 0, None)))
    theta = np.where(status == ESCAPED, theta, np.nan)
    theta = np.where((status != ESCAPED) & (E_z >= 0) & (status != TIMEOUT),
                     np.arctan2(np.sign(px) * np.sqrt(np.clip(E_x, 0, None)),
                                np.sqrt(np.clip(E_z, 0, None))), theta)
    return theta, E_z, E_x


def integrate_many(b, theta_i, E_i, model: InteractionModel,
                   config: IntegratorConfig = IntegratorConfig(),
                   constants: PhysicalConstants = HE4, z0: float = LAUNCH_HEIGHT):
    """Integrate one trajectory per impact parameter in lock-step.

    Returns a dict of arrays (final state, asymptotics, status) plus, when
    ``config.record_every`` is set, the recorded time series per trajectory.
    """
    if model.variant is Variant.HARD_WALL:
        raise DomainError("Newtonian dynamics needs a smooth potential variant")
    b = np.atleast_1d(np.asarray(b, dtype=float))
    (x, z), (px, pz) = initial_conditions(b, theta_i, E_i, z0, constants)
    x, z, px, pz = x.copy(), z.copy(), px.copy(), pz.copy()
    mass = constants.mass
    n = len(b)
    E_total = px * px / (2 * mass) + pz * pz / (2 * mass) + eval_potential(model, x, z)

    status = np.full(n, -1)
    t_final = np.zeros(n)
    done = np.zeros(n, dtype=bool)
    classified = np.full(n, -1)
    records = None
    if config.record_every:
        records = [[(0.0, x[j], z[j], px[j], pz[j])] for j in range(n)]

    step = 0
    t = 0.0
    n_steps = int(math.ceil(config.t_max / config.dt))
    while step < n_steps:
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        h = min(config.dt, config.t_max - t)
        nx_, nz_, npx_, npz_ = _safe_step(model, mass, x[act], z[act], px[act], pz[act], h,
                                          config)
        x[act], z[act], px[act], pz[act] = nx_, nz_, npx_, npz_
        step += 1
        t = step * config.dt

        if records is not None and step % config.record_every == 0:
            for j in act:
                records[j].append((t, x[j], z[j], px[j], pz[j]))

        up = (z[act] > config.escape_z) & (pz[act] > 0)
        outward = (np.abs(x[act]) > config.x_cut) & (x[act] * px[act] > 0)
        e_perp = pz[act] ** 2 / (2 * mass) + morse_potential(model.morse, z[act])
        bound = outward & (e_perp < 0)
        # separable region, unbound: fate is escape
        free_out = outward & ~bound
        newly_trapped = bound & (classified[act] < 0)
        classified[act[newly_trapped]] = TRAPPED

        finish_escape = up | free_out
        finish_trap = bound & (not config.follow_trapped)
        fin = finish_escape | finish_trap
        ids = act[fin]
        status[ids] = np.where(finish_escape[fin], ESCAPED, TRAPPED)
        # escape through the separable region is reported from E_z directly
        sep = act[free_out & ~up]
        status[sep] = -2
        t_final[ids] = t
        done[ids] = True

    left = ~done
    status[left] = np.where(classified[left] == TRAPPED, TRAPPED, TIMEOUT)
    t_final[left] = t

    is_sep = status == -2
    status_eff = np.where(is_sep, TRAPPED, status)
    theta, E_z, E_x = _asymptotics(model, mass, E_total, x, z, px, pz, status_eff)
    status = np.where(is_sep, ESCAPED, status)
    # timeouts that never reached an asymptotic region stay bound near the adsorbate
    trapped = status != ESCAPED
    theta = np.where(trapped, np.nan, theta)
    theta_inst = np.arctan2(px, pz)

    if records is not None:
        for j in range(n):
            if records[j][-1][0] != t_final[j]:
                records[j].append((t_final[j], x[j], z[j], px[j], pz[j]))

    return {
        "b": b, "x": x, "z": z, "px": px, "pz": pz, "status": status,
        "trapped": trapped, "theta_d": theta, "theta_inst": theta_inst,
        "E_z": E_z, "E_x": E_x, "t_final": t_final, "E_total": E_total,
        "records": records,
    }


def integrate_trajectory(b: float, theta_i: float, E_i: float, model: InteractionModel,
                         config: IntegratorConfig = IntegratorConfig(record_every=10),
                         constants: PhysicalConstants = HE4,
                         z0: float = LAUNCH_HEIGHT) -> TrajectoryRecord:
    """Integrate Hamilton's equations for a single impact parameter."""
    if not config.record_every:
        config = IntegratorConfig(**{**config.__dict__, "record_every": 1})
    out = integrate_many([b], theta_i, E_i, model, config, constants, z0)
    rec = np.array(out["records"][0])
    t, x, z, px, pz = rec.T
    energy = (px ** 2 + pz ** 2) / (2 * constants.mass) + eval_potential(model, x, z)
    return TrajectoryRecord(
        b=float(b), theta_i=theta_i, E_i=E_i, t=t, x=x, z=z, px=px, pz=pz, energy=energy,
        status=int(out["status"][0]), theta_d=float(out["theta_d"][0]),
        theta_inst=float(out["theta_inst"][0]), E_z=float(out["E_z"][0]),
        E_x=float(out["E_x"][0]))


def _check_b_range(b_range):
    lo, hi = b_range
    if lo < B_RANGE[0] - 1e-12 or hi > B_RANGE[1] + 1e-12 or not lo < hi:
        raise DomainError(f"b_range {b_range} must lie inside {B_RANGE}")


def deflection_scan(theta_i: float, E_i: float, model: InteractionModel,
                    b_range=B_RANGE, n_samples: int = 2001,
                    config: IntegratorConfig = IntegratorConfig(),
                    constants: PhysicalConstants = HE4) -> DeflectionFunction:
    """Asymptotic deflection angle over a uniform impact-parameter grid."""
    _check_b_range(b_range)
    if config.record_every:
        config = IntegratorConfig(**{**config.__dict__, "record_every": 0})
    b = np.linspace(b_range[0], b_range[1], n_samples)
    out = integrate_many(b, theta_i, E_i, model, config, constants)
    return DeflectionFunction(
        b=b, theta_d=out["theta_d"], trapped=out["trapped"], E_z=out["E_z"],
        E_x=out["E_x"], t_final=out["t_final"], theta_inst=out["theta_inst"],
        theta_i=theta_i, E_i=E_i, variant=model.variant, status=out["status"])


def energy_diagram(theta_i: float, E_i: float, model: InteractionModel,
                   b_range=B_RANGE, n_samples: int = 2001,
                   config: IntegratorConfig = IntegratorConfig(),
                   constants: PhysicalConstants = HE4, df: DeflectionFunction = None):
    """Asymptotic E_z over impact parameter (reuses ``df`` when given)."""
    if df is None:
        df = deflection_scan(theta_i, E_i, model, b_range, n_samples, config, constants)
    return EnergyDiagram(b=df.b, E_z=df.E_z, theta_d=df.theta_d, trapped=df.trapped,
                         theta_i=df.theta_i, E_i=df.E_i, variant=df.variant)


def _local_extrema(b, y, valid, kind):
    """Three-point extrema on runs of valid samples, refined by a parabola."""
    out = []
    for lo, hi in _runs(valid):
        if hi - lo < 3:
            continue
        for j in range(lo + 1, hi - 1):
            y0, y1, y2 = y[j - 1], y[j], y[j + 1]
            is_max = y1 > y0 and y1 >= y2
            is_min = y1 < y0 and y1 <= y2
            if (kind == "max" and is_max) or (kind == "min" and is_min):
                out.append(_parabola_vertex(b[j - 1:j + 2], y[j - 1:j + 2]))
    return out


def _parabola_vertex(bs, ys):
    h = bs[1] - bs[0]
    denom = ys[0] - 2 * ys[1] + ys[2]
    if denom == 0:
        return float(bs[1]), float(ys[1])
    delta = 0.5 * (ys[0] - ys[2]) / denom
    delta = max(-1.0, min(1.0, delta))
    return float(bs[1] + delta * h), float(ys[1] - 0.25 * (ys[0] - ys[2]) * delta)


def _runs(mask):
    """Half-open index ranges of consecutive True entries."""
    mask = np.asarray(mask, dtype=bool)
    edges = np.diff(np.concatenate([[0], mask.astype(int), [0]]))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    return list(zip(starts, stops))


def _intervals_from_mask(b, mask, values=None):
    """Intervals of b covered by ``mask``; edges at zero crossings of ``values``
    when given, else at midpoints between samples."""
    out = []
    n = len(b)
    for lo, hi in _runs(mask):
        def edge(i, j):
            if values is not None and values[i] != values[j]:
                f = values[i] / (values[i] - values[j])
                return float(b[i] + f * (b[j] - b[i]))
            return float(0.5 * (b[i] + b[j]))
        left = float(b[0]) if lo == 0 else edge(lo - 1, lo)
        right = float(b[-1]) if hi == n else edge(hi - 1, hi)
        out.append((left, right))
    return out


def find_rainbows(df: DeflectionFunction, E_i: float = None,
                  constants: PhysicalConstants = HE4,
                  min_excursion: float = math.radians(1.0)) -> RainbowReport:
    """Interior extrema of theta_d(b) on smooth (untrapped) branches.

    Extrema within ``min_excursion`` of the specular angle come from the far
    van der Waals tail and are not reported.
    """
    E_i = df.E_i if E_i is None else E_i
    k = constants.wavenumber(E_i)
    valid = ~df.trapped & np.isfinite(df.theta_d)
    extrema = []
    for kind in ("max", "min"):
        for lo, hi in _runs(valid):
            if hi - lo < 3:
                logger.warning("smooth branch b in [%g, %g] too short for rainbow search",
                               df.b[lo], df.b[hi - 1])
        for b_star, th in _local_extrema(df.b, df.theta_d, valid, kind):
            if abs(th - df.theta_i) < min_excursion:
                continue
            extrema.append(Rainbow(b=b_star, theta_R=th,
                                   delta_K_R=k * (math.sin(th) - math.sin(df.theta_i)),
                                   kind=kind))
    extrema.sort(key=lambda r: r.b)
    return RainbowReport(extrema)


def newton_homologous_pairs(E_z_target: float, diagram: EnergyDiagram):
    """Impact parameters sharing the asymptotic E_z, grouped into homologous pairs.

    Crossings of the sampled diagram with E_z = target are located by linear
    interpolation. Equal E_z with the same sign of the parallel momentum means
    the same outgoing direction; crossings are grouped by that sign and paired
    in order of b.
    """
    b, e = diagram.b, diagram.E_z
    f = e - E_z_target
    crossings = []
    for j in range(len(b) - 1):
        if f[j] == 0:
            crossings.append((float(b[j]), j))
        elif f[j] * f[j + 1] < 0:
            s = f[j] / (f[j] - f[j + 1])
            crossings.append((float(b[j] + s * (b[j + 1] - b[j])), j))
    if not crossings:
        return []
    direction = []
    for bc, j in crossings:
        th = diagram.theta_d[j] if np.isfinite(diagram.theta_d[j]) else diagram.theta_d[j + 1]
        if not np.isfinite(th):
            # trapped: sign of travel follows the side of the adsorbate it leaves by
            th = math.copysign(1.0, bc)
        direction.append(math.copysign(1.0, th) if th != 0 else 0.0)
    groups = {}
    for (bc, _), d in zip(crossings, direction):
        groups.setdefault(d, []).append(bc)
    pairs = []
    for d in sorted(groups):
        bs = groups[d]
        for i in range(0, len(bs), 2):
            pairs.append(tuple(bs[i:i + 2]))
    return pairs


def trapping_summary(df: DeflectionFunction):
    """Trapped impact-parameter intervals and the trapped fraction of the scan."""
    intervals = _intervals_from_mask(df.b, df.trapped)
    fraction = float(np.count_nonzero(df.trapped)) / len(df.b)
    return {"intervals": intervals, "fraction": fraction}
