"""Bohmian trajectories synthesised from propagated wave fields.

Velocities follow v = (hbar/m) Im(grad psi / psi). The field and its spectral
derivatives are interpolated with tensor-product Lagrange stencils (order 4 is
bicubic). Trajectories advance with RK4 in lock-step with the wave: one step
spans two wave steps so the midpoint stages use the stored middle level.
Near nodes a step is subdivided, with psi interpolated linearly in time.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft as sfft
from scipy import stats
from scipy.spatial import cKDTree

from .constants import HE4, PhysicalConstants
from .errors import DomainError, NearNodeError
from .kinematics import LAUNCH_HEIGHT
from .tdse import Grid2D, Propagator, WaveField

logger = logging.getLogger(__name__)

LINE_OFFSETS = (-3.18, -2.12, -1.06, 0.0, 1.06, 2.12, 3.18)
DEFAULT_TRAP_Z = 5.0
DEFAULT_X_CUT = 10.6


def circulation_quantum(constants: PhysicalConstants = HE4) -> float:
    """2 pi hbar / m in A^2/ps."""
    return 2 * math.pi * constants.hbar_over_m


# -- interpolation -------------------------------------------------------------

def _lagrange_weights(s, order):
    """Weights (N, order) for nodes -order/2+1 .. order/2 at fractional offsets s."""
    nodes = np.arange(order) - (order // 2 - 1)
    s = np.asarray(s, dtype=float)[:, None]
    w = np.ones((s.shape[0], order))
    for m in range(order):
        for l in range(order):
            if l != m:
                w[:, m] *= (s[:, 0] - nodes[l]) / (nodes[m] - nodes[l])
    return w, nodes


def _derivative_wavenumbers(k):
    """First-derivative symbols with the unpaired Nyquist mode dropped."""
    k = k.copy()
    if len(k) % 2 == 0:
        k[len(k) // 2] = 0.0
    return k


class FieldInterpolator:
    """psi, d psi/dx, d psi/dz at arbitrary points of one wave level.

    x is periodic; points closer than half a stencil to the z edges are
    reported as outside.
    """

    def __init__(self, grid: Grid2D, psi: np.ndarray, order: int = 6, psi_hat=None):
        if order < 2 or order % 2:
            raise ValueError("interpolation order must be an even integer >= 2")
        self.grid = grid
        self.order = order
        hat = sfft.fft2(psi) if psi_hat is None else psi_hat
        self.psi = psi
        self.psi_x = sfft.ifft2(1j * _derivative_wavenumbers(grid.kx)[:, None] * hat)
        self.psi_z = sfft.ifft2(1j * _derivative_wavenumbers(grid.kz)[None, :] * hat)
        self.scale = float(np.abs(psi).max())
        stack = np.stack([self.psi, self.psi_x, self.psi_z], axis=-1)
        # (nx, nz - order + 1, 3, order): contiguous z-stencils for one-shot gathers
        self._windows = sliding_window_view(stack, order, axis=1)

    def inside(self, z):
        g = self.grid
        margin = (self.order // 2) * g.dz
        return (z >= g.z_min + margin) & (z <= g.z_max - g.dz - margin)

    def values(self, x, z):
        """(psi, psi_x, psi_z) at points; outside points give NaN."""
        g = self.grid
        x = np.atleast_1d(np.asarray(x, dtype=float))
        z = np.atleast_1d(np.asarray(z, dtype=float))
        ok = self.inside(z) & np.isfinite(x)
        zc = np.where(ok, z, g.z_min + g.lz / 2)
        fx = (np.where(ok, x, 0.0) - g.x_min) / g.dx
        fz = (zc - g.z_min) / g.dz
        ix0 = np.floor(fx).astype(np.int64)
        iz0 = np.floor(fz).astype(np.int64)
        wx, nodes = _lagrange_weights(fx - ix0, self.order)
        wz, _ = _lagrange_weights(fz - iz0, self.order)
        ix = np.mod(ix0[:, None] + nodes[None, :], g.nx)
        iz = np.clip(iz0 + nodes[0], 0, g.nz - self.order)
        patch = self._windows[ix, iz[:, None]]
        v = np.matmul(patch, wz[:, None, :, None])[..., 0]
        v = np.matmul(wx[:, None, :], v)[:, 0, :]
        out = [np.where(ok, v[:, c], np.nan) for c in range(3)]
        return tuple(out)


def _velocity_from_values(psi, psi_x, psi_z, constants):
    c = constants.hbar_over_m
    with np.errstate(divide="ignore", invalid="ignore"):
        vx = c * np.imag(psi_x / psi)
        vz = c * np.imag(psi_z / psi)
    return vx, vz


def velocity_at(psi: WaveField, point, interpolation_order: int = 6,
                node_threshold: float = 1e-8, constants: PhysicalConstants = HE4,
                interpolator: FieldInterpolator = None):
    """Guidance velocity (A/ps) at one point or an (N, 2) array of points.

    Raises:
        NearNodeError: |psi| at a point is below ``node_threshold`` times max |psi|.
        DomainError: a point is too close to the z edges of the grid.
    """
    interp = interpolator or FieldInterpolator(psi.grid, psi.amplitudes, interpolation_order)
    pts = np.atleast_2d(np.asarray(point, dtype=float))
    p, px, pz = interp.values(pts[:, 0], pts[:, 1])
    if np.any(np.isnan(p)):
        raise DomainError("point outside the interpolation domain")
    if np.any(np.abs(p) < node_threshold * interp.scale):
        raise NearNodeError("velocity requested at a wave-function node")
    vx, vz = _velocity_from_values(p, px, pz, constants)
    v = np.stack([vx, vz], axis=-1)
    return v[0] if np.ndim(point) == 1 else v


@dataclass
class VelocityField:
    """Guidance velocity on the grid; NaN where |psi| is below the node threshold."""

    grid: Grid2D
    vx: np.ndarray
    vz: np.ndarray
    t: float


def velocity_field(psi: WaveField, node_threshold: float = 1e-8,
                   constants: PhysicalConstants = HE4) -> VelocityField:
    interp = FieldInterpolator(psi.grid, psi.amplitudes)
    a = psi.amplitudes
    vx, vz = _velocity_from_values(a, interp.psi_x, interp.psi_z, constants)
    node = np.abs(a) < node_threshold * interp.scale
    return VelocityField(psi.grid, np.where(node, np.nan, vx), np.where(node, np.nan, vz), psi.t)


# -- trajectories --------------------------------------------------------------

@dataclass(frozen=True)
class BohmConfig:
    """Trajectory integration settings.

    Attributes:
        order: Lagrange interpolation order (4 = bicubic, 6 = default).
        node_threshold: |psi| / max|psi| below which a point counts as nodal.
        max_displacement: largest allowed move per sub-step, in grid spacings.
        max_subdivisions: sub-steps allowed per trajectory step (power of two).
        record_every: keep every n-th trajectory step in the path.
        trap_z: trapped if below this height at the end ...
        x_cut: ... and farther than this from the adsorbate (periodic distance).
    """

    order: int = 6
    node_threshold: float = 1e-8
    max_displacement: float = 0.5
    max_subdivisions: int = 64
    record_every: int = 1
    trap_z: float = DEFAULT_TRAP_Z
    x_cut: float = DEFAULT_X_CUT


@dataclass
class BohmianTrajectory:
    seed: tuple
    label: str
    t: np.ndarray
    x: np.ndarray
    z: np.ndarray
    loops_completed: int
    min_psi: float
    trapped_flag: bool
    exited: bool
    captures: int

    @property
    def final(self):
        return float(self.x[-1]), float(self.z[-1])


class BohmianEnsemble:
    """Trajectories driven in lock-step by a :class:`Propagator`.

    Use ``start(prop)`` right after the propagator is created (two levels
    available), then call the ensemble after each wave step.
    """

    def __init__(self, seeds, labels=None, config: BohmConfig = BohmConfig(),
                 constants: PhysicalConstants = HE4):
        seeds = np.asarray(seeds, dtype=float).reshape(-1, 2)
        self.seeds = seeds
        self.labels = list(labels) if labels is not None else [""] * len(seeds)
        self.config = config
        self.constants = constants
        n = len(seeds)
        self.x = seeds[:, 0].copy()
        self.z = seeds[:, 1].copy()
        self.active = np.ones(n, dtype=bool)
        self.exited = np.zeros(n, dtype=bool)
        self.min_psi = np.full(n, np.inf)
        self.captures = np.zeros(n, dtype=int)
        self.turning = np.zeros(n)
        self._last_dir = np.full(n, np.nan)
        self._paths_t = []
        self._paths_x = []
        self._paths_z = []
        self._levels = []
        self._n_steps = 0
        self.grid = None

    # wave-level bookkeeping
    def start(self, prop: Propagator):
        self.grid = prop.grid
        self.dt_wave = prop.dt
        prev = prop.previous
        self._levels = [(prev.t, self._interp(prev.amplitudes)),
                        (prop.t, self._interp(prop.current_view()))]
        self._record(prev.t, force=True)

    def _interp(self, psi):
        return FieldInterpolator(self.grid, psi.copy(), self.config.order)

    def __call__(self, prop: Propagator):
        if not self.active.any():
            return
        self._levels.append((prop.t, self._interp(prop.current_view())))
        if len(self._levels) == 3:
            self._rk4_step()
            self._levels = [self._levels[2]]

    def finish(self, prop: Propagator = None):
        if self._levels:
            self._record(self._levels[0][0], force=True)

    def _record(self, t, force=False):
        if force or self._n_steps % self.config.record_every == 0:
            if self._paths_t and self._paths_t[-1] == t:
                return
            self._paths_t.append(t)
            self._paths_x.append(self.x.copy())
            self._paths_z.append(self.z.copy())

    # velocity at fractional time s in [0, 2] wave steps across the 3 stored levels
    def _velocity(self, idx, x, z, s):
        s = np.broadcast_to(np.asarray(s, dtype=float), np.shape(x))
        psi = np.zeros(np.shape(x), dtype=complex)
        px = np.zeros_like(psi)
        pz = np.zeros_like(psi)
        for level, (_, it) in enumerate(self._levels):
            w = np.clip(1.0 - np.abs(s - level), 0.0, 1.0)
            sel = np.flatnonzero(w > 0)
            if sel.size == 0:
                continue
            vals = it.values(x[sel], z[sel])
            psi[sel] += w[sel] * vals[0]
            px[sel] += w[sel] * vals[1]
            pz[sel] += w[sel] * vals[2]
        scale = max(it.scale for _, it in self._levels)
        amp = np.abs(psi) / scale
        vx, vz = _velocity_from_values(psi, px, pz, self.constants)
        return vx, vz, amp

    def _rk4_single(self, idx, x, z, s0, ds, h):
        k1 = self._velocity(idx, x, z, s0)
        k2 = self._velocity(idx, x + 0.5 * h * k1[0], z + 0.5 * h * k1[1], s0 + 0.5 * ds)
        k3 = self._velocity(idx, x + 0.5 * h * k2[0], z + 0.5 * h * k2[1], s0 + 0.5 * ds)
        k4 = self._velocity(idx, x + h * k3[0], z + h * k3[1], s0 + ds)
        nx = x + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        nz = z + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        amp = np.fmin(np.fmin(k1[2], k2[2]), np.fmin(k3[2], k4[2]))
        speed = np.fmax(np.hypot(k1[0], k1[1]), np.hypot(k4[0], k4[1]))
        return nx, nz, amp, speed

    def _rk4_step(self):
        cfg = self.config
        g = self.grid
        h = 2 * self.dt_wave
        step_len = cfg.max_displacement * min(g.dx, g.dz)
        idx = np.flatnonzero(self.active)
        x, z = self.x[idx], self.z[idx]
        nx, nz, amp, speed = self._rk4_single(idx, x, z, np.zeros(len(idx)), 2.0, h)
        bad = ~np.isfinite(nx + nz) | (amp < cfg.node_threshold) | (speed * h > step_len)
        nsub = 2
        todo = np.flatnonzero(bad)
        while todo.size and nsub <= cfg.max_subdivisions:
            sx, sz = x[todo].copy(), z[todo].copy()
            ok = np.ones(todo.size, dtype=bool)
            amp_min = np.full(todo.size, np.inf)
            for j in range(nsub):
                ds = 2.0 / nsub
                tx, tz, a, sp = self._rk4_single(idx[todo], sx, sz,
                                                 np.full(todo.size, j * ds), ds, h / nsub)
                ok &= np.isfinite(tx + tz) & (sp * h / nsub <= step_len)
                amp_min = np.fmin(amp_min, a)
                sx = np.where(np.isfinite(tx), tx, sx)
                sz = np.where(np.isfinite(tz), tz, sz)
            nx[todo], nz[todo] = sx, sz
            amp[todo] = amp_min
            todo = todo[~ok]
            nsub *= 2
        if todo.size:
            # still unresolved: vortex capture, take capped moves
            self.captures[idx[todo]] += 1
            dx_ = nx[todo] - x[todo]
            dz_ = nz[todo] - z[todo]
            d = np.hypot(dx_, dz_)
            with np.errstate(invalid="ignore", divide="ignore"):
                f = np.where((d > step_len) | ~np.isfinite(d), step_len / d, 1.0)
            f = np.where(np.isfinite(f), f, 0.0)
            nx[todo] = x[todo] + np.nan_to_num(dx_) * f
            nz[todo] = z[todo] + np.nan_to_num(dz_) * f
        self.min_psi[idx] = np.fmin(self.min_psi[idx], np.nan_to_num(amp, nan=0.0))

        # turning of the direction of motion, for loop counting
        ang = np.arctan2(nz - z, nx - x)
        last = self._last_dir[idx]
        moved = np.hypot(nx - x, nz - z) > 0
        dang = np.where(np.isfinite(last) & moved,
                        np.angle(np.exp(1j * (ang - np.nan_to_num(last)))), 0.0)
        self.turning[idx] += dang
        self._last_dir[idx] = np.where(moved, ang, last)

        out = ~self._levels[0][1].inside(nz)
        self.x[idx] = np.where(out, x, nx)
        self.z[idx] = np.where(out, z, nz)
        self.exited[idx[out]] = True
        self.active[idx[out]] = False
        self._n_steps += 1
        self._record(self._levels[2][0])

    def trajectories(self):
        t = np.array(self._paths_t)
        X = np.array(self._paths_x)
        Z = np.array(self._paths_z)
        cfg = self.config
        L = self.grid.lx if self.grid is not None else math.inf
        out = []
        for j in range(len(self.seeds)):
            xw = (X[-1, j] - self.grid.x_min) % L + self.grid.x_min if self.grid else X[-1, j]
            trapped = bool(Z[-1, j] < cfg.trap_z and abs(xw) > cfg.x_cut)
            out.append(BohmianTrajectory(
                seed=(float(self.seeds[j, 0]), float(self.seeds[j, 1])), label=self.labels[j],
                t=t, x=X[:, j], z=Z[:, j],
                loops_completed=int(abs(self.turning[j]) // (2 * math.pi)),
                min_psi=float(self.min_psi[j]), trapped_flag=trapped,
                exited=bool(self.exited[j]), captures=int(self.captures[j])))
        return out

    def positions(self):
        return np.stack([self.x, self.z], axis=-1)


def integrate_bohmian(seeds, psi0: WaveField, model, dt: float, n_steps: int,
                      config: BohmConfig = BohmConfig(), labels=None,
                      constants: PhysicalConstants = HE4, **propagator_kwargs):
    """Propagate ``psi0`` for ``n_steps`` wave steps while guiding ``seeds``.

    Returns:
        (list of BohmianTrajectory, final WaveField)
    """
    prop = Propagator(psi0, model, dt, constants, **propagator_kwargs)
    ens = BohmianEnsemble(seeds, labels, config, constants)
    ens.start(prop)
    prop.run(n_steps - 1, callback=ens)
    ens.finish(prop)
    return ens.trajectories(), prop.current


# -- seeds ----------------------------------------------------------------------

def seed_lines(z0: float = LAUNCH_HEIGHT, offsets=LINE_OFFSETS, n_per_line: int = 41,
               x_range=(-DEFAULT_X_CUT, DEFAULT_X_CUT)):
    """Seeds on lines parallel to the surface; labels give the line offset."""
    xs = np.linspace(x_range[0], x_range[1], n_per_line)
    seeds, labels = [], []
    for off in offsets:
        for x in xs:
            seeds.append((x, z0 + off))
            labels.append(f"{off:+.2f}")
    return np.array(seeds), labels


def _inverse_cdf(edges, mass, u):
    cdf = np.concatenate([[0.0], np.cumsum(mass)])
    cdf /= cdf[-1]
    return np.interp(u, cdf, edges)


def born_seeds(psi: WaveField, n: int, method: str = "quantile", rng=None):
    """Points distributed as |psi|^2 (piecewise constant over grid cells).

    ``method="quantile"`` maps an unscrambled Halton sequence through the x
    marginal and the conditional z distribution of the selected column;
    ``"random"`` uses uniform variates from ``rng`` instead.
    """
    g = psi.grid
    rho = psi.density
    if method == "quantile":
        u = stats.qmc.Halton(d=2, scramble=False).random(n + 1)[1:]
    elif method == "random":
        rng = np.random.default_rng(rng)
        u = rng.random((n, 2))
    else:
        raise ValueError(f"unknown sampling method {method!r}")
    xe = g.x_min - g.dx / 2 + g.dx * np.arange(g.nx + 1)
    ze = g.z_min - g.dz / 2 + g.dz * np.arange(g.nz + 1)
    x = _inverse_cdf(xe, rho.sum(axis=1), u[:, 0])
    col = np.clip(np.floor((x - xe[0]) / g.dx).astype(int), 0, g.nx - 1)
    z = np.empty(n)
    for c in np.unique(col):
        sel = col == c
        z[sel] = _inverse_cdf(ze, rho[c], u[sel, 1])
    return np.stack([x, z], axis=-1)


def uniform_seeds(psi: WaveField, n: int, rng=None, box=None):
    """Negative control: seeds uniform over ``box`` (default: the whole grid)."""
    g = psi.grid
    rng = np.random.default_rng(rng)
    x0, x1, z0, z1 = box or (g.x_min, g.x_max, g.z_min, g.z_max)
    return np.stack([rng.uniform(x0, x1, n), rng.uniform(z0, z1, n)], axis=-1)


# -- ensemble statistics ----------------------------------------------------------

def _bin_edges(g: Grid2D, bins):
    bx, bz = bins
    if g.nx % bx or g.nz % bz:
        raise ValueError(f"bins {bins} must divide the grid {g.shape}")
    xe = g.x_min - g.dx / 2 + (g.lx / bx) * np.arange(bx + 1)
    ze = g.z_min - g.dz / 2 + (g.lz / bz) * np.arange(bz + 1)
    return xe, ze


def ensemble_density_check(trajectories, psi_final: WaveField, bins=(64, 64)) -> float:
    """L1 distance between the endpoint histogram and binned |psi_final|^2.

    Bins tile the whole grid, each aggregating whole grid cells; x is wrapped
    into the periodic cell. Endpoints outside the z range count as missing
    probability.
    """
    g = psi_final.grid
    if len(trajectories) and isinstance(trajectories[0], BohmianTrajectory):
        pts = np.array([tr.final for tr in trajectories])
    else:
        pts = np.asarray(trajectories, dtype=float).reshape(-1, 2)
    n = len(pts)
    if n < 2000:
        warnings.warn(f"only {n} trajectories; binned statistics are noisy", stacklevel=2)
    bx, bz = bins
    xe, ze = _bin_edges(g, bins)
    xw = (pts[:, 0] - xe[0]) % g.lx + xe[0]
    h, _, _ = np.histogram2d(xw, pts[:, 1], bins=[xe, ze])
    h /= n
    rho = psi_final.density
    p = rho.reshape(bx, g.nx // bx, bz, g.nz // bz).sum(axis=(1, 3))
    p /= rho.sum()
    return float(np.abs(h - p).sum() + (1.0 - h.sum()))


def min_pairwise_separation(trajectories) -> float:
    """Smallest distance between any two trajectories at a common recorded time."""
    X = np.stack([tr.x for tr in trajectories], axis=1)
    Z = np.stack([tr.z for tr in trajectories], axis=1)
    best = math.inf
    for j in range(X.shape[0]):
        pts = np.stack([X[j], Z[j]], axis=-1)
        d, _ = cKDTree(pts).query(pts, k=2)
        best = min(best, float(d[:, 1].min()))
    return best


# -- vortices ---------------------------------------------------------------------

@dataclass
class VortexNode:
    x: float
    z: float
    t: float
    winding: int
    circulation: float
    indeterminate: bool = False


@dataclass
class VortexReport:
    nodes: list = field(default_factory=list)

    def __len__(self):
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def loop_circulation(interp: FieldInterpolator, x0: float, z0: float, radius: float,
                     n_points: int = 64, constants: PhysicalConstants = HE4) -> float:
    """Line integral of the guidance velocity around a circle (A^2/ps)."""
    a = 2 * np.pi * np.arange(n_points) / n_points
    xs = x0 + radius * np.cos(a)
    zs = z0 + radius * np.sin(a)
    p, px, pz = interp.values(xs, zs)
    vx, vz = _velocity_from_values(p, px, pz, constants)
    tx, tz = -np.sin(a), np.cos(a)
    return float(np.sum(vx * tx + vz * tz) * radius * 2 * np.pi / n_points)


def refine_node(interp: FieldInterpolator, x0: float, z0: float, max_iter: int = 20,
                tol: float = 1e-10):
    """Newton iteration for psi(x, z) = 0 starting at (x0, z0).

    Returns (x, z, converged). Steps are capped at one grid spacing.
    """
    g = interp.grid
    cap = max(g.dx, g.dz)
    x, z = x0, z0
    for _ in range(max_iter):
        p, px, pz = (v[0] for v in interp.values(x, z))
        if not np.isfinite(p):
            return x0, z0, False
        jac = np.array([[px.real, pz.real], [px.imag, pz.imag]])
        try:
            step = np.linalg.solve(jac, -np.array([p.real, p.imag]))
        except np.linalg.LinAlgError:
            return x, z, False
        norm = math.hypot(*step)
        if norm > cap:
            step *= cap / norm
        x, z = x + step[0], z + step[1]
        if norm < tol:
            return x, z, True
    return x, z, False


def detect_vortices(psi: WaveField, region=None, interpolation_order: int = 6,
                    radius_cells: float = 0.75, ambiguity: float = 0.9,
                    constants: PhysicalConstants = HE4) -> VortexReport:
    """Nodes with non-zero phase winding inside ``region = (x0, x1, z0, z1)``.

    The winding of every grid plaquette is summed from wrapped phase steps.
    Plaquettes with a phase step within ``(1 - ambiguity) pi`` of pi are
    re-checked on a finer interpolated loop and flagged indeterminate if the
    result still is not an integer. Node positions are refined by Newton
    iteration on the interpolated field; the circulation is an independent
    quadrature of v around a circle of ``radius_cells`` grid spacings centred
    on the refined node.
    """
    g = psi.grid
    x0, x1, z0, z1 = region or (g.x_min, g.x_max, g.z_min, g.z_max)
    xs, zs = g.x, g.z
    ix = np.flatnonzero((xs >= x0) & (xs <= x1))
    iz = np.flatnonzero((zs >= z0) & (zs <= z1))
    if len(ix) < 2 or len(iz) < 2:
        return VortexReport([])
    sub = psi.amplitudes[np.ix_(ix, iz)]
    ph = np.angle(sub)
    d1 = _wrap(ph[1:, :-1] - ph[:-1, :-1])
    d2 = _wrap(ph[1:, 1:] - ph[1:, :-1])
    d3 = _wrap(ph[:-1, 1:] - ph[1:, 1:])
    d4 = _wrap(ph[:-1, :-1] - ph[:-1, 1:])
    wind = (d1 + d2 + d3 + d4) / (2 * np.pi)
    n_int = np.rint(wind).astype(int)
    steps = np.stack([d1, d2, d3, d4])
    risky = np.abs(steps).max(axis=0) > ambiguity * np.pi
    interp = FieldInterpolator(g, psi.amplitudes, interpolation_order)
    radius = radius_cells * min(g.dx, g.dz)
    quantum = circulation_quantum(constants)
    nodes = []
    for a, b in zip(*np.nonzero((n_int != 0) | risky)):
        xc = xs[ix[a]] + g.dx / 2
        zc = zs[iz[b]] + g.dz / 2
        n = int(n_int[a, b])
        indeterminate = False
        if risky[a, b]:
            # finer loop around the plaquette
            m = 64
            ang = 2 * np.pi * np.arange(m + 1) / m
            r = 0.5 * math.hypot(g.dx, g.dz)
            p, _, _ = interp.values(xc + r * np.cos(ang), zc + r * np.sin(ang))
            w = np.sum(_wrap(np.diff(np.angle(p)))) / (2 * np.pi)
            n = int(np.rint(w))
            indeterminate = abs(w - n) > 0.05 or np.abs(_wrap(np.diff(np.angle(p)))).max() > 0.5 * np.pi
        if n == 0 and not indeterminate:
            continue
        xn, zn, ok = refine_node(interp, xc, zc)
        if not ok or abs(xn - xc) > g.dx or abs(zn - zc) > g.dz:
            xn, zn = xc, zc
        if any(abs(m.x - xn) < 0.5 * g.dx and abs(m.z - zn) < 0.5 * g.dz for m in nodes):
            continue  # same node seen from a neighbouring plaquette
        circ = loop_circulation(interp, xn, zn, radius, constants=constants)
        nodes.append(VortexNode(x=float(xn), z=float(zn), t=psi.t, winding=n,
                                circulation=circ, indeterminate=indeterminate))
    return VortexReport(nodes)
