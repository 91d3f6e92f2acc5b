"""Two-dimensional wave-packet propagation over the adsorbate potential.

The x direction is periodic: the computational cell is one period of an
artificial adsorbate lattice, and an evenly spaced comb of Gaussians that
exactly fills the period is a plane wave along x. The z direction is also
treated spectrally; the substrate side is closed by the repulsive wall and
the vacuum side must be tall enough (or absorbed) for the run time.

Time stepping is the three-level second-order difference scheme

    psi(t + dt) = psi(t - dt) - 2 i dt / hbar  H psi(t)

with the kinetic energy applied in Fourier space.
"""
from __future__ import annotations

import logging
import math
import queue
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy import linalg

from .constants import HE4, PhysicalConstants
from .errors import (DiscretizationMismatchError, DomainError, NormDriftError,
                     StabilityError, StaleExtractionError)
from .kinematics import LAUNCH_HEIGHT
from .potential import InteractionModel, MorseParams, Variant, morse_potential
from .spectrum import DiffractionSpectrum

logger = logging.getLogger(__name__)

DEFAULT_V_CAP = 150.0  # meV, potential ceiling on the grid
SNAPSHOT_MAGIC = b"WFLD"
SNAPSHOT_VERSION = 1
SNAPSHOT_HEADER_SIZE = 128
_HEADER = struct.Struct("<4sIII5d")


def _is_pow2(n):
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid2D:
    """Uniform periodic grid; ``x_max`` and ``z_max`` are excluded end points.

    Arrays on the grid have shape (nx, nz) with z varying fastest.
    """

    x_min: float
    x_max: float
    z_min: float
    z_max: float
    nx: int
    nz: int

    def __post_init__(self):
        if not (_is_pow2(self.nx) and _is_pow2(self.nz)):
            raise ValueError("nx and nz must be powers of two")
        if not (self.x_max > self.x_min and self.z_max > self.z_min):
            raise ValueError("grid extents must be increasing")

    @classmethod
    def centered(cls, cell_length: float, z_min: float, z_max: float, nx: int, nz: int):
        return cls(-cell_length / 2, cell_length / 2, z_min, z_max, nx, nz)

    @property
    def lx(self):
        return self.x_max - self.x_min

    @property
    def lz(self):
        return self.z_max - self.z_min

    @property
    def dx(self):
        return self.lx / self.nx

    @property
    def dz(self):
        return self.lz / self.nz

    @property
    def shape(self):
        return (self.nx, self.nz)

    @property
    def cell_area(self):
        return self.dx * self.dz

    @property
    def x(self):
        return self.x_min + self.dx * np.arange(self.nx)

    @property
    def z(self):
        return self.z_min + self.dz * np.arange(self.nz)

    @property
    def kx(self):
        return 2 * np.pi * sfft.fftfreq(self.nx, d=self.dx)

    @property
    def kz(self):
        return 2 * np.pi * sfft.fftfreq(self.nz, d=self.dz)

    def mesh(self):
        return np.meshgrid(self.x, self.z, indexing="ij")

    def resolution_problems(self, E_i: float, constants: PhysicalConstants = HE4,
                            min_points_per_wavelength: float = 8.0):
        lam = constants.de_broglie_wavelength(E_i)
        out = []
        if self.dx > lam / min_points_per_wavelength:
            out.append(f"dx = {self.dx:.4g} A exceeds lambda/{min_points_per_wavelength:g}"
                       f" = {lam / min_points_per_wavelength:.4g} A")
        if self.dz > lam / min_points_per_wavelength:
            out.append(f"dz = {self.dz:.4g} A exceeds lambda/{min_points_per_wavelength:g}"
                       f" = {lam / min_points_per_wavelength:.4g} A")
        return out

    def same_as(self, other: "Grid2D", tol: float = 1e-12) -> bool:
        return (self.nx == other.nx and self.nz == other.nz
                and all(abs(a - b) <= tol * max(1.0, abs(a)) for a, b in
                        zip((self.x_min, self.x_max, self.z_min, self.z_max),
                            (other.x_min, other.x_max, other.z_min, other.z_max))))


@dataclass
class WaveField:
    """Complex amplitude on a :class:`Grid2D` at time ``t`` (ps)."""

    grid: Grid2D
    amplitudes: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != self.grid.shape:
            raise ValueError(f"amplitude shape {self.amplitudes.shape} does not match grid "
                             f"{self.grid.shape}")

    @property
    def density(self):
        return np.abs(self.amplitudes) ** 2

    @property
    def norm(self) -> float:
        return float(np.sum(self.density) * self.grid.cell_area)

    def copy(self) -> "WaveField":
        return WaveField(self.grid, self.amplitudes.copy(), self.t)

    def position_mean(self):
        x, z = self.grid.mesh()
        rho = self.density
        n = rho.sum()
        return float((rho * x).sum() / n), float((rho * z).sum() / n)

    def position_std(self):
        x, z = self.grid.mesh()
        rho = self.density / self.density.sum()
        mx, mz = (rho * x).sum(), (rho * z).sum()
        return (float(np.sqrt((rho * (x - mx) ** 2).sum())),
                float(np.sqrt((rho * (z - mz) ** 2).sum())))

    def wavevector_mean(self):
        """<k_x>, <k_z> in 1/A from the Fourier-space density."""
        ph = np.abs(sfft.fft2(self.amplitudes)) ** 2
        n = ph.sum()
        kx, kz = self.grid.kx, self.grid.kz
        return (float((ph.sum(axis=1) * kx).sum() / n),
                float((ph.sum(axis=0) * kz).sum() / n))


@dataclass(frozen=True)
class InitialStateSpec:
    """Comb of identical Gaussians sharing one carrier wave vector.

    ``sigma_x`` and ``sigma_z`` are position standard deviations of each
    Gaussian's density. Centres sit at ``center_x + (j - (n-1)/2) spacing``.
    """

    E_i: float = 10.0
    theta_i: float = 0.0
    n_gaussians: int = 250
    spacing: float = 0.21
    sigma_x: float = 0.84
    sigma_z: float = 2.65
    center_x: float = 0.0
    center_z: float = LAUNCH_HEIGHT

    def __post_init__(self):
        if self.n_gaussians < 1:
            raise ValueError("n_gaussians must be at least 1")
        if not (self.sigma_x > 0 and self.sigma_z > 0 and self.spacing > 0):
            raise ValueError("widths and spacing must be positive")
        if not self.E_i >= 0:
            raise ValueError("E_i must be non-negative")

    @property
    def comb_length(self) -> float:
        return self.n_gaussians * self.spacing

    def wavevector(self, constants: PhysicalConstants = HE4):
        if self.E_i == 0:
            return 0.0, 0.0
        k = constants.wavenumber(self.E_i)
        return k * math.sin(self.theta_i), -k * math.cos(self.theta_i)


def _periodic_offset(x, centre, period):
    d = x - centre
    return d - period * np.round(d / period)


def build_initial_state(spec: InitialStateSpec, grid: Grid2D,
                        constants: PhysicalConstants = HE4, edge_tol: float = 1e-8) -> WaveField:
    """Normalised Gaussian comb on the grid.

    A comb whose length equals the x period is seamless (a plane wave along x);
    otherwise it must fit inside the period with negligible amplitude at the
    edges. The substrate edge (z_min) is not checked: the wall region there is
    where the packet is meant to go.
    """
    kx, kz = spec.wavevector(constants)
    seamless = abs(spec.comb_length - grid.lx) <= 1e-9 * grid.lx
    if seamless and spec.n_gaussians > 1:
        m = kx * grid.lx / (2 * np.pi)
        if abs(m - round(m)) > 1e-6:
            raise DomainError(
                f"k_x = {kx:.6g} 1/A is not on the reciprocal lattice of the {grid.lx:g} A "
                "cell; pick a commensurate incidence angle")
    x, z = grid.x, grid.z
    gz = np.exp(-((z - spec.center_z) ** 2) / (4 * spec.sigma_z ** 2))
    offsets = (np.arange(spec.n_gaussians) - (spec.n_gaussians - 1) / 2) * spec.spacing
    gx = np.zeros_like(x)
    for c in spec.center_x + offsets:
        if seamless:
            d = _periodic_offset(x, c, grid.lx)
        else:
            d = x - c
        gx += np.exp(-(d ** 2) / (4 * spec.sigma_x ** 2))
    amp = np.outer(gx * np.exp(1j * kx * x), gz * np.exp(1j * kz * z))
    peak = np.abs(amp).max()
    edges = [np.abs(amp[:, -1]).max()]
    if not seamless:
        edges += [np.abs(amp[0, :]).max(), np.abs(amp[-1, :]).max()]
    if max(edges) > edge_tol * peak:
        raise DomainError(
            f"initial state clipped by the grid: edge amplitude {max(edges) / peak:.2e} of peak "
            f"exceeds {edge_tol:g}")
    field_ = WaveField(grid, amp, 0.0)
    field_.amplitudes /= math.sqrt(field_.norm)
    return field_


def grid_potential(model: InteractionModel, grid: Grid2D, v_cap: float = DEFAULT_V_CAP):
    """Potential sampled on the grid and clipped at ``v_cap``.

    ``model=None`` means free motion. The adsorbate core (including r = 0,
    if it lies on the grid) is set to the cap.
    """
    if model is None:
        return np.zeros(grid.shape)
    if model.variant is Variant.HARD_WALL:
        raise DomainError("the hard-wall model has no finite potential to propagate on")
    x, z = grid.mesh()
    v = morse_potential(model.morse, z)
    if model.variant is not Variant.FLAT_SURFACE_ONLY:
        r2 = x * x + z * z
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            s6 = (model.lj.sigma ** 2 / r2) ** 3
            if model.variant is Variant.REPULSIVE_ADSORBATE:
                lj = 4 * model.lj.epsilon * s6 * s6
            else:
                lj = 4 * model.lj.epsilon * (s6 * s6 - s6)
        lj = np.where(np.isfinite(lj), lj, np.inf)
        v = v + lj
    return np.minimum(v, v_cap)


def kinetic_energy_grid(grid: Grid2D, constants: PhysicalConstants = HE4):
    kx, kz = grid.kx, grid.kz
    return constants.hbar2_over_2m * (kx[:, None] ** 2 + kz[None, :] ** 2)


def stability_limit(grid: Grid2D, potential, constants: PhysicalConstants = HE4) -> float:
    """Largest stable step hbar / E_max for the three-level scheme."""
    kx_max = np.abs(grid.kx).max()
    kz_max = np.abs(grid.kz).max()
    e_max = constants.hbar2_over_2m * (kx_max ** 2 + kz_max ** 2) + float(np.abs(potential).max())
    return constants.hbar / e_max


def cosine_absorber(grid: Grid2D, width: float, power: float = 0.125):
    """Multiplicative mask ramping from 1 to 0 over ``width`` below z_max.

    Applied once per step; ``power`` sets the per-step strength.
    """
    z = grid.z
    s = np.clip((z - (grid.z_max - width)) / width, 0.0, 1.0)
    mask = np.cos(0.5 * np.pi * s) ** power
    return np.broadcast_to(mask[None, :], grid.shape).copy()


class Propagator:
    """Three-level time stepper holding the two most recent levels.

    Args:
        psi0: initial field.
        model: potential model, or None for free motion.
        dt: time step (ps); must be below :func:`stability_limit`.
        absorber: optional mask from :func:`cosine_absorber`.
        bootstrap: "consistent" builds psi(dt) as the pure forward mode of
            the scheme (series in (dt H / hbar)^2); "taylor2" uses the
            second-order Taylor step.
    """

    def __init__(self, psi0: WaveField, model, dt: float,
                 constants: PhysicalConstants = HE4, v_cap: float = DEFAULT_V_CAP,
                 absorber=None, bootstrap: str = "consistent", bootstrap_order: int = 6):
        self.grid = psi0.grid
        self.constants = constants
        self.dt = float(dt)
        self.model = model
        self.potential = grid_potential(model, self.grid, v_cap)
        self.kinetic = kinetic_energy_grid(self.grid, constants)
        limit = stability_limit(self.grid, self.potential, constants)
        if not 0 < self.dt < limit:
            raise StabilityError(f"dt = {dt:g} ps violates the stability bound {limit:.4g} ps")
        self.dt_limit = limit
        self.absorber = absorber
        c = -2j * self.dt / constants.hbar
        self._tc = c * self.kinetic
        self._vc = c * self.potential
        self.step_index = 0
        self.t0 = psi0.t
        self.norm0 = psi0.norm
        self._prev = psi0.amplitudes.copy()
        self._curr = self._bootstrap(self._prev, bootstrap, bootstrap_order)
        self.step_index = 1
        self._buf = np.empty_like(self._curr)

    @property
    def t(self) -> float:
        return self.t0 + self.step_index * self.dt

    def hamiltonian(self, psi):
        """H psi with the spectral kinetic term."""
        out = sfft.ifft2(self.kinetic * sfft.fft2(psi))
        out += self.potential * psi
        return out

    def _bootstrap(self, psi0, how, order):
        a = self.dt / self.constants.hbar
        if how == "taylor2":
            h1 = self.hamiltonian(psi0)
            h2 = self.hamiltonian(h1)
            return psi0 - 1j * a * h1 - 0.5 * a * a * h2
        if how != "consistent":
            raise ValueError(f"unknown bootstrap {how!r}")
        # forward mode: psi(dt) = sqrt(1 - A^2) psi0 - i A psi0, A = dt H / hbar
        ah = a * self.hamiltonian(psi0)
        out = psi0 - 1j * ah
        term = psi0
        coeff = 1.0
        for j in range(1, order + 1):
            term = a * self.hamiltonian(a * self.hamiltonian(term))
            coeff *= (0.5 - (j - 1)) / j  # binomial(1/2, j)
            out = out + coeff * (-1) ** j * term
        return out

    @property
    def current(self) -> WaveField:
        return WaveField(self.grid, self._curr.copy(), self.t)

    @property
    def previous(self) -> WaveField:
        return WaveField(self.grid, self._prev.copy(), self.t - self.dt)

    def current_view(self):
        """The live current level (no copy; do not modify)."""
        return self._curr

    def step(self):
        psi = self._curr
        hat = sfft.fft2(psi)
        hat *= self._tc
        kin = sfft.ifft2(hat, overwrite_x=True)
        np.multiply(self._vc, psi, out=self._buf)
        kin += self._buf
        self._prev += kin
        if self.absorber is not None:
            self._prev *= self.absorber
            self._curr *= self.absorber
        self._prev, self._curr = self._curr, self._prev
        self.step_index += 1

    def norm(self) -> float:
        return float(np.sum(np.abs(self._curr) ** 2) * self.grid.cell_area)

    def energy(self) -> float:
        """<H> / <psi|psi> of the current level (meV)."""
        h = self.hamiltonian(self._curr)
        return float(np.real(np.vdot(self._curr, h)) / np.real(np.vdot(self._curr, self._curr)))

    def run(self, n_steps: int, callback=None, snapshot_every: int = 0, writer=None,
            norm_check_every: int = 1000, norm_abort: float = 1e-5):
        """Advance ``n_steps``; ``callback(self)`` is invoked after every step.

        Raises:
            NormDriftError: relative norm change exceeds ``norm_abort`` at a
                check (skipped when an absorber is active).
        """
        for _ in range(n_steps):
            self.step()
            if callback is not None:
                callback(self)
            if writer is not None and snapshot_every and self.step_index % snapshot_every == 0:
                writer.submit(self.current)
            if (norm_check_every and self.absorber is None
                    and self.step_index % norm_check_every == 0):
                drift = abs(self.norm() / self.norm0 - 1)
                if drift > norm_abort:
                    raise NormDriftError(
                        f"norm drift {drift:.3e} at t = {self.t:.4f} ps (step {self.step_index},"
                        f" dt = {self.dt:g}, limit {self.dt_limit:.4g})")
        return self.current


def propagate(psi: WaveField, model, dt: float, n_steps: int,
              constants: PhysicalConstants = HE4, snapshot_every: int = 0,
              snapshot_dir=None, callback=None, **kwargs) -> WaveField:
    """Propagate ``psi`` by ``n_steps`` steps of the three-level scheme.

    The bootstrap step counts as the first of the ``n_steps``. Snapshots,
    when requested, are written as ``snap_<step>.wfld`` in ``snapshot_dir``.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    prop = Propagator(psi, model, dt, constants, **kwargs)
    writer = SnapshotWriter(snapshot_dir) if snapshot_every and snapshot_dir else None
    try:
        prop.run(n_steps - 1, callback=callback, snapshot_every=snapshot_every, writer=writer)
    finally:
        if writer is not None:
            writer.close()
    return prop.current


# -- snapshots -----------------------------------------------------------------

def write_snapshot(path, field_: WaveField):
    g = field_.grid
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, g.nx, g.nz,
                          g.x_min, g.x_max, g.z_min, g.z_max, field_.t)
    header = header.ljust(SNAPSHOT_HEADER_SIZE, b"\0")
    data = np.ascontiguousarray(field_.amplitudes, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes(order="C"))


def read_snapshot(path) -> WaveField:
    with open(path, "rb") as fh:
        header = fh.read(SNAPSHOT_HEADER_SIZE)
        if len(header) != SNAPSHOT_HEADER_SIZE:
            raise ValueError(f"{path}: truncated header")
        magic, version, nx, nz, x0, x1, z0, z1, t = _HEADER.unpack_from(header)
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"{path}: not a wave-field snapshot")
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"{path}: unsupported snapshot version {version}")
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.size != nx * nz:
        raise ValueError(f"{path}: expected {nx * nz} amplitudes, found {data.size}")
    grid = Grid2D(x0, x1, z0, z1, nx, nz)
    return WaveField(grid, data.reshape(nx, nz).astype(complex), t)


class SnapshotWriter:
    """Background writer with a bounded hand-off queue."""

    def __init__(self, directory, max_pending: int = 4, prefix: str = "snap"):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.prefix = prefix
        self.paths = []
        self._count = 0
        self._queue = queue.Queue(maxsize=max_pending)
        self._error = None
        self._thread = threading.Thread(target=self._work, daemon=True)
        self._thread.start()

    def _work(self):
        while True:
            item = self._queue.get()
            if item is None:
                return
            path, fld = item
            try:
                write_snapshot(path, fld)
            except Exception as exc:  # surfaced on close
                self._error = exc

    def submit(self, fld: WaveField):
        path = self.directory / f"{self.prefix}_{self._count:06d}.wfld"
        self._count += 1
        self.paths.append(path)
        self._queue.put((path, fld))

    def close(self):
        self._queue.put(None)
        self._thread.join()
        if self._error is not None:
            raise self._error


# -- S-matrix -----------------------------------------------------------------

@dataclass
class SMatrixRow:
    """Outgoing amplitudes on the cell's reciprocal lattice.

    Normalised so that ``|amplitude|^2`` is the reflection probability into
    each open channel at the incident energy. ``population`` holds the
    energy-integrated outgoing probability per channel (Parseval sums).
    """

    k_ix: float
    k_dx: np.ndarray
    amplitude: np.ndarray
    delta_k: np.ndarray
    k_dz: np.ndarray
    population: np.ndarray
    cell_length: float
    E_i: float
    theta_i: float
    t: float
    grid: Grid2D
    z_analysis: float
    window_norm: float = 0.0
    residual_fraction: float = 0.0
    incoming_fraction: float = 0.0

    def probabilities(self):
        return np.abs(self.amplitude) ** 2

    def entry(self, delta_k: float):
        j = int(np.argmin(np.abs(self.delta_k - delta_k)))
        return self.amplitude[j]


def analysis_window(grid: Grid2D, z_analysis: float, ramp: float = 2.0):
    """Smooth 0 -> 1 step in z starting at ``z_analysis`` (sin^2 ramp)."""
    s = np.clip((grid.z - z_analysis) / ramp, 0.0, 1.0)
    return np.sin(0.5 * np.pi * s) ** 2


def _project_z(profile, z, kz_values, dz):
    """Continuous Fourier transform int profile(z) e^{-i k z} dz at given k."""
    phase = np.exp(-1j * np.outer(kz_values, z))
    return (phase * profile).sum(axis=-1) * dz


def incoming_asymptote(profile, grid: Grid2D, kz_values, substrate: MorseParams = MorseParams(),
                       backtrack: float = 3.0, v_cap: float = DEFAULT_V_CAP,
                       constants: PhysicalConstants = HE4):
    """Free-motion amplitude at ``kz_values`` of the incoming asymptote of a z profile.

    The launch packet already overlaps the attractive tail of the substrate
    well, so its plain Fourier transform is not the amplitude that arrives
    from infinity. The profile is propagated back by ``backtrack`` ps under
    the substrate Hamiltonian (exact, by diagonalisation on the z grid) and
    brought forward again with free phases. ``backtrack = 0`` returns the
    plain transform.
    """
    kz_values = np.asarray(kz_values, dtype=float)
    if backtrack <= 0:
        return _project_z(profile, grid.z, kz_values, grid.dz)
    nz = grid.nz
    v = np.minimum(morse_potential(substrate, grid.z), v_cap)
    kin = sfft.ifft(constants.hbar2_over_2m * grid.kz[:, None] ** 2 * sfft.fft(np.eye(nz), axis=0),
                    axis=0)
    h = kin + np.diag(v)
    energies, vecs = linalg.eigh(0.5 * (h + h.conj().T))
    back = vecs @ (np.exp(1j * energies * backtrack / constants.hbar) * (vecs.conj().T @ profile))
    free = constants.hbar2_over_2m * kz_values ** 2
    return (_project_z(back, grid.z, kz_values, grid.dz)
            * np.exp(-1j * free * backtrack / constants.hbar))


def extract_smatrix(psi: WaveField, incident: WaveField, E_i: float, theta_i: float = 0.0,
                    z_analysis: float = 6.0, ramp: float = 2.0, stale_tol: float = 1e-3,
                    substrate: MorseParams = MorseParams(), backtrack: float = 3.0,
                    v_cap: float = DEFAULT_V_CAP,
                    constants: PhysicalConstants = HE4) -> SMatrixRow:
    """Project the outgoing wave onto upward plane waves of the x-periodic cell.

    ``incident`` is the field at t = 0 and fixes the incoming amplitude at
    k_z = -k_i cos(theta_i). Each channel n has k_dx = k_ix + 2 pi n / L and
    k_dz = sqrt(k^2 - k_dx^2); closed channels are dropped. The incoming
    amplitude comes from :func:`incoming_asymptote` on the substrate alone.

    Raises:
        StaleExtractionError: the analysis window still holds incoming
            (k_z < 0) probability above ``stale_tol`` of its content.
        DiscretizationMismatchError: ``incident`` lives on another grid.
    """
    g = psi.grid
    if not g.same_as(incident.grid):
        raise DiscretizationMismatchError("incident and final fields are on different grids")
    k = constants.wavenumber(E_i)
    k_ix = k * math.sin(theta_i)
    k_iz = k * math.cos(theta_i)
    L = g.lx
    w = analysis_window(g, z_analysis, ramp)
    windowed = psi.amplitudes * w[None, :]

    # incoming content of the window and probability left below it
    hat = sfft.fft2(windowed)
    pw = np.abs(hat) ** 2
    kz = g.kz
    total_w = pw.sum()
    incoming = pw[:, kz < 0].sum() / total_w if total_w > 0 else 0.0
    if incoming > stale_tol:
        raise StaleExtractionError(
            f"analysis window still carries {incoming:.2e} incoming probability at "
            f"t = {psi.t:.3f} ps; propagate longer")
    window_norm = float(np.sum(np.abs(windowed) ** 2) * g.cell_area)
    below = psi.amplitudes[:, g.z < z_analysis]
    residual = float(np.sum(np.abs(below) ** 2) * g.cell_area / psi.norm)

    # x-channels (cell Fourier coefficients) as functions of z
    phi = sfft.fft(windowed, axis=0) * (g.dx / L)
    phi0 = sfft.fft(incident.amplitudes, axis=0) * (g.dx / L)
    kx = g.kx + 0.0
    n_i = int(np.argmin(np.abs(kx - k_ix)))
    if abs(kx[n_i] - k_ix) > 1e-6:
        raise DomainError("incident k_x is not a reciprocal-lattice vector of the cell")
    a_in = incoming_asymptote(phi0[n_i], g, np.array([-k_iz]), substrate, backtrack, v_cap,
                              constants)[0]

    open_ = kx ** 2 < k ** 2
    idx = np.flatnonzero(open_)
    k_dx = kx[idx]
    k_dz = np.sqrt(k ** 2 - k_dx ** 2)
    b_out = np.array([_project_z(phi[j], g.z, np.array([q]), g.dz)[0] for j, q in zip(idx, k_dz)])
    phase = np.exp(1j * E_i * psi.t / constants.hbar)
    amp = phase * b_out / a_in * np.sqrt(k_iz / k_dz)

    # energy-integrated populations per channel, outgoing half-space only
    pos = kz > 0
    pop_all = pw[:, pos].sum(axis=1) * g.cell_area / (g.nx * g.nz)
    population = pop_all[idx] / incident.norm

    order = np.argsort(k_dx)
    return SMatrixRow(
        k_ix=k_ix, k_dx=k_dx[order], amplitude=amp[order], delta_k=(k_dx - k_ix)[order],
        k_dz=k_dz[order], population=population[order], cell_length=L, E_i=E_i,
        theta_i=theta_i, t=psi.t, grid=g, z_analysis=z_analysis, window_norm=window_norm,
        residual_fraction=residual, incoming_fraction=float(incoming))


def remove_plane_wave_contribution(S_full: SMatrixRow, S_flat: SMatrixRow) -> SMatrixRow:
    """Adsorbate-attributable amplitude: S_full - S_flat, entry by entry."""
    problems = []
    if not S_full.grid.same_as(S_flat.grid):
        problems.append("grids differ")
    if abs(S_full.cell_length - S_flat.cell_length) > 1e-12:
        problems.append("cell lengths differ")
    if abs(S_full.E_i - S_flat.E_i) > 1e-12 or abs(S_full.theta_i - S_flat.theta_i) > 1e-12:
        problems.append("incidence conditions differ")
    if abs(S_full.t - S_flat.t) > 1e-9:
        problems.append(f"analysis times differ ({S_full.t} vs {S_flat.t} ps)")
    if abs(S_full.z_analysis - S_flat.z_analysis) > 1e-12:
        problems.append("analysis heights differ")
    if len(S_full.k_dx) != len(S_flat.k_dx) or np.any(np.abs(S_full.k_dx - S_flat.k_dx) > 1e-12):
        problems.append("channel sets differ")
    if problems:
        raise DiscretizationMismatchError("; ".join(problems))
    return SMatrixRow(
        k_ix=S_full.k_ix, k_dx=S_full.k_dx.copy(),
        amplitude=S_full.amplitude - S_flat.amplitude, delta_k=S_full.delta_k.copy(),
        k_dz=S_full.k_dz.copy(), population=S_full.population - S_flat.population,
        cell_length=S_full.cell_length, E_i=S_full.E_i, theta_i=S_full.theta_i, t=S_full.t,
        grid=S_full.grid, z_analysis=S_full.z_analysis, window_norm=S_full.window_norm,
        residual_fraction=S_full.residual_fraction,
        incoming_fraction=S_full.incoming_fraction)


def reflection_coefficient(S: SMatrixRow, E_i: float = None,
                           constants: PhysicalConstants = HE4,
                           raw: SMatrixRow = None) -> DiffractionSpectrum:
    """Peak-normalised dR/dtheta_d ~ k_dz |S|^2 against delta K.

    ``raw`` (e.g. the row before plane-wave removal) is added as the
    ``raw`` component on its own peak normalisation.
    """
    E_i = S.E_i if E_i is None else E_i
    k = constants.wavenumber(E_i)
    theta_d = np.arcsin(np.clip(S.k_dx / k, -1, 1))
    dr = S.k_dz * np.abs(S.amplitude) ** 2
    peak = dr.max() if dr.max() > 0 else 1.0
    comps = {"unnormalized": dr}
    if raw is not None:
        r = raw.k_dz * np.abs(raw.amplitude) ** 2
        comps["raw"] = r / (r.max() if r.max() > 0 else 1.0)
    return DiffractionSpectrum(delta_k=S.delta_k.copy(), theta_d=theta_d, intensity=dr / peak,
                               E_i=E_i, theta_i=S.theta_i, level="tdse", components=comps)


def spectrum_rows(spec: DiffractionSpectrum):
    raw = spec.components.get("raw")
    for j in range(len(spec)):
        yield {
            "delta_k": spec.delta_k[j],
            "theta_d_deg": math.degrees(spec.theta_d[j]),
            "intensity": spec.intensity[j],
            "intensity_raw": raw[j] if raw is not None else float("nan"),
        }


# -- run driver ---------------------------------------------------------------

@dataclass(frozen=True)
class TdseConfig:
    """Numerical settings of a scattering run.

    ``dt=None`` picks ``dt_safety`` times the stability bound.
    """

    nx: int = 512
    nz: int = 512
    z_min: float = -1.5
    z_max: float = 78.5
    cell_length: float = None  # None: the comb length
    dt: float = None
    dt_safety: float = 0.9
    t_final: float = 8.0
    v_cap: float = DEFAULT_V_CAP
    z_analysis: float = 6.0
    absorber_width: float = 0.0
    backtrack: float = 3.0

    def grid(self, spec: InitialStateSpec) -> Grid2D:
        cell = spec.comb_length if self.cell_length is None else self.cell_length
        return Grid2D.centered(cell, self.z_min, self.z_max, self.nx, self.nz)


@dataclass
class ScatteringRun:
    initial: WaveField
    final: WaveField
    smatrix: SMatrixRow
    dt: float
    n_steps: int
    norm_history: list = field(default_factory=list)
    energy_history: list = field(default_factory=list)


def choose_dt(grid: Grid2D, model, config: TdseConfig, constants: PhysicalConstants = HE4):
    if config.dt is not None:
        return config.dt
    v = grid_potential(model, grid, config.v_cap)
    return config.dt_safety * stability_limit(grid, v, constants)


def run_scattering(model, spec: InitialStateSpec = InitialStateSpec(),
                   config: TdseConfig = TdseConfig(), constants: PhysicalConstants = HE4,
                   callback=None, monitor_every: int = 500, snapshot_every: int = 0,
                   snapshot_dir=None, observers=(), analyse: bool = True) -> ScatteringRun:
    """Build the incident comb, propagate to ``t_final`` and extract the S-matrix row.

    ``observers`` get ``start(prop)`` once the first two levels exist and are
    then called after every step, like ``callback``. With ``analyse=False``
    the S-matrix is not extracted and ``smatrix`` is None.
    """
    grid = config.grid(spec)
    problems = grid.resolution_problems(spec.E_i, constants)
    if problems:
        raise DomainError("; ".join(problems))
    psi0 = build_initial_state(spec, grid, constants)
    dt = choose_dt(grid, model, config, constants)
    n_steps = int(round(config.t_final / dt))
    dt = config.t_final / n_steps
    absorber = (cosine_absorber(grid, config.absorber_width)
                if config.absorber_width > 0 else None)
    prop = Propagator(psi0, model, dt, constants, v_cap=config.v_cap, absorber=absorber)
    norms, energies = [(prop.t, prop.norm())], [(prop.t, prop.energy())]
    for obs in observers:
        obs.start(prop)

    def hook(p):
        if callback is not None:
            callback(p)
        for obs in observers:
            obs(p)
        if monitor_every and p.step_index % monitor_every == 0:
            norms.append((p.t, p.norm()))
            energies.append((p.t, p.energy()))

    writer = SnapshotWriter(snapshot_dir) if snapshot_every and snapshot_dir else None
    try:
        prop.run(n_steps - 1, callback=hook, snapshot_every=snapshot_every, writer=writer)
    finally:
        if writer is not None:
            writer.close()
    final = prop.current
    if not analyse:
        return ScatteringRun(initial=psi0, final=final, smatrix=None, dt=dt, n_steps=n_steps,
                             norm_history=norms, energy_history=energies)
    S = extract_smatrix(final, psi0, spec.E_i, spec.theta_i, config.z_analysis,
                        substrate=model.morse if model is not None else MorseParams(),
                        backtrack=config.backtrack if model is not None else 0.0,
                        v_cap=config.v_cap, constants=constants)
    return ScatteringRun(initial=psi0, final=final, smatrix=S, dt=dt, n_steps=n_steps,
                         norm_history=norms, energy_history=energies)
