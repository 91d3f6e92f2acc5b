"""One pipeline per run kind: compute, write CSV/snapshot artifacts, return a summary."""
from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np

from . import bohmian, fermatian, hardwall, newtonian, potential, tdse
from .config import RunConfig
from .errors import StaleExtractionError
from .io import write_csv
from .potential import Variant

logger = logging.getLogger(__name__)


class Artifacts:
    """Collects written files relative to the output directory."""

    def __init__(self, out: Path):
        self.out = Path(out)
        self.paths = []

    def csv(self, name, rows, columns=None):
        p = write_csv(self.out / name, rows, columns)
        self.paths.append(p)
        return p

    def add(self, path):
        self.paths.append(Path(path))


def potential_scan(cfg: RunConfig, art: Artifacts):
    xs = np.linspace(cfg["scan", "x_min_A"], cfg["scan", "x_max_A"], cfg["scan", "n_x"])
    zs = np.linspace(cfg["scan", "z_min_A"], cfg["scan", "z_max_A"], cfg["scan", "n_z"])
    summary = {}
    for variant in cfg.variants:
        model = cfg.model(variant)
        X, Z = np.meshgrid(xs, zs, indexing="ij")
        r2 = X * X + Z * Z
        ok = r2 > 0 if variant is not Variant.FLAT_SURFACE_ONLY else np.ones_like(r2, bool)
        V = np.full(X.shape, np.inf)
        with np.errstate(over="ignore"):
            V[ok] = potential.eval_potential(model, X[ok], Z[ok])
        art.csv(f"potential_{variant.value}.csv",
                ({"x": X.flat[j], "z": Z.flat[j], "V_meV": V.flat[j]} for j in range(V.size)),
                ["x", "z", "V_meV"])
        if variant is not Variant.FLAT_SURFACE_ONLY:
            summary[f"on_axis_well_depth_{variant.value}_meV"] = potential.on_axis_well_depth(model)
    return summary


def bound_states(cfg: RunConfig, art: Artifacts):
    model = cfg.model()
    states = potential.morse_bound_states(model.morse, cfg.constants())
    rows = []
    for n, e in enumerate(states.energies):
        rows.append({"n": n, "energy_meV": e,
                     "jump_length_A": potential.jump_length(model.morse, cfg.E_i, e)})
    art.csv("bound_states.csv", rows, ["n", "energy_meV", "jump_length_A"])
    return {"count": states.count, "hbar_omega_meV": states.hbar_omega,
            "de_broglie_A": cfg.constants().de_broglie_wavelength(cfg.E_i)}


def _ray_polylines(rays):
    for ray in rays:
        yield from fermatian.ray_rows(ray)


def fermat_trace(cfg: RunConfig, art: Artifacts):
    geom = cfg.hardwall()
    bs, rays = fermatian.deflection_table(cfg.theta_i, geom,
                                          (cfg["scan", "b_min_A"], cfg["scan", "b_max_A"]),
                                          cfg["scan", "n_samples"])
    art.csv("deflection.csv", fermatian.deflection_rows(bs, rays),
            ["b", "theta_d", "n_bounces", "pattern", "surfaces"])
    shown = np.linspace(bs[0], bs[-1], cfg["scan", "n_rays"])
    art.csv("rays.csv", _ray_polylines(fermatian.trace_ray(b, cfg.theta_i, geom) for b in shown),
            ["b", "vertex", "x", "z"])
    return {"n_rays": len(rays)}


def fermat_separatrices(cfg: RunConfig, art: Artifacts):
    geom = cfg.hardwall()
    seps = fermatian.find_separatrices(cfg.theta_i, geom, cfg["scan", "n_samples"])
    rows = []
    for name, b in seps.as_dict().items():
        theta_d = (fermatian.trace_ray(b, cfg.theta_i, geom).theta_d
                   if math.isfinite(b) else math.nan)
        rows.append({"name": name, "b": b, "theta_d_deg": math.degrees(theta_d),
                     "degenerate": name in seps.degenerate, "absent": name in seps.absent})
    art.csv("separatrices.csv", rows, ["name", "b", "theta_d_deg", "degenerate", "absent"])
    finite = [r["b"] for r in rows if math.isfinite(r["b"])]
    art.csv("separatrix_rays.csv",
            _ray_polylines(fermatian.trace_ray(b, cfg.theta_i, geom) for b in finite),
            ["b", "vertex", "x", "z"])
    shown = np.linspace(cfg["scan", "b_min_A"], cfg["scan", "b_max_A"], cfg["scan", "n_rays"])
    art.csv("rays.csv", _ray_polylines(fermatian.trace_ray(b, cfg.theta_i, geom) for b in shown),
            ["b", "vertex", "x", "z"])
    s_lo, s_hi = fermatian.double_collision_sectors(cfg.theta_i, geom)
    return {"theta_d_max_deg": math.degrees(seps.theta_d_max),
            "ordered": seps.is_ordered(),
            "shadow_length_formula_A": fermatian.shadow_length(cfg.theta_i, geom),
            "shadow_length_exact_A": fermatian.exact_shadow_length(cfg.theta_i, geom),
            "double_collision_sectors_deg": [math.degrees(s_lo), math.degrees(s_hi)]}


def hardwall_intensity(cfg: RunConfig, art: Artifacts):
    spec = hardwall.hardwall_intensity_scan(cfg.E_i, cfg.theta_i, cfg["scan", "n_angles"],
                                            cfg.hardwall(), cfg.constants())
    art.csv("hardwall_spectrum.csv", hardwall.spectrum_rows(spec),
            ["theta_d_deg", "delta_k", "I_total", "I_illum", "I_fraun"])
    peaks = hardwall.interference_peak_spacing(spec, geometry=cfg.hardwall(),
                                               constants=cfg.constants()) if cfg.theta_i == 0 else []
    return {"large_dk_peaks": [[a, b, c] for a, b, c in peaks]}


def _deflection(cfg, variant):
    return newtonian.deflection_scan(cfg.theta_i, cfg.E_i, cfg.model(variant),
                                     (cfg["scan", "b_min_A"], cfg["scan", "b_max_A"]),
                                     cfg["scan", "n_samples"], cfg.integrator(),
                                     cfg.constants())


def _trajectory_rows(cfg, variant):
    n = cfg["newton", "n_trajectories"]
    if n == 0:
        return None
    bs = np.linspace(cfg["scan", "b_min_A"], cfg["scan", "b_max_A"], n)
    ic = cfg.integrator()
    conf = newtonian.IntegratorConfig(dt=ic.dt, t_max=ic.t_max, escape_z=ic.escape_z,
                                      x_cut=ic.x_cut, follow_trapped=ic.follow_trapped,
                                      record_every=cfg["newton", "record_every"])
    rows = []
    for b in bs:
        tr = newtonian.integrate_trajectory(b, cfg.theta_i, cfg.E_i, cfg.model(variant), conf,
                                            cfg.constants(), z0=cfg["newton", "launch_z_A"])
        for j in range(len(tr.t)):
            rows.append({"b": b, "t": tr.t[j], "x": tr.x[j], "z": tr.z[j], "px": tr.px[j],
                         "pz": tr.pz[j], "E": tr.energy[j]})
    return rows


def newton_deflection(cfg: RunConfig, art: Artifacts):
    summary = {}
    for variant in cfg.variants:
        df = _deflection(cfg, variant)
        art.csv(f"deflection_{variant.value}.csv", df.to_rows(),
                ["b", "theta_d", "trapped_flag", "E_z", "E_x"])
        rows = _trajectory_rows(cfg, variant)
        if rows is not None:
            art.csv(f"trajectories_{variant.value}.csv", rows,
                    ["b", "t", "x", "z", "px", "pz", "E"])
        summary[variant.value] = newtonian.trapping_summary(df)["fraction"]
    return {"trapped_fraction": summary}


def newton_energy_diagram(cfg: RunConfig, art: Artifacts):
    summary = {}
    for variant in cfg.variants:
        df = _deflection(cfg, variant)
        diag = newtonian.energy_diagram(cfg.theta_i, cfg.E_i, cfg.model(variant), df=df)
        v = variant.value
        art.csv(f"deflection_{v}.csv", df.to_rows(),
                ["b", "theta_d", "trapped_flag", "E_z", "E_x"])
        art.csv(f"energy_diagram_{v}.csv",
                ({"b": diag.b[j], "E_z": diag.E_z[j], "theta_d": diag.theta_d[j],
                  "trapped_flag": int(diag.trapped[j])} for j in range(len(diag.b))),
                ["b", "E_z", "theta_d", "trapped_flag"])
        intervals = diag.trapping_intervals()
        art.csv(f"trapping_intervals_{v}.csv",
                ({"b_lo": lo, "b_hi": hi} for lo, hi in intervals), ["b_lo", "b_hi"])
        rows = _trajectory_rows(cfg, variant)
        if rows is not None:
            art.csv(f"trajectories_{v}.csv", rows, ["b", "t", "x", "z", "px", "pz", "E"])
        summary[v] = {"minima": [list(map(float, m)) for m in diag.minima()],
                      "trapping_intervals": [list(map(float, iv)) for iv in intervals]}
    return summary


def newton_rainbows(cfg: RunConfig, art: Artifacts):
    rain_rows, trap_rows = [], []
    summary = {}
    for variant in cfg.variants:
        df = _deflection(cfg, variant)
        report = newtonian.find_rainbows(df, cfg.E_i, cfg.constants())
        for r in report:
            rain_rows.append({"variant": variant.value, "b": r.b,
                              "theta_R_deg": math.degrees(r.theta_R),
                              "delta_K_R": r.delta_K_R, "kind": r.kind})
        trap = newtonian.trapping_summary(df)
        for lo, hi in trap["intervals"]:
            trap_rows.append({"variant": variant.value, "b_lo": lo, "b_hi": hi,
                              "fraction": trap["fraction"]})
        summary[variant.value] = {"rainbows": len(report), "trapped_fraction": trap["fraction"],
                                  "delta_K_R": [r.delta_K_R for r in report]}
    art.csv("rainbows.csv", rain_rows, ["variant", "b", "theta_R_deg", "delta_K_R", "kind"])
    art.csv("trapping.csv", trap_rows, ["variant", "b_lo", "b_hi", "fraction"])
    return summary


def _history_rows(run):
    energies = dict(run.energy_history)
    for t, n in run.norm_history:
        yield {"t": t, "norm": n, "energy_meV": energies.get(t, math.nan)}


def tdse_propagate(cfg: RunConfig, art: Artifacts):
    spec_in = cfg.initial_state()
    tcfg = cfg.tdse()
    summary = {}
    for variant in cfg.variants:
        v = variant.value
        snap_dir = art.out / f"snapshots_{v}"
        every = cfg["tdse", "snapshot_every"]
        run = tdse.run_scattering(cfg.model(variant), spec_in, tcfg,
                                  cfg.constants(), monitor_every=cfg["tdse", "monitor_every"],
                                  snapshot_every=every, snapshot_dir=snap_dir if every else None,
                                  analyse=False)
        if every:
            for p in sorted(snap_dir.glob("*.wfld")):
                art.add(p)
        final = art.out / f"final_{v}.wfld"
        tdse.write_snapshot(final, run.final)
        art.add(final)
        art.csv(f"history_{v}.csv", _history_rows(run), ["t", "norm", "energy_meV"])
        try:
            run.smatrix = tdse.extract_smatrix(
                run.final, run.initial, spec_in.E_i, spec_in.theta_i, tcfg.z_analysis,
                substrate=cfg.model(variant).morse, backtrack=tcfg.backtrack, v_cap=tcfg.v_cap,
                constants=cfg.constants())
        except StaleExtractionError as exc:
            logger.warning("no S-matrix for %s: %s", v, exc)
        else:
            art.csv(f"smatrix_{v}.csv", _smatrix_rows(run.smatrix),
                    ["delta_k", "k_dx", "k_dz", "re_S", "im_S", "abs_S2", "population"])
        summary[v] = _run_summary(run)
    return summary


def _smatrix_rows(S):
    for j in range(len(S.k_dx)):
        a = S.amplitude[j]
        yield {"delta_k": S.delta_k[j], "k_dx": S.k_dx[j], "k_dz": S.k_dz[j], "re_S": a.real,
               "im_S": a.imag, "abs_S2": abs(a) ** 2, "population": S.population[j]}


def _run_summary(run):
    n = np.array(run.norm_history)
    e = np.array(run.energy_history)
    s = {"dt_ps": run.dt, "n_steps": run.n_steps,
         "norm_drift": float(np.abs(n[:, 1] / n[0, 1] - 1).max()),
         "energy_drift": float(np.abs(e[:, 1] / e[0, 1] - 1).max())}
    if run.smatrix is not None:
        s["sum_abs_S2"] = float(run.smatrix.probabilities().sum())
        s["window_norm"] = run.smatrix.window_norm
    return s


def tdse_intensity(cfg: RunConfig, art: Artifacts):
    spec_in = cfg.initial_state()
    tcfg = cfg.tdse()
    flat = None
    if cfg["tdse", "flat_reference"]:
        flat = tdse.run_scattering(cfg.model(Variant.FLAT_SURFACE_ONLY), spec_in, tcfg,
                                   cfg.constants(), monitor_every=cfg["tdse", "monitor_every"])
    summary = {}
    for variant in cfg.variants:
        v = variant.value
        run = (flat if flat is not None and variant is Variant.FLAT_SURFACE_ONLY else
               tdse.run_scattering(cfg.model(variant), spec_in, tcfg, cfg.constants(),
                                   monitor_every=cfg["tdse", "monitor_every"]))
        S_raw = run.smatrix
        S = tdse.remove_plane_wave_contribution(S_raw, flat.smatrix) if flat is not None else S_raw
        spec = tdse.reflection_coefficient(S, constants=cfg.constants(), raw=S_raw)
        art.csv(f"tdse_spectrum_{v}.csv", tdse.spectrum_rows(spec),
                ["delta_k", "theta_d_deg", "intensity", "intensity_raw"])
        art.csv(f"smatrix_{v}.csv", _smatrix_rows(S_raw),
                ["delta_k", "k_dx", "k_dz", "re_S", "im_S", "abs_S2", "population"])
        summary[v] = _run_summary(run)
    return summary


def _seeds(cfg: RunConfig, psi0):
    seeds, labels = bohmian.seed_lines(cfg["tdse", "center_z_A"], cfg["bohm", "line_offsets_A"],
                                       cfg["bohm", "n_per_line"])
    seeds = np.asarray(seeds).reshape(-1, 2)
    n_born = cfg["bohm", "n_born"]
    if n_born:
        born = bohmian.born_seeds(psi0, n_born, cfg["bohm", "seeding"],
                                  rng=np.random.default_rng(cfg["run", "seed"]))
        seeds = np.vstack([seeds, born]) if len(seeds) else born
        labels = list(labels) + ["born"] * n_born
    return seeds, list(labels)


def _vortex_collector(cfg: RunConfig, found: list):
    every = cfg["bohm", "vortex_every"]
    t_lo, t_hi = cfg["bohm", "vortex_t_min_ps"], cfg["bohm", "vortex_t_max_ps"]
    region = cfg["bohm", "vortex_region_A"]

    def hook(prop):
        if prop.step_index % every == 0 and t_lo <= prop.t <= t_hi:
            found.extend(bohmian.detect_vortices(prop.current, region))
    return hook


def bohm_trajectories(cfg: RunConfig, art: Artifacts):
    spec_in = cfg.initial_state()
    tcfg = cfg.tdse()
    grid = tcfg.grid(spec_in)
    psi0 = tdse.build_initial_state(spec_in, grid, cfg.constants())
    seeds, labels = _seeds(cfg, psi0)
    summary = {}
    for variant in cfg.variants:
        v = variant.value
        ens = bohmian.BohmianEnsemble(seeds, labels, cfg.bohm(), cfg.constants())
        run = tdse.run_scattering(cfg.model(variant), spec_in, tcfg, cfg.constants(),
                                  monitor_every=cfg["tdse", "monitor_every"], observers=[ens],
                                  analyse=False)
        ens.finish()
        trajs = ens.trajectories()
        manifest = []
        for j, tr in enumerate(trajs):
            name = f"trajectories_{v}/traj_{j:05d}.csv"
            art.csv(name, ({"t": tr.t[i], "x": tr.x[i], "z": tr.z[i]} for i in range(len(tr.t))),
                    ["t", "x", "z"])
            manifest.append({"index": j, "file": name, "seed_x": tr.seed[0], "seed_z": tr.seed[1],
                             "line": tr.label, "trapped_flag": tr.trapped_flag,
                             "loops": tr.loops_completed, "exited": tr.exited,
                             "captures": tr.captures, "min_psi": tr.min_psi})
        art.csv(f"trajectories_{v}.csv", manifest,
                ["index", "file", "seed_x", "seed_z", "line", "trapped_flag", "loops", "exited",
                 "captures", "min_psi"])
        born = [tr for tr in trajs if tr.label == "born"]
        s = {"n": len(trajs), "trapped": int(sum(t.trapped_flag for t in trajs)),
             "min_separation_A": bohmian.min_pairwise_separation(trajs) if len(trajs) > 1
             else math.inf, **_run_summary(run)}
        if len(born) >= 2:
            s["born_l1"] = bohmian.ensemble_density_check(born, run.final)
        summary[v] = s
    return summary


def bohm_vortices(cfg: RunConfig, art: Artifacts):
    spec_in = cfg.initial_state()
    summary = {}
    q = bohmian.circulation_quantum(cfg.constants())
    for variant in cfg.variants:
        found = []
        tdse.run_scattering(cfg.model(variant), spec_in, cfg.tdse(), cfg.constants(),
                            monitor_every=cfg["tdse", "monitor_every"],
                            callback=_vortex_collector(cfg, found), analyse=False)
        art.csv(f"vortices_{variant.value}.csv",
                ({"t": n.t, "x": n.x, "z": n.z, "n": n.winding, "circulation": n.circulation,
                  "circulation_over_quantum": n.circulation / q, "indeterminate": n.indeterminate}
                 for n in found),
                ["t", "x", "z", "n", "circulation", "circulation_over_quantum", "indeterminate"])
        summary[variant.value] = {"nodes": len(found),
                                  "resolved": sum(not n.indeterminate for n in found)}
    return summary


PIPELINES = {
    "potential-scan": potential_scan,
    "bound-states": bound_states,
    "fermat-trace": fermat_trace,
    "fermat-separatrices": fermat_separatrices,
    "hardwall-intensity": hardwall_intensity,
    "newton-deflection": newton_deflection,
    "newton-energy-diagram": newton_energy_diagram,
    "newton-rainbows": newton_rainbows,
    "tdse-propagate": tdse_propagate,
    "tdse-intensity": tdse_intensity,
    "bohm-trajectories": bohm_trajectories,
    "bohm-vortices": bohm_vortices,
}
