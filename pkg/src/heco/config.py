"""Run configuration: INI text with unit-suffixed keys.

Every physical default is the model's published value; every key can be
overridden. Parsing collects all problems before failing, and
``dump_config(parse_config(text))`` parses back to an equal config.
"""
from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .bohmian import LINE_OFFSETS, BohmConfig
from .constants import HE4, PhysicalConstants
from .errors import ConfigError
from .kinematics import LAUNCH_HEIGHT
from .newtonian import IntegratorConfig
from .potential import (HardWallParams, InteractionModel, LennardJonesParams, MorseParams,
                        Variant)
from .tdse import DEFAULT_V_CAP, InitialStateSpec, TdseConfig

RUN_KINDS = (
    "potential-scan", "bound-states", "fermat-trace", "fermat-separatrices",
    "hardwall-intensity", "newton-deflection", "newton-energy-diagram", "newton-rainbows",
    "tdse-propagate", "tdse-intensity", "bohm-trajectories", "bohm-vortices",
)
VARIANTS = tuple(v.value for v in Variant)
SEEDINGS = ("quantile", "random")
U64_MAX = 2 ** 64 - 1


@dataclass(frozen=True)
class Key:
    """One config entry: ``kind`` is float, int, bool, str, floats or variants."""

    section: str
    name: str
    kind: str
    default: object = None
    required: bool = False
    choices: tuple = ()
    optional: bool = False  # blank / "auto" means None


SCHEMA = (
    Key("run", "kind", "str", required=True, choices=RUN_KINDS),
    Key("run", "E_i_meV", "float", required=True),
    Key("run", "theta_i_deg", "float", 0.0),
    Key("run", "variants", "variants", ("full",)),
    Key("run", "seed", "int", 0),
    Key("run", "out_dir", "str", "heco_out"),
    Key("run", "threads", "int", 1),

    Key("potential", "morse_D_meV", "float", MorseParams.D),
    Key("potential", "morse_alpha_per_A", "float", MorseParams.alpha),
    Key("potential", "morse_zm_A", "float", MorseParams.z_m),
    Key("potential", "lj_epsilon_meV", "float", LennardJonesParams.epsilon),
    Key("potential", "lj_sigma_A", "float", LennardJonesParams.sigma),
    Key("potential", "hardwall_a_A", "float", HardWallParams.a),
    Key("potential", "hardwall_zr_A", "float", HardWallParams.z_r),
    Key("potential", "hbar2_over_2m_meV_A2", "float", HE4.hbar2_over_2m),

    Key("scan", "b_min_A", "float", -10.6),
    Key("scan", "b_max_A", "float", 10.6),
    Key("scan", "n_samples", "int", 2001),
    Key("scan", "n_angles", "int", 2001),
    Key("scan", "n_rays", "int", 41),
    Key("scan", "x_min_A", "float", -10.6),
    Key("scan", "x_max_A", "float", 10.6),
    Key("scan", "z_min_A", "float", -1.0),
    Key("scan", "z_max_A", "float", 12.0),
    Key("scan", "n_x", "int", 213),
    Key("scan", "n_z", "int", 131),

    Key("newton", "dt_ps", "float", IntegratorConfig.dt),
    Key("newton", "t_max_ps", "float", IntegratorConfig.t_max),
    Key("newton", "launch_z_A", "float", LAUNCH_HEIGHT),
    Key("newton", "escape_z_A", "float", IntegratorConfig.escape_z),
    Key("newton", "x_cut_A", "float", IntegratorConfig.x_cut),
    Key("newton", "follow_trapped", "bool", False),
    Key("newton", "n_trajectories", "int", 0),
    Key("newton", "record_every", "int", 20),

    Key("tdse", "n_x", "int", 512),
    Key("tdse", "n_z", "int", 512),
    Key("tdse", "z_min_A", "float", -1.5),
    Key("tdse", "z_max_A", "float", 78.5),
    Key("tdse", "cell_length_A", "float", None, optional=True),
    Key("tdse", "dt_ps", "float", None, optional=True),
    Key("tdse", "dt_safety", "float", 0.9),
    Key("tdse", "t_final_ps", "float", 8.0),
    Key("tdse", "v_cap_meV", "float", DEFAULT_V_CAP),
    Key("tdse", "z_analysis_A", "float", 6.0),
    Key("tdse", "absorber_width_A", "float", 0.0),
    Key("tdse", "backtrack_ps", "float", 3.0),
    Key("tdse", "n_gaussians", "int", InitialStateSpec.n_gaussians),
    Key("tdse", "spacing_A", "float", InitialStateSpec.spacing),
    Key("tdse", "sigma_x_A", "float", InitialStateSpec.sigma_x),
    Key("tdse", "sigma_z_A", "float", InitialStateSpec.sigma_z),
    Key("tdse", "center_z_A", "float", InitialStateSpec.center_z),
    Key("tdse", "snapshot_every", "int", 0),
    Key("tdse", "monitor_every", "int", 500),
    Key("tdse", "flat_reference", "bool", True),

    Key("bohm", "order", "int", BohmConfig.order),
    Key("bohm", "node_threshold", "float", BohmConfig.node_threshold),
    Key("bohm", "max_displacement", "float", BohmConfig.max_displacement),
    Key("bohm", "max_subdivisions", "int", BohmConfig.max_subdivisions),
    Key("bohm", "record_every", "int", 10),
    Key("bohm", "trap_z_A", "float", BohmConfig.trap_z),
    Key("bohm", "x_cut_A", "float", BohmConfig.x_cut),
    Key("bohm", "line_offsets_A", "floats", LINE_OFFSETS),
    Key("bohm", "n_per_line", "int", 41),
    Key("bohm", "n_born", "int", 0),
    Key("bohm", "seeding", "str", "quantile", choices=SEEDINGS),
    Key("bohm", "vortex_every", "int", 250),
    Key("bohm", "vortex_t_min_ps", "float", 1.0),
    Key("bohm", "vortex_t_max_ps", "float", 6.0),
    Key("bohm", "vortex_region_A", "floats", (-26.25, 26.25, -0.5, 9.0)),
)
_BY_SECTION = {}
for _k in SCHEMA:
    _BY_SECTION.setdefault(_k.section, {})[_k.name] = _k


@dataclass(frozen=True)
class RunConfig:
    """Validated run description; ``values[(section, name)]`` holds typed values."""

    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        section, name = key
        return self.values[(section, name)]

    def get(self, section: str, name: str):
        return self.values[(section, name)]

    def replace(self, **updates) -> "RunConfig":
        """Copy with ``section__name=value`` overrides (validated again)."""
        vals = dict(self.values)
        for k, v in updates.items():
            section, name = k.split("__", 1)
            if (section, name) not in vals:
                raise ConfigError(f"unknown key [{section}] {name}")
            vals[(section, name)] = v
        cfg = RunConfig(vals)
        problems = _validate(cfg)
        if problems:
            raise ConfigError(problems)
        return cfg

    # model objects ------------------------------------------------------------
    @property
    def kind(self) -> str:
        return self.get("run", "kind")

    @property
    def E_i(self) -> float:
        return self.get("run", "E_i_meV")

    @property
    def theta_i(self) -> float:
        return math.radians(self.get("run", "theta_i_deg"))

    @property
    def variants(self):
        return tuple(Variant.parse(v) for v in self.get("run", "variants"))

    def constants(self) -> PhysicalConstants:
        return PhysicalConstants(hbar2_over_2m=self.get("potential", "hbar2_over_2m_meV_A2"))

    def model(self, variant=None) -> InteractionModel:
        g = self.get
        return InteractionModel(
            variant=Variant.parse(variant) if variant is not None else self.variants[0],
            morse=MorseParams(g("potential", "morse_D_meV"), g("potential", "morse_alpha_per_A"),
                              g("potential", "morse_zm_A")),
            lj=LennardJonesParams(g("potential", "lj_epsilon_meV"), g("potential", "lj_sigma_A")),
            hardwall=self.hardwall())

    def hardwall(self) -> HardWallParams:
        return HardWallParams(self.get("potential", "hardwall_a_A"),
                              self.get("potential", "hardwall_zr_A"))

    def integrator(self) -> IntegratorConfig:
        g = self.get
        return IntegratorConfig(dt=g("newton", "dt_ps"), t_max=g("newton", "t_max_ps"),
                                escape_z=g("newton", "escape_z_A"), x_cut=g("newton", "x_cut_A"),
                                follow_trapped=g("newton", "follow_trapped"))

    def initial_state(self) -> InitialStateSpec:
        g = self.get
        return InitialStateSpec(E_i=self.E_i, theta_i=self.theta_i,
                                n_gaussians=g("tdse", "n_gaussians"), spacing=g("tdse", "spacing_A"),
                                sigma_x=g("tdse", "sigma_x_A"), sigma_z=g("tdse", "sigma_z_A"),
                                center_z=g("tdse", "center_z_A"))

    def tdse(self) -> TdseConfig:
        g = self.get
        return TdseConfig(nx=g("tdse", "n_x"), nz=g("tdse", "n_z"), z_min=g("tdse", "z_min_A"),
                          z_max=g("tdse", "z_max_A"), cell_length=g("tdse", "cell_length_A"),
                          dt=g("tdse", "dt_ps"), dt_safety=g("tdse", "dt_safety"),
                          t_final=g("tdse", "t_final_ps"), v_cap=g("tdse", "v_cap_meV"),
                          z_analysis=g("tdse", "z_analysis_A"),
                          absorber_width=g("tdse", "absorber_width_A"),
                          backtrack=g("tdse", "backtrack_ps"))

    def bohm(self) -> BohmConfig:
        g = self.get
        return BohmConfig(order=g("bohm", "order"), node_threshold=g("bohm", "node_threshold"),
                          max_displacement=g("bohm", "max_displacement"),
                          max_subdivisions=g("bohm", "max_subdivisions"),
                          record_every=g("bohm", "record_every"), trap_z=g("bohm", "trap_z_A"),
                          x_cut=g("bohm", "x_cut_A"))


def _parse_value(key: Key, text: str):
    text = text.strip()
    if key.optional and text.lower() in ("", "auto", "none"):
        return None
    if key.kind == "float":
        v = float(text)
        if not math.isfinite(v):
            raise ValueError("must be finite")
        return v
    if key.kind == "int":
        return int(text)
    if key.kind == "bool":
        low = text.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError("expected true or false")
    if key.kind == "floats":
        return tuple(float(t) for t in text.replace(",", " ").split())
    if key.kind == "variants":
        items = tuple(t for t in text.replace(",", " ").split())
        if not items:
            raise ValueError("at least one variant needed")
        return tuple(Variant.parse(t).value for t in items)
    return text


def _format_value(key: Key, value) -> str:
    if value is None:
        return "auto"
    if key.kind == "float":
        return repr(float(value))
    if key.kind == "bool":
        return "true" if value else "false"
    if key.kind == "floats":
        return ", ".join(repr(float(v)) for v in value)
    if key.kind == "variants":
        return ", ".join(value)
    return str(value)


def _validate(cfg: RunConfig):
    g = cfg.values.get
    problems = []
    e = g(("run", "E_i_meV"))
    if e is not None and not e > 0:
        problems.append("[run] E_i_meV must be positive")
    th = g(("run", "theta_i_deg"))
    if th is not None and not abs(th) < 90:
        problems.append("[run] theta_i_deg must lie strictly between -90 and 90")
    seed = g(("run", "seed"))
    if seed is not None and not 0 <= seed <= U64_MAX:
        problems.append("[run] seed must be an unsigned 64-bit integer")
    if g(("run", "threads"), 1) < 1:
        problems.append("[run] threads must be at least 1")
    for name in ("morse_D_meV", "morse_alpha_per_A", "lj_epsilon_meV", "lj_sigma_A",
                 "hardwall_a_A", "hbar2_over_2m_meV_A2"):
        v = g(("potential", name))
        if v is not None and not v > 0:
            problems.append(f"[potential] {name} must be positive")
    a, zr = g(("potential", "hardwall_a_A")), g(("potential", "hardwall_zr_A"))
    if a is not None and zr is not None and a > 0 and not abs(zr) < a:
        problems.append("[potential] hardwall_zr_A must satisfy |z_r| < hardwall_a_A")
    for sec, lo, hi in (("scan", "b_min_A", "b_max_A"), ("scan", "x_min_A", "x_max_A"),
                        ("scan", "z_min_A", "z_max_A"), ("tdse", "z_min_A", "z_max_A")):
        vlo, vhi = g((sec, lo)), g((sec, hi))
        if vlo is not None and vhi is not None and not vlo < vhi:
            problems.append(f"[{sec}] {lo} must be below {hi}")
    for sec, name, minimum in (("scan", "n_samples", 2), ("scan", "n_angles", 2),
                               ("scan", "n_rays", 1), ("scan", "n_x", 2), ("scan", "n_z", 2),
                               ("newton", "record_every", 1), ("tdse", "n_gaussians", 1),
                               ("tdse", "monitor_every", 0), ("tdse", "snapshot_every", 0),
                               ("bohm", "n_per_line", 0), ("bohm", "n_born", 0),
                               ("bohm", "record_every", 1), ("bohm", "vortex_every", 1),
                               ("bohm", "max_subdivisions", 1), ("newton", "n_trajectories", 0)):
        v = g((sec, name))
        if v is not None and v < minimum:
            problems.append(f"[{sec}] {name} must be at least {minimum}")
    for sec, name in (("newton", "dt_ps"), ("newton", "t_max_ps"), ("newton", "x_cut_A"),
                      ("tdse", "dt_safety"), ("tdse", "t_final_ps"), ("tdse", "v_cap_meV"),
                      ("tdse", "spacing_A"), ("tdse", "sigma_x_A"), ("tdse", "sigma_z_A"),
                      ("bohm", "node_threshold"), ("bohm", "max_displacement")):
        v = g((sec, name))
        if v is not None and not v > 0:
            problems.append(f"[{sec}] {name} must be positive")
    for name in ("n_x", "n_z"):
        v = g(("tdse", name))
        if v is not None and (v < 4 or v & (v - 1)):
            problems.append(f"[tdse] {name} must be a power of two >= 4")
    dt = g(("tdse", "dt_ps"))
    if dt is not None and not dt > 0:
        problems.append("[tdse] dt_ps must be positive or auto")
    order = g(("bohm", "order"))
    if order is not None and (order < 2 or order % 2):
        problems.append("[bohm] order must be an even integer >= 2")
    region = g(("bohm", "vortex_region_A"))
    if region is not None and (len(region) != 4 or not (region[0] < region[1]
                                                         and region[2] < region[3])):
        problems.append("[bohm] vortex_region_A needs x_min, x_max, z_min, z_max")
    kind = g(("run", "kind"))
    variants = g(("run", "variants")) or ()
    if kind and kind.startswith(("tdse", "bohm", "newton", "potential-scan")):
        if "hardwall" in variants:
            problems.append(f"[run] variants: the hard-wall model has no potential for {kind}")
    return problems


def parse_config(source) -> RunConfig:
    """Parse INI text, a path, or a mapping ``{section: {key: text}}``.

    Raises:
        ConfigError: listing every unknown, missing or malformed key.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                    and "=" not in source):
        path = Path(source)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        parser.read_string(text, source=str(path))
    elif isinstance(source, dict):
        parser.read_dict(source)
    else:
        try:
            parser.read_string(source)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
    problems = []
    values = {}
    for section in parser.sections():
        if section not in _BY_SECTION:
            problems.append(f"unknown section [{section}]")
            continue
        for name in parser[section]:
            if name not in _BY_SECTION[section]:
                problems.append(f"unknown key [{section}] {name}")
    for key in SCHEMA:
        if parser.has_option(key.section, key.name):
            raw = parser.get(key.section, key.name)
            try:
                v = _parse_value(key, raw)
            except ValueError as exc:
                problems.append(f"[{key.section}] {key.name} = {raw!r}: {exc}")
                continue
            if key.choices and v not in key.choices:
                problems.append(f"[{key.section}] {key.name} = {v!r}: expected one of "
                                f"{', '.join(key.choices)}")
                continue
            values[(key.section, key.name)] = v
        elif key.required:
            problems.append(f"missing required key [{key.section}] {key.name}")
        else:
            values[(key.section, key.name)] = key.default
    cfg = RunConfig(values)
    problems.extend(_validate(cfg))
    if problems:
        raise ConfigError(problems)
    return cfg


def dump_config(cfg: RunConfig) -> str:
    """Canonical INI text listing every key."""
    lines = []
    section = None
    for key in SCHEMA:
        if key.section != section:
            if section is not None:
                lines.append("")
            lines.append(f"[{key.section}]")
            section = key.section
        lines.append(f"{key.name} = {_format_value(key, cfg.get(key.section, key.name))}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode("ascii")).hexdigest()
