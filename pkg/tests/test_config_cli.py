import json
import math

import pytest

from heco import cli
from heco.config import config_hash, dump_config, parse_config
from heco.errors import ConfigError
from heco.io import read_csv

MINIMAL = """
[run]
kind = bound-states
E_i_meV = 10.0
"""


def test_defaults_are_the_published_values():
    cfg = parse_config(MINIMAL)
    m = cfg.model("full")
    assert (m.morse.D, m.morse.alpha, m.morse.z_m) == (4.0, 1.13, 1.22)
    assert m.lj.epsilon == 2.37
    assert (cfg.hardwall().a, cfg.hardwall().z_r) == (2.86, 0.28)
    assert cfg.constants().hbar2_over_2m == 0.5224
    integ = cfg.integrator()
    assert (integ.escape_z, integ.x_cut) == (10.27, 10.6)
    assert cfg.initial_state().center_z == 10.27


@pytest.mark.parametrize("fig", cli.FIGURES)
def test_bundled_configs_round_trip(fig):
    cfg = parse_config(cli.bundled_config_text(fig))
    text = dump_config(cfg)
    again = parse_config(text)
    assert again.values == cfg.values
    assert dump_config(again) == text
    assert config_hash(again) == config_hash(cfg)


def test_overrides_and_theta_units():
    cfg = parse_config(MINIMAL + "theta_i_deg = 20\n[potential]\nlj_sigma_A = 3.0\n")
    assert cfg.theta_i == pytest.approx(math.radians(20))
    assert cfg.model("full").lj.sigma == 3.0


def test_validation_lists_every_problem():
    text = """
[run]
kind = newton-deflection
bogus_key = 1
[nonsense]
x = 1
[newton]
dt_ps = -1
"""
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    msg = "\n".join(exc.value.problems)
    assert "E_i_meV" in msg
    assert "bogus_key" in msg
    assert "nonsense" in msg
    assert "dt_ps" in msg
    assert len(exc.value.problems) >= 4


def test_unknown_kind_and_bad_variant_rejected():
    with pytest.raises(ConfigError):
        parse_config("[run]\nkind = magic\nE_i_meV = 10\n")
    with pytest.raises(ConfigError):
        parse_config("[run]\nkind = tdse-intensity\nE_i_meV = 10\nvariants = hardwall\n")


def test_missing_energy_exit_code(tmp_path, capsys):
    p = tmp_path / "defaults-only.cfg"
    p.write_text("[run]\nkind = bound-states\n")
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "E_i_meV" in capsys.readouterr().err


def test_unknown_figure_lists_ids(capsys):
    assert cli.main(["reproduce", "fig99"]) == 2
    err = capsys.readouterr().err
    assert "fig2a" in err and "fig10" in err


def test_bad_seed_is_a_validation_error(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text(MINIMAL)
    assert cli.main(["run", "--config", str(p), "--seed", "-1"]) == 2
    assert cli.main(["run", "--config", str(p), "--seed", str(2 ** 64)]) == 2


def test_runtime_error_exit_code(tmp_path):
    # sigma large enough to bury the ray origins inside the adsorbate core is
    # fine for the potential, but a hard-wall radius beyond the launch height
    # breaks the ray tracer at run time
    p = tmp_path / "c.cfg"
    p.write_text("[run]\nkind = fermat-separatrices\nE_i_meV = 10\ntheta_i_deg = 20\n"
                 "variants = hardwall\n[potential]\nhardwall_a_A = 12.0\nhardwall_zr_A = 0.28\n"
                 "[scan]\nb_min_A = -10.6\nb_max_A = 10.6\n")
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 3


def test_out_dir_precedence(tmp_path, monkeypatch):
    p = tmp_path / "c.cfg"
    p.write_text(MINIMAL + f"out_dir = {tmp_path / 'from_cfg'}\n")
    monkeypatch.setenv("HECO_OUT", str(tmp_path / "from_env"))
    assert cli.main(["run", "--config", str(p)]) == 0
    assert (tmp_path / "from_env" / "manifest.json").exists()
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / "from_flag")]) == 0
    assert (tmp_path / "from_flag" / "manifest.json").exists()
    monkeypatch.delenv("HECO_OUT")
    assert cli.main(["run", "--config", str(p)]) == 0
    assert (tmp_path / "from_cfg" / "manifest.json").exists()


def test_bound_states_artifacts_and_manifest(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text(MINIMAL)
    out = tmp_path / "o"
    assert cli.main(["run", "--config", str(p), "--out", str(out)]) == 0
    rows = read_csv(out / "bound_states.csv")
    assert [float(r["energy_meV"]) for r in rows] == pytest.approx(
        [-2.53330, -0.60047, -0.00175], abs=5e-5)
    man = json.loads((out / "manifest.json").read_text())
    for key in ("inputs_sha256", "versions", "wall_time_s", "artifacts", "seed"):
        assert key in man
    assert man["inputs_sha256"] == config_hash(parse_config(MINIMAL))


def _artifact_hashes(out):
    man = json.loads((out / "manifest.json").read_text())
    return {a["path"]: a["sha256"] for a in man["artifacts"]}


TINY_BOHM = """
[run]
kind = bohm-trajectories
E_i_meV = 2.0
variants = flat
seed = 12345
[tdse]
n_x = 64
n_z = 128
z_min_A = -1.5
z_max_A = 38.5
center_z_A = 15.0
n_gaussians = 32
spacing_A = 0.5
sigma_x_A = 2.0
sigma_z_A = 2.0
t_final_ps = 0.3
[bohm]
n_born = 300
seeding = random
n_per_line = 5
"""


def test_rerun_with_same_seed_is_byte_identical(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text(TINY_BOHM)
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / "b")]) == 0
    ha, hb = _artifact_hashes(tmp_path / "a"), _artifact_hashes(tmp_path / "b")
    assert ha == hb
    assert any(k.endswith(".csv") for k in ha)
    assert cli.main(["run", "--config", str(p), "--seed", "7",
                     "--out", str(tmp_path / "c")]) == 0
    assert _artifact_hashes(tmp_path / "c") != ha


@pytest.mark.parametrize("fig", ["fig2a", "fig5"])
def test_reproduce_fast_figures(fig, tmp_path):
    out = tmp_path / fig
    assert cli.main(["reproduce", fig, "--out", str(out)]) == 0
    names = {a for a in _artifact_hashes(out)}
    if fig == "fig2a":
        rows = read_csv(out / "hardwall_spectrum.csv")
        assert list(rows[0]) == ["theta_d_deg", "delta_k", "I_total", "I_illum", "I_fraun"]
        assert max(float(r["I_total"]) for r in rows) == 1.0
    else:
        assert {"separatrices.csv", "rays.csv"} <= names
