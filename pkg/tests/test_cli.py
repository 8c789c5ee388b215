import pytest

from shadowsim import cli
from shadowsim.config import ConfigError, apply_overrides, parse_config, parse_text
from shadowsim.engine import ScenarioConfig
from shadowsim.experiments import read_csv_data, write_csv
from shadowsim.propagation import TABLE1

SMALL = """\
[experiment]
name = tiny
n_seeds = 2
output = tiny.csv
per_seed_output = tiny_seeds.csv

[scenario]
region = 150x200
node_count = 8
propagation = shadowing
sim_duration_s = 3 s

[traffic]
connections = 2
cbr_start_max_s = 1

[sweep]
propagation = two_ray, shadowing
tx_power_dbm = 24.5, 27.67 dBm
"""


# ------------------------------------------------------------------ parsing

def test_empty_radio_section_gives_table_defaults():
    spec = parse_text("[radio]\n")
    assert spec.base.radio == TABLE1
    assert spec.n_seeds == 10 and spec.sweep == [{}]


def test_override_tx_power():
    spec = parse_text("[radio]\ntx_power_dbm = 27.67\n")
    assert spec.base.radio.tx_power == 27.67
    assert spec.base.radio.rx_threshold == TABLE1.rx_threshold


def test_radio_preset_and_override():
    spec = parse_text("[scenario]\nradio_preset = range250\n[radio]\ntx_power_dbm = 27.67\n")
    assert spec.base.radio.tx_height == 1.5 and spec.base.radio.tx_power == 27.67


@pytest.mark.parametrize("text,line,needle", [
    ("[scenario]\nnode_count = 30\nsim_duration_s = -1\n", 3, "sim_duration"),
    ("[radio]\n\nbogus = 3\n", 3, "unknown key"),
    ("[nowhere]\n", 1, "unknown section"),
    ("[radio]\ntx_power_dbm = 0.3 W\n", 2, "unit violation"),
    ("[mac]\ncw_min = 31.5\n", 2, "integer"),
    ("[radio]\ntx_power_dbm = 20\ntx_power_dbm = 21\n", 3, "duplicate"),
    ("tx_power_dbm = 20\n", 1, "outside"),
    ("[radio]\njust words\n", 2, "key = value"),
    ("[sweep]\nsuite = 0, 9\n", 2, "0..7"),
    ("[scenario]\nregion = big\n", 2, "region"),
    ("[radio]\nrx_threshold_dbm = 30\n", 2, "tx_power"),
])
def test_parse_errors_name_the_line(text, line, needle):
    with pytest.raises(ConfigError) as err:
        parse_text(text, "exp.cfg")
    assert err.value.line == line
    assert f"exp.cfg:{line}:" in str(err.value)
    assert needle in str(err.value)


def test_comments_and_units_accepted():
    spec = parse_text("# top\n[mac]  # trailing\nslot_time_s = 20e-6 s\ndifs_s = 50e-6\n")
    assert spec.base.mac.slot_time == 20e-6


def test_sweep_is_cartesian_and_ordered():
    spec = parse_text(SMALL)
    assert spec.sweep == [
        {"propagation": "two_ray", "tx_power": 24.5},
        {"propagation": "two_ray", "tx_power": 27.67},
        {"propagation": "shadowing", "tx_power": 24.5},
        {"propagation": "shadowing", "tx_power": 27.67},
    ]
    cfgs = spec.point_configs()
    assert cfgs[1].radio.tx_power == 27.67 and cfgs[1].propagation == "two_ray"


def test_suite_sweep_points():
    spec = parse_text("[sweep]\nsuite = all\nlong_retry_limit = 7, 12\n")
    cfgs = spec.point_configs()
    assert len(cfgs) == 16
    assert cfgs[0].node_count == 30 and cfgs[-1].node_count == 122
    assert cfgs[-1].mac.long_retry_limit == 12


def test_apply_overrides_leaves_base_untouched():
    base = ScenarioConfig()
    cfg = apply_overrides(base, {"tx_power": 27.67, "long_retry_limit": 12})
    assert base.radio.tx_power == 24.5 and base.mac.long_retry_limit == 7
    assert cfg.radio.tx_power == 27.67 and cfg.mac.long_retry_limit == 12


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "nope.cfg")


# ------------------------------------------------------------------ csv

def test_csv_schema_line_and_reader(tmp_path):
    path = write_csv(tmp_path / "x.csv", ("a", "b"), [(1, 0.5), (2, 1 / 3)], comments=["note"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# columns: a,b"
    assert lines[1].startswith("# generated:") and lines[2] == "# note"
    assert read_csv_data(path) == [["a", "b"], ["1", "0.5"], ["2", "0.3333333333"]]


# ------------------------------------------------------------------ cli

def _data(path):
    return read_csv_data(path)


@pytest.mark.parametrize("fig,columns", [
    ("fig5", ["area_m2", "d1_m", "d2_m", "mean_link_distance_m", "hop_estimate"]),
    ("fig6", ["d_m", "mean_pl_db", "pl_db", "pdf"]),
    ("fig7", ["d_m", "area_pi_d2_m2", "prob_above_threshold"]),
    ("fig8", ["d_m", "pr_dbm_two_ray", "pth_dbm"]),
])
def test_closed_form_builtins(tmp_path, capsys, fig, columns):
    assert cli.main(["builtin", fig, "--out", str(tmp_path)]) == 0
    path = tmp_path / f"{fig}.csv"
    assert capsys.readouterr().out.strip() == str(path)
    assert path.read_text().splitlines()[0] == "# columns: " + ",".join(columns)
    rows = _data(path)
    assert rows[0] == columns and len(rows) > 1


def test_fig5_values(tmp_path):
    cli.main(["builtin", "fig5", "--out", str(tmp_path)])
    rows = _data(tmp_path / "fig5.csv")[1:]
    assert len(rows) == 8
    assert [int(r[4]) for r in rows] == [1, 1, 1, 2, 2, 2, 2, 2]
    assert float(rows[0][3]) == pytest.approx(183.46, abs=0.01)


def test_fig7_anchor(tmp_path):
    cli.main(["builtin", "fig7", "--out", str(tmp_path)])
    rows = {int(float(r[0])): float(r[2]) for r in _data(tmp_path / "fig7.csv")[1:]}
    assert rows[40] == pytest.approx(0.99886, abs=1e-5)


def test_env_var_sets_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["builtin", "fig8"]) == 0
    assert (tmp_path / "env" / "fig8.csv").exists()
    # an explicit flag wins over the environment
    assert cli.main(["builtin", "fig8", "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "fig8.csv").exists()


def test_fig9_short_run_reports_k(tmp_path, capsys):
    assert cli.main(["builtin", "fig9", "--seeds", "1", "--duration", "3", "--out", str(tmp_path),
                     "--per-seed"]) == 0
    out = capsys.readouterr().out
    assert "calibrated k" in out
    rows = _data(tmp_path / "fig9.csv")
    assert rows[0] == ["area_m2", "dr_two_ray", "dr_shadowing_mean", "dr_shadowing_std", "dr_predicted"]
    assert len(rows) == 9
    preds = [float(r[4]) for r in rows[1:]]
    assert all(b <= a for a, b in zip(preds, preds[1:]))
    assert len(_data(tmp_path / "fig9_seeds.csv")) == 1 + 16


def test_fig10_short_run(tmp_path):
    assert cli.main(["builtin", "fig10", "--seeds", "1", "--duration", "2", "--out", str(tmp_path)]) == 0
    rows = _data(tmp_path / "fig10.csv")
    assert rows[0][:4] == ["area_m2", "dr_baseline", "dr_high_power", "dr_retry12"]
    assert len(rows) == 9


def test_run_config_is_reproducible(tmp_path):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(SMALL)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "b")]) == 0
    a, b = _data(tmp_path / "a" / "tiny.csv"), _data(tmp_path / "b" / "tiny.csv")
    assert a == b and len(a) == 5
    seeds = _data(tmp_path / "a" / "tiny_seeds.csv")
    assert len(seeds) == 1 + 4 * 2


def test_seeds_flag_overrides_spec(tmp_path):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(SMALL)
    cli.main(["run", str(cfg), "--seeds", "1", "--out", str(tmp_path)])
    assert {r[8] for r in _data(tmp_path / "tiny.csv")[1:]} == {"1"}


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[scenario]\nsim_duration_s = -4\n")
    assert cli.main(["run", str(bad), "--out", str(tmp_path)]) == 1
    assert "bad.cfg:2:" in capsys.readouterr().err


def test_usage_error_exit_code():
    assert cli.main(["builtin", "fig99"]) == 1
    assert cli.main([]) == 1


def test_runtime_failure_exit_code(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(SMALL)

    def boom(*a, **k):
        raise RuntimeError("replication 3 crashed")

    monkeypatch.setattr(cli.experiments, "run_experiment", boom)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path)]) == 2
    assert "replication 3 crashed" in capsys.readouterr().err
