import pytest

from snrlab.models.config import ConfigError, LabConfig, load_config, thread_count
from snrlab.models.correction import CorrectionMode
from snrlab.models.schedule import SigmaMode


def test_defaults():
    config = LabConfig.from_dict({})
    assert config.schedule.T == 100
    assert config.build_schedule().sigma_mode is SigmaMode.POSTERIOR
    assert config.correction.mode is CorrectionMode.NONE
    assert config.t_probe == 50
    assert config.n_data == config.run.n_chains
    assert config.build_mixture().shape == (1, 8, 8)


def test_load_small_config(write_config):
    path = write_config("small", '[correction]\nmode = "DCW"\nlambda_l = 0.06\nlambda_h = 0.94\n')
    config = load_config(path)
    assert config.name == "small"
    assert config.correction.mode is CorrectionMode.DCW
    assert config.output_dir == path.parent / "runs" / "small"
    assert config.build_bias().gamma[3] == pytest.approx(0.98)


@pytest.mark.parametrize(
    "raw, key_path",
    [
        ({"corection": {"mode": "DCW"}}, "corection.mode"),
        ({"correction": {"mdoe": "DCW"}}, "correction.mdoe"),
        ({"correction": {"mode": "XYZ"}}, "correction.mode"),
        ({"correction": {"lambda_h": 1.5}}, "correction"),
        ({"correction": {"weight_kind": "piecewise", "t_s": 101}}, "correction.t_s"),
        ({"schedule": {"T": "100"}}, "schedule.T"),
        ({"schedule": {"kind": "quadratic"}}, "schedule.kind"),
        ({"run": {"record": ["states", "velocity"]}}, "run.record[1]"),
        ({"diagnostics": {"t_list": [0, 5]}}, "diagnostics.t_list"),
        ({"experiment": {"name": "fid"}}, "experiment.name"),
        ({"data": {"modes": [{"mean": {"kind": "stripes"}}]}}, "data.modes[0].mean.kind"),
        ({"search": {"coarse_step": 0.001, "fine_step": 0.01}}, "search.fine_step"),
    ],
)
def test_errors_name_the_key(raw, key_path):
    with pytest.raises(ConfigError) as exc:
        LabConfig.from_dict(raw)
    assert exc.value.key_path == key_path
    assert key_path in str(exc.value)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.toml")


def test_bad_toml(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text("[schedule\nT = 3\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_config_hash_tracks_content():
    a = LabConfig.from_dict({"run": {"seed": 1}})
    b = LabConfig.from_dict({"run": {"seed": 1}})
    c = LabConfig.from_dict({"run": {"seed": 2}})
    assert a.config_hash == b.config_hash
    assert a.config_hash != c.config_hash
    snap = a.snapshot()
    assert snap["correction"]["mode"] == "none"
    assert snap["name"] == "default"


def test_bias_profile_from_csv(tmp_path):
    (tmp_path / "phi.csv").write_text("\n".join(["0.05"] * 10) + "\n")
    path = tmp_path / "csvbias.toml"
    path.write_text('[schedule]\nT = 10\n[denoiser]\nkind = "biased"\ngamma = 1\nphi = "phi.csv"\n')
    profile = load_config(path).build_bias()
    assert profile.gamma[5] == 1.0
    assert profile.phi[5] == pytest.approx(0.05)


def test_thread_count(monkeypatch):
    monkeypatch.setenv("SNRLAB_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("SNRLAB_THREADS", "zero")
    with pytest.raises(ConfigError):
        thread_count()
    monkeypatch.delenv("SNRLAB_THREADS")
    assert thread_count() >= 1
