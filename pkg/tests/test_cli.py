from typer.testing import CliRunner

from snrlab.cli import app
from snrlab.models.config import load_config

runner = CliRunner()


def test_selftest_passes():
    result = runner.invoke(app, ["selftest"])
    assert result.exit_code == 0, result.output
    assert "wavelet_round_trip" in result.output


def test_selftest_negative_control():
    result = runner.invoke(app, ["selftest", "--perturb-haar", "0.6"])
    assert result.exit_code == 1
    assert "wavelet_round_trip" in result.output
    assert "wavelet_energy" in result.output


def test_run_records_to_ledger(write_config):
    path = write_config("cli_run")
    result = runner.invoke(app, ["run", str(path)])
    assert result.exit_code == 0, result.output
    root = load_config(path).output_dir.parent
    assert (root / "cli_run" / "trajectories.csv").exists()
    assert (root / "ledger.duckdb").exists()

    status = runner.invoke(app, ["status", "--root", str(root)])
    assert status.exit_code == 0, status.output
    assert "cli_run" in status.output


def test_config_error_exit_code(write_config):
    path = write_config("typo", '[corection]\nmode = "DCW"\n')
    result = runner.invoke(app, ["run", str(path)])
    assert result.exit_code == 2
    assert "corection.mode" in result.output
    assert not (path.parent / "runs").exists()


def test_threads_env_error(write_config, monkeypatch):
    monkeypatch.setenv("SNRLAB_THREADS", "-2")
    result = runner.invoke(app, ["run", str(write_config("threads"))])
    assert result.exit_code == 2
    assert "SNRLAB_THREADS" in result.output


def test_schedule_dump_stdout(write_config):
    result = runner.invoke(app, ["schedule-dump", str(write_config("dump"))])
    assert result.exit_code == 0, result.output
    lines = result.output.strip().splitlines()
    assert lines[0] == "t,beta,alpha_bar,beta_tilde,sigma,snr"
    assert len(lines) == 1 + 10
    assert lines[1].startswith("1,")


def test_schedule_dump_file(write_config, tmp_path):
    out = tmp_path / "dump" / "schedule.csv"
    result = runner.invoke(app, ["schedule-dump", str(write_config("dump")), "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert out.read_text().startswith("t,beta,alpha_bar,beta_tilde,sigma,snr\n")


def test_theory_command(write_config):
    path = write_config("cli_theory")
    result = runner.invoke(app, ["theory", str(path)])
    assert result.exit_code == 0, result.output
    assert (load_config(path).output_dir / "theory_curves.csv").exists()


def test_status_without_ledger(tmp_path):
    result = runner.invoke(app, ["status", "--root", str(tmp_path)])
    assert result.exit_code == 0
    assert "snrlab run" in result.output
