import hashlib
import json

import pytest

from snrlab.core.experiment import format_csv, run_experiment, two_stage_search
from snrlab.models.config import ConfigError, load_config

from .conftest import SMALL_CONFIG


def _lines(path):
    return path.read_text().splitlines()


def test_sample_writes_trajectories(write_config):
    report = run_experiment(write_config("sample"), threads=1)
    out = load_config(write_config("sample")).output_dir
    lines = _lines(out / "trajectories.csv")
    assert lines[0] == "chain_id,t,mean_sq_norm"
    assert len(lines) == 1 + 20 * 11
    assert lines[1].startswith("0,10,")
    assert report.metric("final_mean_sq_norm").value > 0

    manifest = json.loads((out / "manifest.json").read_text())
    digest = hashlib.sha256((out / "trajectories.csv").read_bytes()).hexdigest()
    assert manifest["files"]["trajectories.csv"] == digest
    assert manifest["config_hash"] == report.config_hash
    assert json.loads((out / "report.json").read_text())["experiment"] == "sample"


def test_outputs_independent_of_threads(write_config):
    base = SMALL_CONFIG.replace("n_chains = 20", "n_chains = 600")
    extra = '[correction]\nmode = "DCW"\nlambda_l = 0.05\nlambda_h = 0.95\n'
    one = write_config("one", extra, base=base)
    many = write_config("many", extra, base=base)
    run_experiment(one, threads=1)
    run_experiment(many, threads=4)
    a = load_config(one).output_dir / "trajectories.csv"
    b = load_config(many).output_dir / "trajectories.csv"
    assert a.read_bytes() == b.read_bytes()


def test_zero_lambda_is_byte_identical(write_config):
    plain = write_config("plain")
    neutral = write_config("neutral", '[correction]\nmode = "DCW"\nlambda_l = 0.0\nlambda_h = 1.0\n')
    run_experiment(plain, threads=2)
    run_experiment(neutral, threads=2)
    a = load_config(plain).output_dir / "trajectories.csv"
    b = load_config(neutral).output_dir / "trajectories.csv"
    assert a.read_bytes() == b.read_bytes()


def test_config_error_leaves_no_output(write_config, tmp_path):
    path = write_config("broken", '[corection]\nmode = "DCW"\n')
    with pytest.raises(ConfigError) as exc:
        run_experiment(path)
    assert exc.value.key_path == "corection.mode"
    assert not (tmp_path / "runs").exists()


def test_theory_curves(write_config):
    report = run_experiment(write_config("theory"), experiment="theory-curves")
    out = load_config(write_config("theory")).output_dir
    lines = _lines(out / "theory_curves.csv")
    assert lines[0] == "t,gamma_hat,psi,snr_forward,snr_reverse,eta"
    assert len(lines) == 1 + 9
    assert _lines(out / "theory_compound.csv")[0] == "t,gamma_hat,noise_std,snr_reverse"
    assert report.metric("max_snr_ratio").value < 1.0


def test_forward_vs_reverse_grid(write_config):
    base = SMALL_CONFIG.replace("n = 40", "n = 40\nseeds = [0, 1]\nbatch_sizes = [30]")
    path = write_config("fvr", base=base)
    report = run_experiment(path, experiment="forward-vs-reverse")
    out = load_config(path).output_dir
    assert _lines(out / "norms_seed0_n30.csv")[0] == "t,forward,reverse,stderr_f,stderr_r"
    assert (out / "norms_seed1_n30.csv").exists()
    dominance = _lines(out / "dominance.csv")
    assert dominance[0] == "seed,n,fraction_reverse_ge_forward"
    assert len(dominance) == 3
    fractions = [float(line.split(",")[2]) for line in dominance[1:]]
    assert report.notes["dominance_ordering_agrees"] == (len({f >= 0.5 for f in fractions}) == 1)
    assert report.notes["reverse_dominates"] == (min(fractions) >= 0.95)


@pytest.mark.parametrize(
    "experiment, filename, header, rows",
    [
        ("sliding-window", "sliding_window.csv", "s,t,mean,stderr,n", 10),
        ("recon-norms", "recon_norms.csv", "t,forward,reverse,data,stderr_f,stderr_r,stderr_d", 10),
        ("metrics", "metrics.csv", "metric_name,value,n_a,n_b,seed", 6),
        ("ablation", "ablation.csv", "variant,energy_distance,stderr,sliced_wasserstein", 5),
        (
            "gamma-psi",
            "gamma_psi.csv",
            "t,gamma_hat_emp,gamma_hat_stderr,noise_std_emp,noise_std_stderr,"
            "gamma_hat_theory,noise_std_theory,snr_emp,snr_theory",
            3,
        ),
    ],
)
def test_experiment_outputs(write_config, experiment, filename, header, rows):
    path = write_config(experiment.replace("-", "_"))
    run_experiment(path, threads=2, experiment=experiment)
    lines = _lines(load_config(path).output_dir / filename)
    assert lines[0] == header
    assert len(lines) == 1 + rows


def test_ablation_variants(write_config):
    path = write_config("ablation_rows", '[correction]\nlambda_l = 0.05\nlambda_h = 0.95\n')
    run_experiment(path, experiment="ablation")
    lines = _lines(load_config(path).output_dir / "ablation.csv")
    assert [ln.split(",")[0] for ln in lines[1:]] == ["none", "DC", "DH", "DL", "DCW"]


def test_unknown_experiment(write_config):
    with pytest.raises(ValueError):
        run_experiment(write_config("x"), experiment="fid")


def test_search_writes_trace(write_config):
    extra = "[search]\ncoarse_step = 0.1\nfine_step = 0.05\n"
    path = write_config("search", extra)
    result, report = two_stage_search(path, threads=1)
    lines = _lines(load_config(path).output_dir / "search_trace.csv")
    assert lines[0] == "stage,lambda_l,lambda_h,objective,stderr,sliced_wasserstein"
    assert lines[1].startswith("baseline,0,1,")
    assert len(lines) == 1 + len(result.trace)
    assert report.metric("lambda_l_star").value == result.lambda_l


def test_format_csv_precision():
    text = format_csv("a,b", [(1, 0.1), ("x", 1e-20)])
    assert text == "a,b\n1,0.10000000000000001\nx,9.9999999999999995e-21\n"
