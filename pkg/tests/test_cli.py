import json

import pytest

from robato.cli import main

GEN_CONFIG = """\
theta_true = 1.0
n = 120
p = 5
s = 2
coef_magnitude = 1.0
noise = "gaussian"
noise_sigma = 0.5
propensity_strength = 0.5
seed = 3
"""

FIT_CONFIG = """\
k_folds = 4
gamma = 0.5
alpha = 0.05
seed = 5
n_lambda = 12
"""

BENCH_CONFIG = """\
theta_true = 1.0
n = 150
p = 4
s = 2
noise = "gaussian"
noise_sigma = 0.5
propensity_strength = 0.5
k_folds = 4
gamma = 0.5
n_lambda = 10
variants = ["standard_dml", "unified"]
contamination_rates = [0.0]
n_reps = 2
seed = 9
"""


@pytest.fixture()
def workspace(tmp_path):
    (tmp_path / "gen.toml").write_text(GEN_CONFIG)
    (tmp_path / "fit.toml").write_text(FIT_CONFIG)
    (tmp_path / "bench.toml").write_text(BENCH_CONFIG)
    return tmp_path


def test_generate_fit_gatekeeper_roundtrip(workspace, capsys):
    data_path = workspace / "data.csv"
    report_path = workspace / "report.json"
    assert main(["generate", "--config", str(workspace / "gen.toml"),
                 "--out", str(data_path)]) == 0
    assert data_path.exists()

    assert main(["fit", "--data", str(data_path), "--config", str(workspace / "fit.toml"),
                 "--out", str(report_path), "--trace"]) == 0
    payload = json.loads(report_path.read_text())
    assert set(payload) == {"theta_hat", "std_error", "ci95", "gatekeeper",
                            "bias_term", "ess", "config", "trace"}
    assert set(payload["gatekeeper"]) == {"S", "K", "jb", "p", "mode"}
    assert payload["trace"][-1]["mu"] == 0.0
    assert len(payload["ci95"]) == 2

    capsys.readouterr()
    assert main(["gatekeeper", "--data", str(data_path),
                 "--config", str(workspace / "fit.toml")]) == 0
    decision = json.loads(capsys.readouterr().out)
    assert set(decision) == {"S", "K", "jb", "p", "mode", "alpha"}


def test_fit_without_trace_omits_trace_key(workspace):
    data_path = workspace / "data.csv"
    report_path = workspace / "report.json"
    main(["generate", "--config", str(workspace / "gen.toml"), "--out", str(data_path)])
    main(["fit", "--data", str(data_path), "--config", str(workspace / "fit.toml"),
          "--out", str(report_path)])
    assert "trace" not in json.loads(report_path.read_text())


def test_generate_with_contamination_marks_outliers(workspace):
    cfg = workspace / "gen_contaminated.toml"
    cfg.write_text(GEN_CONFIG + 'contamination_rate = 0.1\ncontamination_magnitude = 10.0\n')
    out = workspace / "data.csv"
    assert main(["generate", "--config", str(cfg), "--out", str(out)]) == 0
    header = out.read_text().splitlines()[0]
    assert header.endswith(",outlier")
    flags = [line.rsplit(",", 1)[1] for line in out.read_text().splitlines()[1:]]
    assert flags.count("1") == 12


def test_benchmark_command(workspace, capsys):
    out_dir = workspace / "bench_out"
    assert main(["benchmark", "--config", str(workspace / "bench.toml"),
                 "--out-dir", str(out_dir)]) == 0
    assert (out_dir / "benchmark.csv").exists()
    assert (out_dir / "benchmark.json").exists()
    assert "contamination rate" in capsys.readouterr().out


def test_cli_outputs_are_byte_identical_between_runs(workspace):
    d1, d2 = workspace / "d1.csv", workspace / "d2.csv"
    main(["generate", "--config", str(workspace / "gen.toml"), "--out", str(d1)])
    main(["generate", "--config", str(workspace / "gen.toml"), "--out", str(d2)])
    assert d1.read_bytes() == d2.read_bytes()
    r1, r2 = workspace / "r1.json", workspace / "r2.json"
    main(["fit", "--data", str(d1), "--config", str(workspace / "fit.toml"),
          "--out", str(r1), "--trace"])
    main(["fit", "--data", str(d1), "--config", str(workspace / "fit.toml"),
          "--out", str(r2), "--trace"])
    assert r1.read_bytes() == r2.read_bytes()


def test_unknown_config_key_exits_2(workspace, capsys):
    bad = workspace / "bad.toml"
    bad.write_text(FIT_CONFIG + "bogus_key = 1\n")
    data_path = workspace / "data.csv"
    main(["generate", "--config", str(workspace / "gen.toml"), "--out", str(data_path)])
    assert main(["fit", "--data", str(data_path), "--config", str(bad),
                 "--out", str(workspace / "r.json")]) == 2
    assert "bogus_key" in capsys.readouterr().err


def test_bad_enum_value_exits_2(workspace, capsys):
    bad = workspace / "bad2.toml"
    bad.write_text(FIT_CONFIG + 'estimator_variant = "magic"\n')
    data_path = workspace / "data.csv"
    main(["generate", "--config", str(workspace / "gen.toml"), "--out", str(data_path)])
    assert main(["fit", "--data", str(data_path), "--config", str(bad),
                 "--out", str(workspace / "r.json")]) == 2


def test_missing_data_file_exits_3(workspace, capsys):
    assert main(["fit", "--data", str(workspace / "nope.csv"),
                 "--config", str(workspace / "fit.toml"),
                 "--out", str(workspace / "r.json")]) == 3
    assert "data error" in capsys.readouterr().err


def test_malformed_csv_exits_3(workspace, capsys):
    bad_csv = workspace / "bad.csv"
    bad_csv.write_text("y,x1\n1.0,2.0\n")
    assert main(["fit", "--data", str(bad_csv), "--config", str(workspace / "fit.toml"),
                 "--out", str(workspace / "r.json")]) == 3
    assert "missing column: d" in capsys.readouterr().err


def test_nested_toml_table_rejected(workspace):
    bad = workspace / "nested.toml"
    bad.write_text("[section]\nk_folds = 4\n")
    assert main(["fit", "--data", str(workspace / "x.csv"), "--config", str(bad),
                 "--out", str(workspace / "r.json")]) == 2
