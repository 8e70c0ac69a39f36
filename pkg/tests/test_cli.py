import csv

import pytest
from click.testing import CliRunner

from waterbench.cli import main
from waterbench.clustering import PRESETS
from waterbench.evaluation import REPORT_HEADER, read_report_csv


@pytest.fixture
def synth_yaml(tmp_path):
    p = tmp_path / "synth.yaml"
    p.write_text("n_series: 30\nseed: 3\nn_regions: 1\nn_month_patterns: 1\n")
    return p


def run(*args):
    result = CliRunner().invoke(main, [str(a) for a in args])
    return result


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_synth_writes_dataset(tmp_path, synth_yaml):
    r = run("synth", "--synth", synth_yaml, "--out", tmp_path / "o")
    assert r.exit_code == 0, r.output
    rows = read_csv(tmp_path / "o" / "synth.csv")
    assert rows[0] == ["series_id", "region_id", "year", "month", "consumption_m3"]
    assert len({row[0] for row in rows[1:]}) == 30
    assert r.output.startswith("synth: 30 series")


def test_cluster_table_columns(tmp_path, synth_yaml):
    r = run("cluster", "--synth", synth_yaml, "--preset", "D1,D4", "--out", tmp_path)
    assert r.exit_code == 0, r.output
    rows = read_csv(tmp_path / "cluster_summary.csv")
    assert rows[0] == ["preset", "min_pts", "eps", "cos_threshold",
                       "n_series_clustered", "n_clusters", "noise_pct"]
    assert [row[0] for row in rows[1:]] == ["D1", "D4"]
    assert float(rows[2][2]) == PRESETS["D4"].eps
    labels = read_csv(tmp_path / "cluster_labels_D1.csv")
    assert labels[0] == ["series_id", "cluster_id"] and len(labels) == 31
    assert len(r.output.strip().splitlines()) == 2


def test_explicit_cluster_params(tmp_path, synth_yaml):
    r = run("cluster", "--synth", synth_yaml, "--min-pts", 3, "--eps", 8, "--cos", 0.7, "--out", tmp_path)
    assert r.exit_code == 0, r.output
    assert read_csv(tmp_path / "cluster_summary.csv")[1][:4] == ["custom", "3", "8.0", "0.7"]
    r = run("cluster", "--synth", synth_yaml, "--eps", 8, "--out", tmp_path)
    assert r.exit_code != 0 and "missing" in r.output


def test_benchmark_then_report_rerun_identical(tmp_path, synth_yaml):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("train:\n  epochs: 5\n  cluster_epochs: 5\npreset: D4\ncluster:\n  min_pts: 3\n")
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        r = run("synth", "--synth", synth_yaml, "--out", out)
        assert r.exit_code == 0
        r = run("benchmark", "--config", cfg, "--input", out / "synth.csv", "--out", out, "--workers", 1)
        assert r.exit_code == 0, r.output
        r = run("report", "--report", out / "benchmark_D4.csv")
        assert r.exit_code == 0, r.output
        outs.append(out)
    files = sorted(p.name for p in outs[0].iterdir())
    assert "benchmark_D4.csv" in files and "report_benchmark_D4_summary.csv" in files
    assert any(f.startswith("density_D4_gru_clustered_") for f in files)
    assert files == sorted(p.name for p in outs[1].iterdir())
    for name in files:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
    header = read_csv(outs[0] / "benchmark_D4.csv")[0]
    assert tuple(header) == REPORT_HEADER
    rep = read_report_csv(outs[0] / "benchmark_D4.csv")
    assert {r.method for r in rep.rows} == {"baseline", "sarima", "lstm", "gru",
                                             "lstm_clustered", "gru_clustered"}


def test_cli_flag_beats_config(tmp_path, synth_yaml):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(f"synth: {synth_yaml}\nmethods: [baseline, sarima]\nout: {tmp_path / 'cfgout'}\n")
    r = run("benchmark", "--config", cfg, "--methods", "baseline", "--out", tmp_path / "cli")
    assert r.exit_code == 0, r.output
    rep = read_report_csv(tmp_path / "cli" / "benchmark_D1.csv")
    assert {row.method for row in rep.rows} == {"baseline"}
    assert not (tmp_path / "cfgout").exists()


def test_forecast(tmp_path, synth_yaml):
    r = run("forecast", "--synth", synth_yaml, "--methods", "baseline,sarima", "--horizon", 3,
            "--out", tmp_path)
    assert r.exit_code == 0, r.output
    rows = read_csv(tmp_path / "forecast_baseline.csv")
    assert len(rows) == 1 + 30 * 3
    assert (tmp_path / "forecast_sarima.csv").exists()


def test_missing_input_names_path(tmp_path):
    missing = tmp_path / "nope.csv"
    r = run("benchmark", "--input", missing, "--out", tmp_path)
    assert r.exit_code != 0
    assert str(missing) in r.output


def test_needs_exactly_one_source(tmp_path, synth_yaml):
    r = run("cluster", "--out", tmp_path)
    assert r.exit_code != 0 and "exactly one" in r.output
    r = run("cluster", "--synth", synth_yaml, "--input", tmp_path / "x.csv", "--out", tmp_path)
    assert r.exit_code != 0


def test_bad_preset_and_method(tmp_path, synth_yaml):
    r = run("cluster", "--synth", synth_yaml, "--preset", "D9", "--out", tmp_path)
    assert r.exit_code != 0 and "D9" in r.output
    r = run("benchmark", "--synth", synth_yaml, "--methods", "prophet", "--out", tmp_path)
    assert r.exit_code != 0 and "prophet" in r.output


def test_malformed_csv_reports_error(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("series_id,region_id,year,month,consumption_m3\nS1,R1,2013,13,4.0\n")
    r = run("cluster", "--input", bad, "--out", tmp_path)
    assert r.exit_code != 0 and "MalformedRow" in r.output
