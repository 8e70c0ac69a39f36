"""Command-line entry point: ``waterbench {synth,cluster,forecast,benchmark,report}``.

Every command accepts ``--config FILE`` (YAML). Explicit flags override the
file. Output file names depend only on the command, preset and method.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
from pathlib import Path

import click
import yaml

from . import evaluation, neural
from .clustering import PRESETS, ClusterParams, cluster_dataset, write_labels_csv, write_summary_csv
from .errors import ConfigError, WaterBenchError
from .ingest import Dataset, SynthConfig, align_groups, generate_synthetic, parse_dataset, write_dataset


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    data = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    return data


def _pick(cli_value, cfg: dict, key: str, default=None):
    if cli_value is not None:
        return cli_value
    return cfg.get(key, default)


def _synth_config(spec, seed: int | None, n_series: int | None = None) -> SynthConfig:
    if isinstance(spec, (str, Path)):
        p = Path(spec)
        if not p.is_file():
            raise ConfigError(f"synth config not found: {p}")
        spec = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        spec = spec.get("synth", spec)
    spec = dict(spec or {})
    if n_series is not None:
        spec["n_series"] = n_series
    if seed is not None and "seed" not in spec:
        spec["seed"] = seed
    return SynthConfig.from_mapping(spec)


def _dataset(cfg: dict, input_path, synth, seed) -> Dataset:
    input_path = _pick(input_path, cfg, "input")
    synth = synth if synth is not None else cfg.get("synth")
    if (input_path is None) == (synth is None):
        raise ConfigError("give exactly one of --input or --synth")
    if input_path is not None:
        p = Path(input_path)
        if not p.is_file():
            raise ConfigError(f"input file not found: {p}")
        return parse_dataset(p)
    return generate_synthetic(_synth_config(synth, seed))


def _cluster_params(cfg: dict, preset, min_pts, eps, cos) -> tuple[str, ClusterParams]:
    explicit = {k: v for k, v in (("min_pts", min_pts), ("eps", eps), ("cos_threshold", cos)) if v is not None}
    explicit = {**cfg.get("cluster", {}), **explicit}
    preset = _pick(preset, cfg, "preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
        base = dataclasses.asdict(PRESETS[preset])
        return preset, ClusterParams(**{**base, **explicit})
    if explicit:
        missing = {"min_pts", "eps", "cos_threshold"} - set(explicit)
        if missing:
            raise ConfigError(f"explicit cluster parameters missing {sorted(missing)}")
        return "custom", ClusterParams(**explicit)
    return "D1", PRESETS["D1"]


def _methods(cfg: dict, methods) -> list[str]:
    raw = _pick(methods, cfg, "methods", list(evaluation.METHODS))
    if isinstance(raw, str):
        raw = [m.strip() for m in raw.split(",") if m.strip()]
    unknown = set(raw) - set(evaluation.METHODS)
    if unknown:
        raise ConfigError(f"unknown methods {sorted(unknown)}; choose from {', '.join(evaluation.METHODS)}")
    return list(raw)


def _train_config(cfg: dict, seed: int) -> neural.TrainConfig:
    overrides = dict(cfg.get("train", {}))
    known = {f.name for f in dataclasses.fields(neural.TrainConfig)}
    unknown = set(overrides) - known
    if unknown:
        raise ConfigError(f"unknown train keys {sorted(unknown)}")
    overrides.setdefault("seed", seed)
    return neural.TrainConfig(**overrides)


def _out_dir(cfg: dict, out) -> Path:
    p = Path(_pick(out, cfg, "out", "out"))
    p.mkdir(parents=True, exist_ok=True)
    return p


def _common(fn):
    fn = click.option("--workers", type=int, default=None, help="Worker processes (default: CPU count).")(fn)
    fn = click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Global seed (default 42).")(fn)
    fn = click.option("--config", "config", type=click.Path(), default=None, help="YAML run configuration.")(fn)
    return fn


def _data_options(fn):
    fn = click.option("--synth", type=click.Path(), default=None, help="YAML synthetic-data block.")(fn)
    fn = click.option("--input", "input_path", type=click.Path(), default=None, help="Dataset CSV.")(fn)
    return fn


def _cluster_options(fn):
    fn = click.option("--cos", type=float, default=None, help="Cosine-similarity floor.")(fn)
    fn = click.option("--eps", type=float, default=None, help="Euclidean radius in m3.")(fn)
    fn = click.option("--min-pts", type=int, default=None, help="Minimum neighbourhood size.")(fn)
    fn = click.option("--preset", default=None, help="Named parameter set D1..D4 (comma list for `cluster`).")(fn)
    return fn


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (WaterBenchError, OSError, yaml.YAMLError, TypeError) as exc:
            raise click.ClickException(f"{type(exc).__name__}: {exc}") from None

    return wrapper


@click.group()
def main():
    """Forecasting benchmark for quarterly water-consumption series."""


@main.command()
@_common
@click.option("--synth", type=click.Path(), default=None, help="YAML synthetic-data block.")
@click.option("--n-series", type=int, default=None)
@_guard
def synth(config, seed, out, workers, synth, n_series):
    """Generate a synthetic dataset and write it as CSV."""
    cfg = _load_config(config)
    seed = _pick(seed, cfg, "seed", 42)
    spec = synth if synth is not None else cfg.get("synth", {})
    sc = _synth_config(spec, seed, n_series)
    ds = generate_synthetic(sc)
    out_dir = _out_dir(cfg, out)
    write_dataset(ds, out_dir / "synth.csv")
    groups = align_groups(ds)
    click.echo(f"synth: {len(ds)} series, {len(groups)} aligned groups -> {out_dir / 'synth.csv'}")


@main.command()
@_common
@_data_options
@_cluster_options
@_guard
def cluster(config, seed, out, workers, input_path, synth, preset, min_pts, eps, cos):
    """Cluster aligned groups and write the summary table plus labels."""
    cfg = _load_config(config)
    seed = _pick(seed, cfg, "seed", 42)
    ds = _dataset(cfg, input_path, synth, seed)
    groups = align_groups(ds)
    out_dir = _out_dir(cfg, out)
    names = _pick(preset, cfg, "preset")
    names = [n.strip() for n in names.split(",")] if isinstance(names, str) else [names]
    summaries = []
    for name in names:
        label, params = _cluster_params(cfg, name, min_pts, eps, cos)
        clustering, summary = cluster_dataset(groups, params, label)
        write_labels_csv(clustering, out_dir / f"cluster_labels_{label}.csv")
        summaries.append(summary)
        click.echo(
            f"cluster {label}: {summary.n_series_clustered} series in "
            f"{summary.n_clusters} clusters, noise {summary.noise_pct:.2f}%"
        )
    write_summary_csv(summaries, out_dir / "cluster_summary.csv")


@main.command()
@_common
@_data_options
@_cluster_options
@click.option("--methods", default=None, help="Comma-separated method list.")
@click.option("--horizon", type=int, default=None, help="Quarters to forecast (default 4).")
@_guard
def forecast(config, seed, out, workers, input_path, synth, preset, min_pts, eps, cos, methods, horizon):
    """Fit on full series and forecast beyond their last observation."""
    cfg = _load_config(config)
    seed = _pick(seed, cfg, "seed", 42)
    ds = _dataset(cfg, input_path, synth, seed)
    methods = _methods(cfg, methods)
    label, params = _cluster_params(cfg, preset, min_pts, eps, cos)
    horizon = _pick(horizon, cfg, "horizon", 4)
    rows, failed = evaluation.forecast_dataset(
        ds, methods, horizon, params, _train_config(cfg, seed), seed
    )
    out_dir = _out_dir(cfg, out)
    for method in methods:
        suffix = f"{method}_{label}" if method in evaluation.CLUSTERED_METHODS else method
        path = out_dir / f"forecast_{suffix}.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("series_id", "method", "cluster_id", "year", "month", "forecast_m3", "status"))
            for r in rows:
                if r.method == method:
                    cid = "" if r.cluster_id is None else r.cluster_id
                    writer.writerow((r.series_id, method, cid, r.timestamp.year, r.timestamp.month, repr(r.value), "ok"))
            for f in failed:
                if f.method == method:
                    cid = "" if f.cluster_id is None else f.cluster_id
                    writer.writerow((f.series_id, method, cid, "", "", "", f.status))
        n = len({r.series_id for r in rows if r.method == method})
        click.echo(f"forecast {method}: {n} series, horizon {horizon} -> {path}")


def _write_curves(report: evaluation.EvalReport, out_dir: Path, label: str) -> None:
    for (method, metric), curve in sorted(report.curves.items()):
        evaluation.write_density_csv(curve, out_dir / f"density_{label}_{method}_{metric}.csv")


def _write_summary(report: evaluation.EvalReport, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("method", "n_rows", "n_ok", "median_mae", "median_mse", "median_rmse"))
        for s in report.summary():
            writer.writerow((s["method"], s["n_rows"], s["n_ok"],
                             repr(s["median_mae"]), repr(s["median_mse"]), repr(s["median_rmse"])))


@main.command()
@_common
@_data_options
@_cluster_options
@click.option("--methods", default=None, help="Comma-separated method list.")
@_guard
def benchmark(config, seed, out, workers, input_path, synth, preset, min_pts, eps, cos, methods):
    """Train/test evaluation of every method; writes the report and KDE curves."""
    cfg = _load_config(config)
    seed = _pick(seed, cfg, "seed", 42)
    ds = _dataset(cfg, input_path, synth, seed)
    methods = _methods(cfg, methods)
    label, params = _cluster_params(cfg, preset, min_pts, eps, cos)
    workers = _pick(workers, cfg, "workers", evaluation.default_workers())
    report = evaluation.benchmark(ds, methods, params, _train_config(cfg, seed), seed, workers)
    out_dir = _out_dir(cfg, out)
    evaluation.write_report_csv(report, out_dir / f"benchmark_{label}.csv")
    _write_summary(report, out_dir / f"benchmark_{label}_summary.csv")
    _write_curves(report, out_dir, label)
    for s in report.summary():
        click.echo(
            f"benchmark {label} {s['method']}: {s['n_ok']}/{s['n_rows']} ok, "
            f"median MAE {s['median_mae']:.4f}"
        )


@main.command()
@click.option("--report", "report_path", type=click.Path(), required=True, help="Benchmark report CSV.")
@click.option("--out", type=click.Path(file_okay=False), default=None)
@click.option("--grid-size", type=int, default=256, show_default=True)
@_guard
def report(report_path, out, grid_size):
    """Recompute density curves and the summary table from a report CSV."""
    p = Path(report_path)
    if not p.is_file():
        raise ConfigError(f"report file not found: {p}")
    rep = evaluation.read_report_csv(p)
    rep.curves = evaluation.density_curves(rep, grid_size)
    out_dir = _out_dir({}, out or p.parent)
    label = p.stem
    _write_summary(rep, out_dir / f"report_{label}_summary.csv")
    _write_curves(rep, out_dir, f"report_{label}")
    for s in rep.summary():
        click.echo(f"report {s['method']}: {s['n_ok']}/{s['n_rows']} ok, median MAE {s['median_mae']:.4f}")


if __name__ == "__main__":
    main()
