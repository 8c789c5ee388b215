"""Figure analogues and config-driven sweeps, written as CSV.

Every file starts with ``# columns: ...`` followed by optional comment lines
(a generation timestamp among them) and then a plain header row and data.
Only comment lines vary between identical runs.
"""

from __future__ import annotations

import csv
import datetime as _dt
from dataclasses import replace
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .analytics import hop_estimate, mean_link_distance
from .config import ExperimentSpec
from .engine import (
    DROP_CAUSES,
    AggregateReport,
    MetricsReport,
    ScenarioConfig,
    aggregate,
    replication_configs,
    run_many,
    scenario_suite,
)
from .propagation import (
    HIGH_POWER_DBM,
    TABLE1,
    RadioParams,
    calibrate_k,
    mean_path_loss_db,
    path_loss_pdf,
    predicted_delivery_ratio,
    prob_above_threshold,
    received_power_tworay,
)

FIGURES = ("fig5", "fig6", "fig7", "fig8", "fig9", "fig10")
Variant = Callable[[ScenarioConfig], ScenarioConfig]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence], comments: Sequence[str] = (),
              timestamp: bool = True) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write("# columns: " + ",".join(columns) + "\n")
        if timestamp:
            fh.write(f"# generated: {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}\n")
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def read_csv_data(path) -> list[list[str]]:
    """Header and data rows of a file written by :func:`write_csv`, comments stripped."""
    with open(path, newline="") as fh:
        return list(csv.reader(line for line in fh if not line.startswith("#")))


# ---------------------------------------------------------------- closed form

def fig5(out_dir, range_m: float = 250.0) -> Path:
    rows = []
    for cfg in scenario_suite():
        reg = cfg.region
        stats = mean_link_distance(reg)
        rows.append((reg.area, reg.width_d1, reg.length_d2, stats.mean_distance, hop_estimate(reg, range_m)))
    return write_csv(Path(out_dir) / "fig5.csv",
                     ("area_m2", "d1_m", "d2_m", "mean_link_distance_m", "hop_estimate"), rows,
                     comments=[f"hop_estimate uses R = {range_m:g} m"])


def fig6(out_dir, params: RadioParams = TABLE1, distances=(4.0, 40.0, 80.0, 186.0)) -> Path:
    rows = []
    for d in distances:
        mu = mean_path_loss_db(params, d)
        grid = np.arange(np.floor(mu - 5 * params.shadow_sigma), np.ceil(mu + 5 * params.shadow_sigma) + 1e-9, 0.25)
        for x, p in zip(grid, path_loss_pdf(params, d, grid)):
            rows.append((d, mu, x, p))
    return write_csv(Path(out_dir) / "fig6.csv", ("d_m", "mean_pl_db", "pl_db", "pdf"), rows)


def fig7(out_dir, params: RadioParams = TABLE1, d_max: float = 250.0) -> Path:
    d = np.arange(1.0, d_max + 1.0)
    p = prob_above_threshold(params, d)
    rows = [(di, np.pi * di * di, pi) for di, pi in zip(d, p)]
    return write_csv(Path(out_dir) / "fig7.csv", ("d_m", "area_pi_d2_m2", "prob_above_threshold"), rows)


def fig8(out_dir, params: RadioParams = TABLE1, d_max: float = 300.0) -> Path:
    d = np.arange(1.0, d_max + 1.0)
    pr = received_power_tworay(params, d)
    rows = [(di, pi, params.rx_threshold) for di, pi in zip(d, pr)]
    return write_csv(Path(out_dir) / "fig8.csv", ("d_m", "pr_dbm_two_ray", "pth_dbm"), rows)


# ---------------------------------------------------------------- simulation

def _shadowing(cfg):
    return cfg.with_(propagation="shadowing")


def _two_ray(cfg):
    return cfg.with_(propagation="two_ray")


def _high_power(cfg):
    return cfg.with_(propagation="shadowing", radio=cfg.radio.with_(tx_power=HIGH_POWER_DBM))


def _retry12(cfg):
    return cfg.with_(propagation="shadowing", mac=replace(cfg.mac, long_retry_limit=12))


VARIANTS: dict[str, Variant] = {
    "two_ray": _two_ray,
    "shadowing": _shadowing,
    "high_power": _high_power,
    "retry12": _retry12,
}


def suite_study(variants: Sequence[str], n_seeds: int, workers: int = 1,
                duration: Optional[float] = None, base: Optional[ScenarioConfig] = None,
                indices: Optional[Sequence[int]] = None) -> dict[str, list[AggregateReport]]:
    """Aggregate delivery over the scenario suite for each named variant.

    All runs go through one pool so seeds and points parallelize together;
    results are regrouped in sweep order.
    """
    base = base or ScenarioConfig()
    if duration is not None:
        base = base.with_(sim_duration=duration)
    suite = scenario_suite(base)
    indices = list(range(len(suite))) if indices is None else list(indices)
    batches = []
    for name in variants:
        for i in indices:
            batches.append(replication_configs(VARIANTS[name](suite[i]), n_seeds))
    flat = [c for b in batches for c in b]
    reports = run_many(flat, workers)
    out: dict[str, list[AggregateReport]] = {name: [] for name in variants}
    pos = 0
    for name in variants:
        for _ in indices:
            out[name].append(aggregate(reports[pos:pos + n_seeds]))
            pos += n_seeds
    return out


PER_SEED_COLUMNS = ("variant", "area_m2", "seed", "n_sent", "n_recvd", "delivery_ratio") + tuple(
    f"drop_{c}" for c in DROP_CAUSES)


def _per_seed_rows(label: str, area: float, reports: Sequence[MetricsReport]):
    for r in reports:
        yield (label, area, r.seed, r.n_sent, r.n_recvd, r.delivery_ratio) + tuple(r.drops[c] for c in DROP_CAUSES)


def _write_per_seed(path, study: dict[str, list[AggregateReport]], areas):
    rows = []
    for name, aggs in study.items():
        for area, agg in zip(areas, aggs):
            rows.extend(_per_seed_rows(name, area, agg.reports))
    return write_csv(path, PER_SEED_COLUMNS, rows)


def fig9(out_dir, n_seeds: int = 10, workers: int = 1, duration: Optional[float] = None,
         per_seed: bool = False) -> tuple[Path, float]:
    study = suite_study(("two_ray", "shadowing"), n_seeds, workers, duration)
    regions = [c.region for c in scenario_suite()]
    params = TABLE1
    k = calibrate_k(params, regions[0], study["shadowing"][0].mean_delivery_ratio)
    rows = []
    for reg, tr, sh in zip(regions, study["two_ray"], study["shadowing"]):
        pred = predicted_delivery_ratio(params, reg, k)
        rows.append((reg.area, tr.mean_delivery_ratio, sh.mean_delivery_ratio, sh.std_delivery_ratio, pred))
    path = write_csv(Path(out_dir) / "fig9.csv",
                     ("area_m2", "dr_two_ray", "dr_shadowing_mean", "dr_shadowing_std", "dr_predicted"), rows,
                     comments=[f"calibrated_k: {k:.10g}", f"n_seeds: {n_seeds}"])
    if per_seed:
        _write_per_seed(Path(out_dir) / "fig9_seeds.csv", study, [r.area for r in regions])
    return path, k


def fig10(out_dir, n_seeds: int = 10, workers: int = 1, duration: Optional[float] = None,
          per_seed: bool = False) -> Path:
    names = ("shadowing", "high_power", "retry12")
    study = suite_study(names, n_seeds, workers, duration)
    regions = [c.region for c in scenario_suite()]
    rows = []
    for i, reg in enumerate(regions):
        aggs = [study[n][i] for n in names]
        rows.append((reg.area, *(a.mean_delivery_ratio for a in aggs), *(a.std_delivery_ratio for a in aggs)))
    path = write_csv(Path(out_dir) / "fig10.csv",
                     ("area_m2", "dr_baseline", "dr_high_power", "dr_retry12",
                      "std_baseline", "std_high_power", "std_retry12"), rows,
                     comments=[f"n_seeds: {n_seeds}", f"high_power_dbm: {HIGH_POWER_DBM}"])
    if per_seed:
        _write_per_seed(Path(out_dir) / "fig10_seeds.csv", study, [r.area for r in regions])
    return path


# ---------------------------------------------------------------- config sweeps

SWEEP_COLUMNS = ("point", "area_m2", "d1_m", "d2_m", "node_count", "propagation", "tx_power_dbm",
                 "long_retry_limit", "n_seeds", "dr_mean", "dr_std", "n_sent_mean", "n_recvd_mean")


def run_experiment(spec: ExperimentSpec, out_dir=".", n_seeds: Optional[int] = None) -> list[Path]:
    """One aggregate row per sweep point, plus the per-seed file when requested."""
    n = n_seeds or spec.n_seeds
    points = spec.point_configs()
    batches = [replication_configs(cfg, n) for cfg in points]
    reports = run_many([c for b in batches for c in b], spec.workers)
    rows, seed_rows = [], []
    for i, cfg in enumerate(points):
        chunk = reports[i * n:(i + 1) * n]
        agg = aggregate(chunk)
        reg = cfg.region
        rows.append((i, reg.area, reg.width_d1, reg.length_d2, cfg.node_count, cfg.propagation,
                     cfg.radio.tx_power, cfg.mac.long_retry_limit, n, agg.mean_delivery_ratio,
                     agg.std_delivery_ratio, agg.mean_counts["n_sent"], agg.mean_counts["n_recvd"]))
        seed_rows.extend(_per_seed_rows(str(i), reg.area, chunk))
    out_dir = Path(out_dir)
    written = [write_csv(out_dir / spec.output_path, SWEEP_COLUMNS, rows, comments=[f"experiment: {spec.name}"])]
    if spec.per_seed_path:
        cols = ("point",) + PER_SEED_COLUMNS[1:]
        written.append(write_csv(out_dir / spec.per_seed_path, cols, seed_rows))
    return written
