"""Multi-seed sweeps over the synthetic circle-mixture experiments.

* ``exp1``: single-mode classes, sweep the class width sigma (linear model).
* ``exp2``: sigma = 10 deg plus a minor mode, sweep its offset d (linear model).
* ``exp3``: the exp2 data at d = 90 deg, sweep hidden width m.

Each trial seed ``s`` is split into sub-seeds with :func:`derive_seed`:
stream 0 samples the training set, 1 the evaluation set, 2 the initial
weights and 3 mini-batch shuffling.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from topk_lab.core import InvalidInputError, derive_seed, seeded_rng
from topk_lab.metrics import label_ranks
from topk_lab.model import ModelParams, forward, init_params
from topk_lab.synthdata import (
    CircleMixtureSpec,
    circular_density,
    experiment1_spec,
    experiment2_spec,
    sample_dataset,
)
from topk_lab.trainer import TrainConfig, TrainingDivergedError, evaluate, train

log = logging.getLogger(__name__)

LOSS_ORDER = ("ce", "grouping", "transition")
DEFAULT_SWEEPS = {
    "exp1": (10.0, 15.0, 20.0, 25.0, 30.0),
    "exp2": (30.0, 45.0, 60.0, 75.0, 90.0),
    "exp3": (2, 4, 8, 16, 32),
}
DEFAULT_TRAIN = {
    "exp1": TrainConfig(learning_rate=0.5),
    "exp2": TrainConfig(learning_rate=0.5),
    "exp3": TrainConfig(learning_rate=0.2, momentum=0.9),
}
MAX_FAILURE_FRACTION = 0.2

AGGREGATE_COLUMNS = (
    "sweep", "loss", "top1_mean", "top1_min", "top1_max", "top2_mean", "top2_min", "top2_max",
)


class ExperimentFailedError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    sweep: tuple = ()
    losses: tuple[str, ...] = LOSS_ORDER
    seeds: tuple[int, ...] = tuple(range(10))
    train: TrainConfig | None = None
    samples_per_class: int = 300
    exp3_offset_deg: float = 90.0
    output_dir: str | None = None

    def __post_init__(self):
        if self.experiment not in DEFAULT_SWEEPS:
            raise InvalidInputError(f"unknown experiment {self.experiment!r}")
        if not self.sweep:
            object.__setattr__(self, "sweep", DEFAULT_SWEEPS[self.experiment])
        if self.train is None:
            object.__setattr__(self, "train", DEFAULT_TRAIN[self.experiment])
        object.__setattr__(self, "sweep", tuple(self.sweep))
        object.__setattr__(self, "losses", tuple(self.losses))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise InvalidInputError("seed list is empty")
        if not self.losses:
            raise InvalidInputError("loss list is empty")
        for name in self.losses:
            if name not in LOSS_ORDER:
                raise InvalidInputError(f"unknown loss {name!r}")
        cast = int if self.experiment == "exp3" else float
        object.__setattr__(self, "sweep", tuple(cast(v) for v in self.sweep))

    def data_spec(self, value) -> CircleMixtureSpec:
        if self.experiment == "exp1":
            return experiment1_spec(float(value), self.samples_per_class)
        if self.experiment == "exp2":
            return experiment2_spec(float(value), self.samples_per_class)
        return experiment2_spec(self.exp3_offset_deg, self.samples_per_class)

    def hidden_units(self, value) -> int | None:
        return int(value) if self.experiment == "exp3" else None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train"] = self.train.to_dict()
        for key in ("sweep", "losses", "seeds"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if d.get("train") is not None:
            base = DEFAULT_TRAIN.get(d.get("experiment"), TrainConfig())
            d["train"] = TrainConfig.from_dict({**base.to_dict(), **d["train"]})
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class RunSummary:
    sweep_value: float
    loss: str
    seed: int
    top1: float = math.nan
    top2: float = math.nan
    curve: tuple[float, ...] = ()
    train_mass_first: float = math.nan  # mean top-k mass on the training set, first epoch
    train_mass_last: float = math.nan
    failed: bool = False
    error: str = ""


@dataclass(frozen=True)
class TrialResult:
    summary: RunSummary
    params: ModelParams | None = None


def run_trial(cfg: ExperimentConfig, value, loss: str, seed: int) -> TrialResult:
    spec = cfg.data_spec(value)
    train_set = sample_dataset(spec, seeded_rng(derive_seed(seed, 0)))
    eval_set = sample_dataset(spec, seeded_rng(derive_seed(seed, 1)))
    params = init_params(seeded_rng(derive_seed(seed, 2)), spec.n_classes, cfg.hidden_units(value))
    tcfg = replace(cfg.train, loss=loss, seed=derive_seed(seed, 3))
    try:
        params, hist = train(params, train_set, tcfg)
    except TrainingDivergedError as exc:
        log.warning("run sweep=%s loss=%s seed=%d failed: %s", value, loss, seed, exc)
        return TrialResult(RunSummary(value, loss, seed, failed=True, error=str(exc)))
    curve = evaluate(params, eval_set)
    summary = RunSummary(
        value, loss, seed,
        top1=curve.at(1), top2=curve.at(2),
        curve=tuple(float(v) for v in curve.per_k),
        train_mass_first=hist.topk_mass[0], train_mass_last=hist.topk_mass[-1],
    )
    return TrialResult(summary, params)


def _run_task(args) -> TrialResult:
    return run_trial(*args)


def _sort_key(r: RunSummary):
    return (r.sweep_value, LOSS_ORDER.index(r.loss), r.seed)


def run_trials(cfg: ExperimentConfig, jobs: int = 1) -> list[TrialResult]:
    tasks = [(cfg, v, loss, seed) for v in cfg.sweep for loss in cfg.losses for seed in cfg.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    results.sort(key=lambda r: _sort_key(r.summary))
    failed = sum(r.summary.failed for r in results)
    if failed > MAX_FAILURE_FRACTION * len(results):
        raise ExperimentFailedError(f"{failed} of {len(results)} runs failed")
    return results


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> list[RunSummary]:
    """One summary per (sweep value, loss, seed), in canonical order."""
    return [r.summary for r in run_trials(cfg, jobs)]


@dataclass(frozen=True)
class AggregateRow:
    sweep: float
    loss: str
    top1_mean: float
    top1_min: float
    top1_max: float
    top2_mean: float
    top2_min: float
    top2_max: float
    n_runs: int = field(default=0, compare=False)


def aggregate(summaries: list[RunSummary]) -> list[AggregateRow]:
    """Mean / min / max of top-1 and top-2 per (sweep value, loss); failed runs excluded."""
    if not summaries:
        raise InvalidInputError("no summaries to aggregate")
    groups: dict[tuple, list[RunSummary]] = {}
    for r in summaries:
        if not r.failed:
            groups.setdefault((r.sweep_value, r.loss), []).append(r)
    rows = []
    for (value, loss), runs in sorted(groups.items(), key=lambda kv: (kv[0][0], LOSS_ORDER.index(kv[0][1]))):
        t1 = [r.top1 for r in runs]
        t2 = [r.top2 for r in runs]
        rows.append(AggregateRow(
            value, loss,
            math.fsum(t1) / len(t1), min(t1), max(t1),
            math.fsum(t2) / len(t2), min(t2), max(t2),
            len(runs),
        ))
    return rows


def lookup(rows: list[AggregateRow], sweep, loss: str) -> AggregateRow:
    for r in rows:
        if r.sweep == sweep and r.loss == loss:
            return r
    raise KeyError((sweep, loss))


@dataclass(frozen=True)
class BoundaryRaster:
    theta_deg: np.ndarray  # (G,)
    top1: np.ndarray  # (G,)
    top2: np.ndarray  # (G, 2), ascending class index per row
    density: np.ndarray  # (G, n_classes), per degree

    def __len__(self) -> int:
        return len(self.theta_deg)


def rasterize_boundary(params: ModelParams, spec: CircleMixtureSpec, grid_size: int = 720) -> BoundaryRaster:
    """Top-1 class and top-2 set of the model along the unit circle."""
    if grid_size < 720:
        raise InvalidInputError("grid_size must be at least 720")
    theta = np.arange(grid_size) * (360.0 / grid_size)
    rad = np.deg2rad(theta)
    probs = forward(params, np.column_stack([np.cos(rad), np.sin(rad)])).probs
    order = np.argsort(-probs, axis=1, kind="stable")
    density = np.column_stack([circular_density(spec, theta, c) for c in range(spec.n_classes)])
    return BoundaryRaster(theta, order[:, 0], np.sort(order[:, :2], axis=1), density)


def high_density_mask(spec: CircleMixtureSpec, theta_deg, c: int, width: float = 2.0) -> np.ndarray:
    """Angles within ``width`` sigmas of a mode centre of class ``c`` (mod 360)."""
    theta = np.asarray(theta_deg, dtype=np.float64)
    modes = [(spec.center_deg(c), spec.sigma_deg)]
    if spec.minor_mode is not None:
        modes.append((spec.center_deg(c) + spec.minor_mode.offset_deg, spec.minor_sigma_deg))
    mask = np.zeros(theta.shape, dtype=bool)
    for mu, sd in modes:
        diff = (theta - mu + 180.0) % 360.0 - 180.0
        mask |= np.abs(diff) <= width * sd
    return mask


def top2_coverage(raster: BoundaryRaster, spec: CircleMixtureSpec, c: int) -> float:
    """Fraction of class ``c``'s high-density arc where ``c`` is in the top-2 set."""
    region = high_density_mask(spec, raster.theta_deg, c)
    hit = (raster.top2 == c).any(axis=1)
    return float(hit[region].mean())


def top1_coverage(raster: BoundaryRaster, spec: CircleMixtureSpec, c: int) -> float:
    region = high_density_mask(spec, raster.theta_deg, c)
    return float((raster.top1 == c)[region].mean())


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write(path, text: str) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write figure data to {path}: {exc.strerror or exc}") from exc


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def aggregate_csv(rows: list[AggregateRow]) -> str:
    return _csv_text(AGGREGATE_COLUMNS, ([getattr(r, c) for c in AGGREGATE_COLUMNS] for r in rows))


def write_aggregate_csv(rows: list[AggregateRow], path) -> None:
    _write(path, aggregate_csv(rows))


def write_aggregate_json(rows: list[AggregateRow], path) -> None:
    payload = [{c: getattr(r, c) for c in AGGREGATE_COLUMNS} | {"n_runs": r.n_runs} for r in rows]
    _write(path, json.dumps(payload, indent=1) + "\n")


def read_aggregate_json(path) -> list[AggregateRow]:
    return [AggregateRow(**d) for d in json.loads(Path(path).read_text(encoding="utf-8"))]


RUN_COLUMNS = ("sweep", "loss", "seed", "failed", "top1", "top2", "mass_first", "mass_last", "curve")


def write_runs_csv(summaries: list[RunSummary], path) -> None:
    rows = (
        (r.sweep_value, r.loss, r.seed, int(r.failed), r.top1, r.top2,
         r.train_mass_first, r.train_mass_last, ";".join(repr(v) for v in r.curve))
        for r in summaries
    )
    _write(path, _csv_text(RUN_COLUMNS, rows))


def raster_csv(raster: BoundaryRaster) -> str:
    n = raster.density.shape[1]
    header = ["theta_deg", "top1_class", "top2_classes"] + [f"density_c{c}" for c in range(n)]
    rows = (
        [th, int(t1), f"{int(t2[0])};{int(t2[1])}", *dens]
        for th, t1, t2, dens in zip(raster.theta_deg, raster.top1, raster.top2, raster.density)
    )
    return _csv_text(header, rows)


def write_raster_csv(raster: BoundaryRaster, path) -> None:
    _write(path, raster_csv(raster))


def emit_figure_data(data, path) -> None:
    """Write an aggregate table or a boundary raster; ``.json`` selects the JSON mirror."""
    path = Path(path)
    if isinstance(data, BoundaryRaster):
        write_raster_csv(data, path)
    elif path.suffix == ".json":
        write_aggregate_json(data, path)
    else:
        write_aggregate_csv(data, path)


def write_outputs(cfg: ExperimentConfig, summaries: list[RunSummary], out_dir) -> list[AggregateRow]:
    """Write ``config.json``, ``runs.csv``, ``aggregate.csv`` and ``aggregate.json``.

    The output directory itself is left out of ``config.json`` so that the
    same experiment written to two places produces identical bytes.
    """
    out = Path(out_dir)
    resolved = {k: v for k, v in cfg.to_dict().items() if k != "output_dir"}
    _write(out / "config.json", json.dumps(resolved, indent=1, sort_keys=True) + "\n")
    write_runs_csv(summaries, out / "runs.csv")
    rows = aggregate(summaries)
    write_aggregate_csv(rows, out / "aggregate.csv")
    write_aggregate_json(rows, out / "aggregate.json")
    return rows
