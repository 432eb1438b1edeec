"""Experiment harness: repeated-seed campaigns, OOD uncertainty report, synthetic demos."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import upnet
from .bo import CampaignConfig, CampaignHistory, Pool, init_design, run
from .data import Atom, AtomicStructure, Dataset, Label, composition_groups
from .errors import EmptySetError
from .metrics import METRIC_NAMES, MetricEntry, compute_metrics  # noqa: F401  (re-exported)
from .upnet import ModelConfig, PointCloudBatch, SurrogateModel

# ---------------------------------------------------------------------------
# synthetic screening pool

SYNTH_PEAK_INFEASIBLE = (0.25, 0.75)
SYNTH_PEAK_FEASIBLE = (0.75, 0.30)
SYNTH_FEASIBLE_RADIUS = math.sqrt(0.15 / math.pi)  # disc covering ~15% of the unit square


def synthetic_labels(a, b, selectivity_threshold: float = 0.9) -> tuple[np.ndarray, np.ndarray]:
    """Smooth two-peak activity; selectivity crosses the threshold on a disc around the lower peak."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    width = 0.2
    d1 = (a - SYNTH_PEAK_INFEASIBLE[0]) ** 2 + (b - SYNTH_PEAK_INFEASIBLE[1]) ** 2
    d2 = (a - SYNTH_PEAK_FEASIBLE[0]) ** 2 + (b - SYNTH_PEAK_FEASIBLE[1]) ** 2
    g1 = np.exp(-d1 / (2 * width**2))
    g2 = np.exp(-d2 / (2 * width**2))
    activity = 1.0 - (1.0 - g1) * (1.0 - 0.97 * g2)
    s = SYNTH_FEASIBLE_RADIUS / math.sqrt(-2.0 * math.log(selectivity_threshold))
    selectivity = np.exp(-d2 / (2 * s**2))
    return activity, selectivity


def make_synthetic_pool(n: int = 500, seed: int = 0) -> Dataset:
    """Labeled pool of 8-atom Al/Cu boxes whose geometry encodes two latent design variables.

    Design variable ``a`` sets the Cu count and the in-plane edge length,
    ``b`` sets the box height; labels come from ``synthetic_labels``.
    """
    rng = np.random.default_rng(seed)
    ab = rng.random((n, 2))
    activity, selectivity = synthetic_labels(ab[:, 0], ab[:, 1])
    corners = np.array([[x, y, z] for z in (-0.5, 0.5) for y in (-0.5, 0.5) for x in (-0.5, 0.5)])
    structures, labels = [], {}
    for i, (a, b) in enumerate(ab):
        n_cu = 1 + min(int(a * 8), 7)
        scale = np.array([2.5 + 1.5 * a, 2.5 + 1.5 * a, 2.0 + 2.0 * b])
        xyz = corners * scale
        atoms = tuple(
            Atom("Cu" if j < n_cu else "Al", *map(float, xyz[j])) for j in range(8)
        )
        comp = f"Al{8 - n_cu}Cu{n_cu}" if n_cu < 8 else "Cu8"
        sid = f"syn{i:05d}"
        structures.append(
            AtomicStructure(sid, comp, atoms, 0.0, 0.0, {"a": repr(float(a)), "b": repr(float(b))})
        )
        labels[sid] = Label(float(activity[i]), float(selectivity[i]))
    return Dataset(structures, labels)


# ---------------------------------------------------------------------------
# repeated runs


@dataclass
class AggregateResult:
    config: CampaignConfig
    seeds: list[int]
    # metric name -> (n_seeds, n_iterations + 1); column 0 is the initial design
    series: dict[str, np.ndarray]
    histories: list[CampaignHistory] = field(default_factory=list, repr=False)

    @property
    def n_seeds(self) -> int:
        return len(self.seeds)

    def mean(self, metric: str) -> np.ndarray:
        return self.series[metric].mean(axis=0)

    def lower(self, metric: str) -> np.ndarray:
        return np.percentile(self.series[metric], 2.5, axis=0)

    def upper(self, metric: str) -> np.ndarray:
        return np.percentile(self.series[metric], 97.5, axis=0)

    def final_mean(self, metric: str) -> float:
        return float(self.mean(metric)[-1])

    def to_csv(self, metric: str) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "mean", "lower95", "upper95"])
        for t, (m, lo, hi) in enumerate(zip(self.mean(metric), self.lower(metric), self.upper(metric))):
            w.writerow([t, repr(float(m)), repr(float(lo)), repr(float(hi))])
        return buf.getvalue()

    def per_seed_csv(self, metric: str) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", *[f"seed_{s}" for s in self.seeds]])
        for t, col in enumerate(self.series[metric].T):
            w.writerow([t, *[repr(float(v)) for v in col]])
        return buf.getvalue()


def _run_one(args):
    config, pool, initial = args
    try:
        return run(config, pool, initial=initial)
    except Exception as exc:
        raise RuntimeError(f"campaign with seed {config.seed} failed: {exc}") from exc


def _stack_series(histories: Sequence[CampaignHistory]) -> dict[str, np.ndarray]:
    length = max(len(h) for h in histories) + 1
    out = {}
    for name in MetricEntry.names():
        rows = []
        for h in histories:
            s = h.metric_series()[name]
            rows.append(s + [s[-1]] * (length - len(s)))  # carry forward after early stop
        out[name] = np.array(rows, dtype=float)
    return out


def aggregate(config: CampaignConfig, histories: Sequence[CampaignHistory]) -> AggregateResult:
    seeds = [h.config.seed for h in histories]
    return AggregateResult(config, seeds, _stack_series(histories), list(histories))


def repeat_runs(
    config: CampaignConfig,
    data: Dataset | Pool,
    n_seeds: int = 20,
    workers: int = 1,
) -> AggregateResult:
    """Campaigns with seeds ``config.seed + 0 .. n_seeds-1`` sharing one initial design."""
    if n_seeds < 2:
        raise ValueError("n_seeds must be >= 2")
    pool = data if isinstance(data, Pool) else Pool.from_dataset(data, config.rule)
    initial = init_design(pool, config.init_seed)
    jobs = [(replace(config, seed=config.seed + k), pool, initial) for k in range(n_seeds)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            histories = list(ex.map(_run_one, jobs))
    else:
        histories = [_run_one(j) for j in jobs]
    return aggregate(config, histories)


# ---------------------------------------------------------------------------
# OOD uncertainty report


def ood_partition(dataset: Dataset, train_min_group: int = 25, seed: int = 0) -> tuple[list[str], list[str], list[str]]:
    """(train, in-distribution test, OOD) ids.

    Compositions with more than ``train_min_group`` structures form the
    training pool, one structure per such composition is held out as
    in-distribution test data; single-structure compositions are OOD.
    """
    rng = np.random.default_rng(seed)
    train, in_test, ood = [], [], []
    groups = composition_groups(dataset)
    for comp in sorted(groups):
        members = groups[comp]
        if len(members) > train_min_group:
            held = int(rng.integers(len(members)))
            in_test.append(members[held])
            train.extend(m for j, m in enumerate(members) if j != held)
        elif len(members) == 1:
            ood.extend(members)
    return train, in_test, ood


SETS = ("train", "in_test", "ood")
QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


@dataclass
class OODReport:
    ids: dict[str, list[str]]
    sigma: dict[str, np.ndarray]
    latent: dict[str, np.ndarray]

    def median(self, which: str) -> float:
        return float(np.median(self.sigma[which]))

    def quantiles(self, which: str) -> dict[float, float]:
        return {q: float(np.quantile(self.sigma[which], q)) for q in QUANTILES}

    def summary(self) -> dict:
        return {
            s: {"n": len(self.ids[s]), "median": self.median(s),
                "quantiles": {str(q): v for q, v in self.quantiles(s).items()}}
            for s in SETS
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        width = next(iter(self.latent.values())).shape[1]
        w.writerow(["id", "set", "sigma", *[f"latent_{j}" for j in range(width)]])
        for s in SETS:
            for cid, sig, lat in zip(self.ids[s], self.sigma[s], self.latent[s]):
                w.writerow([cid, s, repr(float(sig)), *[repr(float(v)) for v in lat]])
        return buf.getvalue()


def ood_report(
    model: SurrogateModel,
    train: tuple[Sequence[str], PointCloudBatch],
    in_test: tuple[Sequence[str], PointCloudBatch],
    ood: tuple[Sequence[str], PointCloudBatch],
) -> OODReport:
    """Predictive standard deviations and latents for the three sets."""
    parts = dict(zip(SETS, (train, in_test, ood)))
    seen: set[str] = set()
    for name, (ids, batch) in parts.items():
        if len(ids) == 0:
            raise EmptySetError(f"{name} set is empty")
        if len(ids) != len(batch):
            raise ValueError(f"{name}: {len(ids)} ids for {len(batch)} inputs")
        if seen & set(ids):
            raise ValueError(f"{name} shares ids with another set")
        seen |= set(ids)
    ids, sigma, lat = {}, {}, {}
    for name, (names, batch) in parts.items():
        pred = upnet.predict(batch, model)
        ids[name] = list(names)
        sigma[name] = pred.std
        lat[name] = pred.latent
    return OODReport(ids, sigma, lat)


# ---------------------------------------------------------------------------
# synthetic SNGP demos

DEMO_TASKS = ("regression_1d", "classification_2d")
DEMO_ALIASES = {"reg1d": "regression_1d", "cls2d": "classification_2d"}


def demo_config(head: str, seed: int) -> ModelConfig:
    return ModelConfig(
        head=head, learning_rate=1e-3, epochs=200, batch_size=32, rff_dim=1024, seed=seed
    )


def _repeated_rows(points: np.ndarray, n_rows: int = 10) -> PointCloudBatch:
    """Each sample is an n_rows x 2 matrix repeating one point."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = np.stack([pts, pts], axis=1)
    matrix = np.repeat(pts[:, None, :], n_rows, axis=1)
    return PointCloudBatch(matrix, np.ones(matrix.shape[:2], dtype=bool))


@dataclass
class DemoReport:
    task: str
    columns: list[str]
    grid: np.ndarray  # rows of the output table
    summary: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.grid:
            w.writerow([r if isinstance(r, str) else repr(float(r)) for r in row])
        return buf.getvalue()


def _regression_demo(seed: int) -> DemoReport:
    rng = np.random.default_rng(seed)
    x = np.concatenate([rng.uniform(-3, -1, 40), rng.uniform(1, 3, 40)])
    y = np.sin(1.5 * x) + 0.05 * rng.standard_normal(len(x))
    model = upnet.fit(_repeated_rows(x), y, demo_config("regression", seed))
    grid = np.linspace(-12, 12, 241)
    pred = upnet.predict_regression(_repeated_rows(grid), model)
    train_pred = upnet.predict_regression(_repeated_rows(x), model)

    lengthscale = float(np.std(x))
    dist = np.min(np.abs(grid[:, None] - x[None, :]), axis=1)
    ood = dist >= 3 * lengthscale
    inside = ((grid >= -3) & (grid <= -1)) | ((grid >= 1) & (grid <= 3))
    gap = np.abs(grid) <= 0.1
    summary = {
        "input_lengthscale": lengthscale,
        "mean_sigma_train": float(train_pred.std.mean()),
        "mean_sigma_ood": float(pred.std[ood].mean()),
        "mean_sigma_inside": float(pred.std[inside].mean()),
        "sigma_midway": float(pred.std[gap].mean()),
        "train_mae": float(np.mean(np.abs(train_pred.mean - y))),
        "n_ood_grid": int(ood.sum()),
    }
    table = np.column_stack([grid, np.sin(1.5 * grid), pred.mean, pred.std, ood.astype(float)])
    return DemoReport("regression_1d", ["x", "f_true", "mu", "sigma", "is_ood"], table, summary)


def _classification_demo(seed: int) -> DemoReport:
    rng = np.random.default_rng(seed)
    n = 50
    pts = np.concatenate([rng.normal((-1.5, 0.0), 0.4, (n, 2)), rng.normal((1.5, 0.0), 0.4, (n, 2))])
    labels = np.repeat([0, 1], n)
    model = upnet.fit(_repeated_rows(pts), labels, demo_config("classification", seed))
    angles = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    probes = 8.0 * np.column_stack([np.cos(angles), np.sin(angles)])
    gx, gy = np.meshgrid(np.linspace(-10, 10, 41), np.linspace(-10, 10, 41))
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    train_pred = upnet.predict_class(_repeated_rows(pts), model)
    probe_pred = upnet.predict_class(_repeated_rows(probes), model)
    grid_pred = upnet.predict_class(_repeated_rows(grid), model)
    summary = {
        "max_abs_p_minus_half_ood": float(np.max(np.abs(probe_pred.probability[:, 1] - 0.5))),
        "max_abs_p_minus_half_train": float(np.max(np.abs(train_pred.probability[:, 1] - 0.5))),
        "median_sigma_train": float(np.median(train_pred.std)),
        "median_sigma_ood": float(np.median(probe_pred.std)),
        "train_accuracy": float(np.mean((train_pred.probability[:, 1] > 0.5) == labels)),
    }
    kinds = np.concatenate([np.zeros(len(grid)), np.ones(len(pts)), 2 * np.ones(len(probes))])
    allpts = np.concatenate([grid, pts, probes])
    p = np.concatenate([grid_pred.probability[:, 1], train_pred.probability[:, 1], probe_pred.probability[:, 1]])
    s = np.concatenate([grid_pred.std, train_pred.std, probe_pred.std])
    table = np.column_stack([allpts, p, s, kinds])
    return DemoReport("classification_2d", ["x1", "x2", "p1", "sigma", "kind"], table,
                      {**summary, "kind_codes": {"grid": 0, "train": 1, "ood_probe": 2}})


def sngp_demo(task: str, seed: int = 0) -> DemoReport:
    task = DEMO_ALIASES.get(task, task)
    if task == "regression_1d":
        return _regression_demo(seed)
    if task == "classification_2d":
        return _classification_demo(seed)
    raise ValueError(f"unknown demo task {task!r}; expected one of {DEMO_TASKS}")
