"""Pool-based screening campaigns: initial design, surrogate refits, acquisition, label reveal."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import upnet
from .acquisition import constrained_ei, expected_improvement, select_batch
from .data import Dataset, FeatureSchema, build_schema, composition_groups
from .errors import EmptyDatasetError, PoolExhaustedError
from .metrics import MetricEntry, compute_metrics
from .upnet import ModelConfig, PointCloudBatch, SurrogateModel
from .volcano import LabelRule

log = logging.getLogger(__name__)

MODES = ("constrained_bo", "unconstrained_bo", "random_search")
MODE_ALIASES = {"cbo": "constrained_bo", "bo": "unconstrained_bo", "random": "random_search"}

# hook(head, model) is called after every surrogate fit
FitHook = Callable[[str, SurrogateModel], None]


def resolve_mode(mode: str) -> str:
    mode = MODE_ALIASES.get(mode, mode)
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES} or {tuple(MODE_ALIASES)}")
    return mode


@dataclass(frozen=True)
class CampaignConfig:
    mode: str = "constrained_bo"
    budget: int = 80
    q: int = 1
    seed: int = 0
    # seeds the initial design; kept fixed across repeated runs
    init_seed: int = 0
    rule: LabelRule = LabelRule()
    regression: ModelConfig = ModelConfig(head="regression")
    classification: ModelConfig = ModelConfig(head="classification")
    # "feasible": best observed feasible activity; "global": best observed activity
    incumbent: str = "feasible"
    warm_start: bool = False
    strict_selectivity: bool = False
    min_initial: int = 2

    def __post_init__(self):
        object.__setattr__(self, "mode", resolve_mode(self.mode))
        if self.budget < 0 or self.q < 1:
            raise ValueError("budget must be >= 0 and q >= 1")
        if self.incumbent not in ("feasible", "global"):
            raise ValueError("incumbent must be 'feasible' or 'global'")
        if self.regression.head != "regression" or self.classification.head != "classification":
            raise ValueError("surrogate configs have the wrong heads")


@dataclass
class Pool:
    """A labeled dataset encoded once for repeated campaigns."""

    ids: list[str]
    compositions: list[str]
    batch: PointCloudBatch
    activity: np.ndarray
    selectivity: np.ndarray
    feasible: np.ndarray
    schema: FeatureSchema | None = None

    def __post_init__(self):
        self.index = {cid: i for i, cid in enumerate(self.ids)}

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def from_dataset(
        cls,
        dataset: Dataset,
        rule: LabelRule = LabelRule(),
        schema: FeatureSchema | None = None,
    ) -> "Pool":
        if len(dataset) == 0:
            raise EmptyDatasetError("empty dataset")
        if not dataset.is_labeled:
            raise ValueError("campaigns need a fully labeled dataset")
        schema = schema or build_schema(dataset)
        act = np.array([dataset.labels[s.id].activity for s in dataset.structures])
        sel = np.array([dataset.labels[s.id].selectivity for s in dataset.structures])
        return cls(
            ids=dataset.ids,
            compositions=[s.composition for s in dataset.structures],
            batch=upnet.encode_many(dataset.structures, schema),
            activity=act,
            selectivity=sel,
            feasible=rule.feasible(sel).astype(int),
            schema=schema,
        )


@dataclass(frozen=True)
class Observation:
    id: str
    activity: float
    selectivity: float
    feasible: int
    iteration: int


@dataclass
class CampaignState:
    observed: list[Observation]
    rng: np.random.Generator
    iteration: int = 0

    @property
    def observed_ids(self) -> set[str]:
        return {o.id for o in self.observed}

    @property
    def incumbent(self) -> float | None:
        feas = [o.activity for o in self.observed if o.feasible]
        return max(feas) if feas else None

    def metrics(self, rule: LabelRule, strict: bool = False) -> MetricEntry:
        return compute_metrics(
            [o.activity for o in self.observed], [o.selectivity for o in self.observed], rule, strict
        )


@dataclass
class IterationRecord:
    iteration: int
    selected: list[str]
    activity: list[float]
    selectivity: list[float]
    feasible: list[int]
    scores: list[float]
    incumbent: float | None
    metrics: MetricEntry
    # full pool scoring table of this iteration (not exported by default)
    score_table: dict[str, np.ndarray] | None = field(default=None, repr=False)


@dataclass
class CampaignHistory:
    config: CampaignConfig
    initial: list[Observation]
    initial_metrics: MetricEntry
    records: list[IterationRecord]
    # last fitted surrogates by head, for checkpoint export
    final_models: dict[str, SurrogateModel] = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.records)

    def metric_series(self) -> dict[str, list]:
        """Per-metric values, index 0 = after the initial design."""
        entries = [self.initial_metrics] + [r.metrics for r in self.records]
        return {name: [getattr(e, name) for e in entries] for name in MetricEntry.names()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(
            ["iteration", "selected_ids", "activity", "selectivity", "feasible", "score", "incumbent",
             *MetricEntry.names()]
        )
        inc0 = max((o.activity for o in self.initial if o.feasible), default=None)
        w.writerow(
            [0, ";".join(o.id for o in self.initial), _join(o.activity for o in self.initial),
             _join(o.selectivity for o in self.initial), _join(o.feasible for o in self.initial), "",
             _fmt(inc0), *map(_fmt, self.initial_metrics.as_tuple())]
        )
        for r in self.records:
            w.writerow(
                [r.iteration, ";".join(r.selected), _join(r.activity), _join(r.selectivity),
                 _join(r.feasible), _join(r.scores), _fmt(r.incumbent), *map(_fmt, r.metrics.as_tuple())]
            )
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _join(values) -> str:
    return ";".join(_fmt(v) for v in values)


def read_history_csv(path: str | Path) -> list[dict]:
    with Path(path).open(encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def init_design(dataset: Dataset | Pool, seed: int = 0, min_group_size: int = 10) -> list[str]:
    """One seeded-random structure per composition having more than ``min_group_size`` structures."""
    if isinstance(dataset, Pool):
        groups: dict[str, list[str]] = {}
        for cid, comp in zip(dataset.ids, dataset.compositions):
            groups.setdefault(comp, []).append(cid)
    else:
        if len(dataset) == 0:
            raise EmptyDatasetError("empty dataset")
        groups = composition_groups(dataset)
    if not groups:
        raise EmptyDatasetError("empty dataset")
    rng = np.random.default_rng(seed)
    chosen = []
    for comp in sorted(groups):
        members = groups[comp]
        if len(members) > min_group_size:
            chosen.append(members[int(rng.integers(len(members)))])
    return chosen


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts]).generate_state(1)[0])


def start(config: CampaignConfig, pool: Pool, initial: Sequence[str] | None = None) -> CampaignState:
    if initial is None:
        initial = init_design(pool, config.init_seed)
    initial = list(initial)
    if len(initial) < config.min_initial:
        rng = np.random.default_rng(_derive_seed(config.init_seed, 7919))
        rest = [cid for cid in pool.ids if cid not in set(initial)]
        extra = rng.choice(len(rest), size=min(config.min_initial - len(initial), len(rest)), replace=False)
        log.warning("initial design has %d samples; topping up with %d random picks", len(initial), len(extra))
        initial += [rest[i] for i in sorted(extra)]
    state = CampaignState([], np.random.default_rng(config.seed))
    for cid in initial:
        state.observed.append(_reveal(pool, cid, 0))
    return state


def _reveal(pool: Pool, cid: str, iteration: int) -> Observation:
    i = pool.index[cid]
    return Observation(cid, float(pool.activity[i]), float(pool.selectivity[i]), int(pool.feasible[i]), iteration)


def step(
    state: CampaignState,
    config: CampaignConfig,
    pool: Pool,
    hooks: Sequence[FitHook] = (),
    warm: dict[str, SurrogateModel] | None = None,
    keep_scores: bool = False,
) -> IterationRecord:
    """One campaign iteration; mutates ``state`` and returns what was selected."""
    observed = state.observed_ids
    free = [i for i, cid in enumerate(pool.ids) if cid not in observed]
    if not free:
        raise PoolExhaustedError("every candidate has been observed")
    k = min(config.q, len(free))
    t = state.iteration + 1
    free_ids = [pool.ids[i] for i in free]
    table = None

    if config.mode == "random_search":
        picks = state.rng.choice(len(free), size=k, replace=False)
        selected = [free_ids[i] for i in picks]
        scores = [float("nan")] * k
    else:
        obs_idx = np.array([pool.index[o.id] for o in state.observed])
        warm = warm if warm is not None else {}
        reg_cfg = replace(config.regression, seed=_derive_seed(config.seed, t, 0))
        reg = upnet.fit(
            pool.batch[obs_idx], pool.activity[obs_idx], reg_cfg,
            init=warm.get("regression") if config.warm_start else None,
        )
        for hook in hooks:
            hook("regression", reg)
        warm["regression"] = reg
        cand = pool.batch[np.array(free)]
        pred = upnet.predict_regression(cand, reg)
        sigma = pred.std
        if config.incumbent == "feasible" and state.incumbent is not None:
            f_best = state.incumbent
        else:
            f_best = max(o.activity for o in state.observed)
        ei = expected_improvement(pred.mean, sigma, f_best)
        p_feas = np.ones(len(free))
        if config.mode == "constrained_bo":
            cls_cfg = replace(config.classification, seed=_derive_seed(config.seed, t, 1))
            clf = upnet.fit(
                pool.batch[obs_idx], pool.feasible[obs_idx], cls_cfg,
                init=warm.get("classification") if config.warm_start else None,
            )
            for hook in hooks:
                hook("classification", clf)
            warm["classification"] = clf
            p_feas = upnet.predict_class(cand, clf).probability[:, 1]
            acq = constrained_ei(ei, p_feas)
        else:
            acq = ei
        selected = select_batch(free_ids, acq, observed, k, tie_seed=state.rng)
        pos = {cid: j for j, cid in enumerate(free_ids)}
        scores = [float(acq[pos[cid]]) for cid in selected]
        if keep_scores:
            table = {"id": np.array(free_ids), "mu": pred.mean, "sigma": sigma,
                     "p_feasible": p_feas, "ei": ei, "cei": p_feas * ei}

    new = [_reveal(pool, cid, t) for cid in selected]
    state.observed.extend(new)
    state.iteration = t
    return IterationRecord(
        iteration=t,
        selected=selected,
        activity=[o.activity for o in new],
        selectivity=[o.selectivity for o in new],
        feasible=[o.feasible for o in new],
        scores=scores,
        incumbent=state.incumbent,
        metrics=state.metrics(config.rule, config.strict_selectivity),
        score_table=table,
    )


def run(
    config: CampaignConfig,
    data: Dataset | Pool,
    hooks: Sequence[FitHook] = (),
    initial: Sequence[str] | None = None,
    keep_scores: bool = False,
    on_iteration: Callable[[IterationRecord], None] | None = None,
) -> CampaignHistory:
    """Initial design followed by ``budget`` iterations; stops early if the pool runs out."""
    pool = data if isinstance(data, Pool) else Pool.from_dataset(data, config.rule)
    state = start(config, pool, initial)
    initial_obs = list(state.observed)
    history = CampaignHistory(config, initial_obs, state.metrics(config.rule, config.strict_selectivity), [])
    warm: dict[str, SurrogateModel] = {}
    for _ in range(config.budget):
        if len(state.observed) >= len(pool):
            log.info("pool exhausted after %d iterations", state.iteration)
            break
        rec = step(state, config, pool, hooks, warm, keep_scores)
        history.records.append(rec)
        if on_iteration is not None:
            on_iteration(rec)
    history.final_models = warm
    return history
