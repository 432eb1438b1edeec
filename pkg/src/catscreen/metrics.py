"""Screening metrics over a set of observed candidates."""

from __future__ import annotations

from dataclasses import astuple, dataclass, fields

import numpy as np

from .volcano import LabelRule

METRIC_NAMES = ("n_solutions_both", "n_high_activity", "n_high_selectivity", "top10_avg_product")


@dataclass(frozen=True)
class MetricEntry:
    n_solutions_both: int
    n_high_activity: int
    n_high_selectivity: int
    top10_avg_product: float

    def as_tuple(self) -> tuple:
        return astuple(self)

    @classmethod
    def names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))


def compute_metrics(activity, selectivity, rule: LabelRule = LabelRule(), strict: bool = False) -> MetricEntry:
    """Counts and top-10 mean product over all observed points.

    High selectivity is the feasibility class (selectivity >= threshold), or
    selectivity == 1 exactly when ``strict``.
    """
    act = np.asarray(activity, dtype=float)
    sel = np.asarray(selectivity, dtype=float)
    if act.size == 0:
        raise ValueError("no observed points")
    high_act = act > rule.activity_threshold
    high_sel = sel == 1.0 if strict else rule.feasible(sel)
    prod = np.sort(act * sel)[::-1][:10]
    return MetricEntry(
        n_solutions_both=int(np.sum(high_act & high_sel)),
        n_high_activity=int(np.sum(high_act)),
        n_high_selectivity=int(np.sum(high_sel)),
        top10_avg_product=float(np.mean(prod)),
    )
