"""Piecewise-linear volcano maps from adsorption energy to normalized activity/selectivity."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .data import AtomicStructure, Dataset, Label
from .errors import OutOfDomainError


@dataclass(frozen=True)
class VolcanoMap:
    breakpoints: tuple[tuple[float, float], ...]
    domain: tuple[float, float]
    # which structure energy feeds this map ("e_co" or "e_h")
    energy_key: str = "e_co"
    name: str = ""

    def __post_init__(self):
        if len(self.breakpoints) < 2:
            raise ValueError("a volcano map needs at least 2 breakpoints")
        e = np.array([p[0] for p in self.breakpoints])
        v = np.array([p[1] for p in self.breakpoints])
        if np.any(np.diff(e) <= 0):
            raise ValueError("breakpoint energies must be strictly increasing")
        if np.any(v < 0) or np.any(v > 1):
            raise ValueError("breakpoint values must lie in [0, 1]")
        if v.max() != 1.0:
            raise ValueError("map must be range-normalized (max value exactly 1)")
        lo, hi = self.domain
        if not (e[0] <= lo < hi <= e[-1]):
            raise ValueError(f"domain {self.domain} not inside breakpoint span [{e[0]}, {e[-1]}]")
        if self.energy_key not in ("e_co", "e_h"):
            raise ValueError(f"energy_key must be 'e_co' or 'e_h', got {self.energy_key!r}")

    @property
    def energies(self) -> np.ndarray:
        return np.array([p[0] for p in self.breakpoints], dtype=float)

    @property
    def values(self) -> np.ndarray:
        return np.array([p[1] for p in self.breakpoints], dtype=float)

    def contains(self, e: float) -> bool:
        return self.domain[0] <= e <= self.domain[1]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "energy_key": self.energy_key,
            "domain": list(self.domain),
            "breakpoints": [list(p) for p in self.breakpoints],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VolcanoMap":
        return cls(
            breakpoints=tuple((float(e), float(v)) for e, v in d["breakpoints"]),
            domain=(float(d["domain"][0]), float(d["domain"][1])),
            energy_key=d.get("energy_key", "e_co"),
            name=d.get("name", ""),
        )


@dataclass(frozen=True)
class LabelRule:
    selectivity_threshold: float = 0.9
    activity_threshold: float = 0.85

    def __post_init__(self):
        for v in (self.selectivity_threshold, self.activity_threshold):
            if not (0.0 < v < 1.0):
                raise ValueError(f"thresholds must lie in (0, 1), got {v}")

    def feasible(self, selectivity):
        return np.asarray(selectivity) >= self.selectivity_threshold


def evaluate(vmap: VolcanoMap, e):
    """Linear interpolation between bracketing breakpoints.

    Accepts a scalar or array; any energy outside the domain raises.
    """
    arr = np.asarray(e, dtype=float)
    lo, hi = vmap.domain
    bad = (arr < lo) | (arr > hi) | ~np.isfinite(arr)
    if np.any(bad):
        raise OutOfDomainError(float(arr[bad].flat[0]), vmap.domain)
    out = np.interp(arr, vmap.energies, vmap.values)
    return float(out) if out.ndim == 0 else out


def label(
    structure: AtomicStructure,
    act_map: VolcanoMap,
    sel_map: VolcanoMap,
    rule: LabelRule = LabelRule(),
) -> tuple[float, float, int]:
    energies = {"e_co": structure.e_co, "e_h": structure.e_h}
    activity = evaluate(act_map, energies[act_map.energy_key])
    selectivity = evaluate(sel_map, energies[sel_map.energy_key])
    return activity, selectivity, int(selectivity >= rule.selectivity_threshold)


def label_dataset(dataset: Dataset, act_map: VolcanoMap, sel_map: VolcanoMap) -> Dataset:
    labels = {}
    for s in dataset.structures:
        a, sel, _ = label(s, act_map, sel_map)
        labels[s.id] = Label(a, sel)
    return Dataset(list(dataset.structures), labels, list(dataset.rejected))


def load_map(path: str | Path) -> VolcanoMap:
    return VolcanoMap.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def save_map(vmap: VolcanoMap, path: str | Path) -> None:
    Path(path).write_text(json.dumps(vmap.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_maps(directory: str | Path) -> tuple[VolcanoMap, VolcanoMap]:
    """Load ``activity.json`` and ``selectivity.json`` from a directory."""
    d = Path(directory)
    return load_map(d / "activity.json"), load_map(d / "selectivity.json")


def default_maps_dir() -> Path:
    return Path(str(resources.files("catscreen") / "data" / "volcano"))


def load_default_maps() -> tuple[VolcanoMap, VolcanoMap]:
    return load_maps(default_maps_dir())
