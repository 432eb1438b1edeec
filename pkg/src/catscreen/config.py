"""Structured run configuration (YAML/JSON file merged with CLI flags) and run manifests."""

from __future__ import annotations

import datetime as dt
import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from . import __version__
from .bo import CampaignConfig
from .data import DEFAULT_MAX_ATOMS
from .errors import CatscreenError
from .upnet import ModelConfig
from .volcano import LabelRule

CONFIG_ENV = "CATSCREEN_CONFIG"
SECTIONS = ("seed", "max_atoms", "property_table", "maps", "rule", "regression", "classification", "campaign", "bench")
CAMPAIGN_KEYS = ("budget", "q", "init_seed", "incumbent", "warm_start", "strict_selectivity", "min_initial")


class ConfigError(CatscreenError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass
class RunConfig:
    seed: int = 0
    max_atoms: int = DEFAULT_MAX_ATOMS
    property_table: str | None = None
    maps: str | None = None
    rule: LabelRule = field(default_factory=LabelRule)
    regression: ModelConfig = field(default_factory=lambda: ModelConfig(head="regression"))
    classification: ModelConfig = field(default_factory=lambda: ModelConfig(head="classification"))
    campaign: dict = field(default_factory=dict)
    bench: dict = field(default_factory=lambda: {"seeds": 20, "workers": 1})

    def campaign_config(self, mode: str, **overrides) -> CampaignConfig:
        kw = {k: v for k, v in self.campaign.items() if k in CAMPAIGN_KEYS}
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return CampaignConfig(
            mode=mode, seed=self.seed, rule=self.rule,
            regression=self.regression, classification=self.classification, **kw,
        )

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "max_atoms": self.max_atoms,
            "property_table": self.property_table,
            "maps": self.maps,
            "rule": {"selectivity_threshold": self.rule.selectivity_threshold,
                     "activity_threshold": self.rule.activity_threshold},
            "regression": self.regression.to_dict(),
            "classification": self.classification.to_dict(),
            "campaign": dict(self.campaign),
            "bench": dict(self.bench),
        }


def _model_section(raw: Any, head: str, problems: list[str]) -> ModelConfig:
    if raw is None:
        return ModelConfig(head=head)
    if not isinstance(raw, dict):
        problems.append(f"{head}: expected a mapping")
        return ModelConfig(head=head)
    known = {f.name for f in fields(ModelConfig)}
    for k in sorted(set(raw) - known):
        problems.append(f"{head}.{k}: unknown key")
    try:
        return ModelConfig(**{"head": head, **{k: v for k, v in raw.items() if k in known and k != "head"}})
    except (TypeError, ValueError) as exc:
        problems.append(f"{head}: {exc}")
        return ModelConfig(head=head)


def build_config(raw: dict | None) -> RunConfig:
    """Validate a parsed config mapping; every problem is reported at once."""
    raw = raw or {}
    problems: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["config root must be a mapping"])
    for k in sorted(set(raw) - set(SECTIONS)):
        problems.append(f"{k}: unknown section")
    cfg = RunConfig()
    for key, typ in (("seed", int), ("max_atoms", int)):
        if key in raw:
            if isinstance(raw[key], bool) or not isinstance(raw[key], typ):
                problems.append(f"{key}: expected an integer")
            else:
                setattr(cfg, key, raw[key])
    for key in ("property_table", "maps"):
        if raw.get(key) is not None:
            setattr(cfg, key, str(raw[key]))
    if "rule" in raw:
        try:
            cfg.rule = LabelRule(**(raw["rule"] or {}))
        except (TypeError, ValueError) as exc:
            problems.append(f"rule: {exc}")
    cfg.regression = _model_section(raw.get("regression"), "regression", problems)
    cfg.classification = _model_section(raw.get("classification"), "classification", problems)
    camp = raw.get("campaign") or {}
    for k in sorted(set(camp) - set(CAMPAIGN_KEYS)):
        problems.append(f"campaign.{k}: unknown key")
    cfg.campaign = {k: v for k, v in camp.items() if k in CAMPAIGN_KEYS}
    cfg.bench.update(raw.get("bench") or {})
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path: str | Path | None = None) -> RunConfig:
    """Read a config file; falls back to $CATSCREEN_CONFIG, then built-in defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
    if path is None:
        return RunConfig()
    text = Path(path).read_text(encoding="utf-8")
    return build_config(yaml.safe_load(text))


def apply_overrides(cfg: RunConfig, *, seed=None, epochs=None, learning_rate=None, rff_dim=None) -> RunConfig:
    """CLI flags win over file values."""
    out = replace(cfg)
    if seed is not None:
        out.seed = seed
    model_kw = {k: v for k, v in {"epochs": epochs, "learning_rate": learning_rate, "rff_dim": rff_dim}.items()
                if v is not None}
    if model_kw:
        out.regression = replace(cfg.regression, **model_kw)
        out.classification = replace(cfg.classification, **model_kw)
    return out


class Manifest:
    """One JSON manifest per output location, rewritten at start and finish."""

    def __init__(self, path: str | Path, subcommand: str, config: dict, seeds: list[int], inputs: dict[str, str]):
        self.path = Path(path)
        self.data = {
            "tool": "catscreen",
            "version": __version__,
            "subcommand": subcommand,
            "config": config,
            "inputs": inputs,
            "seeds": seeds,
            "started": dt.datetime.now(dt.timezone.utc).isoformat(),
            "finished": None,
            "complete": False,
        }
        self.write()

    def write(self) -> None:
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")

    def finish(self, complete: bool = True, **extra) -> None:
        self.data["finished"] = dt.datetime.now(dt.timezone.utc).isoformat()
        self.data["complete"] = complete
        self.data.update(extra)
        self.write()
