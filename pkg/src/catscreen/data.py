"""Candidate pools: canonical file I/O, feature schema, external-format conversion.

Canonical files hold one JSON object per line::

    {"id": ..., "composition": ..., "atoms": [{"el": "Cu", "x": 0.0, "y": 0.0, "z": 0.0}, ...],
     "e_co": ..., "e_h": ..., "meta": {...}}

Labeled files additionally carry ``activity`` and ``selectivity``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Iterator

from .errors import (
    DuplicateIdError,
    MissingPropertyError,
    ParseError,
    UnsupportedFormatError,
)

if TYPE_CHECKING:
    from .volcano import VolcanoMap

log = logging.getLogger(__name__)

DEFAULT_MAX_ATOMS = 147
# feature columns beyond the one-hot block: mass, electronegativity, radius, x, y, z
N_EXTRA_FEATURES = 6


@dataclass(frozen=True)
class Atom:
    el: str
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class AtomicStructure:
    id: str
    composition: str
    atoms: tuple[Atom, ...]
    e_co: float
    e_h: float
    meta: dict[str, str] = field(default_factory=dict, hash=False, compare=True)

    def elements(self) -> set[str]:
        return {a.el for a in self.atoms}


@dataclass(frozen=True)
class Label:
    activity: float
    selectivity: float

    def __post_init__(self):
        for name in ("activity", "selectivity"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name}={v} outside [0, 1]")


@dataclass
class Dataset:
    structures: list[AtomicStructure]
    labels: dict[str, Label] = field(default_factory=dict)
    # (id, reason) for records skipped at load time
    rejected: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for s in self.structures:
            if s.id in seen:
                raise DuplicateIdError(s.id)
            seen.add(s.id)
        extra = set(self.labels) - seen
        if extra:
            raise ValueError(f"labels for unknown ids: {sorted(extra)[:5]}")

    def __len__(self) -> int:
        return len(self.structures)

    def __iter__(self) -> Iterator[AtomicStructure]:
        return iter(self.structures)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.structures]

    @property
    def is_labeled(self) -> bool:
        return len(self.labels) == len(self.structures)

    def subset(self, ids: Iterable[str]) -> "Dataset":
        wanted = set(ids)
        structs = [s for s in self.structures if s.id in wanted]
        return Dataset(structs, {k: v for k, v in self.labels.items() if k in wanted})


@dataclass(frozen=True)
class ElementProperties:
    mass: float
    electronegativity: float
    radius: float


@dataclass(frozen=True)
class FeatureSchema:
    element_vocab: tuple[str, ...]
    element_properties: dict[str, ElementProperties] = field(hash=False)
    max_atoms: int = DEFAULT_MAX_ATOMS

    def __post_init__(self):
        missing = [el for el in self.element_vocab if el not in self.element_properties]
        if missing:
            raise MissingPropertyError(missing[0])

    @property
    def feature_width(self) -> int:
        return len(self.element_vocab) + N_EXTRA_FEATURES

    @property
    def shape(self) -> tuple[int, int]:
        return (self.max_atoms, self.feature_width)

    def index(self, element: str) -> int:
        return self.element_vocab.index(element)

    def to_dict(self) -> dict:
        return {
            "element_vocab": list(self.element_vocab),
            "element_properties": {
                el: [p.mass, p.electronegativity, p.radius]
                for el, p in self.element_properties.items()
                if el in self.element_vocab
            },
            "max_atoms": self.max_atoms,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        props = {el: ElementProperties(*v) for el, v in d["element_properties"].items()}
        return cls(tuple(d["element_vocab"]), props, int(d["max_atoms"]))


# ---------------------------------------------------------------------------
# canonical records


def _record_to_structure(rec: dict) -> tuple[AtomicStructure, Label | None]:
    atoms = tuple(Atom(str(a["el"]), float(a["x"]), float(a["y"]), float(a["z"])) for a in rec["atoms"])
    if not atoms:
        raise ValueError("structure has no atoms")
    meta = {str(k): str(v) for k, v in (rec.get("meta") or {}).items()}
    s = AtomicStructure(
        id=str(rec["id"]),
        composition=str(rec["composition"]),
        atoms=atoms,
        e_co=float(rec["e_co"]),
        e_h=float(rec["e_h"]),
        meta=meta,
    )
    label = None
    if "activity" in rec or "selectivity" in rec:
        label = Label(float(rec["activity"]), float(rec["selectivity"]))
    return s, label


def structure_to_record(s: AtomicStructure, label: Label | None = None) -> dict:
    rec = {
        "id": s.id,
        "composition": s.composition,
        "atoms": [{"el": a.el, "x": a.x, "y": a.y, "z": a.z} for a in s.atoms],
        "e_co": s.e_co,
        "e_h": s.e_h,
        "meta": dict(s.meta),
    }
    if label is not None:
        rec["activity"] = label.activity
        rec["selectivity"] = label.selectivity
    return rec


def dumps_record(rec: dict) -> str:
    return json.dumps(rec, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def load_dataset(path: str | Path, max_atoms: int = DEFAULT_MAX_ATOMS) -> Dataset:
    """Read a canonical line-delimited file.

    Structures with more than ``max_atoms`` atoms are skipped and listed in
    ``Dataset.rejected``; malformed lines raise ``ParseError``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    structures: list[AtomicStructure] = []
    labels: dict[str, Label] = {}
    rejected: list[tuple[str, str]] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                s, label = _record_to_structure(rec)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(lineno, f"{type(exc).__name__}: {exc}") from exc
            if s.id in seen:
                raise DuplicateIdError(s.id)
            seen.add(s.id)
            if len(s.atoms) > max_atoms:
                rejected.append((s.id, f"{len(s.atoms)} atoms > max_atoms={max_atoms}"))
                continue
            structures.append(s)
            if label is not None:
                labels[s.id] = label
    if rejected:
        log.warning("rejected %d structures exceeding max_atoms=%d", len(rejected), max_atoms)
    return Dataset(structures, labels, rejected)


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in dataset.structures:
            fh.write(dumps_record(structure_to_record(s, dataset.labels.get(s.id))) + "\n")


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# feature schema


def default_property_table() -> Path:
    return Path(str(resources.files("catscreen") / "data" / "elements.csv"))


def read_property_table(path: str | Path | None = None) -> dict[str, ElementProperties]:
    path = Path(path) if path is not None else default_property_table()
    with path.open(encoding="utf-8") as fh:
        rows = csv.DictReader(line for line in fh if not line.startswith("#"))
        return {
            r["symbol"].strip(): ElementProperties(
                float(r["mass"]), float(r["electronegativity"]), float(r["radius"])
            )
            for r in rows
        }


def build_schema(
    dataset: Dataset,
    property_table: str | Path | None = None,
    max_atoms: int = DEFAULT_MAX_ATOMS,
) -> FeatureSchema:
    table = read_property_table(property_table)
    vocab = sorted(set().union(*(s.elements() for s in dataset.structures)) if dataset.structures else set())
    for el in vocab:
        if el not in table:
            raise MissingPropertyError(el)
    return FeatureSchema(tuple(vocab), {el: table[el] for el in vocab}, max_atoms)


# ---------------------------------------------------------------------------
# external conversion

FORMAT_TAGS = ("gaspy-jsonl",)


@dataclass
class ConversionReport:
    n_co: int = 0
    n_h: int = 0
    n_paired: int = 0
    n_out_of_range: int = 0
    n_unpaired: int = 0
    n_ambiguous: int = 0

    @property
    def pairing_failures(self) -> int:
        return self.n_unpaired + self.n_ambiguous


def _pair_key(doc: dict) -> tuple:
    """Surface + site identity used to match CO and H adsorption records."""
    miller = tuple(int(m) for m in doc.get("miller", ()))
    shift = round(float(doc.get("shift", 0.0)), 4)
    top = bool(doc.get("top", True))
    site = tuple(round(float(c), 2) for c in doc.get("site", ()))
    return (str(doc["composition"]), miller, shift, top, site)


def _iter_source_docs(src: Path) -> Iterator[dict]:
    files = sorted(src.glob("*.jsonl")) if src.is_dir() else [src]
    for f in files:
        with f.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if line.strip():
                    try:
                        yield json.loads(line)
                    except json.JSONDecodeError as exc:
                        raise ParseError(lineno, f"{f.name}: {exc}") from exc


def convert_external(
    src: str | Path,
    out: str | Path,
    format_tag: str = "gaspy-jsonl",
    act_map: "VolcanoMap | None" = None,
    sel_map: "VolcanoMap | None" = None,
) -> ConversionReport:
    """Pair CO/H adsorption documents into canonical records.

    ``gaspy-jsonl``: ``src`` is a JSONL file or a directory of ``*.jsonl``
    files. Each document carries ``adsorbate`` ("CO" or "H"), ``composition``,
    ``miller``, ``shift``, ``top``, ``site`` (adsorption site xyz), ``energy``
    (eV) and ``atoms``. Documents are paired on composition + miller + shift +
    top + site (rounded to 0.01 Å); the structure of the CO document is kept.
    Keys occurring more than once for one adsorbate are dropped as ambiguous.
    Pairs outside the map domains are excluded.
    """
    if format_tag not in FORMAT_TAGS:
        raise UnsupportedFormatError(f"unsupported format {format_tag!r}; known: {', '.join(FORMAT_TAGS)}")
    src = Path(src)
    if not src.exists():
        raise FileNotFoundError(src)
    from .volcano import load_default_maps

    if act_map is None or sel_map is None:
        d_act, d_sel = load_default_maps()
        act_map = act_map or d_act
        sel_map = sel_map or d_sel

    report = ConversionReport()
    by_ads: dict[str, dict[tuple, list[dict]]] = {"CO": {}, "H": {}}
    for doc in _iter_source_docs(src):
        ads = str(doc.get("adsorbate", "")).upper()
        if ads not in by_ads:
            raise UnsupportedFormatError(f"unknown adsorbate {doc.get('adsorbate')!r}")
        if ads == "CO":
            report.n_co += 1
        else:
            report.n_h += 1
        by_ads[ads].setdefault(_pair_key(doc), []).append(doc)

    co, h = by_ads["CO"], by_ads["H"]
    records = []
    for key in set(co) | set(h):
        if key not in co or key not in h:
            report.n_unpaired += len(co.get(key, ())) + len(h.get(key, ()))
            continue
        if len(co[key]) > 1 or len(h[key]) > 1:
            report.n_ambiguous += len(co[key]) + len(h[key])
            continue
        co_doc, h_doc = co[key][0], h[key][0]
        energies = {"e_co": float(co_doc["energy"]), "e_h": float(h_doc["energy"])}
        if not (act_map.contains(energies[act_map.energy_key]) and sel_map.contains(energies[sel_map.energy_key])):
            report.n_out_of_range += 1
            continue
        composition, miller, shift, top, site = key
        digest = hashlib.sha1(repr(key).encode()).hexdigest()[:12]
        meta = {
            "miller": "".join(str(m) for m in miller),
            "shift": repr(shift),
            "top": str(top).lower(),
            "site": ",".join(repr(c) for c in site),
        }
        rec = {
            "id": f"{composition}-{digest}",
            "composition": composition,
            "atoms": [
                {"el": str(a["el"]), "x": float(a["x"]), "y": float(a["y"]), "z": float(a["z"])}
                for a in co_doc["atoms"]
            ],
            "e_co": energies["e_co"],
            "e_h": energies["e_h"],
            "meta": meta,
        }
        records.append(rec)
    records.sort(key=lambda r: r["id"])
    report.n_paired = len(records)
    with Path(out).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(dumps_record(rec) + "\n")
    if report.pairing_failures:
        log.warning(
            "pairing failures: %d unpaired, %d ambiguous", report.n_unpaired, report.n_ambiguous
        )
    return report


def composition_groups(dataset: Dataset) -> dict[str, list[str]]:
    groups: dict[str, list[str]] = {}
    for s in dataset.structures:
        groups.setdefault(s.composition, []).append(s.id)
    return groups
