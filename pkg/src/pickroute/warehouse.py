"""Warehouse geometry, picker distance metric and instance generation.

A single-block warehouse has ``n_aisles`` vertical pick aisles joined by a
front cross-aisle (y = 0) and a back cross-aisle (y = h).  The depot sits at
the front of the first aisle.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FORMAT_VERSION = 1

AISLE_COUNTS = (5, 10, 15, 20, 25, 30)
PICK_LIST_SIZES = (30, 45, 60, 75, 90)
DISTRIBUTIONS = ("normal", "uniform")


class GeometryError(ValueError):
    """A location or instance does not fit the warehouse geometry."""


@dataclass(frozen=True)
class WarehouseGeometry:
    n_aisles: int
    slots_per_aisle: int = 90
    slot_pitch: float = 1
    cross_aisle_offset: float = 1
    aisle_pitch: float = 5

    def __post_init__(self):
        if self.n_aisles < 1 or self.slots_per_aisle < 1:
            raise GeometryError("aisle and slot counts must be positive")
        for name in ("slot_pitch", "cross_aisle_offset", "aisle_pitch"):
            if not getattr(self, name) > 0:
                raise GeometryError(f"{name} must be strictly positive")

    @property
    def aisle_length(self):
        """Distance h between the front and back cross-aisles."""
        return self.slots_per_aisle * self.slot_pitch + self.cross_aisle_offset

    def aisle_x(self, aisle: int):
        return (aisle - 1) * self.aisle_pitch

    def slot_y(self, slot: int):
        return slot * self.slot_pitch

    def slot_of(self, y) -> int:
        slot = round(y / self.slot_pitch)
        if slot * self.slot_pitch != y:
            raise GeometryError(f"y={y} is not a slot coordinate")
        return slot

    @property
    def is_integral(self) -> bool:
        return all(
            isinstance(v, (int, np.integer))
            for v in (self.slot_pitch, self.cross_aisle_offset, self.aisle_pitch)
        )

    def scaled(self, k) -> "WarehouseGeometry":
        return WarehouseGeometry(
            self.n_aisles,
            self.slots_per_aisle,
            self.slot_pitch * k,
            self.cross_aisle_offset * k,
            self.aisle_pitch * k,
        )

    def to_dict(self) -> dict:
        return {
            "n_aisles": self.n_aisles,
            "slots_per_aisle": self.slots_per_aisle,
            "slot_pitch": self.slot_pitch,
            "cross_aisle_offset": self.cross_aisle_offset,
            "aisle_pitch": self.aisle_pitch,
        }


@dataclass(frozen=True, order=True)
class Location:
    aisle: int
    y: float

    def check(self, g: WarehouseGeometry) -> None:
        if not 1 <= self.aisle <= g.n_aisles:
            raise GeometryError(f"aisle {self.aisle} outside 1..{g.n_aisles}")
        if not 0 <= self.y <= g.aisle_length:
            raise GeometryError(f"y={self.y} outside 0..{g.aisle_length}")


@dataclass(frozen=True)
class ProblemClass:
    n_aisles: int
    m: int
    mode: str = "normal"

    def __post_init__(self):
        if self.mode not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution mode {self.mode!r}")

    def __str__(self):
        return f"{self.n_aisles}/{self.m}"

    @classmethod
    def parse(cls, text: str, mode: str = "normal") -> "ProblemClass":
        a, m = text.replace("/", ",").split(",")
        return cls(int(a), int(m), mode)


def all_problem_classes(mode: str = "normal") -> list[ProblemClass]:
    return [ProblemClass(a, m, mode) for a in AISLE_COUNTS for m in PICK_LIST_SIZES]


@dataclass(frozen=True)
class Instance:
    geometry: WarehouseGeometry
    items: tuple[Location, ...]
    seed: int = 0
    depot: Location = Location(1, 0)

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        if not self.items:
            raise GeometryError("an instance needs at least one item")
        if len(set(self.items)) != len(self.items):
            raise GeometryError("items must be pairwise distinct")
        if self.depot in self.items:
            raise GeometryError("the depot cannot be an item")
        self.depot.check(self.geometry)
        for loc in self.items:
            loc.check(self.geometry)

    @property
    def m(self) -> int:
        return len(self.items)

    @property
    def locations(self) -> tuple[Location, ...]:
        """Depot followed by the items."""
        return (self.depot,) + self.items

    def scaled(self, k) -> "Instance":
        return Instance(
            self.geometry.scaled(k),
            tuple(Location(l.aisle, l.y * k) for l in self.items),
            self.seed,
            Location(self.depot.aisle, self.depot.y * k),
        )


def shortest_path_distance(a: Location, b: Location, g: WarehouseGeometry):
    """Travel distance between two locations along aisles and cross-aisles."""
    a.check(g)
    b.check(g)
    if a.aisle == b.aisle:
        return abs(a.y - b.y)
    h = g.aisle_length
    s = a.y + b.y
    return abs(g.aisle_x(a.aisle) - g.aisle_x(b.aisle)) + min(s, 2 * h - s)


def distance_matrix(inst: Instance) -> np.ndarray:
    """Pairwise distances over ``inst.locations`` (depot at index 0)."""
    locs = inst.locations
    g = inst.geometry
    dtype = np.int64 if g.is_integral else np.float64
    n = len(locs)
    out = np.zeros((n, n), dtype=dtype)
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = shortest_path_distance(locs[i], locs[j], g)
    return out


def route_length(order: Sequence[Location], inst: Instance):
    """Length of depot -> order[0] -> ... -> order[-1] -> depot."""
    if len(order) != inst.m or set(order) != set(inst.items):
        raise ValueError("order must visit every item exactly once")
    g = inst.geometry
    stops = [inst.depot, *order, inst.depot]
    return sum(shortest_path_distance(p, q, g) for p, q in zip(stops, stops[1:]))


# -- generation --------------------------------------------------------------


def _truncated_normal_index(rng: np.random.Generator, lo: int, hi: int) -> int:
    # midpoint mean, sigma = range / 3, rounded and resampled until inside
    mean = (lo + hi) / 2
    sigma = (hi - lo + 1) / 3
    while True:
        v = int(np.rint(rng.normal(mean, sigma)))
        if lo <= v <= hi:
            return v


def generate_instance(
    pclass: ProblemClass,
    seed: int,
    geometry: WarehouseGeometry | None = None,
) -> Instance:
    """Random pick list for ``pclass``; deterministic in ``seed``."""
    g = geometry or WarehouseGeometry(pclass.n_aisles)
    if g.n_aisles != pclass.n_aisles:
        raise GeometryError("geometry does not match the problem class")
    capacity = g.n_aisles * g.slots_per_aisle
    if not 1 <= pclass.m <= capacity:
        raise GeometryError(f"cannot place {pclass.m} items in {capacity} slots")
    rng = np.random.default_rng(seed)
    if pclass.mode == "uniform":
        flat = rng.choice(capacity, size=pclass.m, replace=False)
        cells = [(int(c) // g.slots_per_aisle + 1, int(c) % g.slots_per_aisle + 1) for c in flat]
    else:
        seen: set[tuple[int, int]] = set()
        cells = []
        while len(cells) < pclass.m:
            cell = (
                _truncated_normal_index(rng, 1, g.n_aisles),
                _truncated_normal_index(rng, 1, g.slots_per_aisle),
            )
            if cell not in seen:
                seen.add(cell)
                cells.append(cell)
    items = tuple(Location(a, g.slot_y(s)) for a, s in cells)
    return Instance(g, items, seed)


# -- aisle sequence ------------------------------------------------------------


@dataclass(frozen=True)
class NonEmptyAisle:
    index: int
    x: float
    ys: tuple
    z: np.ndarray = field(compare=False, repr=False)


@dataclass(frozen=True)
class AisleSequence:
    aisles: tuple[NonEmptyAisle, ...]
    geometry: WarehouseGeometry

    def __len__(self):
        return len(self.aisles)

    def __getitem__(self, i) -> NonEmptyAisle:
        return self.aisles[i]

    def __iter__(self):
        return iter(self.aisles)

    @property
    def h(self):
        return self.geometry.aisle_length

    @property
    def z(self) -> np.ndarray:
        return np.stack([a.z for a in self.aisles])

    @property
    def positions(self) -> np.ndarray:
        return np.array([a.index - 1 for a in self.aisles])

    def item_points(self) -> list[tuple]:
        """(x, y) of every item; the depot point is excluded."""
        pts = []
        for a in self.aisles:
            ys = list(a.ys)
            if a.index == 1:
                ys.remove(0)
            pts.extend((a.x, y) for y in ys)
        return pts


def to_aisle_sequence(inst: Instance) -> AisleSequence:
    """Group picks by aisle, with the depot injected as a pick in aisle 1."""
    g = inst.geometry
    by_aisle: dict[int, list] = {1: [inst.depot.y]}
    for loc in inst.items:
        by_aisle.setdefault(loc.aisle, []).append(loc.y)
    aisles = []
    for idx in sorted(by_aisle):
        ys = tuple(sorted(by_aisle[idx]))
        z = np.zeros(g.slots_per_aisle)
        for y in ys:
            if y > 0:
                z[g.slot_of(y) - 1] = 1.0
        aisles.append(NonEmptyAisle(idx, g.aisle_x(idx), ys, z))
    return AisleSequence(tuple(aisles), g)


# -- instance files ------------------------------------------------------------


def instance_to_dict(inst: Instance) -> dict:
    g = inst.geometry
    return {
        "format_version": FORMAT_VERSION,
        "geometry": g.to_dict(),
        "depot": {"aisle": inst.depot.aisle, "slot": 0},
        "items": [{"aisle": l.aisle, "slot": g.slot_of(l.y)} for l in inst.items],
        "seed": inst.seed,
    }


def instance_from_dict(doc: dict) -> Instance:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported instance format_version {version!r}")
    g = WarehouseGeometry(**doc["geometry"])
    depot = doc.get("depot", {"aisle": 1, "slot": 0})
    items = tuple(Location(int(it["aisle"]), g.slot_y(int(it["slot"]))) for it in doc["items"])
    return Instance(g, items, int(doc.get("seed", 0)), Location(int(depot["aisle"]), g.slot_y(int(depot["slot"]))))


def save_instances(instances: Iterable[Instance], path: str | Path) -> None:
    docs = [instance_to_dict(i) for i in instances]
    payload = docs[0] if len(docs) == 1 else docs
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def load_instances(path: str | Path) -> list[Instance]:
    doc = json.loads(Path(path).read_text())
    docs = doc if isinstance(doc, list) else [doc]
    return [instance_from_dict(d) for d in docs]
