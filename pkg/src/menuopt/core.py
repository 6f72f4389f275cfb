"""Domain types for menu-based selling of two goods.

A mechanism is represented by its menu: a list of (allocation, price) pairs
from which the buyer picks a utility-maximizing entry.  The zero item --
receive nothing, pay nothing -- is always present so that walking away is a
menu choice like any other.

This module owns the value distributions, their discretizations, and the
buyer utility function; everything downstream (training, LP, duality) builds
on these types.
"""

from __future__ import annotations

import csv
import json
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

import numpy as np

from ._geometry import (
    Point,
    clip_halfplane,
    polygon_area,
    polygon_centroid,
    point_in_polygon,
)

# Probability masses must sum to one within this tolerance.
MASS_TOL = 1e-9

# Allocation coordinates may stray outside [0, 1] by at most this much
# (LP solvers and float roundoff) before we refuse them; smaller excursions
# are clamped.
ALLOC_SLACK = 1e-9


class ValuationKind(Enum):
    """How a buyer with per-item values v scores an allocation x at price p."""

    ADDITIVE = "additive"
    COMBINATORIAL = "combinatorial"
    UNIT_DEMAND = "unit_demand"


def _as_float_tuple(xs: Sequence[float]) -> tuple[float, ...]:
    return tuple(float(x) for x in xs)


@dataclass(frozen=True)
class MenuItem:
    """One menu entry: an allocation in [0,1]^m and a price.

    Fractional coordinates are lottery probabilities.  The price may be any
    finite real at the type level (intermediate objects can carry unprojected
    values); oracles and final extraction only ever produce prices >= 0.
    """

    allocation: tuple[float, ...]
    price: float

    def __post_init__(self) -> None:
        alloc = _as_float_tuple(self.allocation)
        if len(alloc) == 0:
            raise ValueError("allocation must have at least one coordinate")
        fixed = []
        for x in alloc:
            if not math.isfinite(x):
                raise ValueError(f"non-finite allocation coordinate {x!r}")
            if x < -ALLOC_SLACK or x > 1.0 + ALLOC_SLACK:
                raise ValueError(f"allocation coordinate {x!r} outside [0, 1]")
            fixed.append(min(1.0, max(0.0, x)))
        object.__setattr__(self, "allocation", tuple(fixed))
        if not math.isfinite(self.price):
            raise ValueError(f"non-finite price {self.price!r}")
        object.__setattr__(self, "price", float(self.price))

    @property
    def m(self) -> int:
        return len(self.allocation)

    def is_zero_item(self) -> bool:
        return self.price == 0.0 and all(x == 0.0 for x in self.allocation)


def zero_item(m: int) -> MenuItem:
    """The walk-away option: receive nothing, pay nothing."""
    return MenuItem((0.0,) * m, 0.0)


@dataclass(frozen=True)
class Menu:
    """An ordered menu of items over m goods.

    Invariants: the zero item sits at index 0 and appears exactly once, and
    every item allocates the same number of goods.
    """

    items: tuple[MenuItem, ...]

    def __post_init__(self) -> None:
        items = tuple(self.items)
        if not items:
            raise ValueError("menu must contain at least the zero item")
        m = items[0].m
        for it in items:
            if it.m != m:
                raise ValueError("menu items disagree on the number of goods")
        if not items[0].is_zero_item():
            raise ValueError("menu item 0 must be the zero item")
        if any(it.is_zero_item() for it in items[1:]):
            raise ValueError("zero item must appear exactly once")
        object.__setattr__(self, "items", items)

    @classmethod
    def from_offers(cls, offers: Sequence[MenuItem], m: int | None = None) -> "Menu":
        """Build a menu from the non-trivial offers, prepending the zero item."""
        if m is None:
            if not offers:
                raise ValueError("need m to build an empty menu")
            m = offers[0].m
        return cls((zero_item(m),) + tuple(offers))

    @property
    def m(self) -> int:
        return self.items[0].m

    @property
    def k(self) -> int:
        return len(self.items)

    def allocations(self) -> np.ndarray:
        """Item allocations as a (k, m) array."""
        return np.array([it.allocation for it in self.items], dtype=np.float64)

    def prices(self) -> np.ndarray:
        return np.array([it.price for it in self.items], dtype=np.float64)

    # -- JSON round trip (format: {"m": ..., "items": [{"x": [...], "p": ...}]})

    def to_json_dict(self) -> dict:
        return {
            "m": self.m,
            "items": [{"x": list(it.allocation), "p": it.price} for it in self.items],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    @classmethod
    def from_json_dict(cls, data: dict) -> "Menu":
        m = int(data["m"])
        items = []
        for entry in data["items"]:
            x = _as_float_tuple(entry["x"])
            if len(x) != m:
                raise ValueError("menu JSON: item dimension disagrees with m")
            items.append(MenuItem(x, float(entry["p"])))
        return cls(tuple(items))

    @classmethod
    def from_json(cls, text: str) -> "Menu":
        return cls.from_json_dict(json.loads(text))

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str) -> "Menu":
        with open(path) as fh:
            return cls.from_json(fh.read())


# ---------------------------------------------------------------------------
# Value distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformRect:
    """Uniform on the axis-aligned box [0, c1] x [0, c2]."""

    c1: float
    c2: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.c1) and math.isfinite(self.c2)):
            raise ValueError("box sides must be finite")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("box sides must be positive")


@dataclass(frozen=True)
class UniformTriangle:
    """Uniform on the right triangle { v1/c + v2 <= 1, v >= 0 }.

    Vertices (0,0), (c,0), (0,1); density 2/c.
    """

    c: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.c) or self.c < 1.0:
            raise ValueError("triangle parameter c must be finite and >= 1")


@dataclass(frozen=True)
class CustomTable:
    """An explicit discrete value distribution: support points with masses."""

    points: tuple[tuple[float, ...], ...]
    mass: tuple[float, ...]

    def __post_init__(self) -> None:
        pts = tuple(_as_float_tuple(p) for p in self.points)
        w = _as_float_tuple(self.mass)
        if not pts:
            raise ValueError("custom table must contain at least one point")
        if len(pts) != len(w):
            raise ValueError("points and mass lengths differ")
        m = len(pts[0])
        if any(len(p) != m for p in pts):
            raise ValueError("custom table points disagree on dimension")
        for p in pts:
            if not all(math.isfinite(x) for x in p):
                raise ValueError("non-finite point in custom table")
        if any((not math.isfinite(x)) or x < 0 for x in w):
            raise ValueError("custom table masses must be finite and nonnegative")
        if abs(sum(w) - 1.0) > MASS_TOL:
            raise ValueError(f"custom table masses sum to {sum(w)!r}, expected 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "mass", w)


DistributionSpec = Union[UniformRect, UniformTriangle, CustomTable]


def density(spec: DistributionSpec) -> float:
    """Constant density of a continuous spec on its support."""
    if isinstance(spec, UniformRect):
        return 1.0 / (spec.c1 * spec.c2)
    if isinstance(spec, UniformTriangle):
        return 2.0 / spec.c
    raise TypeError("custom tables have no continuous density")


def support_polygon(spec: DistributionSpec) -> list[Point]:
    """Support of a continuous spec as a CCW polygon."""
    if isinstance(spec, UniformRect):
        return [(0.0, 0.0), (spec.c1, 0.0), (spec.c1, spec.c2), (0.0, spec.c2)]
    if isinstance(spec, UniformTriangle):
        return [(0.0, 0.0), (spec.c, 0.0), (0.0, 1.0)]
    raise TypeError("custom tables have no polygonal support")


def max_bundle_value(spec: DistributionSpec) -> float:
    """Largest total value sum(v) attainable under the spec; sets price scale."""
    if isinstance(spec, UniformRect):
        return spec.c1 + spec.c2
    if isinstance(spec, UniformTriangle):
        return max(spec.c, 1.0)
    return max(sum(p) for p in spec.points)


def spec_dim(spec: DistributionSpec) -> int:
    if isinstance(spec, CustomTable):
        return len(spec.points[0])
    return 2


# ---------------------------------------------------------------------------
# Discretization
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ValueGrid:
    """A discrete stand-in for a value distribution.

    points: (n, m) array of representative values, all inside the support.
    mass:   (n,) nonnegative weights summing to 1 (within MASS_TOL).
    n_per_unit: grid resolution used to build it (None when loaded from
    external data).
    """

    points: np.ndarray
    mass: np.ndarray
    n_per_unit: int | None = None

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        w = np.asarray(self.mass, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("grid points must form a nonempty (n, m) array")
        if w.shape != (pts.shape[0],):
            raise ValueError("grid mass must be a vector matching points")
        if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(w)):
            raise ValueError("grid contains non-finite entries")
        if np.any(w < 0):
            raise ValueError("grid masses must be nonnegative")
        total = float(w.sum())
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"grid masses sum to {total!r}, expected 1")
        pts = pts.copy()
        w = w.copy()
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "mass", w)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def m(self) -> int:
        return self.points.shape[1]

    def to_csv(self, path: str) -> None:
        """Write rows v1,...,vm,mass with a header."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"v{i + 1}" for i in range(self.m)] + ["mass"])
            for row, w in zip(self.points, self.mass):
                writer.writerow([repr(float(x)) for x in row] + [repr(float(w))])

    @classmethod
    def from_csv(cls, path: str) -> "ValueGrid":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[-1] != "mass" or len(header) < 2:
                raise ValueError("grid CSV must have columns v1,...,vm,mass")
            pts = []
            w = []
            for row in reader:
                if not row:
                    continue
                pts.append([float(x) for x in row[:-1]])
                w.append(float(row[-1]))
        return cls(np.array(pts), np.array(w), n_per_unit=None)


def _axis_edges(length: float, n_per_unit: int) -> np.ndarray:
    """Cell edges 0, 1/N, 2/N, ... covering [0, length]."""
    n_cells = max(1, math.ceil(length * n_per_unit - 1e-9))
    edges = np.arange(n_cells + 1, dtype=np.float64) / n_per_unit
    edges[-1] = min(edges[-1], length)
    if edges[-1] < length:  # length / N overshoot guard; extend final edge
        edges = np.append(edges, length)
    return edges


def make_grid(spec: DistributionSpec, n_per_unit: int) -> ValueGrid:
    """Discretize a distribution at N cells per unit length.

    Cells are squares of side 1/N; each contributes its center with mass
    density * area.  Cells that straddle the support boundary are clipped,
    weighted by the clipped area, and represented by the clipped region's
    centroid so every grid point stays inside the support.  Masses are
    renormalized to sum to exactly 1.
    """
    if not isinstance(n_per_unit, int) or n_per_unit < 1:
        raise ValueError("n_per_unit must be a positive integer")

    if isinstance(spec, CustomTable):
        pts = np.array(spec.points, dtype=np.float64)
        w = np.array(spec.mass, dtype=np.float64)
        return ValueGrid(pts, w / w.sum(), n_per_unit=n_per_unit)

    if isinstance(spec, UniformRect):
        xs = _axis_edges(spec.c1, n_per_unit)
        ys = _axis_edges(spec.c2, n_per_unit)
        cx = 0.5 * (xs[:-1] + xs[1:])
        cy = 0.5 * (ys[:-1] + ys[1:])
        wx = np.diff(xs)
        wy = np.diff(ys)
        px, py = np.meshgrid(cx, cy, indexing="ij")
        area = np.outer(wx, wy)
        pts = np.column_stack([px.ravel(), py.ravel()])
        w = (density(spec) * area).ravel()
        return ValueGrid(pts, w / w.sum(), n_per_unit=n_per_unit)

    if isinstance(spec, UniformTriangle):
        c = spec.c
        xs = _axis_edges(c, n_per_unit)
        ys = _axis_edges(1.0, n_per_unit)
        pts = []
        w = []
        support = support_polygon(spec)
        for i in range(len(xs) - 1):
            for j in range(len(ys) - 1):
                cell = [(xs[i], ys[j]), (xs[i + 1], ys[j]),
                        (xs[i + 1], ys[j + 1]), (xs[i], ys[j + 1])]
                # Keep the part of the cell under the hypotenuse v1/c + v2 <= 1.
                clipped = clip_halfplane(cell, 1.0 / c, 1.0, 1.0)
                area = polygon_area(clipped)
                if area <= 1e-15:
                    continue
                center = (0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1]))
                if point_in_polygon(support, center):
                    rep = center
                else:
                    rep = polygon_centroid(clipped)
                pts.append(rep)
                w.append(density(spec) * area)
        pts_arr = np.array(pts, dtype=np.float64)
        w_arr = np.array(w, dtype=np.float64)
        return ValueGrid(pts_arr, w_arr / w_arr.sum(), n_per_unit=n_per_unit)

    raise TypeError(f"unknown distribution spec {spec!r}")


# ---------------------------------------------------------------------------
# Buyer utilities
# ---------------------------------------------------------------------------


def menu_utilities(menu: Menu, values: np.ndarray, kind: ValuationKind) -> np.ndarray:
    """Utility of every menu item for a batch of value vectors.

    values: (n, m) array.  Returns (n, k).  The zero item's utility is pinned
    to exactly 0 regardless of kind.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 2 or v.shape[1] != menu.m:
        raise ValueError(f"values must be (n, {menu.m}), got {v.shape}")
    alloc = menu.allocations()  # (k, m)
    prices = menu.prices()
    u = v @ alloc.T - prices[None, :]
    if kind is ValuationKind.COMBINATORIAL:
        if menu.m != 2:
            raise ValueError("combinatorial valuations are defined for m = 2")
        u[:, 1:] += (v[:, 0] * v[:, 1])[:, None]
    elif kind not in (ValuationKind.ADDITIVE, ValuationKind.UNIT_DEMAND):
        raise ValueError(f"unknown valuation kind {kind!r}")
    u[:, 0] = 0.0
    return u


def menu_utility(menu: Menu, v: Sequence[float], kind: ValuationKind) -> np.ndarray:
    """Utility vector (one entry per menu item) for a single value vector."""
    arr = np.asarray(v, dtype=np.float64).reshape(1, -1)
    return menu_utilities(menu, arr, kind)[0]


class BuyerBehavior(ABC):
    """Anything that maps (menu, value vector, temperature) to choice odds."""

    @abstractmethod
    def response(self, menu: Menu, v: Sequence[float], lam: float) -> np.ndarray:
        """Probability over menu items; entries sum to 1."""
