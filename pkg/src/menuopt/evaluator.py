"""Exact menu evaluation for additive buyers on 2-D uniform supports.

Each menu item's best-response region is an intersection of half-planes
(u_i >= u_j is linear in v), so revenue under the exact buyer reduces to
shoelace areas times the constant density.  A grid-based evaluator handles
every other setting, and regions can be rendered to a standalone SVG.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._geometry import Point, clip_halfplane, polygon_area
from .buyer import hard_response_grid
from .core import (
    DistributionSpec,
    Menu,
    UniformRect,
    UniformTriangle,
    ValuationKind,
    ValueGrid,
    density,
    support_polygon,
)

# Allocation difference below which two items are treated as identical when
# carving regions (the tie rule decides, not a half-plane).
DEGENERATE_NORMAL_TOL = 1e-14

# The region masses of any menu must partition the support.
PARTITION_TOL = 1e-9


@dataclass(frozen=True)
class ResponseRegion:
    """Where one menu item wins: a convex polygon with its probability mass."""

    item_index: int
    polygon: tuple[Point, ...]
    mass: float


def _continuous_2d(spec: DistributionSpec) -> None:
    if not isinstance(spec, (UniformRect, UniformTriangle)):
        raise TypeError("exact regions need a continuous 2-D spec (rect or triangle)")


def regions(menu: Menu, spec: DistributionSpec) -> list[ResponseRegion]:
    """Best-response region of every menu item under the additive buyer.

    Regions partition the support up to shared boundaries; empty regions come
    back with mass 0 and an empty polygon.  Raises if the masses fail to sum
    to 1, which would mean the partition logic broke.
    """
    _continuous_2d(spec)
    if menu.m != 2:
        raise ValueError("regions are computed for two goods")
    alloc = menu.allocations()
    prices = menu.prices()
    dens = density(spec)
    out: list[ResponseRegion] = []
    for i in range(menu.k):
        poly = support_polygon(spec)
        for j in range(menu.k):
            if j == i or not poly:
                continue
            d = alloc[i] - alloc[j]
            rhs = prices[i] - prices[j]
            if np.max(np.abs(d)) < DEGENERATE_NORMAL_TOL:
                # Identical allocations: the cheaper item wins everywhere,
                # equal prices fall to the lower index.
                if rhs > 0 or (rhs == 0 and i > j):
                    poly = []
                continue
            # Keep u_i >= u_j, i.e. d . v >= rhs, via the <= clipper.
            poly = clip_halfplane(poly, -d[0], -d[1], -rhs)
        area = abs(polygon_area(poly)) if len(poly) >= 3 else 0.0
        if area <= 0.0:
            out.append(ResponseRegion(i, (), 0.0))
        else:
            out.append(ResponseRegion(i, tuple(poly), dens * area))
    total = sum(r.mass for r in out)
    if abs(total - 1.0) > PARTITION_TOL:
        raise ValueError(f"region masses sum to {total!r}; partition failed")
    return out


def exact_revenue(menu: Menu, spec: DistributionSpec) -> float:
    """Expected revenue under the exact additive buyer, to solver precision."""
    prices = menu.prices()
    return float(sum(prices[r.item_index] * r.mass for r in regions(menu, spec)))


def grid_revenue(menu: Menu, grid: ValueGrid, kind: ValuationKind) -> float:
    """Expected revenue when each grid point buys its exact best item."""
    choice = hard_response_grid(menu, grid.points, kind)
    return float(np.dot(grid.mass, menu.prices()[choice]))


# ---------------------------------------------------------------------------
# SVG rendering
# ---------------------------------------------------------------------------

_PALETTE = [
    "#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377",
    "#bbbbbb", "#997700", "#7788dd", "#dd7788", "#44aa99", "#884411",
]


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def region_plot(menu: Menu, spec: DistributionSpec, path: str | None = None) -> str:
    """Render the best-response regions as a standalone SVG string.

    Writes the file when a path is given.  Output is deterministic for a
    given menu and spec.
    """
    regs = regions(menu, spec)
    support = support_polygon(spec)
    xmax = max(p[0] for p in support)
    ymax = max(p[1] for p in support)
    plot = 460.0
    scale = plot / max(xmax, ymax)
    pad = 50.0
    legend_w = 330.0
    width = pad * 2 + xmax * scale + legend_w
    height = pad * 2 + ymax * scale

    def to_px(p: Point) -> str:
        return f"{pad + p[0] * scale:.2f},{pad + (ymax - p[1]) * scale:.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="white"/>',
    ]
    for r in regs:
        if not r.polygon:
            continue
        color = _PALETTE[r.item_index % len(_PALETTE)]
        pts = " ".join(to_px(p) for p in r.polygon)
        parts.append(
            f'<polygon points="{pts}" fill="{color}" fill-opacity="0.55" '
            f'stroke="{color}" stroke-width="1"/>'
        )
    outline = " ".join(to_px(p) for p in support)
    parts.append(f'<polygon points="{outline}" fill="none" stroke="black" stroke-width="1.5"/>')
    # Axis ticks at the support corners.
    parts.append(
        f'<text x="{pad - 6:.0f}" y="{pad + ymax * scale + 16:.0f}" font-size="12" '
        f'font-family="sans-serif">0</text>'
    )
    parts.append(
        f'<text x="{pad + xmax * scale - 4:.0f}" y="{pad + ymax * scale + 16:.0f}" '
        f'font-size="12" font-family="sans-serif">v1={_fmt(xmax)}</text>'
    )
    parts.append(
        f'<text x="{pad - 44:.0f}" y="{pad + 4:.0f}" font-size="12" '
        f'font-family="sans-serif">v2={_fmt(ymax)}</text>'
    )
    # Legend: one row per nonempty region.
    lx = pad * 2 + xmax * scale
    ly = pad
    for r in regs:
        if not r.polygon:
            continue
        color = _PALETTE[r.item_index % len(_PALETTE)]
        it = menu.items[r.item_index]
        label = (
            f"item {r.item_index}: x=({_fmt(it.allocation[0])}, {_fmt(it.allocation[1])}) "
            f"p={_fmt(it.price)} mass={_fmt(r.mass)}"
        )
        parts.append(f'<rect x="{lx:.0f}" y="{ly:.0f}" width="12" height="12" fill="{color}"/>')
        parts.append(
            f'<text x="{lx + 18:.0f}" y="{ly + 10:.0f}" font-size="12" '
            f'font-family="monospace">{label}</text>'
        )
        ly += 20
    parts.append("</svg>")
    svg = "\n".join(parts) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(svg)
    return svg
