"""Optimal-transport certificates for the uniform-triangle optimum.

The optimality proof for the triangle family decomposes a signed measure
mu = mu0 + mu_boundary - mu_interior into a point mass at the origin, a
constant line density along the hypotenuse, and a constant density on the
interior.  For the optimal menu, mu_plus and mu_minus balance within every
best-response region, and the transport cost (the dual objective) equals
the menu's revenue -- a zero-gap weak-duality certificate.

This module builds the measures, checks per-region balance, and evaluates
the dual objective by quadrature: composite midpoint along hypotenuse
segments, centroid rule on subdivided triangulations of the region
polygons.  Integrals are computed region-aware (polygons are clipped first)
so no quadrature cell straddles a region boundary.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from ._geometry import Point, clip_segment_to_polygon, polygon_area
from .buyer import hard_response
from .core import Menu, UniformTriangle, ValuationKind
from .evaluator import exact_revenue, regions

# Default quadrature scale: this many line segments; area rules use ~100x
# as many sub-triangles spread over each region.
DEFAULT_QUAD_N = 10_000
AREA_OVERSAMPLE = 100

# Certificate tolerance: balance gaps and the dual-revenue gap must stay
# below this.  Price perturbations of 0.01 or more overshoot it by orders
# of magnitude, so pass/fail is clean.
DEFAULT_TOL = 1e-6

MIN_QUAD_N = 100


class QuadratureDiverged(RuntimeError):
    """Doubling the quadrature resolution moved the result too much."""


@dataclass(frozen=True)
class DualityMeasures:
    """The three measure components for triangle parameter c.

    mu_plus = origin point mass + hypotenuse line measure; mu_minus = the
    interior measure.  Their supports are disjoint, so no pointwise
    comparison is needed to split positive and negative parts.
    """

    c: float

    @property
    def origin_mass(self) -> float:
        return 1.0

    @property
    def boundary_density(self) -> float:
        """Line density along the hypotenuse from (0,1) to (c,0)."""
        return 2.0 / math.sqrt(1.0 + self.c ** 2)

    @property
    def interior_density(self) -> float:
        return 6.0 / self.c

    @property
    def hypotenuse(self) -> tuple[Point, Point]:
        return ((0.0, 1.0), (self.c, 0.0))

    def boundary_total(self) -> float:
        return self.boundary_density * math.hypot(self.c, 1.0)

    def interior_total(self) -> float:
        return self.interior_density * (self.c / 2.0)

    def total_balance(self) -> float:
        """mu0(T) + mu_boundary(T) - mu_interior(T); identically 0 for any c."""
        return self.origin_mass + self.boundary_total() - self.interior_total()


def build_measures(c: float) -> DualityMeasures:
    if not math.isfinite(c) or c < 1.0:
        raise ValueError(f"triangle parameter c must be >= 1, got {c!r}")
    return DualityMeasures(c)


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


def _line_integral(p0: Point, p1: Point, t0: float, t1: float, fn, n: int) -> float:
    """Composite midpoint rule for fn over the [t0, t1] piece of p0->p1."""
    if t1 <= t0:
        return 0.0
    ts = t0 + (t1 - t0) * (np.arange(n) + 0.5) / n
    xs = p0[0] + ts * (p1[0] - p0[0])
    ys = p0[1] + ts * (p1[1] - p0[1])
    piece_len = math.hypot(p1[0] - p0[0], p1[1] - p0[1]) * (t1 - t0)
    return float(fn(xs, ys).sum() * (piece_len / n))


def _area_integral(poly: tuple[Point, ...], fn, n_target: int) -> float:
    """Centroid rule over a fan triangulation subdivided into ~n_target cells."""
    if len(poly) < 3:
        return 0.0
    fans = [(poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1)]
    s = max(1, math.ceil(math.sqrt(n_target / len(fans))))
    ii, jj = np.meshgrid(np.arange(s), np.arange(s), indexing="ij")
    ii = ii.ravel()
    jj = jj.ravel()
    up = ii + jj <= s - 1
    down = ii + jj <= s - 2
    total = 0.0
    for a, b, c3 in fans:
        tri_area = abs(polygon_area([a, b, c3])) / (s * s)
        if tri_area == 0.0:
            continue
        abx, aby = b[0] - a[0], b[1] - a[1]
        acx, acy = c3[0] - a[0], c3[1] - a[1]
        # Upward sub-triangles have barycentric centroids ((3i+1), (3j+1))/3s,
        # downward ones ((3i+2), (3j+2))/3s.
        u_up = (3 * ii[up] + 1) / (3 * s)
        v_up = (3 * jj[up] + 1) / (3 * s)
        u_dn = (3 * ii[down] + 2) / (3 * s)
        v_dn = (3 * jj[down] + 2) / (3 * s)
        u = np.concatenate([u_up, u_dn])
        v = np.concatenate([v_up, v_dn])
        xs = a[0] + u * abx + v * acx
        ys = a[1] + u * aby + v * acy
        total += float(fn(xs, ys).sum() * tri_area)
    return total


# ---------------------------------------------------------------------------
# Region balance and the dual objective
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegionBalance:
    item_index: int
    mu_plus: float
    mu_minus: float

    @property
    def gap(self) -> float:
        return abs(self.mu_plus - self.mu_minus)


def _region_quantities(menu: Menu, c: float, quad_n: int, weight_fn) -> list[tuple[int, float, float]]:
    """Per-region (index, integral wrt mu_plus, integral wrt mu_minus).

    weight_fn(xs, ys) multiplies both densities; pass ones for plain masses
    and the l1 norm for the transport-cost integrals.  The origin's point
    mass lands in the region the exact buyer at v=(0,0) picks.
    """
    meas = build_measures(c)
    spec = UniformTriangle(c)
    regs = regions(menu, spec)
    h0, h1 = meas.hypotenuse
    origin_region = hard_response(menu, (0.0, 0.0), ValuationKind.ADDITIVE)
    out = []
    for reg in regs:
        if not reg.polygon:
            out.append((reg.item_index, 0.0, 0.0))
            continue
        plus = 0.0
        if reg.item_index == origin_region:
            w0 = weight_fn(np.zeros(1), np.zeros(1))
            plus += meas.origin_mass * float(w0[0])
        span = clip_segment_to_polygon(h0, h1, list(reg.polygon))
        if span is not None:
            plus += meas.boundary_density * _line_integral(
                h0, h1, span[0], span[1], weight_fn, quad_n
            )
        minus = meas.interior_density * _area_integral(
            reg.polygon, weight_fn, AREA_OVERSAMPLE * quad_n
        )
        out.append((reg.item_index, plus, minus))
    return out


def region_balance(menu: Menu, c: float, quad_n: int = DEFAULT_QUAD_N) -> list[RegionBalance]:
    """mu_plus and mu_minus mass of every best-response region."""
    if quad_n < MIN_QUAD_N:
        raise ValueError(f"quad_n must be at least {MIN_QUAD_N}")
    ones = lambda xs, ys: np.ones_like(xs)
    return [
        RegionBalance(i, plus, minus)
        for i, plus, minus in _region_quantities(menu, c, quad_n, ones)
    ]


def region_l1_integrals(menu: Menu, c: float, quad_n: int = DEFAULT_QUAD_N) -> list[tuple[int, float, float]]:
    """Per-region integrals of ||v||_1 against mu_plus and mu_minus.

    On the triangle's first quadrant ||v||_1 = v1 + v2, which is what the
    transport cost reduces to for coordinatewise-decreasing transports.
    """
    if quad_n < MIN_QUAD_N:
        raise ValueError(f"quad_n must be at least {MIN_QUAD_N}")
    l1 = lambda xs, ys: xs + ys
    return _region_quantities(menu, c, quad_n, l1)


def _dual_objective_once(menu: Menu, c: float, quad_n: int) -> float:
    # The zero item's region contributes nothing: its mu_plus is the origin
    # mass, and transporting from the origin costs ||(0 - v')_+||_1 = 0.
    return sum(
        plus - minus
        for i, plus, minus in region_l1_integrals(menu, c, quad_n)
        if i != 0
    )


def dual_objective(menu: Menu, c: float, quad_n: int = DEFAULT_QUAD_N, conv_tol: float = 4 * DEFAULT_TOL) -> float:
    """Transport cost of the per-region monotone coupling.

    Evaluated at quad_n and 2*quad_n; raises QuadratureDiverged when the
    refinement moves the value by more than conv_tol (the integrands here
    are polynomial, so honest geometry converges far below that).  Returns
    the finer value.
    """
    coarse = _dual_objective_once(menu, c, quad_n)
    fine = _dual_objective_once(menu, c, 2 * quad_n)
    if abs(fine - coarse) > conv_tol:
        raise QuadratureDiverged(
            f"dual objective moved {abs(fine - coarse):.3e} when doubling quad_n={quad_n}"
        )
    return fine


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DualityCertificate:
    c: float
    regions: tuple[RegionBalance, ...]
    dual_objective: float
    revenue: float
    tol: float

    @property
    def max_gap(self) -> float:
        return max((r.gap for r in self.regions), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_gap < self.tol and abs(self.dual_objective - self.revenue) < self.tol

    def to_json_dict(self) -> dict:
        return {
            "c": self.c,
            "regions": [
                {"i": r.item_index, "mu_plus": r.mu_plus, "mu_minus": r.mu_minus, "gap": r.gap}
                for r in self.regions
            ],
            "dual_objective": self.dual_objective,
            "revenue": self.revenue,
            "tol": self.tol,
            "verdict": "pass" if self.passed else "fail",
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


def certify(menu: Menu, c: float, quad_n: int = DEFAULT_QUAD_N, tol: float = DEFAULT_TOL) -> DualityCertificate:
    """Full certificate: per-region balance plus dual objective vs revenue.

    Passing certifies the menu optimal for the triangle (zero duality gap);
    the check correctly fails for perturbed menus, whose regions no longer
    balance the measures.
    """
    balances = tuple(region_balance(menu, c, quad_n))
    dual = dual_objective(menu, c, quad_n)
    revenue = exact_revenue(menu, UniformTriangle(c))
    return DualityCertificate(
        c=c, regions=balances, dual_objective=dual, revenue=revenue, tol=tol
    )
