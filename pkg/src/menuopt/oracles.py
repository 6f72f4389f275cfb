"""Closed-form optimal mechanisms for the supported uniform families.

These serve as ground truth: training output is scored against them, and the
exact evaluator is validated by reproducing their revenues to near machine
precision.  Irrational constants are evaluated with 50-digit arithmetic and
rounded once to float.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from mpmath import mp, mpf, sqrt as mpsqrt

from .core import DistributionSpec, Menu, MenuItem, UniformRect, UniformTriangle, zero_item
from .evaluator import exact_revenue

mp.dps = 50

# The two-item triangle menu switches to three items above this threshold.
TRIANGLE_MENU_SWITCH = 4.0 / 3.0

# Optimal revenue for U[0,1] x [0,c], keyed by c.
_RECT_OPT = {
    1.0: float((12 + 2 * mpsqrt(2)) / 27),
    1.5: float((15 + 2 * mpsqrt(3)) / 27),
    1.9: float((mpf(87) / 5 + 2 * mpsqrt(mpf(19) / 5)) / 27),
    2.0: float(mpf(22) / 27),
    2.5: float(mpf(1019) / 1080),
}

# Best revenue for U[0,1]^2 with at most 3 menu items (zero item included)...
OPT_REV_MENU3 = float(mpf(59) / 108)
# ...and with at most 2, where pure bundling is optimal.
OPT_REV_MENU2 = float(2 * mpsqrt(6) / 9)


@dataclass(frozen=True)
class OptimalReference:
    """A known-optimal benchmark: revenue, and the menu when one is known.

    constraint records the mechanism class the optimum is taken over
    ("none" means fully unconstrained).
    """

    spec: DistributionSpec
    opt_revenue: float
    menu: Menu | None = None
    constraint: str = "none"

    def to_json_dict(self) -> dict:
        return {
            "spec": repr(self.spec),
            "opt_revenue": self.opt_revenue,
            "constraint": self.constraint,
            "menu": None if self.menu is None else self.menu.to_json_dict(),
        }


def triangle_opt_revenue(c: float) -> float:
    """Optimal revenue on the uniform triangle { v1/c + v2 <= 1 }."""
    cc = mpf(repr(float(c)))
    if c <= TRIANGLE_MENU_SWITCH:
        return float(2 * mpsqrt(cc / 3) / 3)
    return float(2 * (4 + cc + mpsqrt(cc * (cc - 1))) / 27)


def optimal_triangle(c: float) -> OptimalReference:
    """Optimal menu for the uniform triangle with parameter c >= 1.

    Up to c = 4/3 a single bundle offer at price sqrt(c/3) is optimal; past
    the threshold a lottery item (1/c, 1) at 2/3 joins the bundle, whose
    price becomes 2c/3 - sqrt(c(c-1))/3.  The price gap between bundle and
    lottery is positive exactly when c > 4/3.
    """
    spec = UniformTriangle(c)
    cc = mpf(repr(float(c)))
    if c <= TRIANGLE_MENU_SWITCH:
        menu = Menu((zero_item(2), MenuItem((1.0, 1.0), float(mpsqrt(cc / 3)))))
    else:
        p_lottery = float(mpf(2) / 3)
        p_bundle = float(2 * cc / 3 - mpsqrt(cc * (cc - 1)) / 3)
        menu = Menu((
            zero_item(2),
            MenuItem((float(1 / cc), 1.0), p_lottery),
            MenuItem((1.0, 1.0), p_bundle),
        ))
    return OptimalReference(spec, triangle_opt_revenue(c), menu)


def optimal_rect_revenue(c: float) -> float:
    """Tabulated optimal revenue for U[0,1] x [0,c]; known c values only."""
    for key, rev in _RECT_OPT.items():
        if abs(c - key) <= 1e-12:
            return rev
    raise KeyError(f"no closed-form optimum tabulated for U[0,1]x[0,{c!r}]")


def optimal_rect(c: float) -> OptimalReference:
    return OptimalReference(UniformRect(1.0, c), optimal_rect_revenue(c))


def optimal_3menu() -> OptimalReference:
    """Best menu for U[0,1]^2 with at most 3 items: {zero, (1,0)@2/3, (1,1)@5/6}.

    Revenue 59/108.  The mirror image selling good 2 alone does equally well;
    no symmetric 3-item menu does.
    """
    menu = Menu((
        zero_item(2),
        MenuItem((1.0, 0.0), float(mpf(2) / 3)),
        MenuItem((1.0, 1.0), float(mpf(5) / 6)),
    ))
    return OptimalReference(UniformRect(1.0, 1.0), OPT_REV_MENU3, menu, constraint="menu_size<=3")


def optimal_2menu() -> OptimalReference:
    """Best menu for U[0,1]^2 with at most 2 items: the bundle at sqrt(6)/3."""
    menu = Menu((
        zero_item(2),
        MenuItem((1.0, 1.0), float(mpsqrt(6) / 3)),
    ))
    return OptimalReference(UniformRect(1.0, 1.0), OPT_REV_MENU2, menu, constraint="menu_size<=2")


def optimality_ratio(menu: Menu, ref: OptimalReference) -> float:
    """Achieved revenue over optimal revenue, via the exact evaluator."""
    return exact_revenue(menu, ref.spec) / ref.opt_revenue


def reference_for(spec: DistributionSpec, menu_cap: int | None = None) -> OptimalReference | None:
    """Look up the benchmark matching a spec and an optional menu-size cap.

    Returns None when no closed form is known (custom tables, rectangles
    outside the tabulated c values, capped menus on anything but the unit
    square).  The cap counts all items including the zero item.
    """
    if isinstance(spec, UniformTriangle):
        return optimal_triangle(spec.c)
    if isinstance(spec, UniformRect) and abs(spec.c1 - 1.0) <= 1e-12:
        unit_square = abs(spec.c2 - 1.0) <= 1e-12
        if menu_cap is not None and menu_cap <= 3:
            if not unit_square:
                return None
            return optimal_2menu() if menu_cap <= 2 else optimal_3menu()
        try:
            return optimal_rect(spec.c2)
        except KeyError:
            return None
    return None
