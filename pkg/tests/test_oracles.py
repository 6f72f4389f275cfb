"""Closed-form benchmarks, frozen to 15+ digits from a 50-digit computation."""

import math

import pytest

from menuopt.core import CustomTable, UniformRect, UniformTriangle
from menuopt.evaluator import exact_revenue
from menuopt.oracles import (
    OPT_REV_MENU2,
    OPT_REV_MENU3,
    TRIANGLE_MENU_SWITCH,
    optimal_2menu,
    optimal_3menu,
    optimal_rect,
    optimal_rect_revenue,
    optimal_triangle,
    optimality_ratio,
    reference_for,
    triangle_opt_revenue,
)

import numpy as np

# Values computed once at 50-digit precision and frozen here.
FROZEN = {
    ("rect", 1.0): 0.549201004620229262874199164757,
    ("rect", 1.5): 0.683855615375472392113144173445,
    ("rect", 1.9): 0.788841397700873539360569084443,
    ("rect", 2.0): 22 / 27,
    ("rect", 2.5): 1019 / 1080,
    ("tri", 1.0): 0.384900179459750509672765853668,
    ("tri", 4 / 3): 4 / 9,
    ("tri", 2.0): 0.549201004620229262874199164757,
    ("tri", 3.0): 0.699962203169124303570169190719,
}


def test_rect_table_values():
    for (famc, c), want in FROZEN.items():
        if famc == "rect":
            assert optimal_rect_revenue(c) == pytest.approx(want, abs=1e-15)


def test_rect_untabulated_raises():
    with pytest.raises(KeyError):
        optimal_rect_revenue(1.7)


def test_triangle_revenue_formula():
    for (famc, c), want in FROZEN.items():
        if famc == "tri":
            assert triangle_opt_revenue(c) == pytest.approx(want, abs=1e-15)


def test_triangle_formula_continuous_at_switch():
    c = TRIANGLE_MENU_SWITCH
    below = 2 * math.sqrt(c / 3) / 3
    above = 2 * (4 + c + math.sqrt(c * (c - 1))) / 27
    assert below == pytest.approx(above, abs=1e-12)
    assert triangle_opt_revenue(c) == pytest.approx(4 / 9, abs=1e-12)


def test_triangle_menu_structure():
    small = optimal_triangle(1.2)
    assert small.menu.k == 2  # single bundle offer below the threshold
    assert small.menu.items[1].allocation == (1.0, 1.0)
    big = optimal_triangle(2.0)
    assert big.menu.k == 3
    assert big.menu.items[1].allocation == (0.5, 1.0)
    assert big.menu.items[1].price == pytest.approx(2 / 3, abs=1e-15)
    # bundle price 2c/3 - sqrt(c(c-1))/3 at c=2
    assert big.menu.items[2].price == pytest.approx(4 / 3 - math.sqrt(2) / 3, abs=1e-15)
    # price gap positive exactly above the threshold
    assert big.menu.items[2].price > big.menu.items[1].price


def test_optimal_menus_achieve_their_revenue():
    # the exact evaluator reproduces each closed form to near machine precision
    for c in (1.0, 1.2, 1.5, 2.0, 2.5, 3.0):
        ref = optimal_triangle(c)
        got = exact_revenue(ref.menu, ref.spec)
        assert abs(got - ref.opt_revenue) < 1e-12, c
    for ref in (optimal_3menu(), optimal_2menu()):
        got = exact_revenue(ref.menu, UniformRect(1.0, 1.0))
        assert abs(got - ref.opt_revenue) < 1e-12


def test_menu_cap_constants():
    assert OPT_REV_MENU3 == pytest.approx(59 / 108, abs=1e-15)
    assert OPT_REV_MENU2 == pytest.approx(0.544331053951817355154952016601, abs=1e-15)
    assert optimal_3menu().constraint == "menu_size<=3"
    assert optimal_2menu().constraint == "menu_size<=2"


def test_optimality_ratio():
    ref = optimal_triangle(2.0)
    assert optimality_ratio(ref.menu, ref) == pytest.approx(1.0, abs=1e-12)
    worse = optimal_triangle(2.0).menu  # perturb by dropping the lottery item
    from menuopt.core import Menu

    bundle_only = Menu((worse.items[0], worse.items[2]))
    assert optimality_ratio(bundle_only, ref) < 1.0


def test_reference_for_dispatch():
    assert reference_for(UniformTriangle(1.7)).opt_revenue == pytest.approx(
        triangle_opt_revenue(1.7)
    )
    assert reference_for(UniformRect(1.0, 1.0), menu_cap=3).constraint == "menu_size<=3"
    assert reference_for(UniformRect(1.0, 1.0), menu_cap=2).constraint == "menu_size<=2"
    assert reference_for(UniformRect(1.0, 2.0), menu_cap=10).opt_revenue == pytest.approx(22 / 27)
    assert reference_for(UniformRect(1.0, 1.7)) is None
    assert reference_for(UniformRect(1.0, 1.5), menu_cap=3) is None  # cap known only on the square
    pts = np.array([[0.5, 0.5]])
    assert reference_for(CustomTable(pts, np.array([1.0]))) is None


def test_rect_reference_has_no_menu():
    # only the revenue is tabulated for the rectangle family
    ref = optimal_rect(1.5)
    assert ref.menu is None
    assert ref.to_json_dict()["menu"] is None
