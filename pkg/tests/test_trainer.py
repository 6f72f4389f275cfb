import math

import numpy as np
import pytest

from menuopt.core import (
    Menu,
    MenuItem,
    UniformRect,
    UniformTriangle,
    ValuationKind,
    make_grid,
    zero_item,
)
from menuopt.evaluator import grid_revenue
from menuopt.trainer import (
    MechanismParams,
    Mode,
    TrainConfig,
    extract_clean_menu,
    gradient,
    lambda_schedule,
    lr_schedule,
    materialize,
    soft_revenue,
    softplus_inverse,
    train,
)

GRID20 = make_grid(UniformRect(1.0, 1.0), 20)


def rel_err(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-6)


# ---------------------------------------------------------------------------
# parameterization / materialize
# ---------------------------------------------------------------------------


def test_materialize_free_mode():
    params = MechanismParams(np.zeros((2, 3)), softplus_inverse(np.array([0.3, 0.5, 0.9])),
                             mode=Mode.FREE, price_transform="softplus")
    menu = materialize(params)
    assert menu.k == 4
    assert menu.items[0].is_zero_item()
    for it in menu.items[1:]:
        assert it.allocation == (0.5, 0.5)  # sigmoid(0)
    np.testing.assert_allclose(menu.prices()[1:], [0.3, 0.5, 0.9], atol=1e-12)


def test_materialize_raw_prices_pass_through():
    params = MechanismParams(np.zeros((2, 2)), np.array([-0.2, 0.7]), price_transform="raw")
    menu = materialize(params)
    assert menu.prices()[1] == pytest.approx(-0.2)
    assert menu.prices()[2] == pytest.approx(0.7)


def test_materialize_deterministic_mode():
    # price slots follow binary counting on the allocations, zero-alloc last
    raw = np.array([0.6, 0.7, 0.8, 0.9])
    params = MechanismParams(np.zeros((2, 4)), raw, mode=Mode.DETERMINISTIC_PRICES_ONLY,
                             price_transform="raw")
    menu = materialize(params)
    assert menu.k == 4  # zero item + 3 binary allocations; the (0,0) slot is suppressed
    assert [it.allocation for it in menu.items] == [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]
    np.testing.assert_allclose(menu.prices(), [0.0, 0.6, 0.7, 0.8], atol=1e-12)


def test_materialize_unit_demand_feasible():
    rng = np.random.default_rng(5)
    for _ in range(20):
        params = MechanismParams(rng.normal(size=(2, 6), scale=4), rng.normal(size=6),
                                 mode=Mode.UNIT_DEMAND)
        menu = materialize(params)
        for it in menu.items:
            assert sum(it.allocation) <= 1.0 + 1e-12


def test_params_validation():
    with pytest.raises(ValueError):
        MechanismParams(np.zeros((2, 0)), np.zeros(0))
    with pytest.raises(ValueError):
        MechanismParams(np.zeros((2, 3)), np.zeros(2))  # price slot mismatch
    with pytest.raises(ValueError):
        MechanismParams(np.full((2, 2), np.nan), np.zeros(2))
    with pytest.raises(ValueError):
        MechanismParams(np.zeros((2, 3)), np.zeros(3), mode=Mode.DETERMINISTIC_PRICES_ONLY)
    with pytest.raises(ValueError):
        MechanismParams(np.zeros((2, 2)), np.zeros(2), price_transform="exp")


# ---------------------------------------------------------------------------
# soft revenue and gradient
# ---------------------------------------------------------------------------


def test_soft_revenue_single_bundle_item():
    # one item (1,1)@0.8 at very high temperature behaves like the hard buyer:
    # 0.8 * P[v1 + v2 >= 0.8] = 0.544
    params = MechanismParams(np.full((2, 1), 40.0), np.array([0.8]), price_transform="raw")
    grid = make_grid(UniformRect(1.0, 1.0), 200)
    rev = soft_revenue(params, grid, ValuationKind.ADDITIVE, 1e5)
    assert rev == pytest.approx(0.544, abs=2e-3)


def test_soft_revenue_zero_prices():
    params = MechanismParams(np.random.default_rng(0).normal(size=(2, 4)), np.zeros(4),
                             price_transform="raw")
    assert soft_revenue(params, GRID20, ValuationKind.ADDITIVE, 50.0) == 0.0


def test_price_gradient_nonpositive_at_zero_prices():
    # raising any price from 0 cannot lose revenue, so dLoss/dprice <= 0
    rng = np.random.default_rng(1)
    params = MechanismParams(rng.uniform(-1, 1, size=(2, 5)), np.zeros(5), price_transform="raw")
    g = gradient(params, GRID20, ValuationKind.ADDITIVE, 50.0)
    assert (g.price_raw <= 1e-12).all()


def test_gradient_symmetry_under_item_swap():
    # swapping the two goods everywhere must swap the gradient rows
    rng = np.random.default_rng(2)
    a = rng.uniform(-1, 1, size=(2, 4))
    b = rng.uniform(0.1, 0.9, size=4)
    params = MechanismParams(a, b, price_transform="raw")
    swapped = MechanismParams(a[::-1].copy(), b.copy(), price_transform="raw")
    g1 = gradient(params, GRID20, ValuationKind.ADDITIVE, 30.0)
    g2 = gradient(swapped, GRID20, ValuationKind.ADDITIVE, 30.0)
    np.testing.assert_allclose(g1.alloc_raw, g2.alloc_raw[::-1], atol=1e-12)
    np.testing.assert_allclose(g1.price_raw, g2.price_raw, atol=1e-12)


def _fd_check(params, grid, kind, lam, h=1e-5):
    """Max relative error of the analytic gradient vs central differences."""
    g = gradient(params, grid, kind, lam)
    worst = 0.0
    for arr, garr in ((params.alloc_raw, g.alloc_raw), (params.price_raw, g.price_raw)):
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = arr[idx]
            arr[idx] = old + h
            up = soft_revenue(params, grid, kind, lam)
            arr[idx] = old - h
            dn = soft_revenue(params, grid, kind, lam)
            arr[idx] = old
            fd = -(up - dn) / (2 * h)  # loss = -revenue
            worst = max(worst, rel_err(fd, garr[idx]))
    return worst


@pytest.mark.parametrize("seed,mode,kind,transform", [
    (101, Mode.FREE, ValuationKind.ADDITIVE, "softplus"),
    (102, Mode.FREE, ValuationKind.COMBINATORIAL, "raw"),
    (103, Mode.UNIT_DEMAND, ValuationKind.ADDITIVE, "raw"),
    (104, Mode.UNIT_DEMAND, ValuationKind.UNIT_DEMAND, "softplus"),
    (105, Mode.DETERMINISTIC_PRICES_ONLY, ValuationKind.ADDITIVE, "softplus"),
])
def test_gradient_matches_finite_differences(seed, mode, kind, transform):
    rng = np.random.default_rng(seed)
    n_items = 4 if mode is Mode.DETERMINISTIC_PRICES_ONLY else 5
    for lam in (10.0, 100.0):
        params = MechanismParams(
            rng.uniform(-1.5, 1.5, size=(2, n_items)),
            rng.uniform(0.1, 0.9, size=n_items),
            mode=mode,
            price_transform=transform,
        )
        worst = _fd_check(params, GRID20, kind, lam)
        assert worst < 1e-4, (mode, kind, transform, lam, worst)


# ---------------------------------------------------------------------------
# schedule and config
# ---------------------------------------------------------------------------


def test_lambda_schedule_shapes():
    cfg = TrainConfig(iterations=101, lambda_start=10, lambda_final=1000,
                      ramp="geometric", ramp_fraction=0.8)
    lams = [lambda_schedule(cfg, t) for t in range(101)]
    assert lams[0] == pytest.approx(10.0)
    assert lams[-1] == pytest.approx(1000.0)
    assert all(b >= a for a, b in zip(lams, lams[1:]))  # nondecreasing
    assert lams[80] == pytest.approx(1000.0)  # flat after the ramp

    const = TrainConfig(lambda_start=500, lambda_final=500, ramp="constant")
    assert lambda_schedule(const, 0) == 500.0

    lin = TrainConfig(iterations=11, lambda_start=0.5, lambda_final=10.5,
                      ramp="linear", ramp_fraction=1.0)
    assert lambda_schedule(lin, 5) == pytest.approx(5.5)


def test_lr_schedule_shapes():
    cfg = TrainConfig(iterations=101, learning_rate=0.01, lr_final=0.0001,
                      ramp_fraction=0.8)
    lrs = [lr_schedule(cfg, t) for t in range(101)]
    assert lrs[0] == pytest.approx(0.01)
    assert lrs[80] == pytest.approx(0.01)  # flat through the ramp window
    assert lrs[-1] == pytest.approx(0.0001)
    assert all(b <= a for a, b in zip(lrs, lrs[1:]))  # nonincreasing
    # geometric: halfway down the tail sits at the geometric mean
    assert lrs[90] == pytest.approx(0.001)

    flat = TrainConfig(learning_rate=0.02)
    assert lr_schedule(flat, 0) == 0.02
    assert lr_schedule(flat, flat.iterations - 1) == 0.02


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(k=1)
    with pytest.raises(ValueError):
        TrainConfig(iterations=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-0.1)
    with pytest.raises(ValueError):
        TrainConfig(lr_final=0.0)
    with pytest.raises(ValueError):
        TrainConfig(lambda_start=100, lambda_final=10)
    with pytest.raises(ValueError):
        TrainConfig(ramp="exponential")
    with pytest.raises(ValueError):
        TrainConfig(optimizer="lbfgs")
    with pytest.raises(ValueError):
        TrainConfig(init="midpoint")
    with pytest.raises(ValueError):
        TrainConfig(init_price_range=(0.5, 0.1))
    with pytest.raises(ValueError):
        TrainConfig(price_transform="log")


# ---------------------------------------------------------------------------
# training loop (tiny runs)
# ---------------------------------------------------------------------------

TINY = dict(k=4, grid_n=10, iterations=60, restarts=2, trace_every=10,
            lambda_start=200, lambda_final=200, ramp="constant")


def test_train_returns_consistent_result():
    res = train(UniformRect(1.0, 1.0), ValuationKind.ADDITIVE, TrainConfig(**TINY))
    assert res.menu.items[0].is_zero_item()
    assert res.menu.k <= 4
    assert len(res.restart_revenues) == 2
    assert res.best_revenue == max(res.restart_revenues)
    assert 42 <= res.best_seed <= 43
    # trace rows cover iteration 0 and the final iteration
    assert res.trace[0].iteration == 0
    assert res.trace[-1].iteration == 59
    lams = [row.lam for row in res.trace]
    assert all(b >= a for a, b in zip(lams, lams[1:]))


def test_train_deterministic_given_seed():
    cfg = TrainConfig(**TINY)
    r1 = train(UniformRect(1.0, 1.0), ValuationKind.ADDITIVE, cfg)
    r2 = train(UniformRect(1.0, 1.0), ValuationKind.ADDITIVE, cfg)
    assert r1.menu == r2.menu
    assert r1.best_revenue == r2.best_revenue
    assert [(t.iteration, t.lam, t.soft_rev, t.exact_rev) for t in r1.trace] == [
        (t.iteration, t.lam, t.soft_rev, t.exact_rev) for t in r2.trace
    ]


def test_train_seed_changes_outcome():
    cfg1 = TrainConfig(**TINY)
    cfg2 = TrainConfig(**{**TINY, "seed": 7})
    r1 = train(UniformRect(1.0, 1.0), ValuationKind.ADDITIVE, cfg1)
    r2 = train(UniformRect(1.0, 1.0), ValuationKind.ADDITIVE, cfg2)
    assert r1.menu != r2.menu  # different inits move the finish line


def test_train_unit_demand_mode_feasible_throughout():
    cfg = TrainConfig(**{**TINY, "mode": Mode.UNIT_DEMAND, "iterations": 120})
    res = train(UniformRect(1.0, 1.0), ValuationKind.UNIT_DEMAND, cfg)
    for it in res.menu.items:
        assert sum(it.allocation) <= 1.0 + 1e-12


def test_train_triangle_spec():
    res = train(UniformTriangle(2.0), ValuationKind.ADDITIVE,
                TrainConfig(**{**TINY, "iterations": 100}))
    assert res.best_revenue > 0.3  # sanity: it learns something


# ---------------------------------------------------------------------------
# menu cleaning
# ---------------------------------------------------------------------------


def test_clean_removes_dominated_item():
    grid = make_grid(UniformRect(1.0, 1.0), 30)
    menu = Menu((zero_item(2), MenuItem((1.0, 1.0), 0.8), MenuItem((1.0, 1.0), 1.5)))
    clean = extract_clean_menu(menu, grid, ValuationKind.ADDITIVE)
    assert clean.k == 2
    assert clean.items[1].price == pytest.approx(0.8)
    assert grid_revenue(clean, grid, ValuationKind.ADDITIVE) == pytest.approx(
        grid_revenue(menu, grid, ValuationKind.ADDITIVE), abs=1e-12
    )


def test_clean_merges_near_duplicates():
    grid = make_grid(UniformRect(1.0, 1.0), 30)
    menu = Menu((
        zero_item(2),
        MenuItem((1.0, 1.0), 0.8),
        MenuItem((0.9996, 1.0), 0.8003),
    ))
    clean = extract_clean_menu(menu, grid, ValuationKind.ADDITIVE)
    assert clean.k == 2


def test_clean_snaps_allocations():
    grid = make_grid(UniformRect(1.0, 1.0), 30)
    menu = Menu((zero_item(2), MenuItem((0.9996, 0.0004), 0.5)))
    clean = extract_clean_menu(menu, grid, ValuationKind.ADDITIVE)
    assert clean.items[1].allocation == (1.0, 0.0)


def test_clean_clamps_negative_price_hair():
    grid = make_grid(UniformRect(1.0, 1.0), 30)
    menu = Menu((zero_item(2), MenuItem((1.0, 1.0), 0.8), MenuItem((0.4, 0.4), -2e-4)))
    clean = extract_clean_menu(menu, grid, ValuationKind.ADDITIVE)
    assert all(it.price >= 0.0 for it in clean.items)


def test_clean_preserves_revenue_on_random_menus():
    rng = np.random.default_rng(9)
    grid = make_grid(UniformRect(1.0, 1.0), 25)
    for _ in range(10):
        offers = [
            MenuItem(tuple(rng.uniform(0, 1, 2)), float(rng.uniform(0, 1.5)))
            for _ in range(5)
        ]
        menu = Menu.from_offers(offers)
        clean = extract_clean_menu(menu, grid, ValuationKind.ADDITIVE)
        assert grid_revenue(clean, grid, ValuationKind.ADDITIVE) == pytest.approx(
            grid_revenue(menu, grid, ValuationKind.ADDITIVE), abs=1e-9
        )
