"""Menu optimization by gradient descent against the soft buyer.

A menu with k items (zero item at index 0 plus k-1 trainable offers) is
parameterized by unconstrained reals: sigmoid squashes allocation logits into
(0,1) and softplus keeps prices positive, so no projection step is needed.
The loss is the negative soft revenue; its gradient is computed in closed
form (chain rule through softmax, sigmoid and softplus) and checked against
finite differences in the test suite.

Constrained variants: UnitDemand replaces the sigmoid by a per-item softmax
with a dummy slot (forcing x1+...+xm <= 1) and DeterministicPricesOnly
freezes allocations to the 2^m binary vectors and trains prices alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import expit

from .buyer import hard_response_grid, softmax
from .core import (
    DistributionSpec,
    Menu,
    MenuItem,
    UniformRect,
    UniformTriangle,
    ValuationKind,
    ValueGrid,
    make_grid,
    max_bundle_value,
    spec_dim,
    zero_item,
)
from .evaluator import exact_revenue, grid_revenue

UNIT_DEMAND_SLACK = 1e-12


class Mode(Enum):
    FREE = "free"
    UNIT_DEMAND = "unit_demand"
    DETERMINISTIC_PRICES_ONLY = "deterministic_prices_only"


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the iteration where it happened."""

    def __init__(self, iteration: int, message: str = ""):
        super().__init__(message or f"training diverged at iteration {iteration}")
        self.iteration = iteration


def softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def softplus_inverse(y: np.ndarray) -> np.ndarray:
    """Exact inverse of softplus for positive y: log(exp(y) - 1)."""
    y = np.asarray(y, dtype=np.float64)
    return y + np.log(-np.expm1(-y))


def _deterministic_allocations(m: int) -> np.ndarray:
    """All nonzero binary allocations as an (m, 2^m - 1) matrix.

    Columns follow binary counting with good 1 as the high bit -- for m=2:
    (0,1), (1,0), (1,1).  The all-zero vector is not a column; the canonical
    zero item covers it.
    """
    cols = []
    for j in range(1, 2 ** m):
        cols.append([(j >> (m - 1 - i)) & 1 for i in range(m)])
    return np.array(cols, dtype=np.float64).T


@dataclass
class MechanismParams:
    """Unconstrained parameterization of a k-item menu (zero item excluded).

    alloc_raw: (m, k-1) allocation logits; ignored in deterministic mode,
    where columns are the fixed binary vectors and the last price slot
    belongs to the suppressed all-zero allocation (its gradient is zero).

    price_transform chooses how price_raw maps to prices: "raw" uses it
    directly (prices may dip below zero mid-training, which keeps losing
    items reachable by gradient -- an underpriced item always has takers),
    "softplus" pins prices positive throughout.
    """

    alloc_raw: np.ndarray
    price_raw: np.ndarray
    mode: Mode = Mode.FREE
    price_transform: str = "raw"

    def __post_init__(self) -> None:
        a = np.asarray(self.alloc_raw, dtype=np.float64)
        b = np.asarray(self.price_raw, dtype=np.float64)
        if a.ndim != 2 or a.shape[1] == 0:
            raise ValueError("alloc_raw must be (m, k-1) with k >= 2")
        if b.shape != (a.shape[1],):
            raise ValueError("price_raw must have one entry per trainable item")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("parameters must be finite")
        if self.price_transform not in ("raw", "softplus"):
            raise ValueError(f"unknown price_transform {self.price_transform!r}")
        if self.mode is Mode.DETERMINISTIC_PRICES_ONLY:
            m = a.shape[0]
            if a.shape[1] != 2 ** m:
                raise ValueError(
                    f"deterministic mode needs 2^m = {2 ** m} price slots, got {a.shape[1]}"
                )
        self.alloc_raw = a
        self.price_raw = b

    @property
    def m(self) -> int:
        return self.alloc_raw.shape[0]


def _prices_of(params: MechanismParams, raw: np.ndarray) -> np.ndarray:
    if params.price_transform == "raw":
        return np.array(raw, dtype=np.float64, copy=True)
    return softplus(raw)


def _price_chain(params: MechanismParams, raw: np.ndarray) -> np.ndarray:
    """d price / d price_raw for the live slots."""
    if params.price_transform == "raw":
        return np.ones_like(raw)
    return expit(raw)


def _squash(params: MechanismParams) -> tuple[np.ndarray, np.ndarray]:
    """Map raw parameters to (allocations (m, L), prices (L,)) for the live items."""
    mode = params.mode
    if mode is Mode.FREE:
        return expit(params.alloc_raw), _prices_of(params, params.price_raw)
    if mode is Mode.UNIT_DEMAND:
        m = params.m
        logits = np.vstack([params.alloc_raw, np.zeros((1, params.alloc_raw.shape[1]))])
        t = softmax(logits, axis=0)
        return t[:m], _prices_of(params, params.price_raw)
    if mode is Mode.DETERMINISTIC_PRICES_ONLY:
        alloc = _deterministic_allocations(params.m)
        # Price slots pair with columns in order; the final slot (all-zero
        # allocation) is dropped.
        return alloc, _prices_of(params, params.price_raw[:-1])
    raise ValueError(f"unknown mode {mode!r}")


def materialize(params: MechanismParams) -> Menu:
    """Squash raw parameters into a concrete Menu (zero item at index 0)."""
    alloc, prices = _squash(params)
    items = [zero_item(params.m)]
    for j in range(alloc.shape[1]):
        items.append(MenuItem(tuple(alloc[:, j]), float(prices[j])))
    return Menu(tuple(items))


# ---------------------------------------------------------------------------
# Loss and gradient
# ---------------------------------------------------------------------------


def _cross_term(points: np.ndarray, kind: ValuationKind) -> np.ndarray | None:
    if kind is ValuationKind.COMBINATORIAL:
        if points.shape[1] != 2:
            raise ValueError("combinatorial valuations are defined for m = 2")
        return points[:, 0] * points[:, 1]
    return None


def _soft_forward(
    alloc: np.ndarray,
    prices: np.ndarray,
    grid: ValueGrid,
    kind: ValuationKind,
    lam: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Soft revenue plus its gradient w.r.t. the live allocations and prices.

    Returns (revenue, d_rev/d_alloc (m, L), d_rev/d_prices (L,)).
    """
    if not np.isfinite(lam) or lam <= 0:
        raise ValueError(f"temperature lam must be positive and finite, got {lam!r}")
    v = grid.points
    w = grid.mass
    u = v @ alloc
    u -= prices[None, :]
    cross = _cross_term(v, kind)
    if cross is not None:
        u += cross[:, None]
    # Softmax over the k live columns plus an implicit zero-utility column
    # for the exit option, without materializing the extra column.
    z = u
    z *= lam
    zmax = np.maximum(z.max(axis=1), 0.0)
    s = np.exp(z - zmax[:, None])
    denom = s.sum(axis=1) + np.exp(-zmax)
    s /= denom[:, None]
    if not np.all(np.isfinite(s)):
        raise FloatingPointError("non-finite soft response")
    pbar = s @ prices
    rev = float(w @ pbar)
    # d rev / d u_{vl} = w_v * lam * s_{vl} * (p_l - pbar_v); utilities of the
    # zero item are pinned, so only live columns matter.
    g = prices[None, :] - pbar[:, None]
    g *= s
    g *= (lam * w)[:, None]
    d_prices = s.T @ w - g.sum(axis=0)
    d_alloc = v.T @ g
    return rev, d_alloc, d_prices


def soft_revenue(params: MechanismParams, grid: ValueGrid, kind: ValuationKind, lam: float) -> float:
    """Expected revenue against the softmax buyer at temperature lam."""
    alloc, prices = _squash(params)
    rev, _, _ = _soft_forward(alloc, prices, grid, kind, lam)
    return rev


@dataclass(frozen=True)
class ParamGrad:
    """Gradient of the loss, shaped like the raw parameters."""

    alloc_raw: np.ndarray
    price_raw: np.ndarray


def gradient(params: MechanismParams, grid: ValueGrid, kind: ValuationKind, lam: float) -> ParamGrad:
    """Analytic gradient of Loss = -soft_revenue w.r.t. the raw parameters."""
    alloc, prices = _squash(params)
    _, d_alloc, d_prices = _soft_forward(alloc, prices, grid, kind, lam)
    return _chain_to_raw(params, alloc, d_alloc, d_prices)


def _chain_to_raw(
    params: MechanismParams,
    alloc: np.ndarray,
    d_alloc: np.ndarray,
    d_prices: np.ndarray,
) -> ParamGrad:
    """Push gradients w.r.t. materialized (alloc, prices) back to raw params."""
    mode = params.mode
    if mode is Mode.FREE:
        da = d_alloc * alloc * (1.0 - alloc)
        db = d_prices * _price_chain(params, params.price_raw)
    elif mode is Mode.UNIT_DEMAND:
        m = params.m
        logits = np.vstack([params.alloc_raw, np.zeros((1, params.alloc_raw.shape[1]))])
        t = softmax(logits, axis=0)
        x = t[:m]
        # Softmax Jacobian per column; the dummy row carries no parameter.
        inner = (d_alloc * x).sum(axis=0, keepdims=True)
        da = x * (d_alloc - inner)
        db = d_prices * _price_chain(params, params.price_raw)
    elif mode is Mode.DETERMINISTIC_PRICES_ONLY:
        da = np.zeros_like(params.alloc_raw)
        db = np.zeros_like(params.price_raw)
        db[:-1] = d_prices * _price_chain(params, params.price_raw[:-1])
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return ParamGrad(alloc_raw=-da, price_raw=-db)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    """Hyperparameters for one training job.

    k counts menu items including the zero item, so k-1 offers are trained.
    The temperature ramps from lambda_start to lambda_final over the first
    ramp_fraction of iterations and stays flat afterwards.
    """

    k: int = 10
    iterations: int = 5000
    learning_rate: float = 0.01
    # Adam's step magnitude stays ~learning_rate even where the gradient is
    # tiny, so a constant rate limit-cycles around flat optima at that
    # amplitude; decaying to lr_final over the ramp window settles it.
    # None means no decay.
    lr_final: float | None = None
    lambda_start: float = 10.0
    lambda_final: float = 2000.0
    ramp: str = "geometric"  # geometric | linear | constant
    ramp_fraction: float = 0.8
    optimizer: str = "adam"  # adam | gd (plain full-batch descent)
    restarts: int = 5
    seed: int = 42
    grid_n: int = 100
    mode: Mode = Mode.FREE
    trace_every: int = 1
    price_transform: str = "raw"  # raw | softplus
    # "corners" starts items at binary allocation patterns on staggered price
    # tiers (see _corner_init); "random" draws logits and prices uniformly
    init: str = "corners"
    # price tier span ("corners") or price draw range ("random"), as
    # fractions of the largest bundle value on the support
    init_price_range: tuple[float, float] = (0.1, 0.8)
    # corner saturation magnitude ("corners") or logit half-width ("random")
    init_alloc_scale: float = 4.0

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ValueError("k must be at least 2 (zero item plus one offer)")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ValueError("learning_rate must be positive")
        if self.lr_final is not None and not (
            math.isfinite(self.lr_final) and self.lr_final > 0
        ):
            raise ValueError("lr_final must be positive when set")
        if not (0 < self.lambda_start <= self.lambda_final):
            raise ValueError("need 0 < lambda_start <= lambda_final")
        if self.ramp not in ("geometric", "linear", "constant"):
            raise ValueError(f"unknown ramp {self.ramp!r}")
        if not (0 < self.ramp_fraction <= 1):
            raise ValueError("ramp_fraction must be in (0, 1]")
        if self.optimizer not in ("adam", "gd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.grid_n < 1:
            raise ValueError("grid_n must be >= 1")
        if self.trace_every < 1:
            raise ValueError("trace_every must be >= 1")
        if self.price_transform not in ("raw", "softplus"):
            raise ValueError(f"unknown price_transform {self.price_transform!r}")
        if self.init not in ("corners", "random"):
            raise ValueError(f"unknown init {self.init!r}")
        lo, hi = self.init_price_range
        if not (0 < lo <= hi) or not math.isfinite(hi):
            raise ValueError("init_price_range must satisfy 0 < lo <= hi")
        self.init_price_range = (float(lo), float(hi))
        if not (math.isfinite(self.init_alloc_scale) and self.init_alloc_scale > 0):
            raise ValueError("init_alloc_scale must be positive")


def _ramp_frac(config: TrainConfig, iteration: int) -> float:
    ramp_iters = max(1, round(config.ramp_fraction * (config.iterations - 1)))
    return min(1.0, iteration / ramp_iters)


def lambda_schedule(config: TrainConfig, iteration: int) -> float:
    """Temperature at a given iteration; nondecreasing in the iteration."""
    if config.ramp == "constant":
        return config.lambda_final
    frac = _ramp_frac(config, iteration)
    lo, hi = config.lambda_start, config.lambda_final
    if config.ramp == "linear":
        return lo + frac * (hi - lo)
    return lo * (hi / lo) ** frac


def lr_schedule(config: TrainConfig, iteration: int) -> float:
    """Learning rate at a given iteration: flat through the ramp window, then
    geometric decay down to lr_final over the remaining iterations (constant
    throughout if lr_final is unset).

    Adam's step size stays near lr even where the gradient is tiny, so a
    constant rate never settles -- it limit-cycles around flat optima at
    roughly lr amplitude, which shows up as price errors of that size.
    Decaying from the start is worse: items freeze mid-migration before
    finding their basin.  So the decay window is the tail, after the buyer
    has hardened."""
    if config.lr_final is None or config.lr_final == config.learning_rate:
        return config.learning_rate
    ramp_iters = max(1, round(config.ramp_fraction * (config.iterations - 1)))
    if iteration <= ramp_iters:
        return config.learning_rate
    tail = max(1, config.iterations - 1 - ramp_iters)
    frac = min(1.0, (iteration - ramp_iters) / tail)
    return config.learning_rate * (config.lr_final / config.learning_rate) ** frac


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    lam: float
    soft_rev: float
    exact_rev: float


@dataclass
class TrainResult:
    menu: Menu
    trace: list[TraceRow]
    best_seed: int
    best_revenue: float
    restart_revenues: list[float] = field(default_factory=list)
    revenue_metric: str = "exact"  # exact | grid


def _corner_init(
    rng: np.random.Generator, m: int, n_items: int, config: TrainConfig, price_scale: float
) -> tuple[np.ndarray, np.ndarray]:
    """Allocation logits at the binary corner patterns, prices on staggered tiers.

    Full-batch descent cannot hop between basins, so the restart inits carry
    the burden of exploration.  Random logits rarely flow to the optimal
    structure -- mid-simplex items lock into lottery equilibria that serve
    middle types.  But optimal menus are built near the 2^m - 1 nonzero
    corner allocations, so we start every item AT a corner (saturation
    init_alloc_scale, plus noise) and cycle the copies of each corner
    through increasing price tiers spanning init_price_range.  Items on a
    useless (corner, tier) combination open dominated -- chosen by nobody,
    harmless -- instead of fragmenting value space, and the useful ones only
    need price refinement and local allocation bending.

    Corners are taken densest first (bundle, then the strips), which matters
    when the menu cap leaves room for only a few: the known small-menu optima
    lead with the bundle, and a capped run should start in that basin rather
    than hope a strip bends over.
    """
    patterns = _deterministic_allocations(m)  # (m, 2^m - 1)
    order = np.argsort(-patterns.sum(axis=0), kind="stable")
    patterns = patterns[:, order]
    n_pat = patterns.shape[1]
    s = config.init_alloc_scale
    lo, hi = config.init_price_range
    n_tiers = max(1, -(-n_items // n_pat))  # ceil
    if n_tiers == 1:
        tiers = np.array([(lo + hi) / 2.0])
    else:
        tiers = np.linspace(lo, hi, n_tiers)
    alloc_raw = np.empty((m, n_items))
    targets = np.empty(n_items)
    for j in range(n_items):
        pat = patterns[:, j % n_pat]
        tier = tiers[j // n_pat]
        alloc_raw[:, j] = s * (2.0 * pat - 1.0)
        # price proportional to the corner's size keeps tiers comparable
        # across corners (a one-good corner at the bundle's price is junk)
        targets[j] = tier * price_scale * pat.sum() / m
    alloc_raw += rng.uniform(-0.5, 0.5, size=(m, n_items))
    targets *= 1.0 + 0.1 * rng.uniform(-1.0, 1.0, size=n_items)
    return alloc_raw, targets


def _init_params(
    rng: np.random.Generator, m: int, config: TrainConfig, price_scale: float
) -> MechanismParams:
    if config.mode is Mode.DETERMINISTIC_PRICES_ONLY:
        n_items = 2 ** m
    else:
        n_items = config.k - 1
    if config.init == "corners" and config.mode is Mode.FREE:
        alloc_raw, targets = _corner_init(rng, m, n_items, config, price_scale)
    else:
        s = config.init_alloc_scale
        alloc_raw = rng.uniform(-s, s, size=(m, n_items))
        lo, hi = config.init_price_range
        targets = rng.uniform(lo, hi, size=n_items) * price_scale
    if config.price_transform == "raw":
        price_raw = targets
    else:
        price_raw = softplus_inverse(targets)
    return MechanismParams(
        alloc_raw=alloc_raw,
        price_raw=price_raw,
        mode=config.mode,
        price_transform=config.price_transform,
    )


def _assert_unit_demand(menu: Menu, iteration: int) -> None:
    for it in menu.items:
        if sum(it.allocation) > 1.0 + UNIT_DEMAND_SLACK:
            raise AssertionError(
                f"unit-demand feasibility violated at iteration {iteration}: {it.allocation}"
            )


class _Adam:
    def __init__(self, shapes: list[tuple[int, ...]], lr: float):
        self.lr = lr
        self.b1, self.b2, self.eps = 0.9, 0.999, 1e-8
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> list[np.ndarray]:
        self.t += 1
        out = []
        for i, g in enumerate(grads):
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g * g
            mhat = self.m[i] / (1 - self.b1 ** self.t)
            vhat = self.v[i] / (1 - self.b2 ** self.t)
            out.append(self.lr * mhat / (np.sqrt(vhat) + self.eps))
        return out


def _make_exact_eval(spec: DistributionSpec, kind: ValuationKind, grid: ValueGrid):
    """Continuous exact revenue when the evaluator supports the setting,
    otherwise exact hard-buyer revenue on the training grid."""
    if kind is ValuationKind.ADDITIVE and isinstance(spec, (UniformRect, UniformTriangle)):
        return "exact", lambda menu: exact_revenue(menu, spec)
    return "grid", lambda menu: grid_revenue(menu, grid, kind)


def train(spec: DistributionSpec, kind: ValuationKind, config: TrainConfig) -> TrainResult:
    """Run multi-restart gradient descent and keep the best menu.

    Restart r uses seed config.seed + r; the winner is the restart whose
    final menu scores highest under the exact evaluator (continuous when
    available, else hard-buyer revenue on the training grid).  The returned
    trace belongs to the winning restart.  Deterministic for a fixed seed
    and single-threaded BLAS.
    """
    grid = make_grid(spec, config.grid_n)
    m = spec_dim(spec)
    price_scale = max_bundle_value(spec)
    metric_name, exact_eval = _make_exact_eval(spec, kind, grid)

    best: TrainResult | None = None
    revenues: list[float] = []
    for r in range(config.restarts):
        seed = config.seed + r
        rng = np.random.default_rng(seed)
        params = _init_params(rng, m, config, price_scale)
        opt = _Adam([params.alloc_raw.shape, params.price_raw.shape], config.learning_rate)
        trace: list[TraceRow] = []
        max_price_cap = 0.0
        for t in range(config.iterations):
            lam = lambda_schedule(config, t)
            opt.lr = lr_schedule(config, t)
            alloc, prices = _squash(params)
            rev, d_alloc, d_prices = _soft_forward(alloc, prices, grid, kind, lam)
            if not math.isfinite(rev):
                raise TrainingDiverged(t)
            max_price_cap = float(prices.max(initial=0.0))
            # Revenue is a mass-weighted mix of prices, so it can only leave
            # [min price, max price] by a rounding hair.  (Raw-price training
            # admits negative prices mid-run, hence the lower edge.)
            min_price_cap = float(min(prices.min(initial=0.0), 0.0))
            if not (min_price_cap - 1e-9 <= rev <= max_price_cap + 1e-9):
                raise TrainingDiverged(
                    t, f"soft revenue {rev!r} outside price range at iteration {t}"
                )
            grad = _chain_to_raw(params, alloc, d_alloc, d_prices)
            if config.optimizer == "adam":
                steps = opt.step([grad.alloc_raw, grad.price_raw])
            else:
                steps = [opt.lr * grad.alloc_raw, opt.lr * grad.price_raw]
            params.alloc_raw = params.alloc_raw - steps[0]
            params.price_raw = params.price_raw - steps[1]
            last = t == config.iterations - 1
            if t % config.trace_every == 0 or last:
                menu_t = materialize(params)
                trace.append(TraceRow(t, lam, rev, exact_eval(menu_t)))
                if config.mode is Mode.UNIT_DEMAND and (t % 100 == 0 or last):
                    _assert_unit_demand(menu_t, t)
            elif config.mode is Mode.UNIT_DEMAND and t % 100 == 0:
                _assert_unit_demand(materialize(params), t)
        final_menu = materialize(params)
        final_rev = exact_eval(final_menu)
        revenues.append(final_rev)
        if best is None or final_rev > best.best_revenue:
            best = TrainResult(
                menu=final_menu,
                trace=trace,
                best_seed=seed,
                best_revenue=final_rev,
                revenue_metric=metric_name,
            )
    assert best is not None
    best.restart_revenues = revenues
    return best


# ---------------------------------------------------------------------------
# Post-processing
# ---------------------------------------------------------------------------

MERGE_TOL = 1e-3
SNAP_TOL = 1e-3
CLEAN_REV_TOL = 1e-9


def _dedupe_items(menu: Menu, chosen_mass: np.ndarray) -> Menu:
    """Merge items that agree within MERGE_TOL on every coordinate and price,
    keeping each group's most-chosen member (ties to the lowest index)."""
    keep: list[int] = []
    merged_into: dict[int, int] = {}
    for i in range(1, menu.k):
        target = None
        for j in keep:
            same = all(
                abs(a - b) < MERGE_TOL
                for a, b in zip(menu.items[i].allocation, menu.items[j].allocation)
            )
            if same and abs(menu.items[i].price - menu.items[j].price) < MERGE_TOL:
                target = j
                break
        if target is None:
            keep.append(i)
        else:
            merged_into[i] = target
    # Within each merge group prefer the member the grid actually chooses most.
    representative: dict[int, int] = {j: j for j in keep}
    for j in keep:
        group = [j] + [i for i, tgt in merged_into.items() if tgt == j]
        best = max(group, key=lambda idx: (chosen_mass[idx], -idx))
        representative[j] = best
    items = [menu.items[0]] + [menu.items[representative[j]] for j in keep]
    return Menu(tuple(items))


def extract_clean_menu(menu: Menu, grid: ValueGrid, kind: ValuationKind) -> Menu:
    """Tidy a trained menu without changing what the grid buys.

    Clamps negative prices to zero (a published mechanism never pays the
    buyer -- this is the one step applied even though it can move revenue,
    and it only moves it upward for the clamped item's own buyers), drops
    items never chosen on the grid, merges near-duplicates (componentwise
    difference < 1e-3), and snaps allocations within 1e-3 of 0 or 1 to
    exactly 0 or 1.  The merge and snap steps are verified against
    hard-buyer revenue on the grid and reverted if they would move it by
    more than CLEAN_REV_TOL.
    """
    if any(it.price < 0.0 for it in menu.items[1:]):
        menu = Menu(
            (menu.items[0],)
            + tuple(MenuItem(it.allocation, max(it.price, 0.0)) for it in menu.items[1:])
        )
    base_rev = grid_revenue(menu, grid, kind)
    choice = hard_response_grid(menu, grid.points, kind)
    chosen_mass = np.zeros(menu.k)
    np.add.at(chosen_mass, choice, grid.mass)

    kept = [menu.items[0]] + [menu.items[i] for i in range(1, menu.k) if chosen_mass[i] > 0]
    cleaned = Menu(tuple(kept))

    choice2 = hard_response_grid(cleaned, grid.points, kind)
    mass2 = np.zeros(cleaned.k)
    np.add.at(mass2, choice2, grid.mass)
    merged = _dedupe_items(cleaned, mass2)
    if abs(grid_revenue(merged, grid, kind) - base_rev) <= CLEAN_REV_TOL:
        cleaned = merged

    snapped_items = [cleaned.items[0]]
    for it in cleaned.items[1:]:
        alloc = tuple(
            0.0 if x < SNAP_TOL else 1.0 if x > 1.0 - SNAP_TOL else x for x in it.allocation
        )
        snapped_items.append(MenuItem(alloc, it.price))
    snapped = Menu(tuple(snapped_items))
    if abs(grid_revenue(snapped, grid, kind) - base_rev) <= CLEAN_REV_TOL:
        cleaned = snapped
    return cleaned
