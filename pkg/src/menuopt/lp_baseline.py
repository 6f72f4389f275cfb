"""Direct-mechanism linear program over a value grid.

For additive buyers the revenue-optimal *discrete* mechanism solves an LP:
per grid point v there are variables x1(v), x2(v) in [0,1] and an
unrestricted payment p(v); incentive constraints couple every ordered pair
of points.  This is the brute-force baseline the gradient trainer is
compared against -- exact on the grid, but O(n^2) constraints.

The builder emits the instance in sparse triplet form (rows are ">= 0"
inequalities) so the solving backend stays swappable; solve_lp uses HiGHS
through scipy.  Payments are deliberately not bounded below: IR plus IC
already pin them down, and a p >= 0 bound could distort solutions on grids
that lack an exact zero type (cell centers never include the origin).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from .core import Menu, MenuItem, ValueGrid, zero_item

# Refuse instances whose constraint count would exceed this.
MAX_LP_ROWS = 10 ** 8

# Solver must reach this duality gap; HiGHS defaults are tighter.
SOLVER_GAP = 1e-7

# IC violations above this make a mechanism unusable for menu extraction.
EXTRACT_IC_TOL = 1e-4

# Resolution at which near-identical (allocation, price) outcomes collapse.
DEDUP_RESOLUTION = 1e-4


@dataclass(frozen=True, eq=False)
class LpInstance:
    """One direct-mechanism LP in sparse triplet form.

    Variables are blocked per grid point as (x_1, ..., x_m, p); constraint
    rows all read  sum_j vals * z_j >= 0, with the first n_ic rows the IC
    pairs (in (i, j) lexicographic order) and the remaining n_points rows IR.
    Allocation variables are bounded to [0,1]; payments are free.
    """

    n_points: int
    m: int
    objective: np.ndarray  # length n_vars, to MAXIMIZE
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    n_rows: int
    n_ic: int

    @property
    def n_vars(self) -> int:
        return self.n_points * (self.m + 1)


@dataclass(frozen=True, eq=False)
class DirectMechanism:
    """Allocation and payment per grid point (the LP's decision variables)."""

    points: np.ndarray
    mass: np.ndarray
    alloc: np.ndarray
    pay: np.ndarray

    def __post_init__(self) -> None:
        n, m = self.points.shape
        if self.alloc.shape != (n, m) or self.pay.shape != (n,) or self.mass.shape != (n,):
            raise ValueError("inconsistent direct-mechanism arrays")


def build_lp(grid: ValueGrid) -> LpInstance:
    """Assemble the additive direct-mechanism LP for a grid.

    maximize   sum_v Pr[v] p(v)
    subject to v.x(v) - p(v) >= v.x(v') - p(v')   for all ordered pairs
               v.x(v) - p(v) >= 0                 for all v
               0 <= x(v) <= 1
    """
    n = grid.n
    m = grid.m
    n_ic = n * (n - 1)
    n_rows = n_ic + n
    if n_rows > MAX_LP_ROWS:
        raise ValueError(f"grid too large: {n_rows} constraint rows exceed {MAX_LP_ROWS}")
    v = grid.points

    def x_var(i: np.ndarray, g: int) -> np.ndarray:
        return i * (m + 1) + g

    def p_var(i: np.ndarray) -> np.ndarray:
        return i * (m + 1) + m

    idx = np.arange(n)
    ii = np.repeat(idx, n)
    jj = np.tile(idx, n)
    mask = ii != jj
    ii, jj = ii[mask], jj[mask]
    ic_rows = np.arange(n_ic)

    rows_parts = []
    cols_parts = []
    vals_parts = []
    for g in range(m):
        rows_parts += [ic_rows, ic_rows]
        cols_parts += [x_var(ii, g), x_var(jj, g)]
        vals_parts += [v[ii, g], -v[ii, g]]
    rows_parts += [ic_rows, ic_rows]
    cols_parts += [p_var(ii), p_var(jj)]
    vals_parts += [-np.ones(n_ic), np.ones(n_ic)]

    ir_rows = n_ic + idx
    for g in range(m):
        rows_parts.append(ir_rows)
        cols_parts.append(x_var(idx, g))
        vals_parts.append(v[idx, g])
    rows_parts.append(ir_rows)
    cols_parts.append(p_var(idx))
    vals_parts.append(-np.ones(n))

    objective = np.zeros(n * (m + 1))
    objective[p_var(idx)] = grid.mass
    return LpInstance(
        n_points=n,
        m=m,
        objective=objective,
        rows=np.concatenate(rows_parts).astype(np.int64),
        cols=np.concatenate(cols_parts).astype(np.int64),
        vals=np.concatenate(vals_parts).astype(np.float64),
        n_rows=n_rows,
        n_ic=n_ic,
    )


def solve_lp(
    lp: LpInstance, grid: ValueGrid, method: str = "highs"
) -> tuple[DirectMechanism, float]:
    """Solve an instance and unpack the optimum.

    The all-zero mechanism is always feasible, so failures indicate solver
    trouble (e.g. iteration limits) and raise.  HiGHS with default tolerances
    satisfies the 1e-7 gap contract and pivots deterministically.
    """
    a_ge = coo_matrix((lp.vals, (lp.rows, lp.cols)), shape=(lp.n_rows, lp.n_vars)).tocsr()
    bounds = []
    for i in range(lp.n_points):
        bounds.extend([(0.0, 1.0)] * lp.m)
        bounds.append((None, None))
    res = linprog(
        c=-lp.objective,
        A_ub=-a_ge,
        b_ub=np.zeros(lp.n_rows),
        bounds=bounds,
        method=method,
    )
    if res.status != 0:
        raise RuntimeError(f"LP solve failed (status {res.status}): {res.message}")
    z = res.x
    per_point = z.reshape(lp.n_points, lp.m + 1)
    mech = DirectMechanism(
        points=grid.points,
        mass=grid.mass,
        alloc=per_point[:, : lp.m].copy(),
        pay=per_point[:, lp.m].copy(),
    )
    return mech, float(lp.objective @ z)


def solve_grid(grid: ValueGrid, method: str = "highs") -> tuple[DirectMechanism, float, float]:
    """Convenience: build and solve, returning (mechanism, objective, seconds)."""
    t0 = time.perf_counter()
    lp = build_lp(grid)
    mech, obj = solve_lp(lp, grid, method=method)
    return mech, obj, time.perf_counter() - t0


@dataclass(frozen=True)
class AuditReport:
    """Worst-case IC and IR slack of a direct mechanism (positive = violated)."""

    max_ic_violation: float
    max_ir_violation: float
    worst_pair: tuple[int, int]

    def ok(self, tol: float) -> bool:
        return self.max_ic_violation <= tol and self.max_ir_violation <= tol


def audit_direct(mech: DirectMechanism) -> AuditReport:
    """Brute-force IC/IR audit over all ordered pairs, independent of the solver."""
    cross = mech.points @ mech.alloc.T - mech.pay[None, :]  # [i, j] = type i takes j's deal
    own = np.diag(cross).copy()
    gain = cross - own[:, None]
    np.fill_diagonal(gain, -np.inf)
    worst_flat = int(np.argmax(gain))
    worst_pair = (worst_flat // mech.points.shape[0], worst_flat % mech.points.shape[0])
    return AuditReport(
        max_ic_violation=float(gain[worst_pair]),
        max_ir_violation=float((-own).max()),
        worst_pair=worst_pair,
    )


def menu_from_direct(mech: DirectMechanism) -> Menu:
    """Collapse a direct mechanism into a menu via the taxation principle.

    Outcomes are deduplicated at DEDUP_RESOLUTION, but each surviving item
    keeps the exact floats of its first representative -- rounding the stored
    prices would break the knife-edge indifferences LP vertices sit on and
    send whole regions to the wrong (cheaper) item.  The zero item is
    prepended and any near-zero free outcome folds into it.  Rejects
    mechanisms whose IC violation exceeds EXTRACT_IC_TOL, since then the
    outcome set is not a faithful menu.
    """
    report = audit_direct(mech)
    if report.max_ic_violation > EXTRACT_IC_TOL:
        i, j = report.worst_pair
        raise ValueError(
            "mechanism is not incentive compatible enough to read as a menu: "
            f"type {mech.points[i]} prefers the deal of type {mech.points[j]} "
            f"by {report.max_ic_violation:.3e}"
        )
    m = mech.points.shape[1]
    r = int(round(-np.log10(DEDUP_RESOLUTION)))
    seen = set()
    offers = []
    for i in range(mech.points.shape[0]):
        alloc = tuple(float(min(1.0, max(0.0, x))) for x in mech.alloc[i])
        price = float(mech.pay[i])
        key = tuple(round(x, r) for x in alloc) + (round(price, r),)
        if key in seen:
            continue
        seen.add(key)
        if all(x == 0.0 for x in key):
            continue
        offers.append(MenuItem(alloc, price))
    offers.sort(key=lambda it: (it.price, it.allocation))
    return Menu((zero_item(m),) + tuple(offers))


def solution_to_csv(mech: DirectMechanism, path: str) -> None:
    """Dump the per-point solution as v1,...,vm,x1,...,xm,p rows."""
    m = mech.points.shape[1]
    header = [f"v{g + 1}" for g in range(m)] + [f"x{g + 1}" for g in range(m)] + ["p"]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(mech.points.shape[0]):
            row = [repr(float(x)) for x in mech.points[i]]
            row += [repr(float(x)) for x in mech.alloc[i]]
            row.append(repr(float(mech.pay[i])))
            fh.write(",".join(row) + "\n")


def to_mps(lp: LpInstance, path: str, name: str = "MENUOPT") -> None:
    """Write the instance in free MPS format (OBJSENSE MAX, G rows, RHS 0).

    Row names: IC0.. for incentive rows in build order, IR0.. for the
    participation rows.  Column names: V{i}X{g} and V{i}P per grid point.
    """
    m = lp.m

    def row_name(r: int) -> str:
        return f"IC{r}" if r < lp.n_ic else f"IR{r - lp.n_ic}"

    def col_name(c: int) -> str:
        i, slot = divmod(c, m + 1)
        return f"V{i}P" if slot == m else f"V{i}X{slot + 1}"

    order = np.lexsort((lp.rows, lp.cols))
    with open(path, "w") as fh:
        fh.write(f"NAME {name}\n")
        fh.write("OBJSENSE\n    MAX\n")
        fh.write("ROWS\n N OBJ\n")
        for r in range(lp.n_rows):
            fh.write(f" G {row_name(r)}\n")
        fh.write("COLUMNS\n")
        pos = 0
        for c in range(lp.n_vars):
            entries = []
            if lp.objective[c] != 0.0:
                entries.append(("OBJ", lp.objective[c]))
            while pos < order.size and lp.cols[order[pos]] == c:
                t = order[pos]
                entries.append((row_name(int(lp.rows[t])), float(lp.vals[t])))
                pos += 1
            cname = col_name(c)
            for rname, val in entries:
                fh.write(f"    {cname} {rname} {val!r}\n")
        fh.write("RHS\n")  # all right-hand sides are zero
        fh.write("BOUNDS\n")
        for c in range(lp.n_vars):
            cname = col_name(c)
            if (c % (m + 1)) == m:
                fh.write(f" FR BND {cname}\n")
            else:
                fh.write(f" UP BND {cname} 1.0\n")
        fh.write("ENDATA\n")
