"""Command-line harness: train | lp | bench | certify.

Experiments are described by TOML (or JSON) config files; every command
writes its artifacts into an output directory.  Outputs are byte-stable for
a fixed config, seed, and --threads 1, except for the wall-clock seconds
column that bench exists to measure.

This module imports nothing heavy at load time: --threads must pin the BLAS
thread-pool environment variables before numpy comes in, so the numeric
modules are imported inside the command handlers.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from typing import Any

DEFAULT_LP_N = 10
LP_MAX_N = 40  # refuse direct-mechanism LPs finer than this

_THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


class ConfigError(Exception):
    """A config file problem, carrying the offending field's dotted path."""

    def __init__(self, fieldpath: str, message: str):
        super().__init__(f"{fieldpath}: {message}")
        self.fieldpath = fieldpath


# ---------------------------------------------------------------------------
# Config schema
# ---------------------------------------------------------------------------

_SECTION_KEYS = {
    "experiment": {"name", "outdir"},
    "distribution": {"family", "c", "c1", "c2", "points", "mass"},
    "buyer": {"kind"},
    "train": {
        "k", "iterations", "learning_rate", "lr_final", "lambda_start",
        "lambda_final", "ramp", "ramp_fraction", "optimizer", "restarts",
        "seed", "grid_n", "mode", "trace_every", "price_transform", "init",
        "init_price_range", "init_alloc_scale",
    },
    "compare": {"oracle", "lp", "duality"},
    "lp": {"grid_n", "method", "export_mps"},
    "bench": {"lp_sizes", "nn_sizes"},
    "certify": {"c", "quad_n", "tol", "menu"},
}


@dataclass
class ExperimentConfig:
    """Everything one run needs.  spec/kind/train hold menuopt objects."""

    name: str
    outdir: str | None
    spec: Any
    kind: Any
    train: Any
    compare_oracle: bool = False
    compare_lp: bool = False
    compare_duality: bool = False
    lp_grid_n: int = DEFAULT_LP_N
    lp_method: str = "highs"
    lp_export_mps: bool = False
    bench_lp_sizes: list[int] = field(default_factory=lambda: [10, 15, 20, 25, 30])
    bench_nn_sizes: list[int] = field(default_factory=lambda: [40, 50, 200])
    certify_c: float | None = None
    certify_quad_n: int = 10_000
    certify_tol: float = 1e-6
    certify_menu: str | None = None


def _read_raw(path: str) -> dict:
    if path.endswith(".json"):
        with open(path) as fh:
            return json.load(fh)
    try:
        import tomllib  # Python 3.11+
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _check_keys(raw: dict) -> None:
    for section, content in raw.items():
        if section not in _SECTION_KEYS:
            raise ConfigError(section, "unknown config section")
        if not isinstance(content, dict):
            raise ConfigError(section, "section must be a table")
        for key in content:
            if key not in _SECTION_KEYS[section]:
                raise ConfigError(f"{section}.{key}", "unknown config key")


def _build_spec(dist: dict):
    from .core import CustomTable, UniformRect, UniformTriangle

    family = dist.get("family")
    try:
        if family == "rect":
            return UniformRect(float(dist.get("c1", 1.0)), float(dist.get("c2", 1.0)))
        if family == "triangle":
            if "c" not in dist:
                raise ConfigError("distribution.c", "triangle distribution needs c")
            return UniformTriangle(float(dist["c"]))
        if family == "custom":
            if "points" not in dist or "mass" not in dist:
                raise ConfigError("distribution.points", "custom distribution needs points and mass")
            return CustomTable(
                tuple(tuple(float(x) for x in p) for p in dist["points"]),
                tuple(float(w) for w in dist["mass"]),
            )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError("distribution", str(exc)) from exc
    raise ConfigError("distribution.family", f"unknown family {family!r} (rect|triangle|custom)")


def parse_config(raw: dict) -> ExperimentConfig:
    from .core import ValuationKind
    from .oracles import reference_for
    from .trainer import Mode, TrainConfig

    _check_keys(raw)
    exp = raw.get("experiment", {})
    spec = _build_spec(raw.get("distribution", {"family": "rect"}))

    kind_name = raw.get("buyer", {}).get("kind", "additive")
    try:
        kind = ValuationKind(kind_name)
    except ValueError as exc:
        raise ConfigError("buyer.kind", str(exc)) from exc

    train_raw = dict(raw.get("train", {}))
    mode_name = train_raw.pop("mode", "free")
    try:
        mode = Mode(mode_name)
    except ValueError as exc:
        raise ConfigError("train.mode", str(exc)) from exc
    try:
        train = TrainConfig(mode=mode, **train_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError("train", str(exc)) from exc

    compare = raw.get("compare", {})
    lp_raw = raw.get("lp", {})
    bench = raw.get("bench", {})
    cert = raw.get("certify", {})
    cfg = ExperimentConfig(
        name=str(exp.get("name", "experiment")),
        outdir=exp.get("outdir"),
        spec=spec,
        kind=kind,
        train=train,
        compare_oracle=bool(compare.get("oracle", False)),
        compare_lp=bool(compare.get("lp", False)),
        compare_duality=bool(compare.get("duality", False)),
        lp_grid_n=int(lp_raw.get("grid_n", DEFAULT_LP_N)),
        lp_method=str(lp_raw.get("method", "highs")),
        lp_export_mps=bool(lp_raw.get("export_mps", False)),
        bench_lp_sizes=[int(x) for x in bench.get("lp_sizes", [10, 15, 20, 25, 30])],
        bench_nn_sizes=[int(x) for x in bench.get("nn_sizes", [40, 50, 200])],
        certify_c=float(cert["c"]) if "c" in cert else None,
        certify_quad_n=int(cert.get("quad_n", 10_000)),
        certify_tol=float(cert.get("tol", 1e-6)),
        certify_menu=cert.get("menu"),
    )

    if cfg.compare_oracle:
        if cfg.kind is not ValuationKind.ADDITIVE:
            raise ConfigError("compare.oracle", "closed-form references exist for additive buyers only")
        cap = cfg.train.k if cfg.train.k <= 3 else None
        if reference_for(cfg.spec, menu_cap=cap) is None:
            raise ConfigError("compare.oracle", f"no closed-form reference for {cfg.spec!r}")
    if cfg.compare_duality:
        from .core import UniformTriangle

        if not isinstance(cfg.spec, UniformTriangle):
            raise ConfigError("compare.duality", "duality certificates exist for the triangle family only")
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        raw = _read_raw(path)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    except ValueError as exc:  # bad TOML/JSON
        raise ConfigError("config", f"cannot parse {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a table")
    return parse_config(raw)


# ---------------------------------------------------------------------------
# Shared output helpers
# ---------------------------------------------------------------------------


def _spec_dict(spec) -> dict:
    from .core import CustomTable, UniformRect, UniformTriangle

    if isinstance(spec, UniformRect):
        return {"family": "rect", "c1": spec.c1, "c2": spec.c2}
    if isinstance(spec, UniformTriangle):
        return {"family": "triangle", "c": spec.c}
    if isinstance(spec, CustomTable):
        return {"family": "custom", "n_points": len(spec.points)}
    return {"family": repr(spec)}


def _write_json(path: str, data: dict) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(data, indent=2) + "\n")


def _write_trace_csv(path: str, trace) -> None:
    with open(path, "w") as fh:
        fh.write("iteration,lambda,soft_rev,exact_rev\n")
        for row in trace:
            fh.write(f"{row.iteration},{row.lam!r},{row.soft_rev!r},{row.exact_rev!r}\n")


def _outdir(cfg_outdir: str | None, override: str | None, name: str) -> str:
    out = override or cfg_outdir or os.path.join("runs", name)
    os.makedirs(out, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_train(args: argparse.Namespace) -> int:
    from dataclasses import replace

    from .core import UniformRect, UniformTriangle, ValuationKind, make_grid
    from .evaluator import exact_revenue, grid_revenue, region_plot
    from .oracles import optimality_ratio, reference_for
    from .trainer import extract_clean_menu, train

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.train = replace(cfg.train, seed=args.seed)
    if args.n_grid is not None:
        cfg.train = replace(cfg.train, grid_n=args.n_grid)
    out = _outdir(cfg.outdir, args.out, cfg.name)

    result = train(cfg.spec, cfg.kind, cfg.train)
    grid = make_grid(cfg.spec, cfg.train.grid_n)
    menu = extract_clean_menu(result.menu, grid, cfg.kind)
    menu.save(os.path.join(out, "menu.json"))
    _write_trace_csv(os.path.join(out, "trace.csv"), result.trace)

    continuous = isinstance(cfg.spec, (UniformRect, UniformTriangle))
    exact = exact_revenue(menu, cfg.spec) if (
        continuous and cfg.kind is ValuationKind.ADDITIVE
    ) else None
    report: dict = {
        "name": cfg.name,
        "spec": _spec_dict(cfg.spec),
        "kind": cfg.kind.value,
        "mode": cfg.train.mode.value,
        "grid_n": cfg.train.grid_n,
        "menu_items": menu.k,
        "grid_revenue": grid_revenue(menu, grid, cfg.kind),
        "exact_revenue": exact,
        "revenue_metric": result.revenue_metric,
        "best_seed": result.best_seed,
        "restart_revenues": result.restart_revenues,
    }

    if continuous and cfg.kind is ValuationKind.ADDITIVE:
        region_plot(menu, cfg.spec, os.path.join(out, "regions.svg"))
    else:
        # Best-response regions are a half-plane construction; it only
        # applies to additive buyers on the continuous supports.
        report["regions_svg"] = None

    if cfg.compare_oracle:
        cap = cfg.train.k if cfg.train.k <= 3 else None
        ref = reference_for(cfg.spec, menu_cap=cap)
        assert ref is not None  # validated at config load
        report["optimality"] = {
            "opt_revenue": ref.opt_revenue,
            "constraint": ref.constraint,
            "ratio": optimality_ratio(menu, ref),
        }

    if cfg.compare_lp:
        from .lp_baseline import solve_grid

        lp_grid = make_grid(cfg.spec, cfg.lp_grid_n)
        _, objective, _ = solve_grid(lp_grid, method=cfg.lp_method)
        report["lp"] = {
            "grid_n": cfg.lp_grid_n,
            "objective": objective,
            "menu_grid_revenue_at_lp_n": grid_revenue(menu, lp_grid, cfg.kind),
        }

    if cfg.compare_duality:
        from .duality import certify, dual_objective
        from .oracles import optimal_triangle

        ref = optimal_triangle(cfg.spec.c)
        cert = certify(ref.menu, cfg.spec.c, cfg.certify_quad_n, cfg.certify_tol)
        bound = dual_objective(ref.menu, cfg.spec.c, cfg.certify_quad_n)
        report["duality"] = {
            "reference_certificate": cert.to_json_dict(),
            "dual_bound": bound,
            "trained_revenue": exact,
            "trained_gap_to_bound": None if exact is None else bound - exact,
        }

    _write_json(os.path.join(out, "report.json"), report)
    headline = exact if exact is not None else report["grid_revenue"]
    print(f"{cfg.name}: revenue {headline:.7f} ({menu.k} menu items) -> {out}")
    if "optimality" in report:
        print(f"optimality ratio: {report['optimality']['ratio']:.6f}")
    return 0


def cmd_lp(args: argparse.Namespace) -> int:
    from .core import UniformRect, UniformTriangle, ValuationKind, make_grid
    from .evaluator import exact_revenue, grid_revenue
    from .lp_baseline import audit_direct, build_lp, menu_from_direct, solution_to_csv, solve_lp, to_mps

    cfg = load_config(args.config)
    if cfg.kind is not ValuationKind.ADDITIVE:
        raise ConfigError("buyer.kind", "the direct-mechanism LP is additive only")
    n = args.n_grid if args.n_grid is not None else cfg.lp_grid_n
    if n > LP_MAX_N:
        raise ConfigError("lp.grid_n", f"refusing LP at N={n}: constraint count is O(N^4), max N={LP_MAX_N}")
    out = _outdir(cfg.outdir, args.out, cfg.name + "-lp")

    grid = make_grid(cfg.spec, n)
    lp = build_lp(grid)
    mech, objective = solve_lp(lp, grid, method=cfg.lp_method)
    audit = audit_direct(mech)
    menu = menu_from_direct(mech)

    solution_to_csv(mech, os.path.join(out, "solution.csv"))
    menu.save(os.path.join(out, "lp_menu.json"))
    if cfg.lp_export_mps:
        to_mps(lp, os.path.join(out, "lp.mps"))

    continuous = isinstance(cfg.spec, (UniformRect, UniformTriangle))
    report = {
        "name": cfg.name,
        "spec": _spec_dict(cfg.spec),
        "grid_n": n,
        "n_points": grid.n,
        "n_vars": lp.n_vars,
        "n_rows": lp.n_rows,
        "method": cfg.lp_method,
        "objective": objective,
        "audit": {
            "max_ic_violation": audit.max_ic_violation,
            "max_ir_violation": audit.max_ir_violation,
        },
        "menu_items": menu.k,
        "extracted_grid_revenue": grid_revenue(menu, grid, cfg.kind),
        "extracted_exact_revenue": exact_revenue(menu, cfg.spec) if continuous else None,
    }
    _write_json(os.path.join(out, "report.json"), report)
    print(f"LP N={n}: objective {objective:.7f}, {menu.k} extracted menu items -> {out}")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    import time

    from .core import UniformRect, UniformTriangle, make_grid
    from .evaluator import exact_revenue
    from .lp_baseline import menu_from_direct, solve_grid
    from .trainer import train

    cfg = load_config(args.config)
    out = _outdir(cfg.outdir, args.out, cfg.name + "-bench")
    for n in cfg.bench_lp_sizes:
        if n > LP_MAX_N:
            raise ConfigError("bench.lp_sizes", f"refusing LP at N={n}, max N={LP_MAX_N}")
    continuous = isinstance(cfg.spec, (UniformRect, UniformTriangle))

    rows: list[tuple[str, int, float, float]] = []
    for n in cfg.bench_lp_sizes:
        grid = make_grid(cfg.spec, n)
        mech, objective, secs = solve_grid(grid, method=cfg.lp_method)
        menu = menu_from_direct(mech)
        rev = exact_revenue(menu, cfg.spec) if continuous else objective
        rows.append(("lp", n, secs, rev))
        print(f"lp    N={n:<4d} {secs:8.2f}s  revenue {rev:.6f}")
    from dataclasses import replace

    for n in cfg.bench_nn_sizes:
        train_cfg = replace(cfg.train, grid_n=n)
        t0 = time.perf_counter()
        result = train(cfg.spec, cfg.kind, train_cfg)
        secs = time.perf_counter() - t0
        rows.append(("nn", n, secs, result.best_revenue))
        print(f"nn    N={n:<4d} {secs:8.2f}s  revenue {result.best_revenue:.6f}")

    with open(os.path.join(out, "bench.csv"), "w") as fh:
        fh.write("method,n,seconds,revenue\n")
        for method, n, secs, rev in rows:
            fh.write(f"{method},{n},{secs!r},{rev!r}\n")
    print(f"-> {os.path.join(out, 'bench.csv')}")
    return 0


def cmd_certify(args: argparse.Namespace) -> int:
    from .core import Menu
    from .duality import certify
    from .oracles import optimal_triangle

    c = args.c
    quad_n = args.quad_n
    tol = args.tol
    menu_path = args.menu
    outdir = args.out
    if args.config:
        cfg = load_config(args.config)
        c = c if c is not None else cfg.certify_c
        quad_n = quad_n if quad_n is not None else cfg.certify_quad_n
        tol = tol if tol is not None else cfg.certify_tol
        menu_path = menu_path or cfg.certify_menu
        outdir = outdir or cfg.outdir
    if c is None:
        raise ConfigError("certify.c", "certify needs the triangle parameter c (--c or config)")
    quad_n = quad_n if quad_n is not None else 10_000
    tol = tol if tol is not None else 1e-6

    menu = Menu.load(menu_path) if menu_path else optimal_triangle(c).menu
    cert = certify(menu, c, quad_n=quad_n, tol=tol)
    out = outdir or "."
    os.makedirs(out, exist_ok=True)
    _write_json(os.path.join(out, "certificate.json"), cert.to_json_dict())
    verdict = "pass" if cert.passed else "fail"
    print(
        f"certify c={c}: verdict {verdict} "
        f"(max region gap {cert.max_gap:.3e}, "
        f"dual-revenue gap {abs(cert.dual_objective - cert.revenue):.3e})"
    )
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("--seed", type=int, help="override train.seed")
    common.add_argument("--threads", type=int, help="BLAS/OpenMP thread count (1 = bit-deterministic)")
    common.add_argument("--n-grid", type=int, dest="n_grid", help="override the grid resolution N")

    parser = argparse.ArgumentParser(prog="menuopt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", parents=[common], help="train a menu and report revenue")
    p_train.add_argument("--config", required=True)
    p_train.set_defaults(fn=cmd_train)

    p_lp = sub.add_parser("lp", parents=[common], help="solve the direct-mechanism LP")
    p_lp.add_argument("--config", required=True)
    p_lp.set_defaults(fn=cmd_lp)

    p_bench = sub.add_parser("bench", parents=[common], help="time LP vs training across grid sizes")
    p_bench.add_argument("--config", required=True)
    p_bench.set_defaults(fn=cmd_bench)

    p_cert = sub.add_parser("certify", parents=[common], help="duality certificate for a triangle menu")
    p_cert.add_argument("--config")
    p_cert.add_argument("--c", type=float, help="triangle parameter")
    p_cert.add_argument("--menu", help="menu.json to certify (default: the closed-form optimum)")
    p_cert.add_argument("--quad-n", type=int, dest="quad_n", help="quadrature resolution")
    p_cert.add_argument("--tol", type=float, help="certificate tolerance")
    p_cert.set_defaults(fn=cmd_certify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return 2
        for var in _THREAD_ENV_VARS:
            os.environ[var] = str(args.threads)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
