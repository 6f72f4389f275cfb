"""Buyer choice models: exact argmax and its softmax relaxation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    BuyerBehavior,
    Menu,
    ValuationKind,
    ValueGrid,
    menu_utilities,
)

__all__ = [
    "ValuationKind",
    "BuyerResponse",
    "RationalBuyer",
    "softmax",
    "soft_response",
    "hard_response",
    "hard_response_grid",
]


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax along an axis."""
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


@dataclass(frozen=True, eq=False)
class BuyerResponse:
    """Choice probabilities over menu items, one row per value point."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 2:
            raise ValueError("probs must be a (n, k) array")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("probabilities must be finite and nonnegative")
        row_sums = p.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > 1e-9):
            raise ValueError("each probability row must sum to 1")
        object.__setattr__(self, "probs", p)


def soft_response(menu: Menu, grid: ValueGrid, kind: ValuationKind, lam: float) -> BuyerResponse:
    """Softmax(lam * utilities) over the menu, per grid point.

    lam is the inverse-temperature: as lam grows the rows concentrate on the
    exact best responses.  All entries stay strictly positive for finite lam.
    """
    if not np.isfinite(lam) or lam <= 0:
        raise ValueError(f"temperature lam must be positive and finite, got {lam!r}")
    u = menu_utilities(menu, grid.points, kind)
    return BuyerResponse(softmax(lam * u, axis=1))


def hard_response_grid(menu: Menu, values: np.ndarray, kind: ValuationKind) -> np.ndarray:
    """Index of the chosen item per value row.

    Exact utility ties break toward the higher price; remaining ties toward
    the lower index, so the choice is deterministic.
    """
    u = menu_utilities(menu, np.asarray(values, dtype=np.float64), kind)
    best = u.max(axis=1, keepdims=True)
    prices = menu.prices()
    # Among exact-argmax items, pick the priciest; np.argmax then resolves
    # equal prices to the lowest index.
    candidates = np.where(u == best, prices[None, :], -np.inf)
    return np.argmax(candidates, axis=1)


def hard_response(menu: Menu, v: Sequence[float], kind: ValuationKind) -> int:
    """Chosen item index for a single value vector."""
    arr = np.asarray(v, dtype=np.float64).reshape(1, -1)
    return int(hard_response_grid(menu, arr, kind)[0])


class RationalBuyer(BuyerBehavior):
    """Soft rational buyer for a fixed valuation kind."""

    def __init__(self, kind: ValuationKind = ValuationKind.ADDITIVE):
        self.kind = kind

    def response(self, menu: Menu, v: Sequence[float], lam: float) -> np.ndarray:
        if not np.isfinite(lam) or lam <= 0:
            raise ValueError(f"temperature lam must be positive and finite, got {lam!r}")
        u = np.asarray(menu_utilities(menu, np.asarray(v, dtype=np.float64).reshape(1, -1), self.kind))
        return softmax(lam * u[0])
