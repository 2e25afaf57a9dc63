"""Privacy-budget accounting: composition, group privacy, heterogeneous reports.

Adaptive composition of Gaussian-style guarantees follows the
root-sum-of-squares rule; the ledger refuses registrations that would push
the composed total above the declared budget (exhaustion is an error, never
a silent clamp).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from .errors import BudgetError, InputError
from .neighbor import DistanceParams, NeighborFunction, compose_intersect

__all__ = [
    "compose",
    "group_privacy",
    "heterogeneous_report",
    "HeterogeneousReport",
    "BudgetLedger",
]


def compose(mu_list: Sequence[float]) -> float:
    """Composed budget sqrt(sum of mu_i^2) for a sequence of releases."""
    total = 0.0
    for mu in mu_list:
        if mu < 0:
            raise InputError(f"budget entries must be nonnegative, got {mu}")
        total += float(mu) ** 2
    return math.sqrt(total)


def group_privacy(
    mu: float,
    m: int,
    distances: Optional[DistanceParams] = None,
    semantics: str = "group",
) -> Tuple[float, Optional[DistanceParams]]:
    """Indistinguishability scaling for multi-record changes.

    ``semantics="group"`` widens the protected interval: a guarantee at
    budget mu with distances delta_i also holds at m*mu with distances
    m*delta_i.  ``semantics="chain"`` covers a firm of m establishments
    linked by a chain of pairwise neighbors, costing (m-1)*mu at the
    original distances.  The two conventions answer different questions and
    are deliberately not unified.
    """
    if mu < 0:
        raise InputError(f"budget must be nonnegative, got {mu}")
    if m < 1:
        raise InputError(f"group size must be >= 1, got {m}")
    if semantics == "group":
        factor = m
        scaled = distances.scaled(m) if distances is not None else None
    elif semantics == "chain":
        factor = m - 1
        scaled = distances
    else:
        raise InputError(f"unknown group-privacy semantics {semantics!r}")
    return factor * mu, scaled


@dataclass(frozen=True)
class HeterogeneousReport:
    """Joint guarantee for two releases under different neighbor functions."""

    f_star: NeighborFunction
    delta_star: float
    mu_combined: float


def heterogeneous_report(
    release_a: Tuple[float, NeighborFunction, float],
    release_b: Tuple[float, NeighborFunction, float],
    x_min: Optional[float] = None,
) -> HeterogeneousReport:
    """Combine two releases (mu, f, delta) made under different neighbor
    functions into one reportable guarantee.

    The joint neighbor function is the intersection construction (its
    uncertainty intervals sit inside both inputs') and the combined budget
    is sqrt(mu_a^2 + mu_b^2).
    """
    mu_a, f_a, delta_a = release_a
    mu_b, f_b, delta_b = release_b
    f_star, delta_star = compose_intersect(f_a, delta_a, f_b, delta_b, x_min=x_min)
    return HeterogeneousReport(f_star, delta_star, compose([mu_a, mu_b]))


@dataclass
class BudgetLedger:
    """Sequential registration of releases against a total budget.

    Invariant: sqrt(sum of registered mu_i^2) <= mu_total at all times.
    The ledger stores, but does not interpret, differing neighbor functions
    across entries; producing a joint guarantee is the explicit
    :func:`heterogeneous_report` action.
    """

    mu_total: float
    entries: List[dict] = field(default_factory=list)

    def __post_init__(self):
        if self.mu_total <= 0:
            raise InputError(f"total budget must be positive, got {self.mu_total}")

    def register(
        self,
        label: str,
        mu: float,
        neighbor_function: str = "",
        distances: Optional[DistanceParams] = None,
    ) -> float:
        """Register a release; returns the new composed total.

        Raises :class:`~gedp.errors.BudgetError` if the registration would
        exceed ``mu_total`` (allowing 1e-12 relative slack for rounding).
        """
        if mu < 0:
            raise InputError(f"budget entries must be nonnegative, got {mu}")
        proposed = compose([e["mu"] for e in self.entries] + [mu])
        if proposed > self.mu_total * (1 + 1e-12):
            raise BudgetError(
                f"registering {label!r} at mu={mu} would compose to {proposed:.6g} "
                f"> total budget {self.mu_total}"
            )
        self.entries.append(
            {
                "label": label,
                "mu": float(mu),
                "neighbor_function": neighbor_function,
                "distances": dict(distances.items()) if distances is not None else {},
            }
        )
        return proposed

    def composed(self) -> float:
        return compose([e["mu"] for e in self.entries])

    def to_json(self) -> str:
        return json.dumps(
            {
                "mu_total": self.mu_total,
                "composed": self.composed(),
                "entries": self.entries,
            },
            indent=2,
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json() + "\n")
