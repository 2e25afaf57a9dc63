"""Noise mechanisms, de-transformation estimators, and clipping bounds.

Three mechanisms release group-by sums:

* ``estab_gaussian`` — classic Gaussian noise calibrated to a supplied
  sensitivity; raw space, exactly releasable variance.
* ``neighbor_mech`` — applies the neighbor function to each group sum and
  adds Gaussian noise in transformed space; the raw-space variance is
  data-dependent and only estimable (via ``estimate_sqrt``/``estimate_log``).
* ``pnc_mech`` — clips each record to a high-probability public upper bound
  ("probably no clipping"), sums, and adds noise whose variance is exactly
  releasable.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from . import dataset as ds
from .errors import GedpError, InputError, InvalidFunctionError
from .neighbor import NeighborFunction, validate
from .numerics import RngStream, normal_quantile

__all__ = [
    "NoisyAnswer",
    "PncBounds",
    "estab_gaussian",
    "neighbor_mech",
    "estimate_sqrt",
    "estimate_log",
    "pnc_bounds",
    "pnc_mech",
    "write_answers_csv",
    "read_answers_csv",
]

_VARIANCE_KINDS = ("exact", "estimated")
_SPACES = ("raw", "transformed")
_MECHANISMS = ("estab_gaussian", "neighbor", "pnc")


@dataclass(frozen=True)
class NoisyAnswer:
    """One group's released value, its variance, and how to read them.

    ``variance_kind`` is "exact" when the variance itself is releasable
    (Gaussian and clipped-sum releases, and transformed-space neighbor
    releases) and "estimated" for de-transformed neighbor releases.
    ``space`` says whether ``value`` lives in raw attribute units or in the
    neighbor function's transformed space.
    """

    group_key: str
    value: float
    variance: float
    variance_kind: str
    mechanism: str
    space: str

    def __post_init__(self):
        if self.variance <= 0 or not math.isfinite(self.variance):
            raise InputError(f"variance must be positive and finite, got {self.variance}")
        if self.variance_kind not in _VARIANCE_KINDS:
            raise InputError(f"variance_kind must be one of {_VARIANCE_KINDS}")
        if self.space not in _SPACES:
            raise InputError(f"space must be one of {_SPACES}")
        if self.mechanism not in _MECHANISMS:
            raise InputError(f"mechanism must be one of {_MECHANISMS}")
        if (
            self.variance_kind == "exact"
            and self.space == "raw"
            and self.mechanism == "neighbor"
        ):
            raise InputError(
                "neighbor-mechanism raw-space variances are data-dependent; "
                "only transformed-space neighbor answers carry exact variance"
            )


def estab_gaussian(
    answers: ds.QueryAnswerVector,
    sensitivity: float,
    mu: float,
    rng: RngStream,
) -> List[NoisyAnswer]:
    """Add Gaussian noise with standard deviation sensitivity/mu to each
    group sum; the released variance (sensitivity/mu)^2 is exact."""
    if sensitivity <= 0:
        raise InputError(f"sensitivity must be positive, got {sensitivity}")
    if mu <= 0:
        raise InputError(f"mu must be positive, got {mu}")
    sd = sensitivity / mu
    noise = rng.generator.normal(0.0, sd, size=len(answers))
    return [
        NoisyAnswer(key, float(value + z), sd * sd, "exact", "estab_gaussian", "raw")
        for (key, value), z in zip(answers.entries, noise)
    ]


_validated_functions: Dict[int, bool] = {}


def _require_valid(f: NeighborFunction) -> None:
    # Confidentiality-critical: transformed-space noise at scale delta/mu
    # only guarantees indistinguishability when f satisfies all four
    # conditions, so refuse to run otherwise.
    cached = _validated_functions.get(id(f))
    if cached is None:
        cached = bool(validate(f))
        _validated_functions[id(f)] = cached
    if not cached:
        raise InvalidFunctionError(
            f"{f.describe()} failed neighbor-function validation; refusing to release"
        )


def neighbor_mech(
    data: ds.Dataset,
    query: ds.GroupBySumQuery,
    f: NeighborFunction,
    delta: float,
    mu: float,
    rng: RngStream,
) -> List[NoisyAnswer]:
    """Release f(group sum) + Normal(0, (delta/mu)^2) per group.

    Answers live in transformed space with exact transformed-space variance;
    convert with the matching estimator before any raw-space use.
    """
    if delta <= 0:
        raise InputError(f"delta must be positive, got {delta}")
    if mu <= 0:
        raise InputError(f"mu must be positive, got {mu}")
    _require_valid(f)
    exact = ds.answer_exact(data, query)
    sd = delta / mu
    noise = rng.generator.normal(0.0, sd, size=len(exact))
    out = []
    for (key, value), z in zip(exact.entries, noise):
        released = float(f.evaluate(value)) + float(z)
        out.append(NoisyAnswer(key, released, sd * sd, "exact", "neighbor", "transformed"))
    return out


def estimate_sqrt(y, delta: float, mu: float, shift: float = 0.0):
    """Unbiased de-transformation for f = sqrt(x + shift).

    With s = delta/mu and y ~ Normal(sqrt(x + shift), s^2), y^2 - s^2 is an
    unbiased estimate of x + shift (a scaled non-central chi-square), so::

        x_tilde = y^2 - s^2 - shift
        v_tilde = 2 s^2 (2 (x_tilde + shift) + s^2)    floored at s^4

    The floor keeps reconstruction weights positive when x_tilde is very
    negative; the estimate itself may be negative and is left alone.
    Accepts scalars or arrays; returns ``(x_tilde, v_tilde)``.
    """
    if delta <= 0 or mu <= 0:
        raise InputError("delta and mu must be positive")
    s2 = (delta / mu) ** 2
    ys = np.asarray(y, dtype=float)
    x_shifted = ys * ys - s2
    v = np.maximum(2.0 * s2 * (2.0 * x_shifted + s2), s2 * s2)
    x = x_shifted - shift
    if np.ndim(y) == 0:
        return float(x), float(v)
    return x, v


def estimate_log(y, delta: float, mu: float, shift: float = 0.0):
    """Unbiased de-transformation for f = log(x + shift).

    With s = delta/mu and y ~ Normal(log(x + shift), s^2), exp(y) is
    log-normal, so::

        x_tilde = exp(y - s^2/2) - shift
        v_tilde = (x_tilde + shift)^2 (exp(s^2) - 1)

    v_tilde is strictly positive for finite y, so no floor is needed (unlike
    the sqrt estimator) — but the ratio v_tilde/v does not converge to 1 no
    matter how large x grows: its distribution is free of x.
    Raises on values that would overflow the exponential.
    """
    if delta <= 0 or mu <= 0:
        raise InputError("delta and mu must be positive")
    s2 = (delta / mu) ** 2
    ys = np.asarray(y, dtype=float)
    arg = ys - 0.5 * s2
    if np.any(arg > 700.0):
        raise GedpError(f"released value {ys.max()} overflows the log estimator")
    x_shifted = np.exp(arg)
    v = x_shifted * x_shifted * math.expm1(s2)
    x = x_shifted - shift
    if np.ndim(y) == 0:
        return float(x), float(v)
    return x, v


@dataclass(frozen=True)
class PncBounds:
    """Per-record upper bounds holding simultaneously with probability 1-gamma.

    ``tau`` is the probably-no-clipping parameter
    normal_quantile((1-gamma)^(1/(C*N))) for N establishments and C bounded
    attributes; ``upper`` maps primary keys to f^-1(y + delta*tau/mu).
    """

    upper: Mapping[str, float]
    gamma: float
    tau: float
    attribute: str
    delta: float
    mu: float

    def bound_for(self, primary_key: str) -> float:
        try:
            return self.upper[primary_key]
        except KeyError as exc:
            raise InputError(
                f"no clipping bound for establishment {primary_key!r}; "
                "identity answers must cover every group member"
            ) from exc


def pnc_bounds(
    identity_answers: Sequence[NoisyAnswer],
    f: NeighborFunction,
    delta: float,
    mu: float,
    gamma: float,
    attribute: str,
    n_attributes: int = 1,
) -> PncBounds:
    """Build per-record upper bounds from transformed identity answers.

    Each bound is u_j = f^-1(y_j + delta*tau/mu); the quantile tau makes all
    C*N bounds hold jointly with probability at least 1-gamma.
    """
    if not (0.0 < gamma < 1.0):
        raise InputError(f"gamma must be in (0, 1), got {gamma}")
    if n_attributes < 1:
        raise InputError(f"n_attributes must be >= 1, got {n_attributes}")
    if not identity_answers:
        raise InputError("need at least one identity answer to build bounds")
    for a in identity_answers:
        if a.space != "transformed" or a.mechanism != "neighbor":
            raise InputError(
                "clipping bounds require transformed-space identity answers "
                "from the neighbor mechanism"
            )
    n = len(identity_answers)
    tau = normal_quantile((1.0 - gamma) ** (1.0 / (n_attributes * n)))
    f0 = f.value_at_zero()
    upper = {}
    for a in identity_answers:
        key = a.group_key
        pk = key[3:] if key.startswith("id=") else key
        arg = max(f0, a.value + delta * tau / mu)
        upper[pk] = float(f.inverse(arg))
    return PncBounds(upper, gamma, tau, attribute, delta, mu)


def pnc_sensitivity(f: NeighborFunction, delta: float, u_star: float) -> float:
    """Clipped-sum sensitivity s = u* - f^-1(max(f(0), f(u*) - delta))."""
    f_u = float(f.evaluate(u_star))
    f0 = f.value_at_zero()
    return u_star - float(f.inverse(max(f0, f_u - delta)))


def pnc_mech(
    data: ds.Dataset,
    query: ds.GroupBySumQuery,
    bounds: PncBounds,
    f: NeighborFunction,
    delta: float,
    mu: float,
    rng: RngStream,
    universe: Optional[Sequence[str]] = None,
) -> List[NoisyAnswer]:
    """Per-group clipped sums with exactly releasable noise variance.

    Per group: u* is the largest member bound, the clipped sum
    sum(min(value, u*)) is released with Normal(0, (s/mu)^2) noise where
    s = u* - f^-1(max(f(0), f(u*) - delta)).  A member without a bound is a
    hard error.  Groups from an explicit ``universe`` absent from the data
    release 0 plus noise using the zero-value bound u* = f^-1(f(0) +
    delta*tau/mu).
    """
    if delta <= 0 or mu <= 0:
        raise InputError("delta and mu must be positive")
    if bounds.attribute != query.target:
        raise InputError(
            f"bounds cover attribute {bounds.attribute!r} but the query targets {query.target!r}"
        )
    _require_valid(f)
    membership = ds.group_membership(data, query)
    keys = sorted(membership)
    if universe is not None:
        missing = [k for k in universe if k not in membership]
        keys = sorted(set(keys) | set(missing))
    f0 = f.value_at_zero()
    fallback_u = float(f.inverse(f0 + delta * bounds.tau / mu))
    out = []
    noise = rng.generator.standard_normal(len(keys))
    for key, z in zip(keys, noise):
        members = membership.get(key, [])
        if members:
            u_star = max(bounds.bound_for(pk) for pk in members)
            clipped = sum(
                min(data.get(pk).confidential(query.target), u_star) for pk in members
            )
        else:
            u_star = fallback_u
            clipped = 0.0
        s = pnc_sensitivity(f, delta, u_star)
        sd = s / mu
        if sd <= 0:
            raise GedpError(f"degenerate clipping sensitivity {s} for group {key!r}")
        out.append(
            NoisyAnswer(key, clipped + sd * float(z), sd * sd, "exact", "pnc", "raw")
        )
    return out


_ANSWER_COLUMNS = ("group_key", "value", "variance", "variance_kind", "mechanism", "space")


def write_answers_csv(answers: Sequence[NoisyAnswer], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_ANSWER_COLUMNS)
        for a in answers:
            writer.writerow(
                [a.group_key, repr(a.value), repr(a.variance), a.variance_kind, a.mechanism, a.space]
            )


def read_answers_csv(path) -> List[NoisyAnswer]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in _ANSWER_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise InputError(f"{path}: missing answer columns {missing}")
        for row in reader:
            out.append(
                NoisyAnswer(
                    row["group_key"],
                    float(row["value"]),
                    float(row["variance"]),
                    row["variance_kind"],
                    row["mechanism"],
                    row["space"],
                )
            )
    return out
