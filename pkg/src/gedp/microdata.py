"""Reconstruct microdata from noisy group answers by weighted least squares.

Every noisy group-by sum is a linear measurement of the per-establishment
values; the reconstruction minimizes the inverse-variance-weighted sum of
squared measurement residuals.  All published aggregates then derive from one
consistent record-level table.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import dataset as ds
from .errors import InputError, SolverError
from .mechanisms import NoisyAnswer

__all__ = [
    "Measurement",
    "MeasurementFit",
    "ReconstructionProblem",
    "Solution",
    "build_problem",
    "solve",
    "answer_from_microdata",
    "write_microdata_csv",
]

_REL_TOL = 1e-8
_MAX_ITERATIONS = 100_000
_RIDGE_FACTOR = 1e-12


@dataclass(frozen=True)
class Measurement:
    """One noisy answer tied to the establishments its group sums over."""

    answer: NoisyAnswer
    attribute: str
    members: Tuple[str, ...]


@dataclass(frozen=True)
class MeasurementFit:
    group_key: str
    answer: float
    fitted: float
    residual: float
    weight: float


@dataclass(frozen=True)
class ReconstructionProblem:
    """Sparse weighted least-squares system for one confidential attribute.

    ``row_index``/``col_index`` hold one entry per (measurement, member)
    incidence; weights are 1/variance.
    """

    attribute: str
    variables: Tuple[str, ...]
    group_keys: Tuple[str, ...]
    row_index: np.ndarray
    col_index: np.ndarray
    answers: np.ndarray
    weights: np.ndarray
    nonneg: bool = False
    rel_tol: float = _REL_TOL
    max_iterations: int = _MAX_ITERATIONS

    @property
    def n_measurements(self) -> int:
        return len(self.group_keys)

    @property
    def n_variables(self) -> int:
        return len(self.variables)


@dataclass(frozen=True)
class Solution:
    values: Dict[str, float]
    fits: Tuple[MeasurementFit, ...]
    underdetermined: Tuple[str, ...]
    iterations: int
    converged: bool
    objective: float


def build_problem(
    measurements: Sequence[Measurement],
    attribute: str,
    record_universe: Optional[Sequence[str]] = None,
    nonneg: bool = False,
) -> ReconstructionProblem:
    """Assemble the sparse system: one row per answer, one variable per
    establishment.

    Transformed-space answers are rejected — convert them with the matching
    estimator first.  With an explicit ``record_universe``, members outside
    it are an error and unmeasured universe records become (underdetermined)
    variables.
    """
    if attribute not in ds.CONFIDENTIAL_ATTRS:
        raise InputError(f"unknown confidential attribute {attribute!r}")
    if not measurements:
        raise InputError("need at least one measurement")
    for m in measurements:
        if m.attribute != attribute:
            raise InputError(
                f"measurement {m.answer.group_key!r} targets attribute "
                f"{m.attribute!r}; this problem reconstructs {attribute!r}"
            )
        if m.answer.space == "transformed":
            raise InputError(
                f"answer {m.answer.group_key!r} is in transformed space; "
                "de-transform with the matching estimator before reconstruction"
            )
        if not m.members:
            raise InputError(f"measurement {m.answer.group_key!r} sums over no records")

    if record_universe is not None:
        variables = tuple(sorted(set(record_universe)))
        known = set(variables)
        for m in measurements:
            unknown = [pk for pk in m.members if pk not in known]
            if unknown:
                raise InputError(
                    f"measurement {m.answer.group_key!r} references records "
                    f"outside the universe: {unknown[:5]}"
                )
    else:
        variables = tuple(sorted({pk for m in measurements for pk in m.members}))
    var_index = {pk: i for i, pk in enumerate(variables)}

    rows, cols = [], []
    for i, m in enumerate(measurements):
        for pk in m.members:
            rows.append(i)
            cols.append(var_index[pk])
    return ReconstructionProblem(
        attribute=attribute,
        variables=variables,
        group_keys=tuple(m.answer.group_key for m in measurements),
        row_index=np.asarray(rows, dtype=np.intp),
        col_index=np.asarray(cols, dtype=np.intp),
        answers=np.asarray([m.answer.value for m in measurements], dtype=float),
        weights=np.asarray([1.0 / m.answer.variance for m in measurements], dtype=float),
        nonneg=nonneg,
    )


def _matvec_a(problem: ReconstructionProblem, x: np.ndarray) -> np.ndarray:
    return np.bincount(
        problem.row_index, weights=x[problem.col_index], minlength=problem.n_measurements
    )


def _matvec_at(problem: ReconstructionProblem, y: np.ndarray) -> np.ndarray:
    return np.bincount(
        problem.col_index, weights=y[problem.row_index], minlength=problem.n_variables
    )


def solve(problem: ReconstructionProblem) -> Solution:
    """Minimize sum_i w_i (a_i - sum_{j in G_i} x_j)^2.

    Conjugate gradient on the weighted normal equations with Jacobi
    preconditioning; a ridge of 1e-12 x max-weight keeps variables untouched
    by any measurement well-defined (they are reported as underdetermined).
    The optional nonnegativity constraint runs an accelerated projected
    gradient descent from the clipped unconstrained solution.  Both stop at
    relative gradient norm 1e-8; exceeding the iteration cap raises
    ``SolverError`` with residual diagnostics.
    """
    w = problem.weights
    ridge = _RIDGE_FACTOR * float(w.max())
    touched = np.bincount(problem.col_index, minlength=problem.n_variables) > 0
    diag = _matvec_at(problem, w) + ridge

    def normal_matvec(x: np.ndarray) -> np.ndarray:
        return _matvec_at(problem, w * _matvec_a(problem, x)) + ridge * x

    b = _matvec_at(problem, w * problem.answers)
    scale = float(np.linalg.norm(b))
    x = np.zeros(problem.n_variables)
    iterations = 0
    if scale > 0.0:
        x, iterations = _conjugate_gradient(
            normal_matvec, b, diag, scale, problem.rel_tol, problem.max_iterations
        )
    if problem.nonneg:
        x, extra = _projected_gradient(
            normal_matvec,
            b,
            np.maximum(x, 0.0),
            scale if scale > 0.0 else 1.0,
            problem.rel_tol,
            problem.max_iterations,
        )
        iterations += extra

    fitted = _matvec_a(problem, x)
    residual = problem.answers - fitted
    fits = tuple(
        MeasurementFit(key, float(a), float(fit), float(r), float(wi))
        for key, a, fit, r, wi in zip(problem.group_keys, problem.answers, fitted, residual, w)
    )
    return Solution(
        values={pk: float(v) for pk, v in zip(problem.variables, x)},
        fits=fits,
        underdetermined=tuple(pk for pk, t in zip(problem.variables, touched) if not t),
        iterations=iterations,
        converged=True,
        objective=float(np.sum(w * residual * residual)),
    )


def _conjugate_gradient(matvec, b, diag, scale, rel_tol, max_iterations):
    x = np.zeros_like(b)
    r = b.copy()
    z = r / diag
    p = z.copy()
    rz = float(r @ z)
    for iteration in range(1, max_iterations + 1):
        ap = matvec(p)
        alpha = rz / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        if float(np.linalg.norm(r)) <= rel_tol * scale:
            return x, iteration
        z = r / diag
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        f"conjugate gradient stalled after {max_iterations} iterations; "
        f"relative residual {float(np.linalg.norm(r)) / scale:.3e} (target {rel_tol:.1e})"
    )


def _lipschitz(matvec, n: int) -> float:
    # Power iteration on the normal matrix; the start vector only needs a
    # component along the top eigenvector, and all-ones always has one here
    # (the matrix is entrywise nonnegative).
    v = np.full(n, 1.0 / math.sqrt(n))
    estimate = 1.0
    for _ in range(60):
        av = matvec(v)
        norm = float(np.linalg.norm(av))
        if norm == 0.0:
            return 1.0
        estimate = norm
        v = av / norm
    return 1.01 * estimate


def _projected_gradient(matvec, b, x0, scale, rel_tol, max_iterations):
    lipschitz = _lipschitz(matvec, len(b))
    x = np.maximum(x0, 0.0)
    y = x.copy()
    t = 1.0
    for iteration in range(1, max_iterations + 1):
        grad_y = matvec(y) - b
        x_new = np.maximum(y - grad_y / lipschitz, 0.0)
        grad = matvec(x_new) - b
        projected = np.where(x_new > 0.0, grad, np.minimum(grad, 0.0))
        if float(np.linalg.norm(projected)) <= rel_tol * scale:
            return x_new, iteration
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
    grad = matvec(x) - b
    projected = np.where(x > 0.0, grad, np.minimum(grad, 0.0))
    raise SolverError(
        f"projected gradient stalled after {max_iterations} iterations; "
        f"relative projected-gradient norm {float(np.linalg.norm(projected)) / scale:.3e} "
        f"(target {rel_tol:.1e})"
    )


def answer_from_microdata(microdata: ds.Dataset, query: ds.GroupBySumQuery) -> ds.QueryAnswerVector:
    """Serve any group-by sum — measured or not — from reconstructed records
    by exact summation, so all published answers are mutually consistent."""
    return ds.answer_exact(microdata, query)


def write_microdata_csv(
    base: ds.Dataset, values: Mapping[str, Mapping[str, float]], path
) -> None:
    """Write reconstructed microdata in the standard record schema.

    Public attributes and primary keys copy from ``base``; confidential
    columns come from ``values`` (attribute -> primary key -> estimate,
    missing entries written as 0.0); a ``synthetic=1`` column marks every
    row.  Estimates are written as-is — the unconstrained solver can produce
    negatives — so this bypasses the nonnegativity check real records get.
    """
    columns = list(ds.CSV_COLUMNS) + ["synthetic"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for r in base:
            row = [getattr(r, col) for col in ds.PUBLIC_ATTRS]
            for attr in ds.CONFIDENTIAL_ATTRS:
                row.append(repr(float(values.get(attr, {}).get(r.primary_key, 0.0))))
            row.append(r.primary_key)
            row.append(1)
            writer.writerow(row)
