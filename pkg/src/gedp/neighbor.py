"""Neighbor functions and the algebra built on them.

A neighbor function f is an increasing concave transform of the nonnegative
reals with f(exp(t)) convex.  It defines which pairs of confidential values
are indistinguishable (their transformed values differ by at most a distance
parameter), the induced uncertainty interval around a value, and two
constructions that merge the protections of two neighbor functions: a
union-style combination (the output interval contains both input intervals)
and an intersection (the output interval is contained in both).

Built-in kinds are ``sqrt_shift`` (sqrt(x+a)), ``log_shift`` (log(x+a)),
``linear`` (x/d), ``piecewise`` (produced by the combination constructions),
and ``custom`` (tabulated derivative on a grid).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import InputError, InvalidFunctionError, MalformedFunctionError

__all__ = [
    "NeighborFunction",
    "SqrtShift",
    "LogShift",
    "Linear",
    "PiecewiseCombination",
    "Tabulated",
    "DistanceParams",
    "UncertaintyInterval",
    "ValidityReport",
    "from_config",
    "validate",
    "uncertainty_interval",
    "is_close",
    "combine_protection",
    "compose_intersect",
]

_TOL = 1e-9


def _maybe_scalar(out, like):
    return float(out) if np.ndim(like) == 0 else out


class NeighborFunction:
    """Interface shared by all neighbor-function kinds.

    Subclasses supply ``evaluate(x >= 0)``, ``inverse(y)`` and
    ``derivative(x > 0)``; all three accept scalars or arrays.  Instances are
    immutable after construction and safe to share across threads.
    """

    kind: str = "abstract"

    def evaluate(self, x):
        raise NotImplementedError

    def inverse(self, y):
        raise NotImplementedError

    def derivative(self, x):
        raise NotImplementedError

    def breakpoints(self) -> tuple:
        """Interior points where the closed form changes (empty if smooth)."""
        return ()

    def value_at_zero(self) -> float:
        """f(0), possibly ``-inf`` (e.g. log without shift)."""
        with np.errstate(divide="ignore"):
            return float(self.evaluate(0.0))

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.describe()}>"

    def describe(self) -> str:
        return self.kind


def _check_domain(x, name="x", lower=0.0):
    arr = np.asarray(x, dtype=float)
    if np.any(arr < lower - _TOL):
        raise InputError(f"{name} must be >= {lower}, got {arr[arr < lower - _TOL].min()}")
    return np.maximum(arr, lower)


class SqrtShift(NeighborFunction):
    """f(x) = sqrt(x + a), a >= 0."""

    kind = "sqrt_shift"

    def __init__(self, a: float = 0.0):
        if a < 0 or not math.isfinite(a):
            raise InputError(f"sqrt_shift requires shift a >= 0, got {a}")
        self.a = float(a)

    def evaluate(self, x):
        xs = _check_domain(x)
        return _maybe_scalar(np.sqrt(xs + self.a), x)

    def inverse(self, y):
        ys = np.asarray(y, dtype=float)
        f0 = math.sqrt(self.a)
        if np.any(ys < f0 - _TOL):
            raise InputError(f"value below f(0)={f0}: no preimage in [0, inf)")
        out = np.maximum(np.maximum(ys, f0) ** 2 - self.a, 0.0)
        return _maybe_scalar(out, y)

    def derivative(self, x):
        xs = _check_domain(x)
        return _maybe_scalar(0.5 / np.sqrt(xs + self.a), x)

    def describe(self) -> str:
        return f"sqrt_shift(a={self.a})"


class LogShift(NeighborFunction):
    """f(x) = log(x + a), a >= 0.  With a = 0, f(0) = -inf."""

    kind = "log_shift"

    def __init__(self, a: float = 0.0):
        if a < 0 or not math.isfinite(a):
            raise InputError(f"log_shift requires shift a >= 0, got {a}")
        self.a = float(a)

    def evaluate(self, x):
        xs = _check_domain(x)
        with np.errstate(divide="ignore"):
            return _maybe_scalar(np.log(xs + self.a), x)

    def inverse(self, y):
        ys = np.asarray(y, dtype=float)
        if self.a > 0:
            f0 = math.log(self.a)
            if np.any(ys < f0 - _TOL):
                raise InputError(f"value below f(0)={f0}: no preimage in [0, inf)")
        out = np.maximum(np.exp(ys) - self.a, 0.0)
        return _maybe_scalar(out, y)

    def derivative(self, x):
        xs = _check_domain(x)
        with np.errstate(divide="ignore"):
            return _maybe_scalar(1.0 / (xs + self.a), x)

    def describe(self) -> str:
        return f"log_shift(a={self.a})"


class Linear(NeighborFunction):
    """f(x) = x / d, d > 0 (slope 1/d)."""

    kind = "linear"

    def __init__(self, d: float = 1.0):
        if d <= 0 or not math.isfinite(d):
            raise InputError(f"linear requires d > 0, got {d}")
        self.d = float(d)

    def evaluate(self, x):
        xs = _check_domain(x)
        return _maybe_scalar(xs / self.d, x)

    def inverse(self, y):
        ys = np.asarray(y, dtype=float)
        if np.any(ys < -_TOL):
            raise InputError("value below f(0)=0: no preimage in [0, inf)")
        return _maybe_scalar(np.maximum(ys, 0.0) * self.d, y)

    def derivative(self, x):
        xs = _check_domain(x)
        return _maybe_scalar(np.full_like(xs, 1.0 / self.d), x)

    def describe(self) -> str:
        return f"linear(d={self.d})"


class Tabulated(NeighborFunction):
    """Custom kind: derivative tabulated on a grid, integrated by trapezoid.

    Between knots the function is piecewise linear in the integrated values;
    outside the grid it extends linearly with the boundary derivative.
    """

    kind = "custom"

    def __init__(self, grid: Sequence[float], derivative: Sequence[float], f0: float = 0.0):
        xs = np.asarray(grid, dtype=float)
        ds = np.asarray(derivative, dtype=float)
        if xs.ndim != 1 or xs.size < 2 or xs.shape != ds.shape:
            raise InputError("grid and derivative must be 1-d arrays of equal length >= 2")
        if xs[0] < 0 or np.any(np.diff(xs) <= 0):
            raise InputError("grid must be strictly increasing and nonnegative")
        if np.any(ds <= 0) or not np.all(np.isfinite(ds)):
            raise InputError("tabulated derivative must be positive and finite")
        self._xs = xs
        self._ds = ds
        gaps = np.diff(xs)
        self._ys = float(f0) + np.concatenate(
            ([0.0], np.cumsum(0.5 * (ds[:-1] + ds[1:]) * gaps))
        )

    def evaluate(self, x):
        xs = _check_domain(x)
        out = np.interp(xs, self._xs, self._ys)
        below = xs < self._xs[0]
        above = xs > self._xs[-1]
        if np.any(below):
            out = np.where(below, self._ys[0] - (self._xs[0] - xs) * self._ds[0], out)
        if np.any(above):
            out = np.where(above, self._ys[-1] + (xs - self._xs[-1]) * self._ds[-1], out)
        return _maybe_scalar(out, x)

    def inverse(self, y):
        ys = np.asarray(y, dtype=float)
        f0 = self.value_at_zero()
        if np.any(ys < f0 - _TOL):
            raise InputError(f"value below f(0)={f0}: no preimage in [0, inf)")
        out = np.interp(ys, self._ys, self._xs)
        above = ys > self._ys[-1]
        if np.any(above):
            out = np.where(above, self._xs[-1] + (ys - self._ys[-1]) / self._ds[-1], out)
        below = ys < self._ys[0]
        if np.any(below):
            out = np.where(below, self._xs[0] - (self._ys[0] - ys) / self._ds[0], out)
        return _maybe_scalar(np.maximum(out, 0.0), y)

    def derivative(self, x):
        xs = _check_domain(x)
        return _maybe_scalar(np.interp(xs, self._xs, self._ds), x)

    def breakpoints(self) -> tuple:
        return tuple(self._xs[1:-1])


@dataclass(frozen=True)
class _Piece:
    """One closed-form segment of a combined function.

    On [x_lo, x_hi) the combined function equals
    ``y_lo + scale * (source(x) - source(x_lo))``.
    """

    x_lo: float
    x_hi: float
    source: NeighborFunction
    scale: float
    y_lo: float
    src_y_lo: float


class PiecewiseCombination(NeighborFunction):
    """Piecewise function produced by the combination constructions.

    Each piece is an affinely shifted copy of one of the input functions, so
    closed forms (and exact inverses) are preserved no matter how the inputs
    were built.
    """

    kind = "piecewise"

    def __init__(self, pieces: Sequence[_Piece]):
        if not pieces:
            raise InputError("a piecewise function needs at least one piece")
        self._pieces = tuple(pieces)
        self._lefts = np.array([p.x_lo for p in pieces])
        self._y_los = np.array([p.y_lo for p in pieces])

    def _piece_index(self, xs: np.ndarray) -> np.ndarray:
        return np.clip(np.searchsorted(self._lefts, xs, side="right") - 1, 0, len(self._pieces) - 1)

    def evaluate(self, x):
        xs = _check_domain(x)
        idx = self._piece_index(xs)
        out = np.empty_like(xs)
        for i, p in enumerate(self._pieces):
            mask = idx == i
            if np.any(mask):
                out[mask] = p.y_lo + p.scale * (np.asarray(p.source.evaluate(xs[mask])) - p.src_y_lo)
        return _maybe_scalar(out, x)

    def inverse(self, y):
        ys = np.asarray(y, dtype=float)
        if np.any(ys < self._y_los[0] - _TOL):
            raise InputError(f"value below f(0)={self._y_los[0]}: no preimage in [0, inf)")
        ys_c = np.maximum(ys, self._y_los[0])
        idx = np.clip(np.searchsorted(self._y_los, ys_c, side="right") - 1, 0, len(self._pieces) - 1)
        out = np.empty_like(ys_c)
        for i, p in enumerate(self._pieces):
            mask = idx == i
            if np.any(mask):
                out[mask] = np.asarray(p.source.inverse(p.src_y_lo + (ys_c[mask] - p.y_lo) / p.scale))
        return _maybe_scalar(np.maximum(out, 0.0), y)

    def derivative(self, x):
        xs = _check_domain(x)
        idx = self._piece_index(xs)
        out = np.empty_like(xs)
        for i, p in enumerate(self._pieces):
            mask = idx == i
            if np.any(mask):
                out[mask] = p.scale * np.asarray(p.source.derivative(xs[mask]))
        return _maybe_scalar(out, x)

    def breakpoints(self) -> tuple:
        pts = [p.x_lo for p in self._pieces[1:]]
        for p in self._pieces:
            pts.extend(b for b in p.source.breakpoints() if p.x_lo < b < p.x_hi)
        return tuple(sorted(set(pts)))

    def describe(self) -> str:
        return f"piecewise({len(self._pieces)} pieces)"


_CONFIG_KEYS = {
    "sqrt_shift": {"shift"},
    "log_shift": {"shift"},
    "linear": {"d"},
    "custom": {"grid", "derivative", "f0"},
}


def from_config(cfg: Mapping) -> NeighborFunction:
    """Build a neighbor function from a config mapping.

    Recognized forms::

        {"kind": "sqrt_shift", "shift": 0.0}
        {"kind": "log_shift",  "shift": 1.0}
        {"kind": "linear",     "d": 1.0}
        {"kind": "custom",     "grid": [...], "derivative": [...], "f0": 0.0}

    Unknown keys are rejected rather than ignored: a misspelled parameter
    would otherwise fall back to its default and silently change the
    protection.
    """
    kind = cfg.get("kind")
    if kind not in _CONFIG_KEYS:
        raise InputError(f"unknown neighbor-function kind {kind!r}")
    extra = set(cfg) - _CONFIG_KEYS[kind] - {"kind"}
    if extra:
        raise InputError(f"unexpected keys for kind {kind!r}: {sorted(extra)}")
    if kind == "sqrt_shift":
        return SqrtShift(float(cfg.get("shift", 0.0)))
    if kind == "log_shift":
        return LogShift(float(cfg.get("shift", 0.0)))
    if kind == "linear":
        return Linear(float(cfg.get("d", 1.0)))
    missing = sorted({"grid", "derivative"} - set(cfg))
    if missing:
        raise InputError(f"custom kind requires keys {missing}")
    return Tabulated(cfg["grid"], cfg["derivative"], float(cfg.get("f0", 0.0)))


@dataclass(frozen=True)
class DistanceParams:
    """Per-attribute distance parameters (all nonnegative).

    Attributes without an entry default to distance 0, i.e. exact equality
    is required for them in the closeness test.
    """

    values: Mapping[str, float]

    def __post_init__(self):
        for attr, d in self.values.items():
            if d < 0 or not math.isfinite(d):
                raise InputError(f"distance parameter for {attr!r} must be >= 0, got {d}")
        object.__setattr__(self, "values", dict(self.values))

    def delta(self, attr: str) -> float:
        return float(self.values.get(attr, 0.0))

    def scaled(self, m: float) -> "DistanceParams":
        return DistanceParams({a: m * d for a, d in self.values.items()})

    def items(self):
        return self.values.items()


@dataclass(frozen=True)
class UncertaintyInterval:
    """Preimage interval [f^-1(max(f(0), f(x)-delta)), f^-1(f(x)+delta)]."""

    lower: float
    upper: float

    def __post_init__(self):
        if self.upper < self.lower:
            raise InputError(f"interval upper {self.upper} below lower {self.lower}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float, tol: float = _TOL) -> bool:
        return self.lower - tol <= value <= self.upper + tol


@dataclass(frozen=True)
class ValidityReport:
    """Outcome of the numeric validity check.

    ``condition`` is the number (1-4) of the first violated condition:
    (1) strictly increasing, (2) continuous, (3) concave,
    (4) x*f'(x) nondecreasing (equivalently, f(exp(t)) convex).
    """

    passed: bool
    condition: Optional[int] = None
    witness: tuple = ()
    message: str = "pass"

    def __bool__(self) -> bool:
        return self.passed


_CONDITION_NAMES = {
    1: "strictly increasing",
    2: "continuous",
    3: "concave",
    4: "x*f'(x) nondecreasing",
}


def _validation_grid(f: NeighborFunction, x_min: float, x_max: float, points: int) -> np.ndarray:
    if not (0 < x_min < x_max):
        raise InputError(f"need 0 < x_min < x_max, got {x_min}, {x_max}")
    if points < 1000:
        raise InputError(f"validation grid needs >= 1000 points, got {points}")
    grid = np.geomspace(x_min, x_max, points)
    extra = []
    for b in f.breakpoints():
        if x_min < b < x_max:
            # straddle each breakpoint so one-sided behavior is sampled
            extra.extend((b * (1 - 1e-9), b, b * (1 + 1e-9)))
    if extra:
        grid = np.unique(np.concatenate((grid, np.asarray(extra))))
    return grid


def validate(
    f: NeighborFunction,
    x_min: float = 1e-9,
    x_max: float = 1e6,
    points: int = 1024,
) -> ValidityReport:
    """Check the four neighbor-function conditions numerically on a grid.

    The grid is log-spaced over (0, x_max] with all declared breakpoints
    (and points straddling them) inserted.  A pass means no violation was
    found; a fail names the *first* violated condition with witness points.
    NaN or infinite values on the grid raise
    :class:`~gedp.errors.MalformedFunctionError`.
    """
    grid = _validation_grid(f, x_min, x_max, points)
    with np.errstate(all="ignore"):
        vals = np.asarray(f.evaluate(grid), dtype=float)
        ders = np.asarray(f.derivative(grid), dtype=float)
    if not np.all(np.isfinite(vals)) or not np.all(np.isfinite(ders)):
        bad = grid[~(np.isfinite(vals) & np.isfinite(ders))][0]
        raise MalformedFunctionError(
            f"{f.describe()} returned a non-finite value or derivative at x={bad!r}"
        )

    # (1) strictly increasing.  The threshold is the float resolution of the
    # values themselves: legitimate increments shrink with the grid spacing
    # (e.g. a linear function near x = 1e-9), so any absolute cutoff would
    # misfire there, while a genuine plateau still yields a zero diff.
    diffs = np.diff(vals)
    resolution = np.finfo(float).eps * np.maximum(np.abs(vals[:-1]), np.abs(vals[1:]))
    bad = np.flatnonzero(diffs <= resolution)
    if bad.size:
        i = int(bad[0])
        return ValidityReport(
            False, 1, (float(grid[i]), float(grid[i + 1])),
            f"condition (1) violated: f({grid[i]:.6g})={vals[i]:.6g} vs "
            f"f({grid[i + 1]:.6g})={vals[i + 1]:.6g}",
        )

    # (2) continuity at declared breakpoints
    for b in f.breakpoints():
        if not (x_min < b < x_max):
            continue
        h = 1e-8 * max(1.0, b)
        with np.errstate(all="ignore"):
            left, right = float(f.evaluate(b - h)), float(f.evaluate(b + h))
            slope = max(float(f.derivative(b - h)), float(f.derivative(b + h)))
        if abs(right - left) > 2 * h * slope + 1e-6 * max(1.0, abs(left)):
            return ValidityReport(
                False, 2, (float(b),),
                f"condition (2) violated: jump of {right - left:.6g} at x={b:.6g}",
            )

    # (3) concave: secant slopes nonincreasing.  Each secant is a difference
    # of nearly equal values, so its roundoff floor eps*scale/gap can exceed
    # any fixed tolerance where the grid is dense; allow for it explicitly.
    # The scale includes 1.0 because rounding inside f (e.g. of x + shift)
    # leaves absolute noise ~eps even where the value itself is tiny.
    gaps = np.diff(grid)
    slopes = diffs / gaps
    vscale = np.maximum(1.0, np.maximum(np.abs(vals[:-1]), np.abs(vals[1:])))
    noise = 2.0 * np.finfo(float).eps * vscale / gaps
    rise_tol = _TOL + np.abs(slopes[:-1]) * 1e-12 + noise[:-1] + noise[1:]
    incr = np.flatnonzero(slopes[1:] - slopes[:-1] > rise_tol)
    if incr.size:
        i = int(incr[0])
        return ValidityReport(
            False, 3, (float(grid[i]), float(grid[i + 1]), float(grid[i + 2])),
            f"condition (3) violated: secant slope rises from {slopes[i]:.6g} to "
            f"{slopes[i + 1]:.6g} near x={grid[i + 1]:.6g}",
        )

    # (4) f(exp(t)) convex, checked as x*f'(x) nondecreasing
    t = grid * ders
    drop = np.flatnonzero(t[1:] < t[:-1] * (1 - 1e-12) - _TOL)
    if drop.size:
        i = int(drop[0])
        return ValidityReport(
            False, 4, (float(grid[i]), float(grid[i + 1])),
            f"condition (4) violated: x*f'(x) falls from {t[i]:.6g} at x={grid[i]:.6g} "
            f"to {t[i + 1]:.6g} at x={grid[i + 1]:.6g}",
        )

    return ValidityReport(True)


def uncertainty_interval(f: NeighborFunction, delta: float, x: float) -> UncertaintyInterval:
    """Uncertainty interval around ``x`` induced by ``f`` and ``delta``."""
    if delta < 0:
        raise InputError(f"distance parameter must be >= 0, got {delta}")
    if x < 0:
        raise InputError(f"attribute values are nonnegative, got {x}")
    fx = float(f.evaluate(x))
    f0 = f.value_at_zero()
    lower = float(f.inverse(max(f0, fx - delta)))
    upper = float(f.inverse(fx + delta))
    # guard float wobble: the interval contains x by construction
    return UncertaintyInterval(min(lower, x), max(upper, x))


def is_close(r1, r2, f: NeighborFunction, params: DistanceParams) -> bool:
    """Whether two establishment records are f-close.

    True iff all public attributes are equal and every confidential
    attribute satisfies |f(v1) - f(v2)| <= delta_i.  Attributes without a
    distance parameter get delta 0.
    """
    from .dataset import CONFIDENTIAL_ATTRS, PUBLIC_ATTRS

    for attr in PUBLIC_ATTRS:
        try:
            if getattr(r1, attr) != getattr(r2, attr):
                return False
        except AttributeError as exc:
            raise InputError(f"records lack public attribute {attr!r}") from exc
    for attr in CONFIDENTIAL_ATTRS:
        try:
            v1, v2 = getattr(r1, attr), getattr(r2, attr)
        except AttributeError as exc:
            raise InputError(f"records lack confidential attribute {attr!r}") from exc
        if abs(float(f.evaluate(v1)) - float(f.evaluate(v2))) > params.delta(attr) + 1e-12:
            return False
    return True


def _scaled_derivative(f: NeighborFunction, delta: float):
    def g(x):
        with np.errstate(all="ignore"):
            return np.asarray(f.derivative(x), dtype=float) / delta
    return g


def _find_crossovers(gA, gB, breaks: Sequence[float], x_max: float) -> list:
    """Locate sign changes of gA - gB on (0, x_max] by scan + bisection."""
    scan = np.geomspace(1e-12, x_max, 4096)
    extra = [b * s for b in breaks for s in (1 - 1e-9, 1.0, 1 + 1e-9) if 0 < b * s < x_max]
    if extra:
        scan = np.unique(np.concatenate((scan, np.asarray(extra))))
    d = gA(scan) - gB(scan)
    d = np.where(np.isfinite(d), d, np.sign(np.where(np.isnan(d), 0.0, d)) * 1e308)
    crossings = []
    sign = np.sign(d)
    # A crossing that lands exactly on a scan point has sign 0 there and the
    # strict product test below never sees it; take the point itself.  Spurious
    # touch points only split an interval, which the caller merges back.
    crossings.extend(float(scan[i]) for i in np.flatnonzero(sign == 0) if 0 < i < scan.size - 1)
    for i in np.flatnonzero(sign[:-1] * sign[1:] < 0):
        lo, hi = scan[i], scan[i + 1]
        s_lo = sign[i]
        for _ in range(80):
            mid = math.sqrt(lo * hi)
            dm = float(gA(mid) - gB(mid))
            if dm == 0.0:
                lo = hi = mid
                break
            if math.copysign(1.0, dm) == s_lo:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-13 * hi:
                break
        crossings.append(0.5 * (lo + hi))
    return crossings


def _combine(fA, dA, fB, dB, pick_max: bool, x_min, x_max) -> PiecewiseCombination:
    if dA <= 0 or dB <= 0:
        raise InputError("combination requires positive distance parameters")
    for f in (fA, fB):
        report = validate(f)
        if not report:
            raise InvalidFunctionError(f"{f.describe()} is not a valid neighbor function: {report.message}")

    gA = _scaled_derivative(fA, dA)
    gB = _scaled_derivative(fB, dB)
    breaks = sorted(set(fA.breakpoints()) | set(fB.breakpoints()))
    cross = [c for c in _find_crossovers(gA, gB, breaks, x_max) if c > 0]

    # Pick the winning source on each crossover-free interval, merging
    # consecutive intervals that select the same input.
    sources = ((fA, 1.0 / dA), (fB, 1.0 / dB))
    bounds = [0.0] + sorted(cross) + [math.inf]
    selections = []  # (x_lo, (source, scale))
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if math.isfinite(hi):
            probe = math.sqrt(lo * hi) if lo > 0 else hi / 2
        else:
            probe = 2 * lo if lo > 0 else 1.0
        vals = (float(gA(probe)), float(gB(probe)))
        choose = int(np.argmax(vals)) if pick_max else int(np.argmin(vals))
        if not selections or sources[choose][0] is not selections[-1][1][0]:
            selections.append((lo, sources[choose]))

    # Materialize pieces with continuity offsets, starting from f*(0) = 0.
    pieces = []
    y = 0.0
    for k, (lo, (src, scale)) in enumerate(selections):
        hi = selections[k + 1][0] if k + 1 < len(selections) else math.inf
        if lo == 0.0 and not math.isfinite(src.evaluate(0.0)):
            if x_min is None:
                raise InputError(
                    f"{src.describe()} has unbounded transformed mass near 0 "
                    "(f(0) = -inf); pass a shift a > 0 or an explicit x_min cutoff"
                )
            warnings.warn(
                f"clipping combination integral of {src.describe()} below x_min={x_min}; "
                "the combined function is linear on [0, x_min]",
                stacklevel=3,
            )
            stub_slope = float(scale * np.asarray(src.derivative(x_min)))
            pieces.append(_Piece(0.0, x_min, Linear(1.0 / stub_slope), 1.0, 0.0, 0.0))
            y = stub_slope * x_min
            pieces.append(_Piece(x_min, hi, src, scale, y, float(src.evaluate(x_min))))
            continue
        if pieces:
            last = pieces[-1]
            y = last.y_lo + last.scale * (float(last.source.evaluate(lo)) - last.src_y_lo)
        pieces.append(_Piece(lo, hi, src, scale, y, float(src.evaluate(lo))))
    return PiecewiseCombination(pieces)


def combine_protection(fA, deltaA, fB, deltaB, x_min=None, x_max=1e6):
    """Combine two protections: the output's uncertainty intervals contain
    both inputs' intervals.

    The combined function integrates the pointwise *minimum* of the scaled
    derivatives f'_A/delta_A and f'_B/delta_B from 0; the returned distance
    parameter is 1.  Each output piece is an exact affine copy of one input,
    so closed forms survive the construction.
    """
    return _combine(fA, deltaA, fB, deltaB, pick_max=False, x_min=x_min, x_max=x_max), 1.0


def compose_intersect(fA, deltaA, fB, deltaB, x_min=None, x_max=1e6):
    """Intersect two protections: the output's uncertainty intervals are
    contained in both inputs' intervals (pointwise *maximum* of scaled
    derivatives); the returned distance parameter is 1."""
    return _combine(fA, deltaA, fB, deltaB, pick_max=True, x_min=x_min, x_max=x_max), 1.0
