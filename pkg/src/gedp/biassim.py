"""Bias simulations for estimated-variance weighting, plus the ablation study.

Three small simulations quantify what estimated (rather than exact) noise
variances do to inverse-variance-weighted estimates:

* Case 2 — weighted mean of unbiased draws with inverse-Gamma variance
  estimates: unbiased, but the MSE inflates by a closed-form factor.
* Case 3 — harmonic-style combination n / sum(1/a_j): biased low.
* Ablation — the full reconstruction pipeline on a two-level county design,
  comparing estimated, exact, and hybrid weights per query class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Literal

import numpy as np

from .errors import InputError
from .mechanisms import estimate_log, estimate_sqrt
from .numerics import RngStream

__all__ = [
    "MonteCarloResult",
    "AblationConfig",
    "AblationResult",
    "case2_factor",
    "case2_montecarlo",
    "case3_expected_guess",
    "case3_montecarlo",
    "ablation_run",
    "ablation_total_gls_variance",
]

_CHUNK = 32_768


def case2_factor(n: int, tau: float) -> float:
    """Squared-error inflation n(3+tau)/(1+n(2+tau)) from weighting n
    unbiased draws by inverse-Gamma variance estimates."""
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    if tau < 0:
        raise InputError(f"tau must be >= 0, got {tau}")
    return n * (3.0 + tau) / (1.0 + n * (2.0 + tau))


@dataclass(frozen=True)
class MonteCarloResult:
    trials: int
    mean: float
    se_mean: float
    mse: float
    se_mse: float


def _chunks(trials: int):
    start = 0
    index = 0
    while start < trials:
        yield index, min(_CHUNK, trials - start)
        start += _CHUNK
        index += 1


def case2_montecarlo(
    n: int,
    tau: float,
    sigma: float,
    x_true: float,
    trials: int,
    rng: RngStream,
) -> MonteCarloResult:
    """Estimate sum(a_i/v_i)/sum(1/v_i) with a_i ~ Normal(x_true, sigma^2)
    and v_i ~ InverseGamma(2+tau, sigma^2(1+tau)).

    The estimate is unbiased; its MSE approaches (sigma^2/n) * case2_factor.
    The variance draws use shape 2+tau directly (tau=0 gives shape 2, where
    the inverse-Gamma variance is infinite but every draw is still finite
    and positive, which is all the weighting needs).
    """
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    if tau < 0 or sigma <= 0:
        raise InputError("need tau >= 0 and sigma > 0")
    if trials < 1:
        raise InputError(f"trials must be >= 1, got {trials}")
    shape = 2.0 + tau
    scale = sigma * sigma * (1.0 + tau)
    sums = np.zeros(2)
    sq_sums = np.zeros(2)
    for index, size in _chunks(trials):
        gen = rng.substream(index).generator
        a = gen.normal(x_true, sigma, size=(size, n))
        v = scale / gen.gamma(shape, 1.0, size=(size, n))
        inv = 1.0 / v
        estimates = (a * inv).sum(axis=1) / inv.sum(axis=1)
        errors_sq = (estimates - x_true) ** 2
        sums += (estimates.sum(), errors_sq.sum())
        sq_sums += ((estimates**2).sum(), (errors_sq**2).sum())
    mean, mse = sums / trials
    var_mean, var_mse = sq_sums / trials - np.array([mean, mse]) ** 2
    return MonteCarloResult(
        trials=trials,
        mean=float(mean),
        se_mean=float(math.sqrt(max(var_mean, 0.0) / trials)),
        mse=float(mse),
        se_mse=float(math.sqrt(max(var_mse, 0.0) / trials)),
    )


def case3_expected_guess(n: int, x_true: float, c: float) -> float:
    """Closed-form expectation of n/sum(1/a_j): below x_true for n >= 2."""
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    if x_true <= 0 or c <= 0:
        raise InputError("need x_true > 0 and c > 0")
    shape_n = n * (2.0 + x_true / c)
    return x_true * (shape_n - n) / (shape_n - 1.0)


def case3_montecarlo(
    n: int,
    x_true: float,
    c: float,
    trials: int,
    rng: RngStream,
) -> MonteCarloResult:
    """Empirical mean of n/sum(1/a_j) with a_j ~
    InverseGamma(2 + x_true/c, x_true + x_true^2/c)."""
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    if x_true <= 0 or c <= 0:
        raise InputError("need x_true > 0 and c > 0")
    if trials < 1:
        raise InputError(f"trials must be >= 1, got {trials}")
    shape = 2.0 + x_true / c
    scale = x_true + x_true * x_true / c
    theta = case3_expected_guess(n, x_true, c)
    sums = np.zeros(2)
    sq_sums = np.zeros(2)
    for index, size in _chunks(trials):
        gen = rng.substream(index).generator
        # 1/a_j ~ Gamma(shape, 1/scale) exactly, so draw the reciprocals.
        inv_a = gen.gamma(shape, 1.0 / scale, size=(size, n))
        estimates = n / inv_a.sum(axis=1)
        errors_sq = (estimates - theta) ** 2
        sums += (estimates.sum(), errors_sq.sum())
        sq_sums += ((estimates**2).sum(), (errors_sq**2).sum())
    mean, mse = sums / trials
    var_mean, var_mse = sq_sums / trials - np.array([mean, mse]) ** 2
    return MonteCarloResult(
        trials=trials,
        mean=float(mean),
        se_mean=float(math.sqrt(max(var_mean, 0.0) / trials)),
        mse=float(mse),
        se_mse=float(math.sqrt(max(var_mse, 0.0) / trials)),
    )


_KINDS = ("sqrt", "log", "identity")
_MODES = ("Est", "Act", "Hybrid")

Mode = Literal["Est", "Act", "Hybrid"]


@dataclass(frozen=True)
class AblationConfig:
    """Two-level design: ``counties`` x ``per_county`` establishments, every
    true value equal, answered at identity/county/total level (each at the
    given mu) and reconstructed under one of three weighting modes:

    * Est — estimated variances everywhere,
    * Act — true (oracle) variances everywhere,
    * Hybrid — estimated for identity answers, true for county and total.
    """

    kind: str
    delta: float
    mode: Mode
    counties: int = 100
    per_county: int = 2
    true_value: float = 10.0
    mu: float = 1.0
    trials: int = 100_000

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InputError(f"kind must be one of {_KINDS}")
        if self.mode not in _MODES:
            raise InputError(f"mode must be one of {_MODES}")
        if self.counties < 1 or self.per_county < 1 or self.trials < 1:
            raise InputError("counties, per_county, and trials must be >= 1")
        if self.delta <= 0 or self.mu <= 0 or self.true_value < 0:
            raise InputError("need delta > 0, mu > 0, true_value >= 0")


@dataclass(frozen=True)
class AblationResult:
    config: AblationConfig
    mse: Dict[str, float]
    se: Dict[str, float]
    bias: Dict[str, float]
    floor_hit_rate: float = 0.0
    classes: tuple = field(default=("id", "county", "total"), init=False)


def _transform(kind: str, x):
    if kind == "sqrt":
        return np.sqrt(x)
    if kind == "log":
        return np.log(x)
    return np.asarray(x, dtype=float)


def _true_variance(kind: str, x, s2: float):
    if kind == "sqrt":
        return 4.0 * x * s2 + 2.0 * s2 * s2
    if kind == "log":
        return x * x * math.expm1(s2)
    return np.full_like(np.asarray(x, dtype=float), s2)


def _detransform(kind: str, y, delta: float, mu: float):
    if kind == "sqrt":
        return estimate_sqrt(y, delta, mu)
    if kind == "log":
        return estimate_log(y, delta, mu)
    return np.asarray(y, dtype=float), np.full(np.shape(y), (delta / mu) ** 2)


def _solve_nested(wi, wc, wt, xi, xc, xt):
    """Weighted least squares on the two-level design, in closed form.

    Normal matrix per trial: diag(w_id) + blockdiag per county of
    w_c * ones + w_t * ones — inverted by two nested rank-one updates
    (county blocks, then the total), vectorized over trials.  Shapes:
    wi/xi (trials, counties, per_county), wc/xc (trials, counties),
    wt/xt (trials,).  Returns reconstructed values, same shape as xi.
    """
    b = wi * xi + (wc * xc)[..., None] + (wt * xt)[:, None, None]
    inv = 1.0 / wi

    def dinv(z):
        iz = inv * z
        corr = wc * iz.sum(axis=2) / (1.0 + wc * inv.sum(axis=2))
        return iz - inv * corr[..., None]

    h = dinv(b)
    g = dinv(np.ones_like(b))
    lam = wt * h.sum(axis=(1, 2)) / (1.0 + wt * g.sum(axis=(1, 2)))
    return h - lam[:, None, None] * g


def ablation_run(config: AblationConfig, rng: RngStream) -> AblationResult:
    """Monte-Carlo MSE of reconstructed identity/county/total answers.

    Per trial: release all three query classes with transformed-space noise
    (sd delta/mu each), de-transform, weight per ``config.mode``, solve the
    weighted least squares exactly, and record squared errors per class.
    Per-trial noise comes from substreams keyed by trial index, so results
    are independent of chunking.
    """
    cfg = config
    n_counties, per_county = cfg.counties, cfg.per_county
    n_estabs = n_counties * per_county
    n_answers = n_estabs + n_counties + 1
    sd = cfg.delta / cfg.mu
    s2 = sd * sd

    truth_id = cfg.true_value
    truth_county = per_county * cfg.true_value
    truth_total = n_estabs * cfg.true_value
    if cfg.kind == "log" and min(truth_id, truth_county, truth_total) <= 0:
        raise InputError("log ablation requires strictly positive true sums")

    f_id = float(_transform(cfg.kind, truth_id))
    f_county = float(_transform(cfg.kind, truth_county))
    f_total = float(_transform(cfg.kind, truth_total))
    v_id = float(_true_variance(cfg.kind, truth_id, s2))
    v_county = float(_true_variance(cfg.kind, truth_county, s2))
    v_total = float(_true_variance(cfg.kind, truth_total, s2))

    sums = np.zeros(3)
    sq_sums = np.zeros(3)
    bias_sums = np.zeros(3)
    floor_hits = 0
    floor_total = 0
    done = 0
    chunk = max(1, min(4096, cfg.trials))
    while done < cfg.trials:
        size = min(chunk, cfg.trials - done)
        noise = np.empty((size, n_answers))
        for row in range(size):
            noise[row] = rng.substream(done + row).generator.standard_normal(n_answers)
        y = noise * sd
        y[:, :n_estabs] += f_id
        y[:, n_estabs:-1] += f_county
        y[:, -1] += f_total

        est_x, est_v = _detransform(cfg.kind, y, cfg.delta, cfg.mu)
        if cfg.kind == "sqrt" and cfg.mode in ("Est", "Hybrid"):
            # Count floored variance estimates among those actually used as
            # weights (all answers in Est mode, identity answers in Hybrid).
            floored = est_v <= s2 * s2 * (1.0 + 1e-12)
            if cfg.mode == "Est":
                floor_hits += int(floored.sum())
                floor_total += size * n_answers
            else:
                floor_hits += int(floored[:, :n_estabs].sum())
                floor_total += size * n_estabs

        xi = est_x[:, :n_estabs].reshape(size, n_counties, per_county)
        xc = est_x[:, n_estabs:-1]
        xt = est_x[:, -1]
        if cfg.mode == "Est":
            wi = 1.0 / est_v[:, :n_estabs]
            wc = 1.0 / est_v[:, n_estabs:-1]
            wt = 1.0 / est_v[:, -1]
        elif cfg.mode == "Act":
            wi = np.full((size, n_estabs), 1.0 / v_id)
            wc = np.full((size, n_counties), 1.0 / v_county)
            wt = np.full(size, 1.0 / v_total)
        else:
            wi = 1.0 / est_v[:, :n_estabs]
            wc = np.full((size, n_counties), 1.0 / v_county)
            wt = np.full(size, 1.0 / v_total)
        values = _solve_nested(wi.reshape(size, n_counties, per_county), wc, wt, xi, xc, xt)

        err_id = values - truth_id
        err_county = values.sum(axis=2) - truth_county
        err_total = values.sum(axis=(1, 2)) - truth_total
        per_trial = np.stack(
            [
                (err_id**2).mean(axis=(1, 2)),
                (err_county**2).mean(axis=1),
                err_total**2,
            ],
            axis=1,
        )
        sums += per_trial.sum(axis=0)
        sq_sums += (per_trial**2).sum(axis=0)
        bias_sums += (
            err_id.mean(axis=(1, 2)).sum(),
            err_county.mean(axis=1).sum(),
            err_total.sum(),
        )
        done += size

    mse = sums / cfg.trials
    variance = np.maximum(sq_sums / cfg.trials - mse * mse, 0.0)
    se = np.sqrt(variance / cfg.trials)
    bias = bias_sums / cfg.trials
    labels = ("id", "county", "total")
    return AblationResult(
        config=cfg,
        mse={k: float(v) for k, v in zip(labels, mse)},
        se={k: float(v) for k, v in zip(labels, se)},
        bias={k: float(v) for k, v in zip(labels, bias)},
        floor_hit_rate=float(floor_hits / floor_total) if floor_total else 0.0,
    )


def ablation_total_gls_variance(
    v_id: float, v_county: float, v_total: float, counties: int = 100, per_county: int = 2
) -> float:
    """Exact total-query variance under true-variance weighting: the three
    query classes give independent unbiased totals with variances
    N*v_id, C*v_county, v_total, and the solver combines them by inverse
    variance."""
    n = counties * per_county
    return 1.0 / (1.0 / (n * v_id) + 1.0 / (counties * v_county) + 1.0 / v_total)
