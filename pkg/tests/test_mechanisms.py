"""Release mechanisms, de-transformation estimators, and clipping bounds."""

import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from gedp.dataset import Dataset, GroupBySumQuery, answer_exact
from gedp.errors import GedpError, InputError, InvalidFunctionError
from gedp.mechanisms import (
    NoisyAnswer,
    estab_gaussian,
    estimate_log,
    estimate_sqrt,
    neighbor_mech,
    pnc_bounds,
    pnc_mech,
    pnc_sensitivity,
    read_answers_csv,
    write_answers_csv,
)
from gedp.neighbor import LogShift, SqrtShift, Tabulated
from gedp.numerics import RngStream

from conftest import make_records


def invalid_function():
    # concave and increasing but x*f'(x) drops at x=1: fails validation
    return Tabulated([0.0, 1.0, 1.0001, 10.0], [1.0, 1.0, 0.5, 0.5])


class TestNoisyAnswer:
    def test_field_validation(self):
        good = dict(
            group_key="total", value=1.0, variance=4.0,
            variance_kind="exact", mechanism="estab_gaussian", space="raw",
        )
        NoisyAnswer(**good)
        for patch in (
            {"variance": 0.0},
            {"variance": -1.0},
            {"variance": math.inf},
            {"variance_kind": "guessed"},
            {"mechanism": "laplace"},
            {"space": "log"},
        ):
            with pytest.raises(InputError):
                NoisyAnswer(**{**good, **patch})

    def test_raw_neighbor_variance_never_exact(self):
        with pytest.raises(InputError, match="data-dependent"):
            NoisyAnswer("total", 36.0, 4.0, "exact", "neighbor", "raw")
        # estimated raw and exact transformed are both fine
        NoisyAnswer("total", 36.0, 4.0, "estimated", "neighbor", "raw")
        NoisyAnswer("total", 6.0, 0.25, "exact", "neighbor", "transformed")


class TestEstabGaussian:
    def test_variance_field_and_determinism(self, small_dataset):
        answers = answer_exact(small_dataset, GroupBySumQuery("county", "m1emp"))
        out = estab_gaussian(answers, sensitivity=2.0, mu=1.0, rng=RngStream(1, 0))
        assert [a.group_key for a in out] == ["county=01001", "county=01003"]
        assert all(a.variance == 4.0 for a in out)
        assert all(a.variance_kind == "exact" and a.space == "raw" for a in out)
        again = estab_gaussian(answers, sensitivity=2.0, mu=1.0, rng=RngStream(1, 0))
        assert [a.value for a in again] == [a.value for a in out]
        other = estab_gaussian(answers, sensitivity=2.0, mu=1.0, rng=RngStream(1, 1))
        assert [a.value for a in other] != [a.value for a in out]

    def test_noise_scale(self, small_dataset):
        # empirical variance of the added noise matches (sensitivity/mu)^2
        n = 200_000
        from gedp.dataset import QueryAnswerVector

        answers = QueryAnswerVector(tuple((f"id={i}", 5.0) for i in range(n)))
        out = estab_gaussian(answers, sensitivity=1.0, mu=1.0, rng=RngStream(7, 0))
        noise = np.array([a.value for a in out]) - 5.0
        assert abs(noise.mean()) < 4.0 / math.sqrt(n)
        assert noise.var() == pytest.approx(1.0, rel=0.02)

    def test_large_mu_recovers_truth(self, small_dataset):
        answers = answer_exact(small_dataset, GroupBySumQuery("total", "m1emp"))
        out = estab_gaussian(answers, sensitivity=1.0, mu=1e9, rng=RngStream(1, 0))
        assert out[0].value == pytest.approx(185.0, abs=1e-6)

    def test_rejections(self, small_dataset):
        answers = answer_exact(small_dataset, GroupBySumQuery("total", "m1emp"))
        with pytest.raises(InputError):
            estab_gaussian(answers, sensitivity=0.0, mu=1.0, rng=RngStream(1, 0))
        with pytest.raises(InputError):
            estab_gaussian(answers, sensitivity=1.0, mu=-1.0, rng=RngStream(1, 0))


class TestNeighborMech:
    def test_transformed_release(self, small_dataset):
        out = neighbor_mech(
            small_dataset, GroupBySumQuery("identity", "m1emp"),
            SqrtShift(0.0), delta=0.5, mu=1e9, rng=RngStream(3, 0),
        )
        assert [a.group_key for a in out] == [f"id={k}" for k in "123456"]
        truth = [3.0, 10.0, 25.0, 7.0, 40.0, 100.0]
        for a, x in zip(out, truth):
            assert a.value == pytest.approx(math.sqrt(x), abs=1e-6)
            assert a.space == "transformed"
            assert a.variance_kind == "exact"
            assert a.variance == (0.5 / 1e9) ** 2

    def test_noise_scale(self):
        data = Dataset(make_records([7.0] * 20_000))
        out = neighbor_mech(
            data, GroupBySumQuery("identity", "m1emp"),
            SqrtShift(0.0), delta=0.5, mu=1.0, rng=RngStream(11, 0),
        )
        noise = np.array([a.value for a in out]) - math.sqrt(7.0)
        assert noise.var() == pytest.approx(0.25, rel=0.04)

    def test_refuses_invalid_function(self, small_dataset):
        with pytest.raises(InvalidFunctionError, match="refusing"):
            neighbor_mech(
                small_dataset, GroupBySumQuery("total", "m1emp"),
                invalid_function(), delta=0.5, mu=1.0, rng=RngStream(1, 0),
            )

    def test_rejections(self, small_dataset):
        q = GroupBySumQuery("total", "m1emp")
        with pytest.raises(InputError):
            neighbor_mech(small_dataset, q, SqrtShift(0.0), 0.0, 1.0, RngStream(1, 0))
        with pytest.raises(InputError):
            neighbor_mech(small_dataset, q, SqrtShift(0.0), 0.5, 0.0, RngStream(1, 0))


class TestEstimateSqrt:
    def test_frozen_values(self):
        x, v = estimate_sqrt(6.5, delta=0.5, mu=1.0)
        assert x == pytest.approx(42.0, abs=1e-12)
        assert v == pytest.approx(42.125, abs=1e-12)

    def test_negative_estimate_and_variance_floor(self):
        x, v = estimate_sqrt(0.0, delta=1.0, mu=1.0)
        assert x == -1.0
        assert v == 1.0  # raw formula gives -2; floored at s^4

    def test_shift(self):
        y = math.sqrt(36.0 + 4.0)
        x, v = estimate_sqrt(y, delta=0.5, mu=1.0, shift=4.0)
        assert x == pytest.approx(36.0 - 0.25, abs=1e-12)
        # variance uses the shifted value (the one actually transformed)
        assert v == pytest.approx(2 * 0.25 * (2 * (40.0 - 0.25) + 0.25), abs=1e-12)

    def test_unbiased_and_variance(self):
        x, s = 10.0, 0.5
        rng = np.random.default_rng(2024)
        y = math.sqrt(x) + s * rng.standard_normal(1_000_000)
        est, vt = estimate_sqrt(y, delta=0.5, mu=1.0)
        true_var = 4 * x * s**2 + 2 * s**4  # 10.125
        assert true_var == 10.125
        assert est.mean() == pytest.approx(x, abs=4 * math.sqrt(true_var / 1e6))
        assert est.var() == pytest.approx(true_var, rel=0.01)
        # the estimated variance is unbiased for the true variance too
        assert vt.mean() == pytest.approx(true_var, rel=0.01)

    def test_relative_error_of_variance_shrinks_with_x(self):
        rng = np.random.default_rng(5)
        z = rng.standard_normal(200_000)
        spreads = []
        for x in (1e2, 1e4):
            y = np.sqrt(x) + 0.5 * z
            _, vt = estimate_sqrt(y, delta=0.5, mu=1.0)
            true_var = 4 * x * 0.25 + 2 * 0.0625
            ratio = vt / true_var
            q1, q3 = np.percentile(ratio, [25, 75])
            spreads.append(q3 - q1)
        assert spreads[1] < spreads[0]

    def test_rejections(self):
        with pytest.raises(InputError):
            estimate_sqrt(1.0, delta=0.0, mu=1.0)
        with pytest.raises(InputError):
            estimate_sqrt(1.0, delta=0.5, mu=0.0)


class TestEstimateLog:
    def test_frozen_values(self):
        x, v = estimate_log(math.log(100.0), delta=0.1, mu=1.0)
        assert x == pytest.approx(100.0 * math.exp(-0.005), rel=1e-12)
        assert v == pytest.approx(x * x * math.expm1(0.01), rel=1e-12)

    def test_shift(self):
        y = math.log(50.0 + 3.0)
        x, v = estimate_log(y, delta=0.1, mu=1.0, shift=3.0)
        assert x == pytest.approx(53.0 * math.exp(-0.005) - 3.0, rel=1e-12)

    def test_overflow_refused(self):
        with pytest.raises(GedpError, match="overflow"):
            estimate_log(800.0, delta=0.1, mu=1.0)
        # arrays too
        with pytest.raises(GedpError):
            estimate_log(np.array([1.0, 900.0]), delta=0.1, mu=1.0)

    def test_unbiased_and_variance(self):
        x, s = 50.0, 0.3
        rng = np.random.default_rng(99)
        y = math.log(x) + s * rng.standard_normal(1_000_000)
        est, vt = estimate_log(y, delta=0.3, mu=1.0)
        true_var = x * x * math.expm1(s * s)
        assert est.mean() == pytest.approx(x, abs=4 * math.sqrt(true_var / 1e6))
        assert est.var() == pytest.approx(true_var, rel=0.01)

    def test_variance_ratio_distribution_is_free_of_x(self):
        # v_tilde / v = exp(2 s z - s^2): identical draws give identical
        # ratios at any x, so the spread never decays as x grows
        rng = np.random.default_rng(12)
        z = rng.standard_normal(50_000)
        s = 0.2
        ratios = []
        for x in (1e2, 1e6):
            _, vt = estimate_log(math.log(x) + s * z, delta=0.2, mu=1.0)
            ratios.append(vt / (x * x * math.expm1(s * s)))
        np.testing.assert_allclose(ratios[0], ratios[1], rtol=1e-9)


class TestPncBounds:
    def make_identity_answers(self, dataset, delta=0.5, mu=1e9, seed=4):
        return neighbor_mech(
            dataset, GroupBySumQuery("identity", "m1emp"),
            SqrtShift(0.0), delta=delta, mu=mu, rng=RngStream(seed, 0),
        )

    def test_tau_single_bound_median(self, small_dataset):
        answers = self.make_identity_answers(small_dataset)[:1]
        bounds = pnc_bounds(answers, SqrtShift(0.0), 0.5, 1e9, gamma=0.5, attribute="m1emp")
        assert bounds.tau == pytest.approx(0.0, abs=1e-12)
        # tau = 0: the bound is just f^-1(released value)
        assert bounds.bound_for("1") == pytest.approx(3.0, abs=1e-6)

    def test_tau_against_reference_quantile(self, small_dataset):
        answers = self.make_identity_answers(small_dataset)  # N = 6
        for gamma, c in ((0.01, 1), (0.05, 4), (0.25, 2)):
            bounds = pnc_bounds(
                answers, SqrtShift(0.0), 0.5, 1.0,
                gamma=gamma, attribute="m1emp", n_attributes=c,
            )
            expected = scipy.stats.norm.ppf((1 - gamma) ** (1.0 / (c * 6)))
            assert bounds.tau == pytest.approx(expected, rel=1e-10)

    def test_tau_example_400(self, small_dataset):
        # 400 simultaneous bounds at gamma = 0.01
        answers = self.make_identity_answers(small_dataset)
        bounds = pnc_bounds(
            answers, SqrtShift(0.0), 0.5, 1.0,
            gamma=0.01, attribute="m1emp", n_attributes=400 // 6,
        )
        n_bounds = (400 // 6) * 6  # 396
        expected = scipy.stats.norm.ppf(0.99 ** (1.0 / n_bounds))
        assert bounds.tau == pytest.approx(expected, rel=1e-10)
        assert 4.0 < bounds.tau < 4.1

    def test_bound_construction(self, small_dataset):
        answers = self.make_identity_answers(small_dataset, mu=1.0)
        bounds = pnc_bounds(answers, SqrtShift(0.0), 0.5, 1.0, 0.05, "m1emp")
        by_key = {a.group_key: a.value for a in answers}
        for pk in small_dataset.primary_keys:
            y = by_key[f"id={pk}"]
            expected = max(0.0, y + 0.5 * bounds.tau) ** 2
            assert bounds.bound_for(pk) == pytest.approx(expected, rel=1e-12)

    def test_rejections(self, small_dataset):
        answers = self.make_identity_answers(small_dataset)
        f = SqrtShift(0.0)
        for gamma in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(InputError):
                pnc_bounds(answers, f, 0.5, 1.0, gamma, "m1emp")
        with pytest.raises(InputError):
            pnc_bounds(answers, f, 0.5, 1.0, 0.05, "m1emp", n_attributes=0)
        with pytest.raises(InputError):
            pnc_bounds([], f, 0.5, 1.0, 0.05, "m1emp")
        # raw-space answers cannot seed clipping bounds
        raw = estab_gaussian(
            answer_exact(small_dataset, GroupBySumQuery("identity", "m1emp")),
            1.0, 1.0, RngStream(1, 0),
        )
        with pytest.raises(InputError, match="transformed"):
            pnc_bounds(raw, f, 0.5, 1.0, 0.05, "m1emp")

    def test_missing_bound_is_hard_error(self, small_dataset):
        answers = self.make_identity_answers(small_dataset)[:5]  # drop key "6"
        bounds = pnc_bounds(answers, SqrtShift(0.0), 0.5, 1e9, 0.05, "m1emp")
        with pytest.raises(InputError, match="no clipping bound"):
            bounds.bound_for("6")


class TestPncSensitivity:
    def test_frozen_values(self):
        f = SqrtShift(0.0)
        # u* = 42.25: s = 42.25 - (6.5 - 0.5)^2 = 6.25
        assert pnc_sensitivity(f, 0.5, 42.25) == pytest.approx(6.25, abs=1e-12)
        # u* = 0.2: f(u*) - delta < f(0), so the subtrahend clamps to 0
        assert pnc_sensitivity(f, 0.5, 0.2) == pytest.approx(0.2, abs=1e-12)

    @settings(max_examples=80)
    @given(
        st.sampled_from([SqrtShift(0.0), SqrtShift(2.0), LogShift(1.0)]),
        st.floats(min_value=0.0, max_value=1e5),
        st.floats(min_value=0.0, max_value=1e5),
        st.floats(min_value=0.01, max_value=2.0),
    )
    def test_monotone_in_bound(self, f, u1, u2, delta):
        lo, hi = sorted((u1, u2))
        assert pnc_sensitivity(f, delta, lo) <= pnc_sensitivity(f, delta, hi) + 1e-9


class TestPncMech:
    def build(self, dataset, mu=1e9, gamma=0.05, delta=0.5):
        f = SqrtShift(0.0)
        identity = neighbor_mech(
            dataset, GroupBySumQuery("identity", "m1emp"), f, delta, mu, RngStream(21, 0)
        )
        bounds = pnc_bounds(identity, f, delta, mu, gamma, "m1emp")
        return f, bounds

    def test_no_clipping_regime(self, small_dataset):
        # bounds sit above every true value, so clipped sums equal exact sums
        f, bounds = self.build(small_dataset)
        out = pnc_mech(
            small_dataset, GroupBySumQuery("county", "m1emp"),
            bounds, f, 0.5, 1e9, RngStream(22, 0),
        )
        by_key = {a.group_key: a for a in out}
        assert by_key["county=01001"].value == pytest.approx(38.0, abs=1e-3)
        assert by_key["county=01003"].value == pytest.approx(147.0, abs=1e-3)
        for a in out:
            assert a.space == "raw" and a.variance_kind == "exact"
            assert a.mechanism == "pnc"

    def test_variance_is_clipping_sensitivity(self, small_dataset):
        f, bounds = self.build(small_dataset, mu=1.0)
        mu = 2.0
        out = pnc_mech(
            small_dataset, GroupBySumQuery("county", "m1emp"),
            bounds, f, 0.5, mu, RngStream(23, 0),
        )
        members = {"county=01001": "123", "county=01003": "456"}
        for a in out:
            u_star = max(bounds.bound_for(pk) for pk in members[a.group_key])
            s = pnc_sensitivity(f, 0.5, u_star)
            assert a.variance == pytest.approx((s / mu) ** 2, rel=1e-12)

    def test_clipping_caps_large_values(self, small_dataset):
        # shrink the bound for record "6" (value 100) far below its value
        f, bounds = self.build(small_dataset)
        capped = dict(bounds.upper)
        capped["6"] = 10.0
        bounds2 = type(bounds)(capped, bounds.gamma, bounds.tau, "m1emp", 0.5, 1e9)
        out = pnc_mech(
            small_dataset, GroupBySumQuery("naics_prefix", "m1emp", k=6),
            bounds2, f, 0.5, 1e9, RngStream(24, 0),
        )
        by_key = {a.group_key: a.value for a in out}
        assert by_key["naics6=445120"] == pytest.approx(10.0, abs=1e-3)

    def test_member_without_bound_is_hard_error(self, small_dataset):
        f = SqrtShift(0.0)
        identity = neighbor_mech(
            small_dataset, GroupBySumQuery("identity", "m1emp"), f, 0.5, 1e9, RngStream(25, 0)
        )
        bounds = pnc_bounds(identity[:5], f, 0.5, 1e9, 0.05, "m1emp")
        with pytest.raises(InputError, match="no clipping bound"):
            pnc_mech(
                small_dataset, GroupBySumQuery("county", "m1emp"),
                bounds, f, 0.5, 1.0, RngStream(26, 0),
            )

    def test_attribute_mismatch(self, small_dataset):
        f, bounds = self.build(small_dataset)
        with pytest.raises(InputError, match="attribute"):
            pnc_mech(
                small_dataset, GroupBySumQuery("county", "wage"),
                bounds, f, 0.5, 1.0, RngStream(27, 0),
            )

    def test_universe_fallback_for_empty_group(self, small_dataset):
        f, bounds = self.build(small_dataset, mu=1.0)
        universe = ["county=01001", "county=01003", "county=99997"]
        out = pnc_mech(
            small_dataset, GroupBySumQuery("county", "m1emp"),
            bounds, f, 0.5, 1.0, RngStream(28, 0), universe=universe,
        )
        assert [a.group_key for a in out] == sorted(universe)
        ghost = next(a for a in out if a.group_key == "county=99997")
        u0 = f.inverse(f.value_at_zero() + 0.5 * bounds.tau)
        s = pnc_sensitivity(f, 0.5, u0)
        assert ghost.variance == pytest.approx(s * s, rel=1e-12)
        assert abs(ghost.value) < 6 * s  # zero plus noise

    def test_refuses_invalid_function(self, small_dataset):
        _, bounds = self.build(small_dataset)
        with pytest.raises(InvalidFunctionError):
            pnc_mech(
                small_dataset, GroupBySumQuery("county", "m1emp"),
                bounds, invalid_function(), 0.5, 1.0, RngStream(29, 0),
            )

    def test_simultaneous_coverage(self):
        # over T trials, the fraction where any record exceeds its bound
        # matches gamma: the quantile construction is exact, not conservative
        values = list(np.linspace(2.0, 120.0, 20))
        data = Dataset(make_records(values))
        f = SqrtShift(0.0)
        q = GroupBySumQuery("identity", "m1emp")
        trials, violations = 2000, 0
        gamma = 0.1
        for t in range(trials):
            identity = neighbor_mech(data, q, f, 0.5, 1.0, RngStream(777, t))
            bounds = pnc_bounds(identity, f, 0.5, 1.0, gamma, "m1emp")
            if any(bounds.bound_for(str(i + 1)) < v for i, v in enumerate(values)):
                violations += 1
        rate = violations / trials
        se = math.sqrt(gamma * (1 - gamma) / trials)
        assert abs(rate - gamma) < 4 * se


class TestAnswersCsv:
    def test_roundtrip_exact(self, tmp_path, small_dataset):
        out = neighbor_mech(
            small_dataset, GroupBySumQuery("county", "m1emp"),
            SqrtShift(0.0), 0.5, 1.0, RngStream(31, 0),
        )
        path = tmp_path / "answers.csv"
        write_answers_csv(out, path)
        again = read_answers_csv(path)
        assert again == out  # repr round-trips floats bit for bit

    def test_missing_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("group_key,value\ntotal,1.0\n")
        with pytest.raises(InputError, match="missing answer columns"):
            read_answers_csv(path)
