import math

import pytest
from hypothesis import assume, given, strategies as st

from anomsearch import (
    Bernoulli,
    Exponential,
    Gaussian,
    RateReport,
    bayes_lower_bound,
    rate_multi,
    rate_single,
    relative_loss,
    supports_unknown_count,
    unknownl_lower_bound,
)

EXP_SLOW_FAST = Exponential(0.5, 10.0)  # d_gf=2.0457..., d_fg=16.0042...


def test_rate_report_validation():
    with pytest.raises(ValueError):
        RateReport(1.0, 1.0, 0.0, "g")
    with pytest.raises(ValueError):
        RateReport(1.0, 1.0, 1.0, "h")


class TestRateSingle:
    def test_regression_values(self):
        # frozen outputs for the two workhorse scenarios
        r = rate_single(EXP_SLOW_FAST, 5, 1)
        assert r.i_star == pytest.approx(4.001066931611502, rel=1e-12)
        assert r.regime == "f"

        r = rate_single(Exponential(2.0, 10.0), 5, 2)
        assert r.i_star == pytest.approx(1.4070784343255751, rel=1e-12)
        assert r.regime == "g"

    def test_full_sweep_sums_both_divergences(self):
        d_gf, d_fg = EXP_SLOW_FAST.kl_divergences()
        r = rate_single(EXP_SLOW_FAST, 4, 4)
        assert r.i_star == pytest.approx(d_gf + d_fg)

    def test_picks_better_arm(self):
        d_gf, d_fg = EXP_SLOW_FAST.kl_divergences()
        # K=2 of 5: pinning the leader gives d_gf + d_fg/4, spreading 2 d_fg/4
        r = rate_single(EXP_SLOW_FAST, 5, 2)
        assert r.i_star == pytest.approx(max(d_gf + d_fg / 4, 2 * d_fg / 4))
        assert r.regime == "f"
        # swap the densities and the leader arm dominates
        r = rate_single(Exponential(10.0, 0.5), 5, 2)
        assert r.regime == "g"

    def test_validation(self):
        with pytest.raises(ValueError):
            rate_single(EXP_SLOW_FAST, 1, 1)
        with pytest.raises(ValueError):
            rate_single(EXP_SLOW_FAST, 5, 6)
        with pytest.raises(ValueError):
            rate_single(EXP_SLOW_FAST, 5, 0)


GRID_MODELS = [
    EXP_SLOW_FAST,
    Exponential(10.0, 0.5),
    Bernoulli(0.1, 0.6),
    Bernoulli(0.2, 0.8),
    Gaussian(0.0, 1.0),
]
GRID_SHAPES = [(2, 1), (4, 3), (5, 2), (6, 6)]


@pytest.mark.parametrize("model", GRID_MODELS, ids=lambda m: m.kind)
@pytest.mark.parametrize("shape", GRID_SHAPES)
def test_multi_with_one_target_reduces_to_single(model, shape):
    m, k = shape
    assert rate_multi(model, m, k, 1) == rate_single(model, m, k)


class TestRateMulti:
    def test_hand_computed_arms(self):
        model = Bernoulli(0.1, 0.6)
        d_gf, d_fg = model.kl_divergences()
        # M=5, K=3, L=2: chase arm d_gf + (3-2) d_fg / 3, clear arm 3 d_fg / 3
        r = rate_multi(model, 5, 3, 2)
        assert r.i_star == pytest.approx(max(d_gf + d_fg / 3, d_fg))

    def test_fewer_probes_than_targets(self):
        model = Exponential(10.0, 0.5)
        d_gf, d_fg = model.kl_divergences()
        # K=1 < L=2 rotates over candidates: d_gf / 2 vs clearing d_fg / 3
        r = rate_multi(model, 5, 1, 2)
        assert r.i_star == pytest.approx(max(d_gf / 2, d_fg / 3))
        assert r.regime == "g"

    def test_more_probes_than_normals(self):
        model = EXP_SLOW_FAST
        d_gf, d_fg = model.kl_divergences()
        # K=4 > M-L=3 spills one probe onto the candidates
        r = rate_multi(model, 5, 4, 2)
        assert r.i_star == pytest.approx(max(d_gf + 2 * d_fg / 3, d_fg + d_gf / 2))

    def test_validation(self):
        with pytest.raises(ValueError):
            rate_multi(EXP_SLOW_FAST, 5, 1, 0)
        with pytest.raises(ValueError):
            rate_multi(EXP_SLOW_FAST, 5, 1, 5)


class TestBayesLowerBound:
    def test_hand_value(self):
        assert bayes_lower_bound(0.01, 2.0) == pytest.approx(-0.01 * math.log(0.01) / 2)

    def test_scales_inversely_with_rate(self):
        assert bayes_lower_bound(0.05, 4.0) == pytest.approx(bayes_lower_bound(0.05, 2.0) / 2)

    def test_peaks_at_one_over_e(self):
        peak = bayes_lower_bound(math.exp(-1.0), 1.0)
        assert peak == pytest.approx(math.exp(-1.0))
        for c in (0.05, 0.2, 0.5, 0.9):
            assert bayes_lower_bound(c, 1.0) < peak

    def test_rejects_degenerate_inputs(self):
        for c in (0.0, 1.0, -0.1):
            with pytest.raises(ValueError):
                bayes_lower_bound(c, 1.0)
        with pytest.raises(ValueError):
            bayes_lower_bound(0.5, 0.0)

    def test_report_shortcut_matches(self):
        r = rate_single(EXP_SLOW_FAST, 5, 1)
        assert r.lower_bound_at(0.01) == bayes_lower_bound(0.01, r.i_star)


def test_relative_loss():
    assert relative_loss(1.5, 1.0) == pytest.approx(0.5)
    assert relative_loss(1.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        relative_loss(1.0, 0.0)


class TestSupportsUnknownCount:
    def test_known_cases(self):
        # 2 (0.9014 + 0.4320) / 0.9014 = 2.958 fits inside M=3
        assert supports_unknown_count(Exponential(3.0, 1.0), 3, 2)
        # bernoulli(0.1, 0.6) needs M >= 3.467, so 3 cells fall short
        assert not supports_unknown_count(Bernoulli(0.1, 0.6), 3, 2)
        assert supports_unknown_count(Bernoulli(0.1, 0.6), 4, 2)

    def test_validation(self):
        with pytest.raises(ValueError):
            supports_unknown_count(EXP_SLOW_FAST, 1, 1)
        with pytest.raises(ValueError):
            supports_unknown_count(EXP_SLOW_FAST, 3, 3)

    @given(
        lam_f=st.floats(0.1, 20.0),
        lam_g=st.floats(0.1, 20.0),
        m=st.integers(2, 8),
        data=st.data(),
    )
    def test_agrees_with_full_sweep_regime(self, lam_f, lam_g, m, data):
        assume(abs(lam_f - lam_g) > 1e-6)
        l = data.draw(st.integers(1, m - 1))
        model = Exponential(lam_f, lam_g)
        d_gf, d_fg = model.kl_divergences()
        # keep clear of the knife edge where float rounding could differ
        assume(abs(m * d_gf - l * (d_gf + d_fg)) > 1e-9 * (d_gf + d_fg))
        expected = rate_multi(model, m, m, l).regime == "g"
        assert supports_unknown_count(model, m, l) == expected


def test_unknownl_lower_bound():
    # three targets at c=0.1 against the slow/fast exponential pair
    got = unknownl_lower_bound(0.1, 3, EXP_SLOW_FAST)
    assert got == pytest.approx(3 * 0.1 * math.log(10.0) / 2.0457322735539907)
    with pytest.raises(ValueError):
        unknownl_lower_bound(0.0, 1, EXP_SLOW_FAST)
    with pytest.raises(ValueError):
        unknownl_lower_bound(0.1, 0, EXP_SLOW_FAST)
