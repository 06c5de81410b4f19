import datetime as dt
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import binomial_pmf_exact, enumerate_poisson_binomial
from tradecorr.cluster import ClusterCut
from tradecorr.errors import DegenerateRegressorError, ExactModeLimitError
from tradecorr.ingest import TradeRecord, Venue
from tradecorr.persistence import (
    LinkMap,
    RestingOrder,
    Track,
    chain_links,
    exact_poisson_binomial,
    format_coef,
    link_codes,
    minority_counts,
    minority_probability,
    minority_report,
    next_month,
    ols,
    persistence_pairs,
    resting_orders,
)
from tradecorr.spectra import correlate

B = ("2000-10", "2000-11")


def ro(oid, a, b, boundary=B):
    return RestingOrder(oid, a, b, boundary)


class TestLinkCodes:
    def test_single_order(self):
        lm = link_codes([ro("AT82F31E13", "2331", "4142")])
        assert lm.links == {"2331": "4142"}
        assert lm.evidence == {"2331": 1}
        assert lm.boundary == B

    def test_two_agreeing(self):
        lm = link_codes([ro("o1", "A", "B"), ro("o2", "A", "B")])
        assert lm.evidence == {"A": 2}
        assert lm.conflicts == ()

    def test_majority_vote(self):
        orders = [ro("o1", "A", "B"), ro("o2", "A", "B"), ro("o3", "A", "C")]
        lm = link_codes(orders)
        assert lm.links == {"A": "B"}
        assert lm.conflicts == (orders[2],)

    def test_vote_tie_drops(self):
        lm = link_codes([ro("o1", "A", "B"), ro("o2", "A", "C")])
        assert lm.links == {}
        assert len(lm.conflicts) == 2

    def test_target_clash_keeps_stronger(self):
        lm = link_codes([ro("o1", "A", "X"), ro("o2", "A", "X"), ro("o3", "B", "X")])
        assert lm.links == {"A": "X"}

    def test_target_clash_tie_drops_both(self):
        lm = link_codes([ro("o1", "A", "X"), ro("o2", "B", "X")])
        assert lm.links == {}

    def test_empty(self):
        assert link_codes([]).links == {}

    def test_injectivity_enforced(self):
        with pytest.raises(ValueError):
            LinkMap(B, {"A": "X", "B": "X"}, {"A": 1, "B": 1})


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("ABCD"), st.sampled_from("WXYZ")), max_size=20))
def test_link_map_invariants(raw):
    orders = [ro(f"o{i}", a, b) for i, (a, b) in enumerate(raw)]
    lm = link_codes(orders)
    assert len(set(lm.links.values())) == len(lm.links)
    assert all(lm.evidence[a] >= 1 for a in lm.links)
    for a, b in lm.links.items():
        assert lm.evidence[a] == sum(1 for o in orders if (o.before, o.after) == (a, b))


def test_resting_orders_from_records():
    def rec(ts, inst, oid):
        return TradeRecord(dt.datetime.fromisoformat(ts), "VOD", Venue.ON_BOOK, inst, 10.0, oid)

    records = [
        rec("2000-10-31T16:10", "2331", "AT82F31E13"),
        rec("2000-11-01T08:05", "4142", "AT82F31E13"),
        rec("2000-11-01T09:05", "9999", "ZZ"),
        rec("2001-01-02T09:05", "9999", "ZZ"),  # not consecutive
    ]
    out = resting_orders(records)
    assert out == {B: [RestingOrder("AT82F31E13", "2331", "4142", B)]}
    assert next_month("2000-12") == "2001-01"


class TestChain:
    def test_composition(self):
        m1 = LinkMap(("m1", "m2"), {"A": "B"}, {"A": 1})
        m2 = LinkMap(("m2", "m3"), {"B": "C"}, {"B": 1})
        (t,) = chain_links([m1, m2])
        assert t.codes == ("A", "B", "C") and len(t) == 3
        assert t.months == ("m1", "m2", "m3")
        assert t.code_in("m2") == "B"

    def test_missing_middle_link(self):
        m1 = LinkMap(("m1", "m2"), {"A": "B"}, {"A": 1})
        m2 = LinkMap(("m2", "m3"), {"Q": "R"}, {"Q": 1})
        m3 = LinkMap(("m3", "m4"), {"R": "S"}, {"R": 1})
        tracks = chain_links([m1, m2, m3])
        assert [t.codes for t in tracks] == [("A", "B"), ("Q", "R", "S")]

    def test_gap_in_months(self):
        m1 = LinkMap(("m1", "m2"), {"A": "B"}, {"A": 1})
        m3 = LinkMap(("m3", "m4"), {"B": "C"}, {"B": 1})
        assert [t.codes for t in chain_links([m1, m3])] == [("A", "B"), ("B", "C")]

    def test_associative(self):
        maps = [LinkMap((f"m{i}", f"m{i + 1}"), {f"c{i}": f"c{i + 1}", f"d{i}": f"d{i + 1}"}, {f"c{i}": 1, f"d{i}": 1}) for i in range(5)]
        whole = chain_links(maps)
        assert sorted(t.codes for t in whole) == [tuple(f"c{i}" for i in range(6)), tuple(f"d{i}" for i in range(6))]


def test_persistence_pairs_three_institutions():
    rng = np.random.default_rng(0)
    c0 = correlate(rng.integers(-1, 2, size=(4, 30)), codes=["a", "b", "c", "z"])
    c1 = correlate(rng.integers(-1, 2, size=(3, 30)), codes=["A", "B", "C"])
    lm = LinkMap(B, {"a": "A", "b": "B", "c": "C"}, {"a": 1, "b": 1, "c": 1})
    pairs = persistence_pairs({B[0]: c0, B[1]: c1}, [lm])
    assert len(pairs) == 3
    assert pairs[0] == (c0.rho[0, 1], c1.rho[0, 1])
    empty = LinkMap(B, {}, {})
    assert persistence_pairs({B[0]: c0, B[1]: c1}, [empty]) == []


class TestOLS:
    def test_exact_line(self):
        x = np.linspace(-1, 1, 11)
        r = ols(list(zip(x, 0.1 + 0.5 * x)))
        assert r.alpha == pytest.approx(0.1, abs=1e-14)
        assert r.beta == pytest.approx(0.5, abs=1e-14)
        assert r.r2 == pytest.approx(1.0, abs=1e-12)

    def test_hand_points(self):
        r = ols([(0, 0), (1, 1), (2, 1), (3, 2)])
        assert r.beta == pytest.approx(0.6, abs=1e-14)
        assert r.alpha == pytest.approx(0.1, abs=1e-14)
        assert r.r2 == pytest.approx(0.9, abs=1e-14)
        # residuals -0.1, 0.3, -0.3, 0.1: s^2 = 0.2 / 2, sxx = 5
        assert r.se_beta == pytest.approx(math.sqrt(0.1 / 5), abs=1e-14)
        assert r.n_pairs == 4

    def test_closed_form_cov_over_var(self):
        xs = [0.5, -0.25, 0.75, 0.125, -1.0, 0.0]
        ys = [0.25, 0.5, -0.5, 0.375, 0.0, 1.0]
        r = ols(list(zip(xs, ys)))
        cov = np.cov(xs, ys, ddof=1)
        assert r.beta == pytest.approx(cov[0, 1] / cov[0, 0], abs=1e-12)

    def test_degenerate(self):
        with pytest.raises(DegenerateRegressorError):
            ols([(1, 0), (1, 1), (1, 2)])

    def test_too_few(self):
        with pytest.raises(ValueError):
            ols([(0, 0), (1, 1)])

    def test_format(self):
        assert format_coef(0.17, 0.01, 0.0) == "0.170 ± 0.010 (0.00)"


def _cut(minority, majority):
    return ClusterCut(None, (tuple(majority), tuple(minority)), 0, 1)


class TestMinorityCounts:
    def test_sixteen_of_32(self):
        months = [f"m{i:02d}" for i in range(32)]
        cuts = {}
        for i, m in enumerate(months):
            inst = f"x{i}"
            others = [f"o{i}_{j}" for j in range(3)]
            cuts[m] = _cut([inst, others[0]], others[1:]) if i % 2 == 0 else _cut(others[:2], [inst, others[2]])
        track = Track(0, tuple(f"x{i}" for i in range(32)), tuple(months))
        (mc,) = minority_counts(cuts, [track])
        assert (mc.x, mc.K_active) == (16, 32)
        assert mc.p_k == (0.5,) * 32

    def test_never_active_excluded(self):
        months = [f"m{i:02d}" for i in range(20)]
        cuts = {m: _cut(["a"], ["b", "c"]) for m in months}
        assert minority_counts(cuts, [Track(0, ("zz",) * 20, tuple(months))]) == []

    def test_threshold_is_strict(self):
        months = [f"m{i:02d}" for i in range(13)]
        cuts = {m: _cut(["a"], ["b", "c"]) for m in months}
        assert len(minority_counts(cuts, [Track(0, ("a",) * 13, tuple(months))])) == 1
        assert minority_counts(cuts, [Track(0, ("a",) * 12, tuple(months[:12]))]) == []

    def test_singleton_flag(self):
        months = [f"m{i:02d}" for i in range(13)]
        cuts = {m: _cut(["a"], ["b", "c"]) for m in months}
        assert minority_counts(cuts, [Track(0, ("b",) * 13, tuple(months))], exclude_singleton_minority=True) == []


class TestPoissonBinomial:
    def test_certain(self):
        np.testing.assert_array_equal(exact_poisson_binomial([1.0]), [0.0, 1.0])

    def test_two_coins(self):
        np.testing.assert_array_equal(exact_poisson_binomial([0.5, 0.5]), [0.25, 0.5, 0.25])

    def test_three_heterogeneous(self):
        # direct expansion of the product gives 0.144, 0.468, 0.332, 0.056
        pmf = exact_poisson_binomial([0.2, 0.7, 0.4])
        np.testing.assert_allclose(pmf, [0.144, 0.468, 0.332, 0.056], atol=1e-15)
        np.testing.assert_allclose(pmf, enumerate_poisson_binomial([0.2, 0.7, 0.4]), atol=1e-15)
        exact = exact_poisson_binomial([Fraction(1, 5), Fraction(7, 10), Fraction(2, 5)])
        assert exact == [Fraction(18, 125), Fraction(117, 250), Fraction(83, 250), Fraction(7, 125)]

    def test_equal_p_is_binomial(self):
        for p in (Fraction(1, 2), Fraction(3, 7)):
            assert exact_poisson_binomial([p] * 12) == binomial_pmf_exact(p, 12)

    def test_limit(self):
        with pytest.raises(ExactModeLimitError):
            exact_poisson_binomial([0.5] * 65)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(0.0, 1.0), min_size=0, max_size=10))
    def test_against_enumeration(self, p):
        pmf = exact_poisson_binomial(p)
        assert abs(pmf.sum() - 1) <= 1e-12
        np.testing.assert_allclose(pmf, enumerate_poisson_binomial(p), atol=1e-12)


class TestMinorityProbability:
    def test_two_coins_exact(self):
        assert minority_probability(2, [0.5, 0.5], method="exact") == 0.75

    def test_two_coins_mc(self):
        p = minority_probability(2, [0.5, 0.5], trials=100_000, seed=1)
        assert abs(p - 0.75) <= 3 * math.sqrt(0.25 * 0.75 / 100_000)

    def test_central_binomial(self):
        tail = float(sum(binomial_pmf_exact(Fraction(1, 2), 32)[16:]))
        assert round(tail, 2) == 0.57
        assert minority_probability(16, [0.5] * 32, method="exact") == pytest.approx(1 - tail, abs=1e-12)
        mc = minority_probability(16, [0.5] * 32, trials=100_000, seed=2)
        assert abs(mc - (1 - tail)) <= 3 * math.sqrt(tail * (1 - tail) / 100_000)

    def test_heterogeneous_length_eight(self):
        p = [0.1, 0.25, 0.4, 0.55, 0.3, 0.2, 0.65, 0.15]
        exact = minority_probability(5, p, method="exact")
        tail = 1 - exact
        mc = minority_probability(5, p, trials=100_000, seed=3)
        assert abs(mc - exact) <= 3 * math.sqrt(tail * (1 - tail) / 100_000)

    def test_convergence_rate(self):
        p = [0.2, 0.35, 0.5, 0.15, 0.4, 0.3]
        exact = minority_probability(3, p, method="exact")
        se = math.sqrt(exact * (1 - exact))
        for trials in (10_000, 100_000):
            errs = [abs(minority_probability(3, p, trials=trials, seed=s) - exact) for s in range(20)]
            assert np.sqrt(np.mean(np.square(errs))) <= 2 * se / math.sqrt(trials)

    def test_trials_floor(self):
        with pytest.raises(ValueError):
            minority_probability(1, [0.5], trials=9_999)

    def test_deterministic(self):
        assert minority_probability(3, [0.3] * 10, seed=5) == minority_probability(3, [0.3] * 10, seed=5)

    def test_report(self):
        months = [f"m{i:02d}" for i in range(14)]
        cuts = {m: _cut(["a"], ["b", "c", "d"]) for m in months}
        counts = minority_counts(cuts, [Track(0, ("a",) * 14, tuple(months))])
        (row,) = minority_report(counts, method="exact")
        assert row.code == "a" and row.x == 14 and row.K_active == 14
        assert row.prob_nonrandom == pytest.approx(1 - 0.25**14, abs=1e-15)
