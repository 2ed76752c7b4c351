"""Rate function phases, bound terms, envelope and transition times."""
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tfbounds.combinatorics import LogMagnitude
from tfbounds.genbound import (GenBoundInput, assembled_bound, bound_terms, envelope, log_rate, rate,
                               transition_times)


def make_input(consts, kappa=0.5, delta=0.05, N=100, t=math.inf, Md=2):
    return GenBoundInput(kappa=kappa, delta=delta, N=N, t=t, Md=Md,
                         constants={s: LogMagnitude.of(c) for s, c in enumerate(consts)})


class TestRate:
    def test_critical_example(self):
        assert rate(100, 1, 2, 0.5) == pytest.approx(math.log(50) / (0.5 * 10), rel=1e-12)
        assert rate(100, 1, 2, 0.5) == pytest.approx(0.78240, abs=1e-5)

    def test_initial_phase(self):
        N, s, Md, kappa = 1000, 1, 5, 0.3
        c = 1 - kappa
        expected = math.log(c * N) ** (Md - 2 * s + s / Md) / (c ** (s / Md) * N ** (s / Md))
        assert rate(N, s, Md, kappa) == pytest.approx(expected, rel=1e-12)

    def test_eventual_phase(self):
        N, s, Md, kappa = 1000, 3, 2, 0.3
        c = 1 - kappa
        expected = math.log(c * N) ** (Md / (2 * s + 1)) / (c * math.sqrt(N))
        assert rate(N, s, Md, kappa) == pytest.approx(expected, rel=1e-12)

    def test_gap_to_limit_shrinks_with_s(self):
        N, kappa = 10**6, 0.5
        limit = 1 / ((1 - kappa) * math.sqrt(N))
        gaps = [rate(N, s, 2, kappa) / limit - 1 for s in (2, 5, 50, 500, 5000)]
        assert all(a > b > 0 for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] < 1e-3

    def test_vanishes_in_N(self):
        vals = [rate(10**p, 2, 3, 0.5) for p in (3, 6, 9, 12)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_out_of_regime(self):
        with pytest.raises(ValueError):
            rate(1, 1, 2, 0.5)
        with pytest.raises(ValueError):
            rate(3, 1, 2, 0.9)
        with pytest.raises(ValueError):
            log_rate(100, -1, 2, 0.5)

    def test_log_rate_huge_N(self):
        assert math.isfinite(log_rate(1e300, 4, 2, 0.5))


class TestTerms:
    def test_infinite_horizon(self):
        time_term, _, _ = bound_terms(make_input([1, 1]), 1)
        assert time_term == 0.0

    def test_finite_horizon(self):
        time_term, _, _ = bound_terms(make_input([1, 1], t=200), 1)
        assert time_term == pytest.approx(0.5**200)

    def test_delta_one(self):
        _, _, hprob = bound_terms(make_input([1, 1], delta=1.0), 1)
        assert hprob == 0.0

    def test_hprob(self):
        _, _, hprob = bound_terms(make_input([1, 1], delta=0.05, N=400), 1)
        assert hprob == pytest.approx(math.sqrt(2 * math.log(20)) / 20)

    def test_assembled(self):
        inp = make_input([2.0, 3.0])
        expected = 3.0 * sum(bound_terms(inp, 1))
        assert assembled_bound(inp, 1).value() == pytest.approx(expected)
        with pytest.raises(KeyError):
            assembled_bound(inp, 5)

    def test_small_kappa(self):
        inp = make_input([1, 1], kappa=1e-9, t=1000)
        time_term, r, _ = bound_terms(inp, 1)
        assert time_term == 0.0
        assert r == pytest.approx(math.log(100) / 10, rel=1e-6)

    def test_validation(self):
        with pytest.raises(ValueError):
            make_input([1], kappa=1.0)
        with pytest.raises(ValueError):
            make_input([1], delta=0.0)
        with pytest.raises(ValueError):
            make_input([1], t=10)
        with pytest.raises(ValueError):
            GenBoundInput(0.5, 0.05, 100, math.inf, 2, {})
        with pytest.raises(ValueError):
            GenBoundInput(0.5, 0.05, 100, math.inf, 2, {0: LogMagnitude.one(), 2: LogMagnitude.one()})
        with pytest.raises(ValueError):
            GenBoundInput(0.5, 0.05, 100, math.inf, 2, {2: LogMagnitude.one()})


class TestEnvelope:
    def test_single_constant(self):
        inp = GenBoundInput(0.5, 0.05, 100, math.inf, 2, {1: LogMagnitude.of(5.0)})
        assert {s for _, s, _ in envelope(inp, [10, 100, 10**4], 1)} == {1}

    def test_equal_constants_small_and_large_N(self):
        inp = make_input([1.0] * 6)
        rows = envelope(inp, [3, 10**12], 5)
        assert rows[0][1] == 0
        assert rows[-1][1] == 5

    @given(st.integers(min_value=2, max_value=8), st.floats(min_value=0.1, max_value=0.9))
    def test_best_s_nondecreasing_for_constant_tables(self, Md, kappa):
        inp = make_input([1.0] * 6, kappa=kappa, Md=Md)
        ns = [int(10 ** (p / 2)) for p in range(4, 30)]
        best = [s for _, s, _ in envelope(inp, ns, 5)]
        assert all(a <= b for a, b in zip(best, best[1:]))

    def test_empty_range(self):
        with pytest.raises(ValueError):
            envelope(make_input([1, 1]), [], 1)


class TestTransitions:
    def test_tau_zero(self):
        assert transition_times(make_input([1.0, 2.0]), 1)[0] == 0

    def test_equal_constants_finite(self):
        taus = transition_times(make_input([1.0] * 5, Md=2, delta=0.05), 4)
        assert all(t is not None for t in taus)

    def test_first_crossing(self):
        inp = make_input([1.0, 30.0, 900.0])
        taus = transition_times(inp, 2)
        for s in (1, 2):
            t = taus[s]
            if t is None:
                continue
            at = inp.with_(N=t, t=t)
            assert assembled_bound(at, s) <= assembled_bound(at, s - 1)
            if t - 1 >= max(taus[s - 1], 3):
                before = inp.with_(N=t - 1, t=t - 1)
                assert assembled_bound(before, s) > assembled_bound(before, s - 1)

    def test_unreached(self):
        # a constant 1e30 times larger cannot be recovered by a polylog gain below the cap
        taus = transition_times(make_input([1.0, 1e30, 1e60]), 2, cap=10**6)
        assert taus[1] is None and taus[2] is None

    def test_needs_order_zero(self):
        inp = GenBoundInput(0.5, 0.05, 100, math.inf, 2, {1: LogMagnitude.one(), 2: LogMagnitude.one()})
        with pytest.raises(ValueError):
            transition_times(inp, 2)

    @given(st.lists(st.floats(min_value=0.5, max_value=50.0), min_size=3, max_size=5),
           st.integers(min_value=1, max_value=6), st.floats(min_value=1e-3, max_value=1e3))
    def test_monotone_and_rescaling_invariant(self, consts, Md, scale):
        inp = make_input(consts, Md=Md)
        taus = transition_times(inp, len(consts) - 1)
        reached = [t for t in taus if t is not None]
        assert all(a <= b for a, b in zip(reached, reached[1:]))
        # once unreached, always unreached
        if None in taus:
            assert all(t is None for t in taus[taus.index(None):])
        scaled = make_input([c * scale for c in consts], Md=Md)
        assert transition_times(scaled, len(consts) - 1) == taus
