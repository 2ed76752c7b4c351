"""Multi-index utilities and chain-rule partitions against brute force and sympy."""
import itertools
import math
import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tfbounds.combinatorics import touchard
from tfbounds.multiindex import (ENUM_CAP_ENV, EnumerationCapError, count_equivalent, enum_ordered,
                                 enum_partitions, fdb_weight, mi_factorial, norm, order, precedes,
                                 type_key, weakly_precedes)
from tfbounds.primitives import compose_type_raw

from oracles import all_indices, chain_rule_case

small_index = st.lists(st.integers(min_value=0, max_value=4), min_size=1, max_size=5)


class TestBasics:
    def test_order_and_type(self):
        assert order((0, 2, 1)) == (2, 1, 0)
        assert type_key((0, 2, 1, 0)) == (2, 1)
        assert norm((3, 0, 1)) == 4
        assert mi_factorial((2, 3)) == 12

    @given(small_index)
    def test_count_equivalent_is_number_of_permutations(self, alpha):
        assert count_equivalent(alpha) == len(set(itertools.permutations(alpha)))

    def test_count_equivalent_padding(self):
        # (1) padded to length 3 has 3 placements
        assert count_equivalent((1,), 3) == 3
        assert count_equivalent((2, 1), 3) == 6
        assert count_equivalent((1, 1), 3) == 3
        # nonzero entries beyond length k admit no placement
        assert count_equivalent((1, 1, 1), 2) == 0
        assert count_equivalent((0, 0, 0), 3) == 1

    @pytest.mark.parametrize("k,n", [(1, 4), (2, 4), (3, 5), (4, 6), (5, 3)])
    def test_enum_ordered_matches_brute(self, k, n):
        brute = sorted({order(a) for a in all_indices(k, n)})
        assert sorted(enum_ordered(k, n)) == brute

    def test_enum_ordered_cumulative(self):
        cum = enum_ordered(2, 3, cumulative=True)
        assert set(cum) == {(0, 0), (1, 0), (2, 0), (1, 1), (3, 0), (2, 1)}

    @given(small_index)
    def test_order_idempotent_and_permutation_invariant(self, alpha):
        rng = random.Random(sum(alpha))
        shuffled = list(alpha)
        rng.shuffle(shuffled)
        assert order(order(alpha)) == order(alpha)
        assert order(shuffled) == order(alpha)

    def test_precedes(self):
        assert precedes((1, 0), (0, 2))
        assert precedes((0, 1), (1, 0))
        assert not precedes((1, 0), (1, 0))
        assert weakly_precedes((2,), (1, 1)) or weakly_precedes((1, 1), (2,))
        assert not weakly_precedes((1, 1), (1, 1))

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            order((1, -1))


class TestPartitions:
    def test_univariate_second_order(self):
        # (f o g)'' = f'' g'^2 + f' g''
        assert len(enum_partitions((2,), (1,))) == 1
        assert len(enum_partitions((2,), (2,))) == 1
        total = sum(len(enum_partitions((2,), (b,))) for b in (1, 2))
        assert total == 2

    def test_leading_blocks_are_zero(self):
        for term in enum_partitions((2, 1), (1, 1)):
            assert len(term.eta) == 3
            assert len(term.zeta) == 3
            nonzero = [any(e) for e in term.eta]
            assert nonzero == sorted(nonzero)

    def test_deterministic_order(self):
        assert enum_partitions((2, 1), (2,)) == enum_partitions((2, 1), (2,))

    @pytest.mark.parametrize("n", range(1, 7))
    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_weight_mass_is_touchard(self, n, m):
        # univariate alpha: total chain-rule mass over all beta is T(n, m)
        total = Fraction(0)
        for size in range(1, n + 1):
            for beta in all_indices(m, size):
                total += sum(fdb_weight(t, (n,)) for t in enum_partitions((n,), beta))
        assert total == touchard(n, m)

    def test_preconditions(self):
        with pytest.raises(ValueError):
            enum_partitions((0, 0), (1,))
        with pytest.raises(ValueError):
            enum_partitions((1,), (2,))
        with pytest.raises(ValueError):
            enum_partitions((2, 1), (1, 2), variant="type")

    def test_cap(self, monkeypatch):
        with pytest.raises(EnumerationCapError):
            enum_partitions((3,), (1,), cap=2)
        monkeypatch.setenv(ENUM_CAP_ENV, "2")
        with pytest.raises(EnumerationCapError):
            enum_partitions((2, 1), (1,))


class TestChainRuleIdentity:
    """The expansion reproduces D^alpha (f o g) exactly in rational arithmetic."""

    @pytest.mark.parametrize("seed", range(25))
    def test_random_polynomial_compositions(self, seed):
        lhs, rhs, desc = chain_rule_case(1000 + seed)
        assert lhs == rhs, desc


class TestTypeComposition:
    """Type-grouped composition equals the full sum when bounds depend on types only."""

    @pytest.mark.parametrize("alpha,m", [((1,), 2), ((2,), 2), ((1, 1), 2), ((2, 1), 3),
                                         ((1, 1, 1), 2), ((3,), 3), ((2, 2), 2), ((2, 1, 1), 2)])
    def test_matches_standard_sum(self, alpha, m):
        def outer(t):
            return 1.0 + 0.3 * sum(t) + 0.1 * len(t)

        def inner(t):
            return 0.5 + 0.25 * sum(t) ** 2 + 0.05 * len(t)

        n = sum(alpha)
        brute = 0.0
        for size in range(1, n + 1):
            for beta in all_indices(m, size):
                for term in enum_partitions(alpha, beta):
                    prod = float(fdb_weight(term, alpha))
                    for eta, zeta in term.blocks():
                        prod *= inner(type_key(zeta)) ** sum(eta)
                    brute += outer(type_key(beta)) * prod
        got = compose_type_raw(outer, inner, alpha, m).value()
        assert got == pytest.approx(brute, rel=1e-12)

    def test_unit_tables_give_touchard(self):
        for n in range(1, 6):
            got = compose_type_raw(lambda t: 1.0, lambda t: 1.0, (n,), 3).value()
            assert got == pytest.approx(touchard(n, 3), rel=1e-12)

    def test_affine_inner(self):
        # inner derivatives vanish above order one: only the beta of size |alpha| survives
        got = compose_type_raw(lambda t: 2.0, lambda t: 1.0 if sum(t) == 1 else 0.0, (2,), 1).value()
        assert got == pytest.approx(2.0)
        assert math.isclose(compose_type_raw(lambda t: 1.0, lambda t: 0.0, (1,), 1).value(), 0.0)
