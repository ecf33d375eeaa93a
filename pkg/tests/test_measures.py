import math

import pytest
from hypothesis import given, strategies as st

from lobtree.measures import (JumpDistribution, OrderBook, add_order, mass, price,
                              remove_at_price, scale, shift_above)

books = st.dictionaries(st.integers(0, 30), st.integers(1, 4), max_size=8).map(OrderBook)


def test_price_examples():
    assert price(OrderBook()) == 0
    assert price(OrderBook.parse("0:2,3:1")) == 3
    b = add_order(OrderBook(), -2)
    assert b.dumps() == "0:1" and price(b) == 0


def test_add_order_examples():
    b = add_order(OrderBook({5: 1}), 1)
    assert b.dumps() == "5:1,6:1" and price(b) == 6
    assert add_order(OrderBook({5: 1}), -7).dumps() == "0:1,5:1"
    assert add_order(OrderBook(), 1).dumps() == "1:1"


def test_remove_examples():
    b = remove_at_price(OrderBook({3: 2}))
    assert b.dumps() == "3:1" and price(b) == 3
    b = remove_at_price(OrderBook({0: 1, 3: 1}))
    assert b.dumps() == "0:1" and price(b) == 0
    b = remove_at_price(OrderBook({3: 1}))
    assert b.is_empty() and price(b) == 0
    with pytest.raises(ValueError):
        remove_at_price(OrderBook())


def test_scale_examples():
    b = OrderBook({3: 1, 4: 1})
    assert scale(b, 1).atoms() == [(3.0, 1.0), (4.0, 1.0)]
    s = scale(b, 2)
    assert s.atoms() == [(1.5, 0.5), (2.0, 0.5)]
    assert s.tail(2) == 0.5
    with pytest.raises(ValueError):
        scale(b, 0)


def test_shift_examples():
    b = OrderBook({2: 1, 5: 3})
    assert shift_above(b, 0) == b
    assert shift_above(b, 3).dumps() == "2:3"
    assert shift_above(OrderBook({2: 1}), 3).is_empty()


def test_roundtrip_dumps():
    b = OrderBook.parse("0:2,3:1")
    assert b.dumps() == "0:2,3:1"
    assert OrderBook.parse("") == OrderBook()


@given(books, st.integers(-5, 1))
def test_add_increments_mass(b, j):
    assert mass(add_order(b, j)) == mass(b) + 1


@given(books)
def test_remove_decrements_mass(b):
    if not b.is_empty():
        assert mass(remove_at_price(b)) == mass(b) - 1


@given(books, st.integers(1, 7), st.floats(0, 40))
def test_scaled_tail_matches_count(b, n, y):
    direct = sum(c for k, c in b.counts.items() if k >= math.ceil(n * y - 1e-12)) / n
    assert scale(b, n).tail(y) == pytest.approx(direct)


@given(books, st.integers(0, 10), st.integers(0, 10))
def test_shift_composes(b, a, a2):
    assert shift_above(shift_above(b, a), a2) == shift_above(b, a + a2)


def test_jump_distribution():
    J = JumpDistribution.parse("-1:0.3,1:0.7")
    assert J.mean == pytest.approx(0.4)
    assert J.p1 == pytest.approx(0.7)
    assert J.j_star == 1
    assert J.dumps() == "-1:0.3,1:0.7"
    assert JumpDistribution.parse("-1:1/3,1:2/3").mean == pytest.approx(1 / 3)
    # E exp(-kappa J) = 1 has root ln(7/3)
    assert J.lundberg_exponent() == pytest.approx(math.log(7 / 3), rel=1e-9)
    assert JumpDistribution.degenerate_up().lundberg_exponent() == math.inf


@pytest.mark.parametrize("text", ["-1:0.5,1:0.4", "2:0.5,1:0.5", "-1:0.7,1:0.3", "0:1", "x:1"])
def test_jump_distribution_rejects(text):
    with pytest.raises(ValueError):
        JumpDistribution.parse(text)
