"""Finite point measures on the tick grid and the displacement law.

An :class:`OrderBook` is a multiset of nonnegative integer levels.  Its
price is the highest occupied level, with the empty book priced at 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np

PMF_TOL = 1e-12


class OrderBook:
    """Counts per level plus a cached price.  Operations return new books."""

    __slots__ = ("_counts", "_top")

    def __init__(self, counts: Mapping[int, int] | None = None):
        self._counts: dict[int, int] = {}
        for level, c in (counts or {}).items():
            level, c = int(level), int(c)
            if level < 0:
                raise ValueError(f"negative level {level}")
            if c < 0:
                raise ValueError(f"negative multiplicity at level {level}")
            if c:
                self._counts[level] = c
        self._top = max(self._counts) if self._counts else None

    @classmethod
    def empty(cls) -> "OrderBook":
        return cls()

    @classmethod
    def from_levels(cls, levels: Iterable[int]) -> "OrderBook":
        counts: dict[int, int] = {}
        for level in levels:
            counts[int(level)] = counts.get(int(level), 0) + 1
        return cls(counts)

    @classmethod
    def parse(cls, text: str) -> "OrderBook":
        """Inverse of :meth:`dumps`: ``"0:2,3:1"``; empty string is the empty book."""
        text = text.strip()
        if not text:
            return cls()
        counts: dict[int, int] = {}
        for item in text.split(","):
            level, _, c = item.partition(":")
            counts[int(level)] = counts.get(int(level), 0) + int(c)
        return cls(counts)

    def dumps(self) -> str:
        return ",".join(f"{k}:{self._counts[k]}" for k in sorted(self._counts))

    @property
    def counts(self) -> dict[int, int]:
        return dict(self._counts)

    def is_empty(self) -> bool:
        return not self._counts

    def count(self, level: int) -> int:
        return self._counts.get(level, 0)

    def price(self) -> int:
        return 0 if self._top is None else self._top

    def mass(self) -> int:
        return sum(self._counts.values())

    def mass_at_or_above(self, level: int) -> int:
        return sum(c for k, c in self._counts.items() if k >= level)

    def mass_at_or_below(self, level: int) -> int:
        return sum(c for k, c in self._counts.items() if k <= level)

    def levels(self) -> list[int]:
        """Sorted list of atoms with multiplicity."""
        out: list[int] = []
        for k in sorted(self._counts):
            out.extend([k] * self._counts[k])
        return out

    def to_array(self, size: int | None = None) -> np.ndarray:
        """Dense count vector indexed by level."""
        n = (self.price() + 1) if size is None else size
        arr = np.zeros(max(n, 1), dtype=np.int64)
        for k, c in self._counts.items():
            if k < arr.shape[0]:
                arr[k] = c
        return arr

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OrderBook):
            return NotImplemented
        return self._counts == other._counts

    def __hash__(self) -> int:
        return hash(tuple(sorted(self._counts.items())))

    def __repr__(self) -> str:
        return f"OrderBook({self.dumps()!r})"


def price(book: OrderBook) -> int:
    return book.price()


def mass(book: OrderBook) -> int:
    return book.mass()


def add_order(book: OrderBook, j: int) -> OrderBook:
    """Add one order at ``max(price + j, 0)``."""
    level = max(book.price() + int(j), 0)
    out = OrderBook.__new__(OrderBook)
    out._counts = dict(book._counts)
    out._counts[level] = out._counts.get(level, 0) + 1
    out._top = level if book._top is None else max(book._top, level)
    return out


def remove_at_price(book: OrderBook) -> OrderBook:
    if book.is_empty():
        raise ValueError("cannot remove from an empty book")
    top = book._top
    out = OrderBook.__new__(OrderBook)
    out._counts = dict(book._counts)
    if out._counts[top] == 1:
        del out._counts[top]
        out._top = max(out._counts) if out._counts else None
    else:
        out._counts[top] -= 1
        out._top = top
    return out


def shift_above(book: OrderBook, a: int) -> OrderBook:
    """Keep atoms at levels >= a, translated down by a."""
    if a < 0:
        raise ValueError("shift level must be nonnegative")
    return OrderBook({k - a: c for k, c in book._counts.items() if k >= a})


@dataclass(frozen=True)
class ScaledMeasure:
    """Lazy view of a book with atoms of mass 1/n at positions level/n."""

    base: OrderBook
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("scaling index must be >= 1")

    def tail(self, y: float) -> float:
        """Mass of [y, inf): (1/n) * #atoms at levels >= n*y."""
        threshold = math.ceil(self.n * y - 1e-12)
        return self.base.mass_at_or_above(threshold) / self.n

    def cdf(self, y: float) -> float:
        """Mass of [0, y]."""
        return self.base.mass_at_or_below(math.floor(self.n * y + 1e-12)) / self.n

    def atoms(self) -> list[tuple[float, float]]:
        return [(k / self.n, c / self.n) for k, c in sorted(self.base.counts.items())]

    def price(self) -> float:
        return self.base.price() / self.n

    def mass(self) -> float:
        return self.base.mass() / self.n

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ScaledMeasure):
            return NotImplemented
        return self.atoms() == other.atoms()


def scale(book: OrderBook, n: int) -> ScaledMeasure:
    return ScaledMeasure(book, int(n))


@dataclass(frozen=True)
class JumpDistribution:
    """Law of the displacement J on {-j_star, ..., 0, 1}."""

    pmf: Mapping[int, float]
    values: np.ndarray = field(init=False, repr=False, compare=False)
    cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pmf = {int(k): float(v) for k, v in self.pmf.items() if float(v) != 0.0}
        if not pmf:
            raise ValueError("empty pmf")
        if any(v < 0 for v in pmf.values()):
            raise ValueError("negative probability")
        total = sum(pmf.values())
        if abs(total - 1.0) > PMF_TOL:
            raise ValueError(f"pmf sums to {total!r}, not 1")
        if max(pmf) > 1:
            raise ValueError("displacements above +1 are not allowed")
        if pmf.get(1, 0.0) <= 0.0:
            raise ValueError("P(J = 1) must be positive")
        mean = sum(k * v for k, v in pmf.items())
        if mean <= 0:
            raise ValueError(f"E(J) = {mean} must be positive")
        object.__setattr__(self, "pmf", dict(sorted(pmf.items())))
        values = np.array(sorted(pmf), dtype=np.int64)
        cum = np.cumsum([pmf[int(k)] for k in values])
        cum[-1] = 1.0
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "cum", cum)

    @classmethod
    def parse(cls, text: str) -> "JumpDistribution":
        """``"-1:0.3,1:0.7"``; probabilities may be fractions like ``1/3``."""
        pmf: dict[int, float] = {}
        try:
            for item in text.replace(" ", "").split(","):
                k, _, p = item.partition(":")
                pmf[int(k)] = pmf.get(int(k), 0.0) + float(Fraction(p))
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"cannot parse pmf {text!r}") from exc
        return cls(pmf)

    @classmethod
    def degenerate_up(cls) -> "JumpDistribution":
        return cls({1: 1.0})

    def dumps(self) -> str:
        return ",".join(f"{k}:{v:g}" for k, v in self.pmf.items())

    @property
    def mean(self) -> float:
        return float(sum(k * v for k, v in self.pmf.items()))

    @property
    def p1(self) -> float:
        return float(self.pmf.get(1, 0.0))

    @property
    def j_star(self) -> int:
        return max(0, -min(self.pmf))

    def prob(self, j: int) -> float:
        return float(self.pmf.get(int(j), 0.0))

    def sample(self, rng: np.random.Generator, size=None):
        return rng.choice(self.values, size=size, p=np.diff(np.concatenate([[0.0], self.cum])))

    def mgf(self, s: float) -> float:
        """E(exp(s J))."""
        return float(sum(v * math.exp(s * k) for k, v in self.pmf.items()))

    def lundberg_exponent(self) -> float:
        """kappa > 0 with E(exp(-kappa J)) = 1; inf when J >= 0 a.s."""
        if min(self.pmf) >= 0:
            return math.inf
        # s -> E(exp(-sJ)) is convex, starts at 1 with slope -E(J) < 0
        lo, hi = 1e-9, 1.0
        while self.mgf(-hi) < 1.0:
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.mgf(-mid) < 1.0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)
