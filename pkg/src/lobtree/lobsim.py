"""Event-driven simulation of the one-sided order book.

Paths are exact: holding times are exponential and the occupation times of
{price = 0} and {mass = 0} are integrated over them, never on a grid.
Batch helpers run many replicas inside numba and keep only the observables
that were asked for.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _lobkern as K
from .measures import JumpDistribution, OrderBook, add_order, remove_at_price
from .streams import as_key, replica_keys

DEFAULT_MAX_EVENTS = 10**9


@dataclass(frozen=True)
class ModelParams:
    jumps: JumpDistribution
    lam: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")

    @property
    def alpha(self) -> float:
        return math.sqrt(2.0 * self.lam)

    @property
    def mu_bar(self) -> float:
        return (1.0 - math.log(2.0)) * self.lam

    @property
    def mu_under(self) -> float:
        return (2.0 * math.log(2.0) - 1.0) * self.lam


class StepPath:
    """Right-continuous integer step function on [0, horizon].

    ``times[0] == 0`` and ``values[i]`` holds on [times[i], times[i+1]).
    Used for the price process and its hitting times.
    """

    def __init__(self, times, values, horizon: float):
        self.times = np.asarray(times, dtype=np.float64)
        self.values = np.asarray(values, dtype=np.int64)
        self.horizon = float(horizon)
        if self.times.shape != self.values.shape or self.times.size == 0 or self.times[0] != 0.0:
            raise ValueError("step path needs matching arrays starting at time 0")

    def _index(self, t: float) -> int:
        if t < 0 or t > self.horizon:
            raise ValueError(f"time {t} outside [0, {self.horizon}]")
        return int(np.searchsorted(self.times, t, side="right")) - 1

    def value_at(self, t: float) -> int:
        return int(self.values[self._index(t)])

    def shift(self, t: float) -> "StepPath":
        """theta_t: the path seen from time t."""
        i = self._index(t)
        times = np.concatenate([[0.0], self.times[i + 1:] - t])
        return StepPath(times, self.values[i:], self.horizon - t)

    def stop(self, t: float) -> "StepPath":
        """sigma_t: the path frozen after time t."""
        i = self._index(t)
        return StepPath(self.times[:i + 1], self.values[:i + 1], self.horizon)

    def first_at_or_below(self, level: float, start: float = 0.0) -> float:
        """inf{s >= start : value <= level}; inf when not reached by the horizon."""
        i = self._index(start)
        if self.values[i] <= level:
            return float(start)
        hit = np.nonzero(self.values[i + 1:] <= level)[0]
        return float(self.times[i + 1 + hit[0]]) if hit.size else math.inf

    def first_at_or_above(self, level: float, start: float = 0.0) -> float:
        i = self._index(start)
        if self.values[i] >= level:
            return float(start)
        hit = np.nonzero(self.values[i + 1:] >= level)[0]
        return float(self.times[i + 1 + hit[0]]) if hit.size else math.inf

    def last_at(self, level: int, before: float) -> float:
        """sup{s <= before : value == level}; -inf when never."""
        i = self._index(before)
        if self.values[i] == level:
            return float(before)
        # the step i' < i at level ends when step i'+1 starts
        hit = np.nonzero(self.values[:i] == level)[0]
        return float(self.times[hit[-1] + 1]) if hit.size else -math.inf

    def first_at(self, level: int, start: float = 0.0) -> float:
        i = self._index(start)
        if self.values[i] == level:
            return float(start)
        hit = np.nonzero(self.values[i + 1:] == level)[0]
        return float(self.times[i + 1 + hit[0]]) if hit.size else math.inf

    # hitting times of the price process
    def G(self, t: float) -> float:
        return self.last_at(0, t)

    def D(self, t: float) -> float:
        return self.first_at(0, t)

    def D_eps(self, t: float, eps: float) -> float:
        return self.first_at_or_below(eps, t)

    def T(self, b: float) -> float:
        return self.first_at_or_above(b, 0.0)

    def excursion_straddling(self, a: int, b: float) -> tuple[float, float, float]:
        """(g_ab, d_ab, U_ab): first excursion above a reaching b."""
        tb = self.T(b)
        if math.isinf(tb):
            return math.inf, math.inf, math.inf
        g = self.last_at(a, tb)
        d = self.first_at(a, tb)
        return g, d, d - g


class Observables(NamedTuple):
    price: float
    mass: float
    l_pi: float
    l_m: float
    ell: float


@dataclass
class ExcursionRecord:
    a: int
    g: float
    d: float
    jump_count: int
    height: int
    deposited_below: int
    complete: bool = True
    embedded_path: list | None = None

    CSV_HEADER = "a,g,d,jump_count,height,deposited_below"

    def to_csv_row(self) -> str:
        return f"{self.a},{self.g!r},{self.d!r},{self.jump_count},{self.height},{self.deposited_below}"


@dataclass
class PathRecord:
    """Full event record.  ``kinds`` uses 1 = add, 2 = remove."""

    times: np.ndarray
    kinds: np.ndarray
    levels: np.ndarray
    prices: np.ndarray
    masses: np.ndarray
    initial: OrderBook
    horizon: float
    ell: float
    time_mass_zero: float
    params: ModelParams
    key: int = 0
    gap_violations: int = 0
    n: int = 1
    _cum: tuple | None = field(default=None, repr=False)

    CSV_HEADER = "t,kind,price,mass"

    def __len__(self) -> int:
        return int(self.times.shape[0])

    def _states(self):
        p0 = self.initial.price()
        m0 = self.initial.mass()
        t = np.concatenate([[0.0], self.times])
        p = np.concatenate([[p0], self.prices])
        m = np.concatenate([[m0], self.masses])
        return t, p, m

    def price_path(self) -> StepPath:
        t, p, _ = self._states()
        return StepPath(t, p, self.horizon)

    def mass_path(self) -> StepPath:
        t, _, m = self._states()
        return StepPath(t, m, self.horizon)

    def _cumulative(self):
        if self._cum is None:
            t, p, m = self._states()
            dt = np.diff(np.concatenate([t, [self.horizon]]))
            ell = np.concatenate([[0.0], np.cumsum(dt * (p == 0))])
            tmz = np.concatenate([[0.0], np.cumsum(dt * (m == 0))])
            self._cum = (t, p, m, ell, tmz)
        return self._cum

    def occupation(self, t: float, level: int) -> float:
        """Time in [0, t] with price <= level."""
        times, p, _, _, _ = self._cumulative()
        if t > self.horizon + 1e-9 * max(1.0, self.horizon):
            raise ValueError("time beyond horizon")
        ends = np.minimum(np.concatenate([times[1:], [self.horizon]]), t)
        dt = np.clip(ends - times, 0.0, None)
        return float(np.sum(dt[p <= level]))

    def state_at(self, t: float):
        """(price, mass, ell, time_mass_zero) at time t."""
        if t > self.horizon * (1 + 1e-12):
            raise ValueError(f"time {t} beyond horizon {self.horizon}")
        times, p, m, ell, tmz = self._cumulative()
        i = int(np.searchsorted(times, t, side="right")) - 1
        rest = t - times[i]
        return (int(p[i]), int(m[i]), float(ell[i] + (rest if p[i] == 0 else 0.0)),
                float(tmz[i] + (rest if m[i] == 0 else 0.0)))

    def replay(self) -> bool:
        """Rebuild the book event by event and compare with the cached state."""
        book = self.initial
        for kind, level, p, m in zip(self.kinds, self.levels, self.prices, self.masses):
            if kind == 1:
                book = add_order(book, int(level) - book.price())
            else:
                if book.price() != level:
                    return False
                book = remove_at_price(book)
            if book.price() != p or book.mass() != m:
                return False
        return True

    def to_csv(self) -> str:
        names = {1: "add", 2: "remove"}
        rows = [self.CSV_HEADER]
        for t, k, p, m in zip(self.times, self.kinds, self.prices, self.masses):
            rows.append(f"{t!r},{names[int(k)]},{int(p)},{int(m)}")
        return "\n".join(rows) + "\n"


def simulate(params: ModelParams, initial: OrderBook | None, horizon: float, key,
             max_events: int = DEFAULT_MAX_EVENTS) -> PathRecord:
    """Exact path on [0, horizon] from ``initial`` (empty book when None)."""
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    initial = initial or OrderBook.empty()
    key = as_key(key)
    if horizon == 0:
        e = np.empty(0)
        return PathRecord(e, e.astype(np.int8), e.astype(np.int64), e.astype(np.int64),
                          e.astype(np.int64), initial, 0.0, 0.0, 0.0, params, int(key))
    init = initial.to_array()
    if initial.is_empty():
        init = np.zeros(1, dtype=np.int64)
    jumps = params.jumps
    times, kinds, levels, prices, masses, ell, tmz, viol, end = K.simulate_events(
        key, float(params.lam), jumps.cum, jumps.values, init, float(horizon), int(max_events))
    return PathRecord(times, kinds, levels, prices, masses, initial, float(end), ell, tmz,
                      params, int(key), int(viol))


def rescaled_observables(path: PathRecord, n: int, t: float) -> Observables:
    """Price and mass of the n-scaled book at time t, with both local times at 0.

    Local times are n times the occupation in scaled time, i.e. the raw
    occupation up to n^2 t divided by n.
    """
    T = n * n * t
    if T > path.horizon * (1 + 1e-12):
        raise ValueError(f"path horizon {path.horizon} shorter than n^2 t = {T}")
    p, m, ell, tmz = path.state_at(T)
    return Observables(p / n, m / n, ell / n, tmz / n, ell)


def epsilon_occupation(path: PathRecord, n: int, t: float, eps: float) -> float:
    """(1/eps) * scaled time in [0, t] with scaled price <= eps."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    level = math.floor(eps * n + 1e-12)
    return path.occupation(n * n * t, level) / (n * n) / eps


def extract_excursions(path: PathRecord, a: int, with_books: bool = False) -> list[ExcursionRecord]:
    """Maximal excursions of the price above ``a``, in time order.

    Records open at time 0 or at the horizon carry ``complete=False``.
    """
    if a < 0:
        raise ValueError("level must be nonnegative")
    m = len(path) + 1
    g = np.empty(m)
    d = np.empty(m)
    jc = np.empty(m, dtype=np.int64)
    h = np.empty(m, dtype=np.int64)
    dep = np.empty(m, dtype=np.int64)
    flag = np.empty(m, dtype=np.int8)
    count = K.scan_excursions(path.times, path.prices, path.kinds, path.levels,
                              path.initial.price(), int(a), g, d, jc, h, dep, flag)
    out = []
    for i in range(count):
        rec = ExcursionRecord(int(a), float(g[i]), float(d[i]), int(jc[i]), int(h[i]),
                              int(dep[i]), bool(flag[i] == 0))
        if flag[i] == 2:
            rec.d = path.horizon
        out.append(rec)
    if with_books:
        _attach_books(path, out)
    return out


def _attach_books(path: PathRecord, records: list[ExcursionRecord]) -> None:
    # deltas (kind, level) at each jump epoch inside [g, d]
    for rec in records:
        lo = np.searchsorted(path.times, rec.g, side="left")
        hi = np.searchsorted(path.times, rec.d, side="right")
        rec.embedded_path = [(int(k), int(lv)) for k, lv in zip(path.kinds[lo:hi], path.levels[lo:hi])]


def local_evolution_violations(path: PathRecord, a: int) -> int:
    """Events inside an excursion above a touching a level the chain cannot reach.

    During such an excursion the price is >= a + 1, so an add lands at least at
    a + 1 - j_star and a removal happens above a; any event below that floor
    would be a kernel bug.  For j_star = 1 the floor is a itself.
    """
    floor = a + 1 - path.params.jumps.j_star
    return int(K.local_evolution_violations(path.prices, path.kinds, path.levels,
                                             path.initial.price(), int(a), int(floor)))


def queue_q(path: PathRecord):
    """Idle fraction and the mass process seen in the clock of ell.

    Returns (time_mass_zero / ell, (q_times, q_values)) where q_times are
    values of ell at the jumps of M that happen while the price is 0.
    """
    if path.ell <= 0:
        raise ValueError("price never at 0 on this path; the queue clock is degenerate")
    times, p, m, ell, _ = path._cumulative()
    # a jump of M at event i is seen by Q iff the state before it had price 0
    before = p[:-1]
    idx = np.nonzero(before == 0)[0]
    q_times = np.concatenate([[0.0], ell[idx + 1]])
    q_values = np.concatenate([[m[0]], m[idx + 1]])
    return path.time_mass_zero / path.ell, (q_times, q_values)


def path_shift_stop(path: PathRecord, t: float) -> tuple[StepPath, StepPath]:
    pp = path.price_path()
    return pp.shift(t), pp.stop(t)


# ---- batch kernels -------------------------------------------------------

@dataclass
class SnapshotBatch:
    """Observables of many replicas at scaled times ``t_obs``.

    Arrays are indexed [replica, time] (and [.., eps] / [.., level] for
    ``occupation`` / ``counts``).  Values are scaled by n.
    """

    n: int
    t_obs: np.ndarray
    price: np.ndarray
    mass: np.ndarray
    l_pi: np.ndarray
    l_m: np.ndarray
    eps: np.ndarray
    eps_occupation: np.ndarray
    y_levels: np.ndarray
    counts_below: np.ndarray


def _snapshot_chunk(params, keys, n, t_obs, eps, y):
    raw_t = np.asarray(t_obs, dtype=np.float64) * n * n
    occ_levels = np.floor(np.asarray(eps, dtype=np.float64) * n + 1e-12).astype(np.int64)
    cdf_levels = np.floor(np.asarray(y, dtype=np.float64) * n + 1e-12).astype(np.int64)
    r, k = keys.shape[0], raw_t.shape[0]
    price = np.zeros((r, k), dtype=np.int64)
    mass = np.zeros((r, k), dtype=np.int64)
    ell = np.zeros((r, k))
    tmz = np.zeros((r, k))
    occ = np.zeros((r, k, occ_levels.shape[0]))
    cdf = np.zeros((r, k, cdf_levels.shape[0]), dtype=np.int64)
    K.simulate_snapshots(keys, float(params.lam), params.jumps.cum, params.jumps.values, raw_t,
                         occ_levels, cdf_levels, price, mass, ell, tmz, occ, cdf)
    return price, mass, ell, tmz, occ, cdf


def snapshot_batch(params: ModelParams, n: int, t_obs, replicas: int, seed, eps=(), y=(),
                   start: int = 0, pool=None, chunk: int = 256) -> SnapshotBatch:
    """Simulate ``replicas`` paths from the empty book and record snapshots.

    Replica i uses stream ``replica_keys(seed)[start + i]`` whatever the
    chunking or thread count, so results are schedule independent.
    """
    t_obs = np.atleast_1d(np.asarray(t_obs, dtype=np.float64))
    if np.any(np.diff(t_obs) < 0) or np.any(t_obs < 0):
        raise ValueError("observation times must be nonnegative and sorted")
    eps = np.atleast_1d(np.asarray(eps, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    keys = replica_keys(seed, replicas, start)
    parts = [keys[i:i + chunk] for i in range(0, replicas, chunk)]
    work = lambda ks: _snapshot_chunk(params, ks, n, t_obs, eps, y)  # noqa: E731
    results = list(pool.map(work, parts)) if pool is not None else [work(p) for p in parts]
    price, mass, ell, tmz, occ, cdf = (np.concatenate(c) for c in zip(*results))
    eps_occ = occ / (n * n) / eps[None, None, :] if eps.size else occ
    return SnapshotBatch(n, t_obs, price / n, mass / n, ell / n, tmz / n, eps, eps_occ, y, cdf / n)


@dataclass
class FirstExcursions:
    a: int
    jump_count: np.ndarray
    height: np.ndarray
    deposited_below: np.ndarray
    duration: np.ndarray
    censored: np.ndarray


def first_excursions(params: ModelParams, a: int, replicas: int, seed, max_jumps: int,
                     start: int = 0, pool=None, chunk: int = 1024) -> FirstExcursions:
    """First excursion above ``a`` of ``replicas`` independent paths from z."""
    keys = replica_keys(seed, replicas, start)

    def work(ks):
        r = ks.shape[0]
        jc = np.empty(r, dtype=np.int64)
        h = np.empty(r, dtype=np.int64)
        dep = np.empty(r, dtype=np.int64)
        dur = np.empty(r)
        cen = np.empty(r, dtype=np.int8)
        K.first_excursions(ks, float(params.lam), params.jumps.cum, params.jumps.values, int(a),
                           int(max_jumps), jc, h, dep, dur, cen)
        return jc, h, dep, dur, cen

    parts = [keys[i:i + chunk] for i in range(0, replicas, chunk)]
    results = list(pool.map(work, parts)) if pool is not None else [work(p) for p in parts]
    jc, h, dep, dur, cen = (np.concatenate(c) for c in zip(*results))
    return FirstExcursions(int(a), jc, h, dep, dur, cen.astype(bool))


@dataclass
class ExcursionSequence:
    a: int
    g: np.ndarray
    d: np.ndarray
    jump_count: np.ndarray
    height: np.ndarray
    deposited_below: np.ndarray
    events_used: int

    def records(self) -> list[ExcursionRecord]:
        return [ExcursionRecord(self.a, float(g), float(d), int(j), int(h), int(k))
                for g, d, j, h, k in zip(self.g, self.d, self.jump_count, self.height,
                                         self.deposited_below)]


def excursion_sequence(params: ModelParams, a: int, count: int, key,
                       max_events: int = 10**8) -> ExcursionSequence:
    """The first ``count`` complete excursions above ``a`` of one path from z.

    Fewer records come back when the event budget runs out first.
    """
    g = np.empty(count)
    d = np.empty(count)
    jc = np.empty(count, dtype=np.int64)
    h = np.empty(count, dtype=np.int64)
    dep = np.empty(count, dtype=np.int64)
    done, used = K.excursion_sequence(as_key(key), float(params.lam), params.jumps.cum,
                                      params.jumps.values, int(a), int(count), int(max_events),
                                      g, d, jc, h, dep)
    return ExcursionSequence(int(a), g[:done], d[:done], jc[:done], h[:done], dep[:done], int(used))


def run_until_empty(params: ModelParams, initial: OrderBook, replicas: int, seed,
                    max_events: int = 10**7):
    """(jump counts, max price, censored) until the book first empties."""
    keys = replica_keys(seed, replicas)
    jc = np.empty(replicas, dtype=np.int64)
    top = np.empty(replicas, dtype=np.int64)
    cen = np.empty(replicas, dtype=np.int8)
    K.run_until_empty(keys, float(params.lam), params.jumps.cum, params.jumps.values,
                      initial.to_array(), int(max_events), jc, top, cen)
    return jc, top, cen.astype(bool)
