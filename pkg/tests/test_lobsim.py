import math

import numpy as np
import pytest

from lobtree.lobsim import (ExcursionRecord, ModelParams, PathRecord, epsilon_occupation,
                            excursion_sequence, extract_excursions, first_excursions,
                            local_evolution_violations, path_shift_stop, queue_q,
                            rescaled_observables, simulate, snapshot_batch)
from lobtree.measures import JumpDistribution, OrderBook
from lobtree.streams import replica_keys

REF = ModelParams(JumpDistribution.parse("-1:0.3,1:0.7"))
UP = ModelParams(JumpDistribution.degenerate_up())


def _synthetic(prices, kinds, levels, masses, horizon):
    n = len(prices)
    return PathRecord(np.arange(1.0, n + 1), np.array(kinds, np.int8), np.array(levels, np.int64),
                      np.array(prices, np.int64), np.array(masses, np.int64), OrderBook(), horizon,
                      0.0, 0.0, REF)


def test_params():
    p = ModelParams(JumpDistribution.parse("-1:0.3,1:0.7"), lam=2.0)
    assert p.alpha ** 2 == pytest.approx(4.0)
    assert p.mu_bar == pytest.approx((1 - math.log(2)) * 2.0)
    assert p.mu_under == pytest.approx((2 * math.log(2) - 1) * 2.0)
    with pytest.raises(ValueError):
        ModelParams(p.jumps, lam=0.0)


def test_horizon_zero():
    path = simulate(REF, None, 0.0, 1)
    assert len(path) == 0 and path.ell == 0 and path.time_mass_zero == 0


def test_replay_and_invariants():
    path = simulate(REF, None, 5e4, 3)
    assert path.replay()
    assert path.gap_violations == 0
    assert path.time_mass_zero <= path.ell <= path.horizon
    assert np.all(np.diff(path.times) > 0)
    # every level 1..price is occupied while the book is nonempty; level 0 may
    # be empty (the first add from the empty book lands at 1)
    counts = np.zeros(4096, dtype=np.int64)
    for kind, level, p, m in zip(path.kinds[:20000], path.levels[:20000], path.prices[:20000],
                                 path.masses[:20000]):
        counts[level] += 1 if kind == 1 else -1
        if m > 0:
            assert np.all(counts[1:p + 1] > 0)
    assert np.all(path.masses >= path.prices)


def test_event_rate():
    path = simulate(REF, None, 1e4, 11)
    busy = path.horizon - path.time_mass_zero
    expected = 2 * busy + path.time_mass_zero
    assert len(path) == pytest.approx(expected, rel=0.05)
    assert len(path) / path.horizon == pytest.approx(2.0, rel=0.05)


def test_degenerate_up_mass_equals_price():
    path = simulate(UP, None, 1e4, 5)
    assert np.array_equal(path.prices, path.masses)
    assert path.ell == pytest.approx(path.time_mass_zero)


def test_rescaled_identity_scaling():
    path = simulate(REF, None, 10.0, 2)
    obs = rescaled_observables(path, 1, 1.0)
    p, m, ell, tmz = path.state_at(1.0)
    assert obs == (p, m, ell, tmz, ell)
    with pytest.raises(ValueError):
        rescaled_observables(path, 10, 1.0)


def test_rescaled_empty_path():
    path = simulate(REF, None, 0.0, 2)
    obs = rescaled_observables(path, 5, 0.0)
    assert obs == (0, 0, 0, 0, 0)


def test_snapshot_matches_full_path():
    n, t = 20, 1.0
    sb = snapshot_batch(REF, n, [t], 3, 99, eps=[0.2], y=[0.3])
    for i, key in enumerate(replica_keys(99, 3)):
        path = simulate(REF, None, n * n * t, key)
        obs = rescaled_observables(path, n, t)
        assert sb.price[i, 0] == pytest.approx(obs.price)
        assert sb.mass[i, 0] == pytest.approx(obs.mass)
        assert sb.l_pi[i, 0] == pytest.approx(obs.l_pi)
        assert sb.l_m[i, 0] == pytest.approx(obs.l_m)
        assert sb.eps_occupation[i, 0, 0] == pytest.approx(epsilon_occupation(path, n, t, 0.2))


def test_snapshot_schedule_independent():
    from concurrent.futures import ThreadPoolExecutor
    a = snapshot_batch(REF, 10, [0.5, 1.0], 50, 4, chunk=7)
    with ThreadPoolExecutor(3) as pool:
        b = snapshot_batch(REF, 10, [0.5, 1.0], 50, 4, chunk=16, pool=pool)
    assert np.array_equal(a.price, b.price) and np.array_equal(a.l_pi, b.l_pi)


def test_mass_local_time_identity():
    # E M_t = lambda E(time with mass 0) exactly: adds and removes balance while busy
    sb = snapshot_batch(REF, 15, [1.0], 4000, 8)
    diff = sb.mass[:, 0] - REF.lam * sb.l_m[:, 0]
    assert abs(diff.mean()) <= 4 * diff.std(ddof=1) / math.sqrt(diff.size)


def test_extract_excursions_examples():
    path = _synthetic([1, 0], [1, 2], [1, 1], [1, 0], 3.0)
    (rec,) = extract_excursions(path, 0)
    assert (rec.jump_count, rec.height, rec.g, rec.d, rec.complete) == (2, 1, 1.0, 2.0, True)
    assert extract_excursions(path, 1) == []


def test_extract_excursions_open_at_end():
    path = _synthetic([1, 2], [1, 1], [1, 2], [1, 2], 3.0)
    (rec,) = extract_excursions(path, 0)
    assert not rec.complete and rec.d == 3.0


def test_excursions_on_simulated_path():
    path = simulate(REF, None, 2e4, 21)
    recs = extract_excursions(path, 0, with_books=True)
    complete = [r for r in recs if r.complete]
    assert complete
    for r in complete:
        assert r.g < r.d and r.height >= 1 and r.jump_count >= 2
        assert len(r.embedded_path) == r.jump_count
    assert local_evolution_violations(path, 0) == 0
    assert local_evolution_violations(path, 2) == 0
    seq = excursion_sequence(REF, 0, 5, path.key)
    assert list(seq.jump_count) == [r.jump_count for r in complete[:5]]
    assert list(seq.height) == [r.height for r in complete[:5]]


def test_local_evolution_deeper_jumps():
    params = ModelParams(JumpDistribution.parse("-2:0.1,-1:0.1,0:0.1,1:0.7"))
    path = simulate(params, None, 2e4, 6)
    assert path.replay()
    for a in (0, 1, 3):
        assert local_evolution_violations(path, a) == 0


def test_first_excursion_matches_sequence():
    keys = replica_keys(5, 4)
    fe = first_excursions(REF, 0, 4, 5, 10**6)
    for i, k in enumerate(keys):
        seq = excursion_sequence(REF, 0, 1, k)
        assert fe.jump_count[i] == seq.jump_count[0]
        assert fe.height[i] == seq.height[0]
        assert fe.duration[i] == pytest.approx(seq.d[0] - seq.g[0])


def test_epsilon_occupation_examples():
    path = simulate(REF, None, 400.0, 1)
    top = int(path.prices.max())
    assert epsilon_occupation(path, 20, 1.0, top / 20 + 1) == pytest.approx(1.0 / (top / 20 + 1))
    flat = simulate(REF, None, 0.0, 1)
    flat.horizon = 4.0
    assert epsilon_occupation(flat, 2, 1.0, 0.5) == pytest.approx(2.0)


def test_queue_q():
    path = simulate(REF, None, 1e4, 8)
    idle, (qt, qv) = queue_q(path)
    assert idle == pytest.approx(path.time_mass_zero / path.ell)
    assert np.all(np.diff(qt) >= 0) and qv[0] == 0
    high = simulate(REF, OrderBook.parse("50:3"), 1.0, 8)
    with pytest.raises(ValueError):
        queue_q(high)


def test_shift_stop():
    path = simulate(REF, None, 100.0, 4)
    pp = path.price_path()
    shifted, stopped = path_shift_stop(path, 0.0)
    assert np.array_equal(shifted.values, pp.values)
    assert stopped.value_at(50.0) == pp.value_at(0.0)
    t = 37.5
    shifted, stopped = path_shift_stop(path, t)
    frozen = stopped.shift(t)
    assert set(frozen.values.tolist()) == {pp.value_at(t)}
    assert shifted.D(0.0) + t == pytest.approx(pp.D(t))


def test_csv_headers():
    path = simulate(REF, None, 5.0, 4)
    assert path.to_csv().splitlines()[0] == "t,kind,price,mass"
    assert ExcursionRecord.CSV_HEADER == "a,g,d,jump_count,height,deposited_below"
    assert ExcursionRecord(0, 1.0, 2.0, 2, 1, 0).to_csv_row() == "0,1.0,2.0,2,1,0"
