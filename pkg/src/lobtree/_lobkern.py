"""Numba kernels for the order-book Markov chain.

Jumps happen at rate 2*lambda when the book is nonempty (fair coin between
add and remove) and at rate lambda when it is empty (add only).  Occupation
times are accumulated from the exact holding times.
"""
import numba
import numpy as np

from ._rng import next_exp, next_jump, next_u64, _ONE

ADD = np.int8(1)
REMOVE = np.int8(2)


@numba.njit(cache=True, nogil=True)
def _grow(a, n):
    b = np.zeros(max(2 * a.shape[0], n + 1), dtype=a.dtype)
    b[:a.shape[0]] = a
    return b


@numba.njit(cache=True, nogil=True)
def _remove_top(counts, price):
    """Decrement the top level; return the new price (0 when empty)."""
    counts[price] -= 1
    if counts[price] > 0:
        return price
    p = price - 1
    while p >= 0 and counts[p] == 0:
        p -= 1
    return p if p >= 0 else 0


@numba.njit(cache=True, nogil=True)
def _step(state, counts, price, mass, lam, cum, values):
    """One jump.  Returns (kind, level, dt, new_price, new_mass, counts)."""
    if mass > 0:
        dt = next_exp(state, 2.0 * lam)
        is_add = (next_u64(state) & _ONE) == 0
    else:
        dt = next_exp(state, lam)
        is_add = True
    if is_add:
        level = price + next_jump(state, cum, values)
        if level < 0:
            level = 0
        if level >= counts.shape[0]:
            counts = _grow(counts, level)
        counts[level] += 1
        if mass == 0 or level > price:
            price = level
        return ADD, level, dt, price, mass + 1, counts
    level = price
    price = _remove_top(counts, price)
    return REMOVE, level, dt, price, mass - 1, counts


@numba.njit(cache=True, nogil=True)
def _init_state(key, init_counts):
    state = np.empty(1, dtype=np.uint64)
    state[0] = key
    counts = np.zeros(max(1024, 2 * init_counts.shape[0]), dtype=np.int64)
    counts[:init_counts.shape[0]] = init_counts
    mass = 0
    price = 0
    for k in range(init_counts.shape[0]):
        mass += init_counts[k]
        if init_counts[k] > 0:
            price = k
    return state, counts, price, mass


@numba.njit(cache=True, nogil=True)
def simulate_events(key, lam, cum, values, init_counts, horizon, max_events):
    """Full event record up to ``horizon`` (or ``max_events`` jumps).

    Returns times, kinds, levels, prices, masses, ell, time_mass_zero,
    gap_violations, end_time.  ``gap_violations`` counts removals after which
    the next occupied level is not directly below the old price while the
    book was a full interval before (only meaningful from the empty book).
    """
    state, counts, price, mass = _init_state(key, init_counts)
    cap = 1024
    times = np.empty(cap, dtype=np.float64)
    kinds = np.empty(cap, dtype=np.int8)
    levels = np.empty(cap, dtype=np.int64)
    prices = np.empty(cap, dtype=np.int64)
    masses = np.empty(cap, dtype=np.int64)
    t = 0.0
    ell = 0.0
    tmz = 0.0
    n = 0
    violations = 0
    while n < max_events:
        old_price = price
        old_mass = mass
        kind, level, dt, price, mass, counts = _step(state, counts, price, mass, lam, cum, values)
        if t + dt > horizon:
            rest = horizon - t
            if old_price == 0:
                ell += rest
            if old_mass == 0:
                tmz += rest
            t = horizon
            break
        if old_price == 0:
            ell += dt
        if old_mass == 0:
            tmz += dt
        t += dt
        if kind == REMOVE and mass > 0 and price != old_price and price != old_price - 1:
            violations += 1
        if n == cap:
            cap *= 2
            times2 = np.empty(cap, dtype=np.float64)
            times2[:n] = times
            times = times2
            kinds2 = np.empty(cap, dtype=np.int8)
            kinds2[:n] = kinds
            kinds = kinds2
            levels2 = np.empty(cap, dtype=np.int64)
            levels2[:n] = levels
            levels = levels2
            prices2 = np.empty(cap, dtype=np.int64)
            prices2[:n] = prices
            prices = prices2
            masses2 = np.empty(cap, dtype=np.int64)
            masses2[:n] = masses
            masses = masses2
        times[n] = t
        kinds[n] = kind
        levels[n] = level
        prices[n] = price
        masses[n] = mass
        n += 1
    return (times[:n].copy(), kinds[:n].copy(), levels[:n].copy(), prices[:n].copy(),
            masses[:n].copy(), ell, tmz, violations, t)


@numba.njit(cache=True, nogil=True)
def simulate_snapshots(keys, lam, cum, values, obs_times, occ_levels, cdf_levels,
                       price_out, mass_out, ell_out, tmz_out, occ_out, cdf_out):
    """Observables at increasing raw times ``obs_times``, one replica per key, from z.

    occ_out[i, k, e]: time in [0, obs_times[k]] with price <= occ_levels[e].
    cdf_out[i, k, c]: number of orders at levels <= cdf_levels[c] at obs_times[k].
    """
    n_obs = obs_times.shape[0]
    n_occ = occ_levels.shape[0]
    n_cdf = cdf_levels.shape[0]
    empty = np.zeros(1, dtype=np.int64)
    for i in range(keys.shape[0]):
        state, counts, price, mass = _init_state(keys[i], empty)
        t = 0.0
        ell = 0.0
        tmz = 0.0
        occ = np.zeros(n_occ, dtype=np.float64)
        k = 0
        while k < n_obs:
            old_price = price
            old_mass = mass
            kind, level, dt, price, mass, counts = _step(state, counts, price, mass, lam, cum, values)
            # record every observation time falling inside this holding interval
            while k < n_obs and t + dt > obs_times[k]:
                rest = obs_times[k] - t
                ell_k = ell + (rest if old_price == 0 else 0.0)
                tmz_k = tmz + (rest if old_mass == 0 else 0.0)
                price_out[i, k] = old_price
                mass_out[i, k] = old_mass
                ell_out[i, k] = ell_k
                tmz_out[i, k] = tmz_k
                for e in range(n_occ):
                    occ_out[i, k, e] = occ[e] + (rest if old_price <= occ_levels[e] else 0.0)
                if n_cdf > 0:
                    # undo the pending jump to read the book as it was
                    for c in range(n_cdf):
                        s = 0
                        top = min(cdf_levels[c], counts.shape[0] - 1)
                        for lv in range(top + 1):
                            s += counts[lv]
                        if kind == 1 and level <= cdf_levels[c]:
                            s -= 1
                        elif kind == 2 and level <= cdf_levels[c]:
                            s += 1
                        cdf_out[i, k, c] = s
                k += 1
            if k >= n_obs:
                break
            if old_price == 0:
                ell += dt
            if old_mass == 0:
                tmz += dt
            for e in range(n_occ):
                if old_price <= occ_levels[e]:
                    occ[e] += dt
            t += dt


@numba.njit(cache=True, nogil=True)
def first_excursions(keys, lam, cum, values, a, max_jumps, out_jumps, out_height,
                     out_deposit, out_duration, out_censored):
    """First excursion of the price above level a, one replica per key, from z.

    jump_count includes the opening add.  Excursions longer than max_jumps
    are censored (flag 1) and their statistics are left partial.
    """
    empty = np.zeros(1, dtype=np.int64)
    for i in range(keys.shape[0]):
        state, counts, price, mass = _init_state(keys[i], empty)
        t = 0.0
        inside = False
        g = 0.0
        jumps = 0
        height = 0
        deposit = 0
        out_censored[i] = 0
        while True:
            kind, level, dt, price, mass, counts = _step(state, counts, price, mass, lam, cum, values)
            t += dt
            if not inside:
                if price > a:
                    inside = True
                    g = t
                    jumps = 1
                    height = price
                    deposit = 0
                continue
            jumps += 1
            if kind == 1 and level <= a:
                deposit += 1
            if price > height:
                height = price
            if price <= a:
                break
            if jumps > max_jumps:
                out_censored[i] = 1
                break
        out_jumps[i] = jumps
        out_height[i] = height - a
        out_deposit[i] = deposit
        out_duration[i] = t - g


@numba.njit(cache=True, nogil=True)
def excursion_sequence(key, lam, cum, values, a, n_exc, max_events, g_out, d_out, jumps_out,
                       height_out, deposit_out):
    """First ``n_exc`` complete excursions above a from z.

    Returns (completed, events_used).  Stops early when the event budget runs
    out; the excursion open at that moment is discarded.
    """
    empty = np.zeros(1, dtype=np.int64)
    state, counts, price, mass = _init_state(key, empty)
    t = 0.0
    inside = False
    g = 0.0
    jumps = 0
    height = 0
    deposit = 0
    done = 0
    events = 0
    while done < n_exc and events < max_events:
        kind, level, dt, price, mass, counts = _step(state, counts, price, mass, lam, cum, values)
        t += dt
        events += 1
        if not inside:
            if price > a:
                inside = True
                g = t
                jumps = 1
                height = price
                deposit = 0
            continue
        jumps += 1
        if kind == 1 and level <= a:
            deposit += 1
        if price > height:
            height = price
        if price <= a:
            g_out[done] = g
            d_out[done] = t
            jumps_out[done] = jumps
            height_out[done] = height - a
            deposit_out[done] = deposit
            done += 1
            inside = False
    return done, events


@numba.njit(cache=True, nogil=True)
def run_until_empty(keys, lam, cum, values, init_counts, max_events, out_jumps, out_max_price,
                    out_censored):
    """Jumps until the book first empties, starting from ``init_counts``."""
    for i in range(keys.shape[0]):
        state, counts, price, mass = _init_state(keys[i], init_counts)
        top = price
        n = 0
        out_censored[i] = 0
        while mass > 0:
            kind, level, dt, price, mass, counts = _step(state, counts, price, mass, lam, cum, values)
            n += 1
            if price > top:
                top = price
            if n >= max_events:
                out_censored[i] = 1
                break
        out_jumps[i] = n
        out_max_price[i] = top


@numba.njit(cache=True, nogil=True)
def scan_excursions(times, prices, kinds, levels, init_price, a, g_out, d_out, jumps_out,
                    height_out, deposit_out, flag_out):
    """Excursions above a in a recorded path; returns the record count.

    flag 0: complete; 1: already open at time 0; 2: still open at the end
    (d is then the last event time).  Output arrays need len(times) + 1 slots.
    """
    inside = init_price > a
    g = 0.0
    jumps = 0
    height = init_price
    deposit = 0
    flag = 1
    m = 0
    for i in range(times.shape[0]):
        p = prices[i]
        if not inside:
            if p > a:
                inside = True
                flag = 0
                g = times[i]
                jumps = 1
                height = p
                deposit = 0
            continue
        jumps += 1
        if kinds[i] == 1 and levels[i] <= a:
            deposit += 1
        if p > height:
            height = p
        if p <= a:
            g_out[m] = g
            d_out[m] = times[i]
            jumps_out[m] = jumps
            height_out[m] = height - a
            deposit_out[m] = deposit
            flag_out[m] = flag
            m += 1
            inside = False
    if inside:
        g_out[m] = g
        d_out[m] = times[times.shape[0] - 1] if times.shape[0] > 0 else 0.0
        jumps_out[m] = jumps
        height_out[m] = height - a
        deposit_out[m] = deposit
        flag_out[m] = 2 if flag == 0 else 1
        m += 1
    return m


@numba.njit(cache=True, nogil=True)
def local_evolution_violations(prices, kinds, levels, init_price, a, floor):
    """Events inside excursions above a that touch a level below ``floor``."""
    inside = init_price > a
    bad = 0
    for i in range(prices.shape[0]):
        if inside and levels[i] < floor:
            bad += 1
        inside = prices[i] > a
    return bad
