"""Counter-based random numbers usable from numba kernels.

Every random quantity is ``mix(key + i * GAMMA)`` for some 64-bit key, so a
stream is fully described by one integer.  Tree nodes get their own key,
derived from the parent key and the child rank, which makes a node's
offspring count and edge increment independent of the traversal order.
"""
import numba
import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TWO53 = 1.0 / 9007199254740992.0

# salts separating the per-node draws
_SALT_OFFSPRING = np.uint64(0x243F6A8885A308D3)
_SALT_INCREMENT = np.uint64(0x13198A2E03707344)


@numba.njit(cache=True, inline="always")
def mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@numba.njit(cache=True, inline="always")
def to_unit(x):
    """Map a 64-bit word to a float in (0, 1]."""
    return ((x >> _S11) + _ONE) * _TWO53


@numba.njit(cache=True)
def next_u64(state):
    """Advance a one-element uint64 state array; return the next word."""
    state[0] += GAMMA
    return mix(state[0])


@numba.njit(cache=True)
def next_unit(state):
    return to_unit(next_u64(state))


@numba.njit(cache=True)
def next_exp(state, rate):
    return -np.log(next_unit(state)) / rate


@numba.njit(cache=True, inline="always")
def draw_jump(u, cum, values):
    # u in (0, 1]; cum[-1] == 1 up to rounding
    for i in range(cum.shape[0] - 1):
        if u <= cum[i]:
            return values[i]
    return values[cum.shape[0] - 1]


@numba.njit(cache=True)
def next_jump(state, cum, values):
    return draw_jump(next_unit(state), cum, values)


@numba.njit(cache=True, inline="always")
def child_key(parent, rank):
    return mix(parent + np.uint64(rank + 1) * GAMMA)


@numba.njit(cache=True, inline="always")
def node_offspring(key):
    """Geometric(1/2) on {0, 1, ...}: trailing zero bits of a uniform word."""
    x = mix(key ^ _SALT_OFFSPRING)
    k = 0
    while k < 64 and (x & _ONE) == 0:
        x >>= _ONE
        k += 1
    return k


@numba.njit(cache=True, inline="always")
def node_increment(key, cum, values):
    return draw_jump(to_unit(mix(key ^ _SALT_INCREMENT)), cum, values)
