import numpy as np

from lobtree.streams import chunked_map, replica_key, replica_keys, seed_streams


def test_same_inputs_same_stream():
    a = seed_streams(7, 3).integers(0, 2**63, 64)
    b = seed_streams(7, 3).integers(0, 2**63, 64)
    assert np.array_equal(a, b)


def test_distinct_indices_differ():
    draws = [seed_streams(7, i).integers(0, 2**63, 64) for i in range(50)]
    for i in range(50):
        for j in range(i + 1, 50):
            assert not np.any(draws[i] == draws[j])


def test_keys_independent_of_chunking():
    keys = replica_keys(123, 1000)
    assert np.array_equal(np.concatenate([replica_keys(123, 400), replica_keys(123, 600, start=400)]), keys)
    assert replica_key(123, 517) == keys[517]
    assert np.unique(keys).size == keys.size
    assert not np.array_equal(replica_keys(124, 10), keys[:10])


def test_chunked_map_order():
    from concurrent.futures import ThreadPoolExecutor
    keys = np.arange(100, dtype=np.uint64)
    with ThreadPoolExecutor(4) as pool:
        out = chunked_map(lambda k: k.sum(), keys, pool, chunk=9)
    assert out == chunked_map(lambda k: k.sum(), keys, None, chunk=9)
