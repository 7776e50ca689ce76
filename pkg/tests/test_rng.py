import numpy as np
from scipy import stats

from spinwave import rng


def test_streams_are_reproducible_and_order_free():
    key = rng.stream_key(7, np.arange(1000))
    a = rng.uniform(key, 3, 1)
    rev = rng.uniform(rng.stream_key(7, np.arange(1000)[::-1]), 3, 1)[::-1]
    assert np.array_equal(a, rev)
    single = np.array([rng.uniform(rng.stream_key(7, [i]), 3, 1)[0] for i in (0, 500, 999)])
    assert np.array_equal(single, a[[0, 500, 999]])


def test_seed_slot_and_counter_change_the_draw():
    key = rng.stream_key(1, np.arange(100))
    base = rng.uniform(key, 1, 0)
    assert not np.array_equal(base, rng.uniform(rng.stream_key(2, np.arange(100)), 1, 0))
    assert not np.array_equal(base, rng.uniform(key, 2, 0))
    assert not np.array_equal(base, rng.uniform(key, 1, 1))


def test_uniform_and_normal_distributions():
    key = rng.stream_key(3, np.arange(100_000))
    u = rng.uniform(key, 5, 2)
    assert u.min() > 0.0 and u.max() < 1.0
    assert stats.kstest(u, "uniform").pvalue > 0.01
    z = rng.normal(key, 5, 4)
    assert stats.kstest(z, "norm").pvalue > 0.01
    # distinct slots are uncorrelated
    assert abs(np.corrcoef(z, rng.normal(key, 5, 3))[0, 1]) < 0.02
