import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from qubitrad import rng


def test_generator_id_pinned():
    assert rng.GENERATOR_ID == "splitmix64-counter/v1"


def test_same_key_same_sequence():
    a = rng.uniforms(rng.make_stream(7, 3, 11), 100)
    b = rng.uniforms(rng.make_stream(7, 3, 11), 100)
    assert np.array_equal(a, b)


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**63 - 1), st.integers(0, 2**40))
@settings(max_examples=50, deadline=None)
def test_distinct_events_distinct_streams(seed, source, event):
    a = rng.uniforms(rng.make_stream(seed, source, event), 4)
    b = rng.uniforms(rng.make_stream(seed, source, event + 1), 4)
    assert not np.array_equal(a, b)


@given(st.integers(0, 2**64 - 1))
@settings(max_examples=30, deadline=None)
def test_uniform_open_interval(seed):
    u = rng.uniforms(rng.make_stream(seed), 1000)
    assert np.all(u > 0.0) and np.all(u < 1.0)


def test_uniform_moments():
    u = rng.uniforms(rng.make_stream(1), 1_000_000)
    # mean 1/2 and variance 1/12 within ~5 sigma
    assert abs(u.mean() - 0.5) < 5 * np.sqrt(1 / 12 / u.size)
    assert abs(u.var() - 1 / 12) < 5 * np.sqrt(1 / 180 / u.size)


def test_uniform_ks():
    from scipy import stats

    u = rng.uniforms(rng.make_stream(2024), 200_000)
    assert stats.kstest(u, "uniform").pvalue > 1e-4


def test_source_id_stable_and_label_sensitive():
    assert rng.source_id("gamma") == rng.source_id("gamma")
    assert rng.source_id("gamma") != rng.source_id("gamma ")
    assert 0 <= rng.source_id("A:K-40") < 2**63


def test_stream_counter_advances():
    s = rng.make_stream(5)
    rng.uniform(s)
    rng.uniform(s)
    assert int(s[1]) == 2
