"""Counter-based random streams.

A stream is a two-word ``uint64`` array ``[key, counter]``.  The key is derived
from ``(seed, source id, event index)``; the n-th draw is a SplitMix64 finaliser
applied to ``key + n * golden``.  Because every event owns its own key, results
do not depend on how events are split among workers.
"""

import hashlib

import numpy as np
from numba import njit

GENERATOR_ID = "splitmix64-counter/v1"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SALT = np.uint64(0xD1B54A32D192ED03)
_S11 = np.uint64(11)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always", _nrt=False)
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def stream_key(seed, source, event):
    k = _mix(np.uint64(seed) ^ _SALT)
    k = _mix(k + np.uint64(source) * _GOLDEN)
    return _mix(k ^ (np.uint64(event) * _M1 + _ONE))


@njit(cache=True)
def seed_stream(st, seed, source, event):
    st[0] = stream_key(seed, source, event)
    st[1] = np.uint64(0)


@njit(cache=True, inline="always", _nrt=False)
def next_u64(st):
    st[1] += _ONE
    return _mix(st[0] + st[1] * _GOLDEN)


@njit(cache=True, inline="always", _nrt=False)
def uniform(st):
    """Uniform double in the open interval (0, 1)."""
    return (float(next_u64(st) >> _S11) + 0.5) * _INV53


def source_id(label):
    """Stable 63-bit id for a source label."""
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


def make_stream(seed, source=0, event=0):
    st = np.zeros(2, dtype=np.uint64)
    seed_stream(st, np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(source), np.uint64(event))
    return st


@njit(cache=True)
def uniforms(st, n):
    out = np.empty(n)
    for i in range(n):
        out[i] = uniform(st)
    return out
