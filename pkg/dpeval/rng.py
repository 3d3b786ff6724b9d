"""Random streams

All randomness in dpeval flows from one 64 bit seed. Independent streams are
derived from that seed and a tuple of names (vehicle id, trip id, sweep, ...)
by hashing, and each stream is a counter-based Philox generator. Because a
stream only depends on its names, the order in which vehicles or trips are
processed, or the number of worker threads, can not change any result.
"""

import hashlib

import numpy as np

MAX_SEED = 2 ** 64 - 1


def check_seed(seed):
    """Return seed as int, raising ValueError if it is not an unsigned 64 bit value."""
    seed = int(seed)
    if seed < 0 or seed > MAX_SEED:
        raise ValueError("seed must be an unsigned 64 bit integer, got %d" % seed)
    return seed


def stream_key(seed, *names):
    """Derive the 128 bit Philox key for the stream (seed, names...)."""
    digest = hashlib.blake2b(digest_size=16, person=b'dpeval-rng')
    digest.update(str(check_seed(seed)).encode('ascii'))
    for name in names:
        digest.update(b'\x1f')
        digest.update(str(name).encode('utf-8'))
    raw = digest.digest()
    return np.array([int.from_bytes(raw[:8], 'little'), int.from_bytes(raw[8:], 'little')], dtype=np.uint64)


def derive(seed, *names):
    """Return a numpy Generator for the stream identified by (seed, names...).

    Keyword arguments:
    seed -- the pipeline seed
    names -- any number of values (converted with str) naming the stream
    """
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *names)))
