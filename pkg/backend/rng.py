# backend/rng.py
"""Counter-based random streams.

Every random draw in training comes from a stream keyed by
(seed, epoch, iteration, sample_index, purpose). The key is a SplitMix64
avalanche over those fields; the stream itself is numpy's Philox generator,
which is counter-based, so streams never share state.
"""
import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x):
    x = (x + GOLDEN) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _tag_word(tag):
    h = 0
    for chunk_start in range(0, len(tag), 8):
        chunk = int.from_bytes(tag[chunk_start:chunk_start + 8].ljust(8, b"\0"), "little")
        h = splitmix64(h ^ chunk)
    return splitmix64(h ^ len(tag))


def stream_key(seed, epoch, iteration, sample_index, purpose):
    """128-bit key (two u64 words) for one stream."""
    fields = (int(seed), int(epoch), int(iteration), int(sample_index))
    h0, h1 = 0x243F6A8885A308D3, 0x13198A2E03707344
    for f in fields:
        word = f & MASK64
        h0 = splitmix64(h0 ^ word)
        h1 = splitmix64(h1 ^ ((word * GOLDEN) & MASK64) ^ h0)
    tag = _tag_word(str(purpose).encode("utf-8"))
    h0 = splitmix64(h0 ^ tag)
    h1 = splitmix64(h1 ^ h0)
    return h0, h1


def derive_stream(seed, epoch=0, iteration=0, sample_index=0, purpose=""):
    """Independent deterministic Generator for the given tuple."""
    k0, k1 = stream_key(seed, epoch, iteration, sample_index, purpose)
    return np.random.Generator(np.random.Philox(key=np.array([k0, k1], dtype=np.uint64)))
