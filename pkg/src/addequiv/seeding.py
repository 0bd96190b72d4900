"""Seed scheme: master seed -> suite stream -> replicate substream.

Every stream is a ``SeedSequence`` whose spawn key is the tuple
``(crc32(suite name), replicate index)``. Streams never depend on how many
other suites or replicates were drawn, so any subset of the work can be
recomputed in isolation and in any order.
"""

import zlib

import numpy as np


def suite_key(suite):
    return zlib.crc32(suite.encode("utf-8"))


def seed_sequence(seed, suite, replicate=None):
    key = (suite_key(suite),) if replicate is None else (suite_key(suite), int(replicate))
    return np.random.SeedSequence(int(seed), spawn_key=key)


def suite_rng(seed, suite):
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, suite)))


def replicate_rng(seed, suite, replicate):
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, suite, replicate)))
