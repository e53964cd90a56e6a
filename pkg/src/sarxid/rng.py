"""Seeded random streams.

All randomness is derived from one integer seed. Named sub-streams let the
simulation, candidate initialization, column sampling and Monte Carlo bound
draw independently, so changing one component leaves the others untouched.
"""
import zlib

import numpy as np

STREAMS = ("simulation", "switching", "system", "init", "sampling", "mc-bound")


def _key(name):
    return zlib.crc32(name.encode("utf-8"))


def stream(seed, name, *extra):
    """Return a Generator for sub-stream `name` of `seed`.

    `extra` integers (e.g. a realization index) further split the stream.
    """
    if seed is None:
        return np.random.default_rng()
    entropy = [int(seed), _key(name), *[int(e) for e in extra]]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def as_generator(seed_or_rng):
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def derive_seed(base_seed, index):
    """Deterministic child seed for realization `index` of `base_seed`."""
    ss = np.random.SeedSequence([int(base_seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])
