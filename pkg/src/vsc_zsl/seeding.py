"""Per-component random streams derived from one integer seed."""

import zlib

import numpy as np


def component_seed(seed: int, component: str) -> np.random.SeedSequence:
    """Seed sequence for ``component``, stable under unrelated changes.

    The component name is hashed into the spawn key, so adding a new
    consumer of randomness never shifts the stream of an existing one.
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.random.SeedSequence(entropy=seed, spawn_key=(zlib.crc32(component.encode()),))


def component_rng(seed: int, component: str) -> np.random.Generator:
    return np.random.default_rng(component_seed(seed, component))
