"""Deterministic RNG derivation.

Every random choice in the package flows from a single root seed fanned out
through string labels, so independent components (feature fallbacks, weight
init, seed splitting, synthetic generation) stay reproducible and do not
perturb each other when one of them draws more numbers.
"""

import zlib

import numpy as np


def derive_rng(root_seed: int, label: str) -> np.random.Generator:
    """Child generator for `label`, stable across runs and platforms."""
    if not isinstance(root_seed, (int, np.integer)):
        raise ValueError(f"root seed must be an integer, got {root_seed!r}")
    key = zlib.crc32(label.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(root_seed) & 0xFFFFFFFF, key]))
