"""Shared plumbing: reproducible seeding, canonical serialization, config sampling."""

from __future__ import annotations

import json

import numpy as np


def child_rng(seed: int, *indices: int) -> np.random.Generator:
    """Derive an independent generator for a worker (path, chain, run).

    Derivation goes through SeedSequence so that nearby (seed, index) pairs
    give decorrelated streams while staying fully deterministic.
    """
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tuple(int(i) for i in indices)))


def splitmix64_init(seed: int, *indices: int) -> int:
    """64-bit state for the in-kernel splitmix generator, derived like child_rng."""
    ss = np.random.SeedSequence((int(seed),) + tuple(int(i) for i in indices))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def canonical_json(obj) -> str:
    """Stable JSON encoding: sorted keys, no whitespace, repr floats."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def random_config(rng: np.random.Generator, n_pairs: int, spread: float = 1.0):
    """Random strictly ordered 2N-tuple with O(1) gaps, for property sweeps."""
    n = 2 * n_pairs
    gaps = np.exp(rng.uniform(-1.2, 1.2, size=n - 1)) * spread
    start = rng.uniform(-2.0, 2.0)
    return tuple(np.concatenate([[start], start + np.cumsum(gaps)]).tolist())
