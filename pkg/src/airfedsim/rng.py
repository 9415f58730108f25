"""Keyed random-number streams.

Every source of randomness in a simulation is a counter-based Philox stream
keyed by ``(master_seed, purpose, repeat, device, round)``.  Streams for
distinct keys are independent, and the mapping from key to stream is a pure
function, so results never depend on evaluation order and parallel execution
cannot reorder randomness.
"""

from __future__ import annotations

import numpy as np

# Registry of stream purposes.  Each purpose gets a fixed integer so the
# spawn key is stable across releases; never renumber existing entries.
PURPOSES = {
    "task": 0,      # class-mean geometry of the synthetic task
    "init": 1,      # model weight initialization
    "train": 2,     # training-sample acquisition
    "holdout": 3,   # held-out evaluation samples (never used for training)
    "channel": 4,   # per-round fading realizations
    "noise": 5,     # aggregation channel noise
    "resample": 6,  # importance resampling draws
    "probe": 7,     # auxiliary draws for diagnostics / tests
}


def stream(
    master_seed: int,
    purpose: str,
    *,
    repeat: int = 0,
    device: int = 0,
    round_index: int = 0,
) -> np.random.Generator:
    """Return the generator for one (purpose, repeat, device, round) cell."""
    if purpose not in PURPOSES:
        raise KeyError(f"unknown rng purpose {purpose!r}; known: {sorted(PURPOSES)}")
    ss = np.random.SeedSequence(
        entropy=int(master_seed),
        spawn_key=(PURPOSES[purpose], int(repeat), int(device), int(round_index)),
    )
    return np.random.Generator(np.random.Philox(ss))
