"""Deterministic sub-seed derivation from a master seed."""
from __future__ import annotations

import numpy as np


def derive_seed(*keys: int) -> int:
    """64-bit seed from an integer key path, e.g. ``derive_seed(master, RUN, 3)``."""
    return int(np.random.SeedSequence([int(k) & ((1 << 64) - 1) for k in keys]).generate_state(1, np.uint64)[0])


# key-path tags, fixed so that adding a new consumer never shifts existing streams
ROUTES = 1
TRAFFIC = 2
HASH = 3
BASELINE = 4
SEARCH = 5
FAILURE = 6
HOLDOUT = 7
SENSORS = 8
FOLDS = 9
PRESENCE = 10
SIMULATE = 11
