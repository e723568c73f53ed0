"""Counter-based random streams.

Every stream is addressed by a root seed plus a tuple of integer counters
(solve index, particle index, ...). The stream for a given address is the
same no matter which other streams were drawn before it, so rollouts and
trials can be evaluated in any order or on any number of workers.
"""
import numpy as np


def stream(seed, *counters):
    """Return a Philox-backed generator for ``(seed, *counters)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(c) for c in counters))
    return np.random.Generator(np.random.Philox(ss))


def child_seed(seed, *counters):
    """Derive a 63-bit integer seed, e.g. to hand a trial its own root."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(c) for c in counters))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
