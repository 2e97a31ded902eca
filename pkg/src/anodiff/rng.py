"""Counter-based random number streams for reproducible parallel Monte Carlo.

Every stochastic routine in the package takes an integer seed plus a stream
key and builds its generator through :func:`stream`.  Philox is counter-based,
so streams derived from distinct keys are statistically independent and the
result of a run does not depend on scheduling or chunking: trajectory j always
consumes the same draws whether it runs first, last, or on another worker.
"""

import numpy as np

__all__ = ["stream"]


def stream(seed, *key):
    """Return a Generator backed by Philox keyed by (seed, *key).

    seed is the user-facing 64-bit run seed; key components identify the
    consumer (trajectory index, purpose tag, ...).  Equal (seed, key) pairs
    yield bitwise-identical draw sequences on every platform numpy supports.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
