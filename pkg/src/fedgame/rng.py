"""Counter-based random streams, split by purpose, client and step.

All randomness in a run is drawn from substreams derived from a single
64-bit seed and an integer path such as ``(purpose, client, step)``.
Because the split is keyed rather than sequential, changing one client's
strategy never shifts the noise another client sees: the draws for
``(seed, GRADIENT, j, t)`` are the same no matter what client ``i`` does.
This is what makes paired-seed (common random numbers) comparisons work.
"""

from __future__ import annotations

import numpy as np

# Purpose tags for the first path component.
GRADIENT = 0
STRATEGY = 1
ANALYSIS = 2
SAMPLES = 3


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return the generator for the substream at ``path`` under ``seed``.

    Uses the Philox counter-based bit generator keyed through a
    ``SeedSequence`` spawn key, so distinct paths give statistically
    independent streams and the same path always gives the same stream.
    """
    if not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
