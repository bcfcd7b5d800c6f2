# dpconsider/utils/random_streams.py

import numpy as np

# Stream ids inside one iteration. Each sampler block gets its own stream so
# switching a block off (model variants) never shifts the draws of the others.
STREAM_BETA = 0
STREAM_B = 1
STREAM_D = 2
STREAM_DELTA = 3
STREAM_CS = 4
STREAM_DP = 5
STREAM_INIT = 6
STREAM_DEBUG = 7


def stream(seed: int, *key: int) -> np.random.Generator:
    """Generator whose draws depend only on (seed, key).

    The fit loop keys streams by (iteration, block[, sub-block]), so iteration g
    is reproducible on its own and a resumed chain matches the uninterrupted one.
    """
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(seq))
