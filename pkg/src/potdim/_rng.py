import numpy as np

RNG_ALGORITHM = "numpy.random.Philox (SeedSequence spawn keys)"


def make_rng(seed: int | None, *key: int) -> np.random.Generator:
    """Counter-based generator; ``key`` selects an independent stream."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
