"""Random instance generators shared by the tests."""

import numpy as np


def random_toy_counts(rng, n_studies, max_cell=5):
    """(n, 4) counts with both margins nonempty."""
    c = rng.integers(0, max_cell + 1, (n_studies, 4)).astype(float)
    c[c[:, 0] + c[:, 2] == 0, 0] = 1
    c[c[:, 1] + c[:, 3] == 0, 3] = 1
    return c


def random_theta(rng, var_range=(0.05, 1.0)):
    return np.array([
        rng.uniform(-2, 2),
        rng.uniform(-2, 2),
        rng.uniform(*var_range),
        rng.uniform(*var_range),
        rng.uniform(-0.8, 0.8),
    ])
