import numpy as np
import pytest

from umadetect import corrupt_cells, default_config, generate_ground_truth, observe


@pytest.fixture(scope="session")
def reference_instance():
    """50x50 rank-2 truth, 2% additive spikes of magnitude 3, sigma 0.01,
    fully observed.  Shared by the solver and acceptance tests."""
    ground, mask = generate_ground_truth(50, 50, 2, sigma=0.01, density=1.0, seed=7)
    clean = observe(ground, mask, grid=False)
    m_bar, spikes = corrupt_cells(clean, mask, 0.02, 3.0, seed=7)
    return {
        "ground": ground,
        "mask": mask,
        "m_bar": m_bar,
        "spikes": spikes,
        "config": default_config(50, 50),
        "norm_m": float(np.linalg.norm(m_bar)),
    }
