import numpy as np
import pytest

from fallcascade import dataset as ds
from fallcascade.preprocess import WindowSpec, extract_window


@pytest.fixture(scope="session")
def small_dataset():
    spec = ds.SynthSpec(n_subjects=3, falls_per_subject=3, adls_per_subject=3,
                        trace_duration_s=2.0, sample_rate_hz=50, seed=7)
    return ds.synth_generate(spec)


@pytest.fixture(scope="session")
def small_windows(small_dataset):
    spec = WindowSpec(ws_f_s=0.6, ws_b_s=0.5)
    return [extract_window(t, spec) for t in small_dataset.traces]


@pytest.fixture(scope="session")
def separable_xy():
    """Linearly separable 2-feature set: two shifted Gaussian blobs."""
    rng = np.random.default_rng(42)
    n = 120
    x0 = rng.normal(loc=(-2.0, -2.0), scale=0.5, size=(n, 2))
    x1 = rng.normal(loc=(2.0, 2.0), scale=0.5, size=(n, 2))
    X = np.vstack([x0, x1])
    y = np.array([0] * n + [1] * n)
    return X, y
