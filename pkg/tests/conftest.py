import hypothesis
import numpy as np
import pytest

from graphcarve import WeightedCloud

hypothesis.settings.register_profile(
    "suite", max_examples=30, deadline=None,
    suppress_health_check=[hypothesis.HealthCheck.too_slow])
hypothesis.settings.load_profile("suite")


def line_cloud(n_points=50, spacing=0.02, weight=None, extra=None, delta_res=None):
    """Evenly spaced points on the x-axis plus optional extra rows."""
    t = np.arange(n_points) * spacing
    coords = np.column_stack([t, np.zeros_like(t)])
    if extra is not None:
        coords = np.vstack([coords, np.asarray(extra, dtype=float)])
    w = np.full(len(coords), weight if weight is not None else 1.0 / len(coords))
    return WeightedCloud(coords, w, n=1, delta_res=delta_res or spacing)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
