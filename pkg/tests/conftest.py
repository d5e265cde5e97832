import numpy as np
import pytest

from alphatest import PanelData


def random_panel(n, t, r=3, seed=0, alpha=None, noise=1.0):
    """Plain iid-error panel for unit tests."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((r, t))
    beta = rng.standard_normal((n, r))
    y = beta @ x + noise * rng.standard_normal((n, t))
    if alpha is not None:
        y = y + np.asarray(alpha)[:, None]
    return PanelData(returns=y, factors=x)


@pytest.fixture
def small_panel():
    return random_panel(5, 40, r=2, seed=11)
