import numpy as np
import pytest

from gfepanel import PanelDataset


def make_panel(y, X=None, covariate_names=None, unit_ids=None, time_ids=None):
    """Build a PanelDataset from plain nested lists."""
    y = np.asarray(y, dtype=float)
    n, t = y.shape
    if X is None:
        X = np.zeros((n, t, 0))
        covariate_names = ()
    else:
        X = np.asarray(X, dtype=float)
        if covariate_names is None:
            covariate_names = tuple(f"x{j + 1}" for j in range(X.shape[2]))
    if unit_ids is None:
        unit_ids = [f"u{i}" for i in range(n)]
    if time_ids is None:
        time_ids = list(range(1, t + 1))
    return PanelDataset(unit_ids, time_ids, y, X, covariate_names)


def random_panel(rng, n=None, t=None, j=2, dynamic=False):
    """Random panel with heterogeneous intercepts; outcome from a logit DGP
    so that fits are usually well behaved."""
    n = n or int(rng.integers(4, 11))
    t = t or int(rng.integers(3, 7))
    alpha = rng.normal(0, 1, n)
    X = rng.normal(0, 1, (n, t, j))
    u = rng.logistic(size=(n, t))
    if dynamic:
        y = np.zeros((n, t))
        y[:, 0] = (X[:, 0].sum(axis=1) + alpha + u[:, 0] > 0)
        for s in range(1, t):
            y[:, s] = (0.5 * y[:, s - 1] + X[:, s].sum(axis=1) + alpha + u[:, s] > 0)
    else:
        y = (X.sum(axis=2) + alpha[:, None] + u > 0).astype(float)
    return make_panel(y, X)


def well_behaved_panel(rng, max_tries=50, **kwargs):
    """Draw random panels until the individual-intercept logit fit
    converges; small panels are frequently quasi-separated."""
    from gfepanel import ModelSpec, fit
    from gfepanel.errors import PanelModelError

    spec = ModelSpec(link="logit", intercept_mode="individual")
    for _ in range(max_tries):
        data = random_panel(rng, **kwargs)
        try:
            if fit(data, spec).converged:
                return data
        except PanelModelError:
            continue
    raise RuntimeError("no convergent draw found")


@pytest.fixture
def table1_panel():
    """Two units, two periods: the first switches state, the second never."""
    return make_panel([[1.0, 0.0], [1.0, 1.0]])
