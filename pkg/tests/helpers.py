import numpy as np


def toy_effect_data(n=800, seed=0, tau=None):
    """Randomised two-arm data with a known effect function."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 4))
    t = (rng.random(n) < 0.5).astype(float)
    effect = tau(X) if tau is not None else 2.0 + X[:, 0]
    y = X[:, 1] + 0.5 * X[:, 2] + t * effect + rng.normal(0, 0.5, n)
    return X, t, y, effect
