import warnings

import numpy as np
import pytest
from hypothesis import settings

from ineqgp import datasets, emulator

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy():
    return datasets.five_point_toy()


def fit_toy(alpha, noisy=True, **kw):
    """Five-point model, Matern 5/2 with sigma2 = 10 and 100 knots."""
    data = datasets.five_point_toy()
    fixed = {"sigma2": 10.0}
    if not noisy:
        fixed["tau2"] = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", emulator.ObservationWarning)
        return emulator.fit(data.x, data.y, "matern52", kw.pop("knots", 100),
                            [f"bounds({-alpha},{alpha})"], fixed=fixed, **kw)


@pytest.fixture(scope="session")
def toy_model_075():
    return fit_toy(0.75)


@pytest.fixture(scope="session")
def toy_model_05():
    return fit_toy(0.5)


@pytest.fixture(scope="session")
def quick_demo(tmp_path_factory):
    """Run each demo once in quick mode (seed 0); returns name -> output dir."""
    from ineqgp import demos

    cache = {}

    def get(name):
        if name not in cache:
            out = tmp_path_factory.mktemp(f"demo-{name}")
            demos.run(name, out, seed=0, quick=True)
            cache[name] = out
        return cache[name]

    return get
