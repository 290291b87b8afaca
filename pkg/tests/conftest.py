import warnings

import numpy as np
import pytest
from hypothesis import settings

from fracconvex.envelope import ConvergenceWarning

settings.register_profile("fracconvex", max_examples=40, deadline=None)
settings.load_profile("fracconvex")


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture(autouse=True)
def _quiet_convergence():
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConvergenceWarning)
        yield
