import numpy as np
import pytest

import levywave as lw

# Feasible reference configuration: theta_bar = 0.5 and theta_under = 0.2 via a
# symmetric band straddling the unit circle, kappa = 2, ell_a = ell_b = 0.1.
_RHO = 6.0 / 7.0


@pytest.fixture
def domain():
    return lw.SpectralDomain(modes=16)


@pytest.fixture
def worked_model():
    return lw.LevyModel(
        lw.UniformBand(0.5, 1.0 + 0.1 / _RHO, _RHO, symmetric=True), small_cutoff=0.1
    )


@pytest.fixture
def worked_coeff():
    c = np.sqrt(0.1)
    return lw.make_coefficients("linear", c, "bounded", c)


@pytest.fixture
def worked_params(worked_model, worked_coeff, domain):
    return lw.compute_params(2.0, worked_model, worked_coeff, domain)
