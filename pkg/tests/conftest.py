import numpy as np
import pytest

from bnsolver.functional import Params
from bnsolver.grid import (
    AnnulusD,
    Box,
    DomainSpec,
    Field,
    build_domain,
    compute_spectral_data,
)
from bnsolver.lift import Constant, solve_lift


class Setup:
    """One domain with its spectral data and the g = 1 lift."""

    def __init__(self, spec):
        self.domain = build_domain(spec)
        self.spectral = compute_spectral_data(self.domain)
        self.lift = solve_lift(Constant(1.0), self.domain)

    def params(self, lam_factor=0.5, mu=0.01, lam=None):
        lam = lam if lam is not None else lam_factor * self.spectral.lambda1
        return Params(lam=lam, mu=mu, spectral=self.spectral, lift=self.lift)

    def random_field(self, rng, positive=False):
        v = rng.standard_normal(self.domain.n_interior)
        if positive:
            v = np.abs(v) + 0.1
        return Field(v, self.domain)


@pytest.fixture(scope="session")
def box9():
    return Setup(DomainSpec(Box((1.0, 1.0, 1.0)), 3, 9))


@pytest.fixture(scope="session")
def box13():
    return Setup(DomainSpec(Box((1.0, 1.0, 1.0)), 3, 13))


@pytest.fixture(scope="session")
def box5():
    return Setup(DomainSpec(Box((1.0, 1.0, 1.0)), 3, 5))


@pytest.fixture(scope="session")
def annulus9():
    return Setup(DomainSpec(AnnulusD(0.5), 3, 9))
