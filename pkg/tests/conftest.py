import numpy as np
import pytest

from folix import MetricCoeffs, Slope, TrigPoly, build_geometry, is_bundle_like


@pytest.fixture(scope="session")
def flat_metric():
    return MetricCoeffs.flat(Slope.rational(0, 1))


@pytest.fixture(scope="session")
def flat_geometry(flat_metric):
    return build_geometry(flat_metric, (16, 16))


@pytest.fixture(scope="session")
def flat_certificate(flat_metric):
    return is_bundle_like(flat_metric, 1e-10)


@pytest.fixture(scope="session")
def sin_metric():
    """a = 1 + sin(2 pi v)/2, b = 0, c = 1, theta = 0: bundle-like (a_H = 1),
    nonzero mean curvature F = -a'/(2a)."""
    return MetricCoeffs(a=TrigPoly.from_terms({(0, 0): 1.0, (0, 1): -0.25j}),
                        b=TrigPoly.constant(0.0), c=TrigPoly.constant(1.0),
                        theta=Slope.rational(0, 1))


@pytest.fixture(scope="session")
def sin_geometry(sin_metric):
    return build_geometry(sin_metric, (16, 16))


@pytest.fixture(scope="session")
def sin_certificate(sin_metric):
    return is_bundle_like(sin_metric, 1e-10)


@pytest.fixture(scope="session")
def leafwise_metric():
    """c = 1 + 0.3 cos(2 pi (2v - u)), theta = 1/2: a genuinely 2D bundle-like
    metric (a_H depends on v - u/2 only)."""
    return MetricCoeffs(a=TrigPoly.constant(1.0), b=TrigPoly.constant(0.0),
                        c=TrigPoly.from_terms({(0, 0): 1.0, (-1, 2): 0.15}),
                        theta=Slope.rational(1, 2))


@pytest.fixture(scope="session")
def leafwise_geometry(leafwise_metric):
    return build_geometry(leafwise_metric, (32, 32))


@pytest.fixture(scope="session")
def leafwise_certificate(leafwise_metric):
    return is_bundle_like(leafwise_metric, 1e-10)


def random_positive_metric(rng, theta=None, scale=0.15):
    """Random positive-definite trig-polynomial metric (not bundle-like in general)."""
    def poly(base):
        terms = {(0, 0): base}
        for (m, n) in [(1, 0), (0, 1), (1, 1)]:
            amp = scale * (rng.normal() + 1j * rng.normal()) / 2
            terms[(m, n)] = amp
        return TrigPoly.from_terms(terms)

    if theta is None:
        theta = Slope.real(rng.uniform(-1.2, 1.2))
    return MetricCoeffs(a=poly(1.0 + rng.uniform(0, 0.5)),
                        b=TrigPoly.from_terms({(1, 0): scale * 0.3 * rng.normal()}),
                        c=poly(1.0 + rng.uniform(0, 0.5)), theta=theta)
