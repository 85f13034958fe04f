import numpy as np
import pytest

from certisens import ParameterDomain, SurrogateSample
from certisens.rng import stream


@pytest.fixture
def unit_square():
    return ParameterDomain([(0.0, 1.0), (0.0, 1.0)])


def correlated_instance(gen: np.random.Generator, N: int, eps_scale: float = 0.1) -> SurrogateSample:
    """Random surrogate sample shaped like pick-freeze data: correlated
    pairs with nonnegative per-point bounds at a chosen fraction of the
    sample spread."""
    rho = gen.uniform(-0.8, 0.95)
    scale = gen.uniform(0.5, 3.0)
    shift = gen.uniform(-2.0, 2.0)
    y = gen.normal(0.0, 1.0, N)
    yp = rho * y + np.sqrt(max(1.0 - rho ** 2, 0.01)) * gen.normal(0.0, 1.0, N)
    y = scale * y + shift
    yp = scale * yp + shift
    sd = float(y.std())
    eps = gen.uniform(0.0, eps_scale * sd, N)
    epsp = gen.uniform(0.0, eps_scale * sd, N)
    return SurrogateSample(y=y, yp=yp, eps=eps, epsp=epsp)


def admissible_draws(gen: np.random.Generator, s: SurrogateSample, n_draws: int):
    """Uniform draws of full-model outputs inside the error boxes, plus
    their index estimates (vectorized two-pass form)."""
    U = gen.uniform(-1.0, 1.0, (n_draws, s.N))
    Up = gen.uniform(-1.0, 1.0, (n_draws, s.N))
    Y = s.y + U * s.eps
    Yp = s.yp + Up * s.epsp
    cy = Y - Y.mean(axis=1, keepdims=True)
    den = np.mean(cy * cy, axis=1)
    num = np.mean(cy * (Yp - Yp.mean(axis=1, keepdims=True)), axis=1)
    return num / den


def rng_for(label: int) -> np.random.Generator:
    """Deterministic per-test generator, decoupled from package roles."""
    return stream(987654321, 7, label)
