import numpy as np
import pytest

import convexlab as cl

TAU = 30.0 / 365.0


@pytest.fixture(scope="session")
def fig1_model():
    # sigma0=0.2, high 0.25 / low 0.02 after the switch at T + tau/2, T=0.05
    return cl.two_path_switch_model(0.2, 0.25, 0.02, 0.05 + TAU / 2)


@pytest.fixture(scope="session")
def fig1_surface(fig1_model):
    return cl.surface_grid(fig1_model)


@pytest.fixture(scope="session")
def fig1_exact(fig1_model):
    return cl.ExactLocalVol(fig1_model)


@pytest.fixture(scope="session")
def general3_model():
    # three paths, common 0.2 prefix, switch at t1=0.06 < tau
    p1 = cl.VolPath([0.0, 0.06], [0.2, 0.30])
    p2 = cl.VolPath([0.0, 0.06, 0.10], [0.2, 0.15, 0.22])
    p3 = cl.VolPath([0.0, 0.06], [0.2, 0.10])
    return cl.MixtureModel([p1, p2, p3], [0.4, 0.35, 0.25], 0.2, 0.06)


@pytest.fixture(scope="session")
def general3_surface(general3_model):
    return cl.surface_grid(general3_model)


@pytest.fixture(scope="session")
def flat_model():
    # two identical constant-0.2 paths: a degenerate mixture, flat local vol
    p = cl.VolPath([0.0], [0.2])
    return cl.MixtureModel([p, p], [0.5, 0.5], 0.2, 0.05 + TAU / 2)


@pytest.fixture(scope="session")
def flat_surface(flat_model):
    return cl.surface_grid(flat_model)


def random_mixture(rng: np.random.Generator) -> cl.MixtureModel:
    """Random valid mixture: common prefix, 2..4 paths, optional extra break."""
    n = int(rng.integers(2, 5))
    sigma0 = float(rng.uniform(0.1, 0.35))
    t1 = float(rng.uniform(0.02, 0.09))
    tau = TAU
    t2 = t1 + tau
    paths = []
    post = rng.uniform(0.05, 0.5, size=n)
    post[1] = post[0] + rng.uniform(0.05, 0.2)  # guarantee non-degeneracy
    for i in range(n):
        breaks = [0.0, t1]
        levels = [sigma0, float(post[i])]
        if rng.random() < 0.5:
            breaks.append(float(rng.uniform(t1 + 0.2 * tau, t2 - 0.1 * tau)))
            levels.append(float(rng.uniform(0.05, 0.5)))
        paths.append(cl.VolPath(breaks, levels))
    w = rng.uniform(0.2, 1.0, size=n)
    w /= w.sum()
    return cl.MixtureModel(paths, w, sigma0, t1, tau)
