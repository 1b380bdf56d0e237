import os
import sys

import numpy as np
import pytest
from hypothesis import strategies as st

# Ensure project root is on sys.path when running from the tests directory
ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from dynamics.rates import RateFamily, all_pairs_mobility  # noqa: E402
from kernel.interaction import interaction_operator  # noqa: E402
from kernel.kernel_builder import KernelSpec, build_kernel  # noqa: E402
from kernel.site_space import SiteSpace  # noqa: E402
from measure.configuration import Configuration  # noqa: E402
from measure.dpp import exact_distribution  # noqa: E402


def random_instance(n, seed=7, lambda_max=0.8, weights=None, rank=None):
    """(space, kernel, interaction) for a random contraction kernel on n labelled sites."""
    space = SiteSpace.from_labels(n, weights)
    params = {"seed": seed, "lambda_max": lambda_max}
    if rank is not None:
        params["rank"] = rank
    kernel = build_kernel(space, KernelSpec("random_contraction", params))
    return space, kernel, interaction_operator(kernel)


def diagonal_instance(values, weights=None):
    space = SiteSpace.from_labels(len(values), weights)
    kernel = build_kernel(space, KernelSpec("diagonal", {"values": list(values)}))
    return space, kernel, interaction_operator(kernel)


@st.composite
def instances(draw, min_sites=2, max_sites=7, lambda_max=(0.3, 0.95)):
    n = draw(st.integers(min_sites, max_sites))
    seed = draw(st.integers(0, 2**31 - 1))
    lam = draw(st.floats(*lambda_max))
    return random_instance(n, seed=seed, lambda_max=lam)


def configurations(n_sites):
    return st.integers(0, (1 << n_sites) - 1).map(lambda mask: Configuration.from_bitmask(mask, n_sites))


@st.composite
def site_outside(draw, n_sites):
    """(x, γ) with x not in γ."""
    x = draw(st.integers(0, n_sites - 1))
    mask = draw(st.integers(0, (1 << n_sites) - 1)) & ~(1 << x)
    return x, Configuration.from_bitmask(mask, n_sites)


@pytest.fixture
def small_instance():
    return random_instance(5, seed=11, lambda_max=0.8)


@pytest.fixture
def weighted_instance():
    return random_instance(4, seed=3, lambda_max=0.7, weights=[0.5, 2.0, 1.0, 0.75])


@pytest.fixture
def small_table(small_instance):
    space, _, interaction = small_instance
    return exact_distribution(interaction, space)


@pytest.fixture
def glauber_family():
    return RateFamily("glauber", s=0.5)


@pytest.fixture
def kawasaki_family():
    return RateFamily("kawasaki", s=0.5, mobility=all_pairs_mobility(5))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
