import warnings

import pytest

from lqe.config import preset
from lqe.denoisers import make_target_walk, perfect_target_denoiser
from lqe.generators import make_sampler, targets_needed
from lqe.schedule import build_schedule

# The short default ladder ends well above the noise-dominated regime on
# purpose; silence the advisory warning for the whole suite.
warnings.filterwarnings("ignore", message="terminal alpha_bar")


@pytest.fixture(scope="session")
def vc2():
    return preset("videocrafter2-like")


@pytest.fixture(scope="session")
def schedule():
    return build_schedule(64)


@pytest.fixture(scope="session")
def sampler(vc2):
    return make_sampler(vc2)


def oracle_pair(config):
    """Target walk sized for the config plus its perfect denoiser."""
    targets = make_target_walk(targets_needed(config), config.l, config.d,
                               seed=config.seed)
    schedule = build_schedule(config.T, config.beta_min, config.beta_max)
    return targets, perfect_target_denoiser(targets, schedule)
