import functools

import pytest

from callroute import CallCentreEnv, SimConfig


@pytest.fixture
def cfg():
    return SimConfig().validate()


@pytest.fixture
def env_factory(cfg):
    return functools.partial(CallCentreEnv, cfg)


def make_cfg(**overrides) -> SimConfig:
    return SimConfig().with_overrides(**overrides)


def single_lane_cfg(service=50.0, inter_arrival=100.0, abandonment=None) -> SimConfig:
    """One staff member, one inquiry type; abandonment disabled by default."""
    return SimConfig(
        inter_arrival_mean=(inter_arrival,),
        abandonment_mean=(float("inf") if abandonment is None else abandonment,),
        service_mean=((service,),),
        n_staff=1,
    ).validate()
