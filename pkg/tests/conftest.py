import numpy as np
import pytest

from aoisched.channel import ChannelModel
from aoisched.estimation import CostModel, sample_process
from aoisched.exact import TabularMdp


def build_tiny_mdp(
    seed=0,
    num_devices=2,
    num_channels=1,
    tau_max=6,
    levels=2,
    gamma=0.95,
    drop_probs=(0.05, 0.2),
    check_monotone_drop=True,
):
    """Small solver instance: random generated processes, uniform levels."""
    rng = np.random.default_rng(seed)
    procs = [sample_process(rng) for _ in range(num_devices)]
    costs = [CostModel.from_process(p, tau_max) for p in procs]
    model = ChannelModel.build(
        num_devices,
        num_channels,
        levels,
        drop_probs=list(drop_probs),
        rng=rng,
        check_monotone_drop=check_monotone_drop,
    )
    return TabularMdp(model, costs, gamma=gamma, tau_max=tau_max)


@pytest.fixture(scope="session")
def tiny_mdp():
    return build_tiny_mdp()
