import hypothesis
import numpy as np
import pytest

from ofdm_rsma.channel import SystemConfig, freq_channel, sample_channel

hypothesis.settings.register_profile("ci", max_examples=25, deadline=None)
hypothesis.settings.load_profile("ci")


def small_config(**overrides) -> SystemConfig:
    base = dict(
        K=2,
        Nt=4,
        Nc=8,
        delta_f=15e3,
        cp_len=4,
        fc=4e9,
        n_paths=8,
        v_max=100.0,
        beta=0.4,
        Pt=8.0,
        sigma2=0.05,
        r_min=(0.0, 0.0),
        n_clusters=4,
    )
    base.update(overrides)
    if "r_min" not in overrides:
        base["r_min"] = (0.0,) * base["K"]
    if "Nt" not in overrides and base["Nt"] < base["K"]:
        base["Nt"] = base["K"]
    return SystemConfig(**base)


@pytest.fixture
def cfg():
    return small_config()


@pytest.fixture
def channel(cfg):
    rng = np.random.default_rng(1234)
    return freq_channel(sample_channel(cfg, rng), cfg)
