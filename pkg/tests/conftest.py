import numpy as np
import pytest

from stackrl import netcore
from stackrl.netcore import NetConfig
from stackrl.rng import Stream


@pytest.fixture
def stream():
    return Stream(12345, 0)


def random_net(kind: str, obs_dim: int = 5, action_dim: int = 3,
               hidden=(8, 6), seed: int = 0) -> tuple[NetConfig, netcore.NetParams]:
    cfg = NetConfig(obs_dim=obs_dim, action_dim=action_dim, action_kind=kind, hidden=tuple(hidden))
    params = netcore.init_params(cfg, Stream(seed, 77))
    return cfg, params


def random_batch(stream: Stream, tag: int, B: int, dim: int) -> np.ndarray:
    return stream.normal(tag, np.arange(B * dim, dtype=np.uint64)).reshape(B, dim)
