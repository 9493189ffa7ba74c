import numpy as np
import pytest

from chaosmoments.norms import ORACLE, NormError, waterfill_sup
from chaosmoments.oracle import brute_force_norm, brute_force_sup, sphere_grid
from chaosmoments.partitions import Partition
from chaosmoments.rng import stream
from chaosmoments.tails import DistributionMatrix, exponential, gaussian

P = Partition.parse


@pytest.mark.parametrize("m,step", [(2, 0.1), (3, 0.1), (4, 0.3)])
def test_sphere_grid_is_unit_and_dense(m, step):
    g = sphere_grid(m, step)
    assert np.allclose(np.linalg.norm(g, axis=1), 1.0)
    probe = stream(0, 99).standard_normal((200, m))
    probe /= np.linalg.norm(probe, axis=1, keepdims=True)
    # every probe direction has a grid point within about one step
    assert np.max(np.min(np.linalg.norm(probe[:, None] - g[None], axis=2), axis=1)) <= 1.5 * step


def test_zero_tensor():
    D = DistributionMatrix.iid(exponential(), (2, 2))
    nv = brute_force_sup(np.zeros((2, 2)), P("1|2"), 4, D, n_random=1000)
    assert nv.value == 0.0 and nv.status == ORACLE


def test_monotone_in_p():
    a = stream(1, 99).standard_normal((2, 3))
    D = DistributionMatrix.iid(gaussian(), a.shape)
    v4 = brute_force_norm(a, P("1|2"), 4, D, n_random=5000).value
    v8 = brute_force_norm(a, P("1|2"), 8, D, n_random=5000).value
    assert v8 >= v4


@pytest.mark.parametrize("p", [2.0, 4.0, 8.0])
def test_matches_waterfill_n3(p):
    c = np.abs(stream(2, 99).standard_normal(3))
    D = DistributionMatrix.iid(exponential(), (3,))
    orc = brute_force_sup(c, P("1"), p, D, n_random=20_000)
    assert orc.value == pytest.approx(waterfill_sup(c, [exponential()] * 3, p).value, abs=1e-2)
    assert orc.error_bound > 0


def test_rejections():
    D = DistributionMatrix.iid(exponential(), (3, 3))
    with pytest.raises(NormError):
        brute_force_sup(np.ones((3, 3)), P("12"), 4, D)
    with pytest.raises(NormError):
        brute_force_sup(np.ones((3, 3)), P("1|2"), 4, D, resolution=0.5)
    with pytest.raises(NormError):
        brute_force_sup(np.ones((3, 3)), P("1|2"), 4, D, designated=(2, 1))
