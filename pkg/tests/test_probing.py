"""Stable-rank probe tests against closed forms and an independent numpy
SVD oracle."""

import numpy as np
import pytest
import torch

from cellsearch.errors import ContractError, ShapeError
from cellsearch.ops import OpKind
from cellsearch.probing import (LayerProbeSeries, estimate_rank, probe_network,
                                stable_rank, unfold_conv_weight)
from cellsearch.searchspace import SupernetSpec, assemble_supernet


def test_unfold_shape_and_layout():
    w = torch.arange(2 * 3 * 2 * 2, dtype=torch.float32).reshape(2, 3, 2, 2)
    mat = unfold_conv_weight(w)
    assert mat.shape == (2, 12)
    assert torch.equal(mat[0], w[0].reshape(-1))
    with pytest.raises(ShapeError):
        unfold_conv_weight(torch.randn(3, 3))


def test_identity_unfolding_gives_one():
    # weight whose unfolded matrix is the 4x4 identity
    w = torch.eye(4).reshape(4, 4, 1, 1)
    assert stable_rank(w) == 1.0


def test_rank_one_d4_gives_quarter():
    u = torch.randn(4, 1, dtype=torch.float64)
    v = torch.randn(1, 9, dtype=torch.float64)
    w = (u @ v).reshape(4, 1, 3, 3)
    assert stable_rank(w) == pytest.approx(0.25, abs=1e-12)


def test_scale_invariance():
    torch.manual_seed(1)
    for _ in range(100):
        w = torch.randn(6, 3, 3, 3, dtype=torch.float64)
        s = stable_rank(w)
        for c in (1e-3, 1.0, 1e3):
            assert stable_rank(c * w) == pytest.approx(s, abs=1e-12)


def test_range_and_zero_weight():
    torch.manual_seed(2)
    for _ in range(50):
        w = torch.randn(5, 4, 3, 3)
        assert 0.0 <= stable_rank(w) <= 1.0
    assert stable_rank(torch.zeros(4, 4, 3, 3)) == 0.0


def test_matches_independent_numpy_oracle():
    rng = np.random.default_rng(7)
    delta = 0.01
    for _ in range(20):
        w = rng.standard_normal((8, 4, 3, 3))
        mat = w.reshape(8, -1)
        sv = np.linalg.svd(mat, compute_uv=False)
        r = int(np.sum(sv >= delta * sv[0]))
        expected = float(np.sum(sv[:r]) / (min(mat.shape) * sv[0]))
        got = stable_rank(torch.from_numpy(w), delta=delta)
        assert got == pytest.approx(expected, abs=1e-8)


def test_estimate_rank_contracts():
    assert estimate_rank([3.0, 1.0, 0.04], 0.01) == 3
    assert estimate_rank([3.0, 1.0, 0.02], 0.01) == 2  # 0.02 < 0.01 * 3.0
    assert estimate_rank([3.0, 1.0, 0.02], 0.5) == 1
    assert estimate_rank([], 0.01) == 0
    assert estimate_rank([0.0, 0.0], 0.01) == 0  # identically-zero weight
    with pytest.raises(ContractError):
        estimate_rank([1.0, 2.0], 0.01)  # not descending
    with pytest.raises(ContractError):
        estimate_rank([1.0, -0.5], 0.01)  # negative
    with pytest.raises(ContractError):
        estimate_rank([1.0], 0.0)  # delta out of range
    with pytest.raises(ContractError):
        estimate_rank([1.0], 1.0)


def test_threshold_boundary_is_inclusive():
    # sigma exactly at delta * sigma_1 must be retained
    assert estimate_rank([1.0, 0.01], 0.01) == 2


def test_series_contracts():
    series = LayerProbeSeries("0:stem")
    series.append(1, 0.5)
    with pytest.raises(ContractError):
        series.append(1, 0.4)  # epochs must strictly increase
    with pytest.raises(ContractError):
        series.append(2, 1.5)  # outside [0, 1]
    series.append(2, 0.6)
    assert series.epochs == [1, 2]
    assert series.stable_ranks == [0.5, 0.6]


def _tiny_net():
    spec = SupernetSpec(num_cells=1, init_channels=4, num_classes=3,
                        ops=(OpKind.SEP_CONV_3X3, OpKind.SKIP_CONNECT))
    return assemble_supernet(spec, 1, seed=0)


def test_probe_is_read_only_and_covers_registry():
    net = _tiny_net()
    before = {k: v.clone() for k, v in net.state_dict().items()}
    series = probe_network(net, 1)
    assert set(series) == {layer_id for layer_id, _ in net.conv_registry()}
    for k, v in net.state_dict().items():
        assert torch.equal(before[k], v), f"probe mutated {k}"


def test_probe_appends_across_epochs():
    net = _tiny_net()
    series = probe_network(net, 1)
    series = probe_network(net, 2, series)
    for s in series.values():
        assert s.epochs == [1, 2]
        # weights unchanged between probes -> identical values
        assert s.stable_ranks[0] == s.stable_ranks[1]
