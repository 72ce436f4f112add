import numpy as np
import pytest

from modnorm.errors import DegenerateSubset, InsufficientData
from modnorm.gap import (GapReport, histogram, inter_batch_gap, intra_batch_gap,
                         per_stage_gap_trace)
from modnorm.model import ModelConfig, build_model
from modnorm.norm import NormConfig, NormKind, NormLayer
from modnorm.data import PKBatchSpec, PKSampler, SyntheticDatasetSpec, generate_dataset
from modnorm.tensor import Tensor4


def bimodal_batch(seed=0, n=8, c=3, offset=2.0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, c, 2, 2))
    tags = np.array(["V", "I"] * (n // 2))
    x[tags == "I"] += offset
    return Tensor4(x), tags


def test_identical_subbatches_zero_gap():
    rng = np.random.default_rng(1)
    half = rng.standard_normal((4, 3, 2, 2))
    x = Tensor4(np.concatenate([half, half]))
    tags = np.array(["V"] * 4 + ["I"] * 4)
    mean_gap, std_gap = intra_batch_gap(x, tags)
    np.testing.assert_array_equal(mean_gap, 0.0)
    np.testing.assert_array_equal(std_gap, 0.0)


def test_mbn_pre_affine_output_has_no_gap():
    x, tags = bimodal_batch()
    layer = NormLayer(NormConfig(NormKind.MBN_SHARED), 3)
    _, cache = layer.forward_train(x, tags)
    mean_gap, _ = intra_batch_gap(Tensor4(cache.xhat), tags)
    assert np.max(mean_gap) <= 1e-6


def test_gap_matches_constructed_offset():
    rng = np.random.default_rng(2)
    half = rng.standard_normal((6, 4, 2, 2))
    delta = np.array([0.5, -1.0, 2.0, 0.0])
    x = Tensor4(np.concatenate([half, half + delta[None, :, None, None]]))
    tags = np.array(["V"] * 6 + ["I"] * 6)
    mean_gap, std_gap = intra_batch_gap(x, tags)
    np.testing.assert_allclose(mean_gap, np.abs(delta), atol=1e-10)
    np.testing.assert_allclose(std_gap, 0.0, atol=1e-10)


def test_single_modality_raises():
    rng = np.random.default_rng(3)
    x = Tensor4(rng.standard_normal((4, 2, 1, 1)))
    with pytest.raises(DegenerateSubset):
        intra_batch_gap(x, ["V"] * 4)


def test_modality_swap_symmetry():
    x, tags = bimodal_batch(seed=4)
    swapped = np.where(tags == "V", "I", "V")
    a = intra_batch_gap(x, tags)
    b = intra_batch_gap(x, swapped)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_scaling_homogeneity():
    x, tags = bimodal_batch(seed=5)
    k = 3.5
    a = intra_batch_gap(x, tags)
    b = intra_batch_gap(Tensor4(k * x.data), tags)
    np.testing.assert_allclose(b[0], k * a[0], atol=1e-10)
    np.testing.assert_allclose(b[1], k * a[1], atol=1e-10)


def test_inter_batch_identical_batches_zero_dispersion():
    x, tags = bimodal_batch(seed=6)
    disp = inter_batch_gap([(x, tags)] * 3)
    for m in ("V", "I"):
        np.testing.assert_allclose(disp[m]["mean_dispersion"], 0.0, atol=1e-15)


def test_inter_batch_gap_bn_positive_mbn_tiny():
    ds = generate_dataset(SyntheticDatasetSpec(rng_seed=21))
    sampler = PKSampler(ds, PKBatchSpec(4, 4), seed=3)
    batches = sampler.epoch()[:3]
    bn = NormLayer(NormConfig(NormKind.BN), 8)
    mbn = NormLayer(NormConfig(NormKind.MBN_SHARED), 8)
    bn_out, mbn_out = [], []
    for b in batches:
        _, c1 = bn.forward_train(b.images, b.tags)
        _, c2 = mbn.forward_train(b.images, b.tags)
        bn_out.append((Tensor4(c1.xhat), b.tags))
        mbn_out.append((Tensor4(c2.xhat), b.tags))
    disp_bn = inter_batch_gap(bn_out)
    disp_mbn = inter_batch_gap(mbn_out)
    for m in ("V", "I"):
        assert np.all(disp_bn[m]["mean_dispersion"] > 0)
        assert np.max(disp_mbn[m]["mean_dispersion"]) <= 1e-6


def test_inter_batch_needs_two_batches():
    x, tags = bimodal_batch()
    with pytest.raises(InsufficientData):
        inter_batch_gap([(x, tags)])


# -- histogram ------------------------------------------------------------


def test_histogram_constant_array():
    edges, counts = histogram(np.full(17, 3.0), 5)
    assert counts.tolist() == [17]
    assert edges.tolist() == [3.0, 3.0]


def test_histogram_exact_halving():
    edges, counts = histogram(np.array([0.0, 1.0, 2.0, 3.0]), 2)
    np.testing.assert_allclose(edges, [0.0, 1.5, 3.0])
    assert counts.tolist() == [2, 2]


def test_histogram_matches_loop_oracle():
    rng = np.random.default_rng(7)
    values = rng.standard_normal(10000)
    edges, counts = histogram(values, 50)
    oracle = np.zeros(50, dtype=int)
    lo, hi = values.min(), values.max()
    width = (hi - lo) / 50
    for v in values:
        b = int((v - lo) / width)
        if b == 50:  # right-most bin is closed
            b = 49
        # guard against fp edge assignment differing from linspace edges
        while b > 0 and v < edges[b]:
            b -= 1
        while b < 49 and v >= edges[b + 1]:
            b += 1
        oracle[b] += 1
    assert counts.tolist() == oracle.tolist()
    assert counts.sum() == 10000


def test_histogram_errors():
    with pytest.raises(InsufficientData):
        histogram(np.array([]), 5)
    with pytest.raises(InsufficientData):
        histogram(np.array([1.0]), 0)


# -- per-stage trace ------------------------------------------------------


def make_model(bk, hk, ds, seed=0):
    cfg = ModelConfig(backbone_norm_kind=bk, head_norm_kind=hk)
    return build_model(cfg, 8, ds.train_identities, seed=seed)


def test_stage_trace_mbn_kills_gap_bn_does_not():
    ds = generate_dataset(SyntheticDatasetSpec(rng_seed=0))
    batch = PKSampler(ds, PKBatchSpec(4, 4), seed=1).epoch()[0]
    mbn = make_model(NormKind.MBN_SHARED, NormKind.MBN_SHARED, ds)
    trace = per_stage_gap_trace(mbn, batch)
    assert trace[0][0] == "input" and trace[0][1] > 0
    for label, gap in trace[1:]:
        assert gap <= 1e-6, label

    bn = make_model(NormKind.BN, NormKind.BN, ds)
    trace_bn = per_stage_gap_trace(bn, batch)
    assert trace_bn[0][1] > 0
    assert any(gap > 1e-6 for _, gap in trace_bn[1:])


def test_stage_trace_unimodal_noise_floor():
    bimodal = generate_dataset(SyntheticDatasetSpec(rng_seed=0))
    unimodal = generate_dataset(SyntheticDatasetSpec(modality_offset_scale=0.0, rng_seed=0))
    batch_b = PKSampler(bimodal, PKBatchSpec(4, 4), seed=1).epoch()[0]
    batch_u = PKSampler(unimodal, PKBatchSpec(4, 4), seed=1).epoch()[0]
    gap_b = per_stage_gap_trace(make_model(NormKind.BN, NormKind.BN, bimodal), batch_b)[0][1]
    gap_u = per_stage_gap_trace(make_model(NormKind.BN, NormKind.BN, unimodal), batch_u)[0][1]
    assert gap_b > 10 * gap_u


def test_gap_report_summary():
    batches = [bimodal_batch(seed=s) for s in range(3)]
    report = GapReport.from_batches(batches)
    assert report.per_channel_intra_gap.shape == (3,)
    assert len(report.per_batch_modality_stats) == 6
    assert report.summary["intra_mean_gap"]["min"] <= report.summary["intra_mean_gap"]["max"]
    assert "V" in report.inter_batch_dispersion
