import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from llrquant.quantizer import (
    LatentQuantizer,
    ScalarCodebook,
    fit_latent_quantizer,
    format_latent_quantizer,
    format_mmi_quantizer,
    kmeans_fit,
    mmi_fit,
    mmi_fit_bit,
    mmi_quantize,
    mutual_information,
    parse_latent_quantizer,
    parse_mmi_quantizer,
    quantize_latent,
)


def test_codebook_rejects_unsorted():
    with pytest.raises(ValueError):
        ScalarCodebook(np.array([0.5, 0.1]), 1)
    with pytest.raises(ValueError):
        ScalarCodebook(np.array([0.1, 0.2, 0.3]), 1)


def test_one_level_is_sample_mean():
    x = np.random.default_rng(0).normal(size=1000)
    cb = kmeans_fit(x, 0).codebook
    assert cb.levels.size == 1 and np.isclose(cb.levels[0], x.mean())


def test_exact_distinct_values_recovered():
    vals = np.array([-0.7, -0.1, 0.2, 0.9])
    x = np.repeat(vals, 50)
    np.random.default_rng(1).shuffle(x)
    res = kmeans_fit(x, 2)
    assert np.array_equal(res.codebook.levels, vals)
    assert res.codebook.distortion(x) == 0.0


def test_too_few_distinct_samples():
    with pytest.raises(ValueError):
        kmeans_fit(np.array([0.1, 0.2, 0.1]), 2)


@pytest.mark.parametrize("seed", range(5))
def test_lloyd_refinement_monotone(seed):
    rng = np.random.default_rng(seed)
    x = np.concatenate([rng.normal(-0.5, 0.1, 3000), rng.uniform(-1, 1, 3000), rng.normal(0.6, 0.05, 2000)])
    res = kmeans_fit(x, 4, iterations=5, refine_passes=15, seed=seed)
    d = np.array(res.refine_distortion)
    assert np.all(np.diff(d) <= 1e-15)
    assert np.all(np.diff(res.codebook.levels) > 0)


def test_kmeans_deterministic():
    x = np.random.default_rng(2).uniform(-1, 1, 5000)
    a = kmeans_fit(x, 3, seed=4).codebook.levels
    b = kmeans_fit(x, 3, seed=4).codebook.levels
    assert np.array_equal(a, b)


def random_quantizer(rng, allocation):
    cbs = [ScalarCodebook(np.sort(rng.choice(np.linspace(-1, 1, 4001), 1 << b, replace=False)), b)
           for b in allocation]
    return LatentQuantizer(tuple(cbs))


@pytest.mark.parametrize("allocation", [(1, 1, 1), (2, 3, 2), (5, 5, 5), (4, 6, 5)])
def test_product_nearest_equals_brute_force(allocation):
    rng = np.random.default_rng(sum(allocation))
    q = random_quantizer(rng, allocation)
    z = rng.uniform(-1, 1, (1000, 3))
    zq, idx = quantize_latent(z, q)
    grid = np.array(list(itertools.product(*[cb.levels for cb in q.codebooks])))
    d = ((z[:, None, :] - grid[None]) ** 2).sum(-1)
    brute = grid[np.argmin(d, axis=1)]
    assert np.array_equal(zq, brute)
    assert q.total_bits == sum(allocation)


def test_codebook_point_unchanged_and_tie_goes_low():
    cb = ScalarCodebook(np.array([-0.5, 0.0, 0.25, 0.75]), 2)
    q = LatentQuantizer((cb, cb, cb))
    z = np.array([[-0.5, 0.25, 0.75]])
    assert np.array_equal(quantize_latent(z, q)[0], z)
    mids = (cb.levels[:-1] + cb.levels[1:]) / 2
    assert np.array_equal(cb.quantize(mids), cb.levels[:-1])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.integers(0, 1000))
def test_quantize_idempotent(z, seed):
    q = random_quantizer(np.random.default_rng(seed), (3, 4, 2))
    once, _ = quantize_latent(np.array([z]), q)
    twice, _ = quantize_latent(once, q)
    assert np.array_equal(once, twice)


def test_fit_latent_quantizer_generalizes():
    rng = np.random.default_rng(3)
    z = np.tanh(rng.normal(0, [0.5, 0.8, 1.2], (60000, 3)))
    q = fit_latent_quantizer(z[:40000], (5, 5, 5))
    def dist(part):
        zq, _ = quantize_latent(part, q)
        return np.mean((part - zq) ** 2)
    assert abs(dist(z[40000:]) - dist(z[:40000])) <= 0.1 * dist(z[:40000])
    for cb in q.codebooks:
        assert cb.levels.min() >= -1 and cb.levels.max() <= 1


def test_pack_indices():
    q = random_quantizer(np.random.default_rng(0), (5, 6, 5))
    _, idx = quantize_latent(np.random.default_rng(1).uniform(-1, 1, (10, 3)), q)
    packed = q.pack(idx)
    assert np.all(packed < 1 << 16)
    assert np.array_equal(packed, (idx[:, 0] << 11) | (idx[:, 1] << 5) | idx[:, 2])


def test_latent_file_roundtrip():
    q = random_quantizer(np.random.default_rng(5), (5, 6, 4))
    back = parse_latent_quantizer(format_latent_quantizer(q))
    for a, b in zip(q.codebooks, back.codebooks):
        assert np.array_equal(a.levels, b.levels) and a.bits == b.bits


def gaussian_llrs(rng, n, mu=4.0):
    bits = rng.integers(0, 2, n)
    llr = (2 * bits - 1) * mu + rng.normal(0, np.sqrt(2 * mu), n)
    return llr, bits


def test_symmetric_mixture_threshold_at_zero():
    rng = np.random.default_rng(6)
    llr, bits = gaussian_llrs(rng, 200000)
    # mirror every sample so the histogram is exactly symmetric
    llr = np.r_[llr, -llr]
    bits = np.r_[bits, 1 - bits]
    q = mmi_fit_bit(llr, bits, 1, n_bins=2000)
    width = 80 / 2000
    assert q.thresholds.size == 1 and abs(q.thresholds[0]) <= width


def test_mi_non_decreasing_and_bounded_by_binned():
    rng = np.random.default_rng(7)
    llr, bits = gaussian_llrs(rng, 100000, mu=2.0)
    mis = [mmi_fit_bit(llr, bits, b).mutual_information for b in (1, 2, 3, 4)]
    assert np.all(np.diff(mis) >= -1e-12)
    edges = np.linspace(-40, 40, 2001)
    pos = np.clip(np.searchsorted(edges, llr, side="right") - 1, 0, 1999)
    binned = mutual_information(np.bincount(pos[bits == 0], minlength=2000),
                                np.bincount(pos[bits == 1], minlength=2000))
    assert mis[-1] <= binned + 1e-12
    # the DP optimum beats any single fixed threshold
    assert mis[0] >= mutual_information([np.sum((llr < 1) & (bits == 0)), np.sum((llr >= 1) & (bits == 0))],
                                        [np.sum((llr < 1) & (bits == 1)), np.sum((llr >= 1) & (bits == 1))]) - 1e-12


def test_mutual_information_examples():
    assert mutual_information([10, 0], [0, 10]) == pytest.approx(1.0)
    assert mutual_information([5, 5], [5, 5]) == pytest.approx(0.0)


def test_mmi_lookup_rules():
    rng = np.random.default_rng(8)
    llr, bits = gaussian_llrs(rng, 50000)
    q = mmi_fit(llr[:, None], bits[:, None], 2)
    bq = q.per_bit[0]
    assert bq.thresholds.size == 3 and np.all(np.diff(bq.thresholds) > 0)
    assert np.all(np.diff(bq.representatives) > 0)
    assert mmi_quantize(-1e3, 0, q) == bq.representatives[0]
    for i, t in enumerate(bq.thresholds):
        assert mmi_quantize(t, 0, q) == bq.representatives[i + 1]
    sweep = np.linspace(-50, 50, 2001)
    assert np.all(np.diff(q.quantize(sweep, 0)) >= 0)


def test_mmi_threshold_range_option():
    rng = np.random.default_rng(9)
    llr, bits = gaussian_llrs(rng, 50000, mu=8.0)
    q = mmi_fit_bit(llr, bits, 2, threshold_range=(-3, 3))
    assert np.all(np.abs(q.thresholds) <= 3)


def test_mmi_single_class_rejected():
    with pytest.raises(ValueError):
        mmi_fit_bit(np.array([1.0, 2.0]), np.array([1, 1]), 1)


def test_mmi_file_roundtrip():
    rng = np.random.default_rng(10)
    llr = np.stack([gaussian_llrs(rng, 20000, mu)[0] for mu in (2.0, 5.0)], 1)
    bits = (llr > 0).astype(int) ^ (rng.random(llr.shape) < 0.1)
    q = mmi_fit(llr, bits, 2)
    back = parse_mmi_quantizer(format_mmi_quantizer(q))
    assert back.bits == 2
    for a, b in zip(q.per_bit, back.per_bit):
        assert np.array_equal(a.thresholds, b.thresholds)
        assert np.array_equal(a.representatives, b.representatives)
