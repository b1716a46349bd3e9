import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from llrquant.modem import (
    L_MAX,
    SOFT_BIT_DELTA,
    build_constellation,
    demap_hard,
    from_soft_bits,
    llr_exact,
    llr_from_stats,
    llr_maxlog,
    map_bits,
    sufficient_stats,
    to_soft_bits,
)


def brute_force_llr(y, h, sigma2, c):
    """Direct summation over every constellation point, no stabilisation.

    The result is clipped to the same +-L_MAX bound the demapper applies.
    """
    d = np.abs(y - h * c.points) ** 2 / sigma2
    p = np.exp(-d)
    out = np.empty(c.K)
    for k in range(c.K):
        one = c.labels[:, k] == 1
        out[k] = np.log(p[one].sum() / p[~one].sum())
    return np.clip(out, -L_MAX, L_MAX)


@pytest.mark.parametrize("K", [2, 4, 6, 8, 10, 12])
def test_unit_energy_and_bijection(K):
    c = build_constellation(K)
    assert c.points.size == 2**K
    assert abs(np.mean(np.abs(c.points) ** 2) - 1.0) < 1e-12
    labels = {tuple(l) for l in c.labels}
    assert len(labels) == 2**K
    assert np.unique(np.round(c.points, 12)).size == 2**K


def test_qpsk_points():
    c = build_constellation(2)
    expected = {complex(a, b) / np.sqrt(2) for a in (-1, 1) for b in (-1, 1)}
    assert {complex(np.round(p, 12)) for p in c.points} == {complex(np.round(e, 12)) for e in expected}
    # first bit labels the real axis
    assert map_bits([1, 1], c) == c.points[3]
    assert np.sign(map_bits([1, 0], c).real) == np.sign(map_bits([1, 1], c).real)


@pytest.mark.parametrize("K", [2, 4, 6, 8])
def test_gray_adjacency(K):
    c = build_constellation(K)
    pts = {(round(p.real, 9), round(p.imag, 9)): lab for p, lab in zip(c.points, c.labels)}
    step = c.pam_levels[1] - c.pam_levels[0]
    for (re, im), lab in pts.items():
        for nb in ((round(re + step, 9), im), (re, round(im + step, 9))):
            if nb in pts:
                assert np.sum(lab != pts[nb]) == 1


@pytest.mark.parametrize("K", [1, 3, 0, 14, -2, 2.5])
def test_invalid_K(K):
    with pytest.raises(ValueError):
        build_constellation(K)


def test_map_bits_wrong_length():
    with pytest.raises(ValueError):
        map_bits([0, 1, 1], build_constellation(2))


@pytest.mark.parametrize("K", [2, 4, 6, 8])
def test_map_then_hard_demap_roundtrip(K):
    c = build_constellation(K)
    allbits = np.array(list(itertools.product([0, 1], repeat=K)))
    x = map_bits(allbits, c)
    assert np.unique(np.round(x, 12)).size == 2**K
    assert np.array_equal(demap_hard(x, c), allbits)


def test_llr_zero_input_qpsk():
    c = build_constellation(2)
    assert np.allclose(llr_exact(0j, 1.0, 1.0, c), 0.0)
    assert np.allclose(llr_maxlog(0j, 1.0, 1.0, c), 0.0)


def test_qpsk_closed_form():
    c = build_constellation(2)
    rng = np.random.default_rng(3)
    y = rng.normal(size=1000) + 1j * rng.normal(size=1000)
    h = rng.normal(size=1000) + 1j * rng.normal(size=1000)
    s2 = rng.uniform(0.2, 3.0, 1000)
    G, yr, yi = sufficient_stats(y, h, s2)
    L = llr_exact(y, h, s2, c)
    expect = np.clip(np.stack([2 * np.sqrt(2) * G * yr, 2 * np.sqrt(2) * G * yi], -1), -L_MAX, L_MAX)
    assert np.max(np.abs(L - expect)) < 1e-10


def test_256qam_matches_direct_summation():
    c = build_constellation(8)
    rng = np.random.default_rng(11)
    for _ in range(100):
        h = complex(rng.normal(), rng.normal()) / np.sqrt(2)
        s2 = 10 ** (-rng.uniform(5, 12) / 10)
        x = c.points[rng.integers(256)]
        y = h * x + np.sqrt(s2 / 2) * complex(rng.normal(), rng.normal())
        ref = brute_force_llr(y, h, s2, c)
        got = llr_exact(y, h, s2, c)
        assert np.all(np.abs(got - ref) <= 1e-9 * np.maximum(np.abs(ref), 1.0))


def test_maxlog_close_at_high_gain():
    c = build_constellation(4)
    rng = np.random.default_rng(5)
    x = c.points[rng.integers(16, size=2000)]
    h = np.ones(2000)
    s2 = 1.0 / rng.uniform(100, 400, 2000)
    y = x + np.sqrt(s2 / 2) * (rng.normal(size=2000) + 1j * rng.normal(size=2000))
    # keep away from the clip so both sides are unclipped
    diff = np.abs(llr_maxlog(y, h, s2, c) - llr_exact(y, h, s2, c))
    assert diff.max() < 1e-3


def test_llr_sign_convention():
    c = build_constellation(4)
    L = llr_maxlog(c.points, np.ones(16), np.full(16, 1 / 50), c)
    assert np.all(np.sign(L) == 2 * c.labels - 1)
    L = llr_exact(c.points, np.ones(16), np.full(16, 1 / 50), c)
    assert np.all(np.sign(L) == 2 * c.labels - 1)


def test_sufficient_stats_examples():
    G, yr, yi = sufficient_stats(1 + 1j, 1.0, 1.0)
    assert (G, yr, yi) == (1.0, 1.0, 1.0)
    G, yr, yi = sufficient_stats(2j * (0.3 - 0.2j), 2j, 1.0)
    assert np.isclose(G, 4.0) and np.isclose(yr, 0.3) and np.isclose(yi, -0.2)


def test_llr_from_stats_identical():
    c = build_constellation(8)
    rng = np.random.default_rng(2)
    y = rng.normal(size=500) + 1j * rng.normal(size=500)
    h = rng.normal(size=500) + 1j * rng.normal(size=500)
    s2 = rng.uniform(0.01, 0.1, 500)
    assert np.array_equal(llr_exact(y, h, s2, c), llr_from_stats(*sufficient_stats(y, h, s2), c))


@pytest.mark.parametrize("bad", [dict(h=0.0), dict(sigma2=0.0), dict(sigma2=-1.0)])
def test_invalid_channel_arguments(bad):
    c = build_constellation(4)
    args = dict(y=1 + 1j, h=1.0, sigma2=1.0) | bad
    with pytest.raises(ValueError):
        llr_exact(args["y"], args["h"], args["sigma2"], c)
    with pytest.raises(ValueError):
        llr_maxlog(args["y"], args["h"], args["sigma2"], c)


@settings(max_examples=60, deadline=None)
@given(
    yr=st.floats(-1.5, 1.5), yi=st.floats(-1.5, 1.5),
    hr=st.floats(0.1, 2.0), phase=st.floats(-np.pi, np.pi),
    s2=st.floats(0.005, 1.0), rot=st.floats(-np.pi, np.pi),
)
def test_phase_rotation_invariance(yr, yi, hr, phase, s2, rot):
    c = build_constellation(6)
    h = hr * np.exp(1j * phase)
    y = complex(yr, yi)
    r = np.exp(1j * rot)
    for fn in (llr_exact, llr_maxlog):
        a = fn(y, h, s2, c)
        b = fn(y * r, h * r, s2, c)
        assert np.allclose(a, b, rtol=1e-9, atol=1e-9)
    # equivalent equalised channel
    assert np.allclose(llr_exact(y, h, s2, c), llr_exact(y / h, 1.0, s2 / abs(h) ** 2, c),
                       rtol=1e-12, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(yr=st.floats(-1.5, 1.5), yi=st.floats(-1.5, 1.5), G=st.floats(0.0, 500.0))
def test_gray_symmetry_swaps_halves(yr, yi, G):
    c = build_constellation(8)
    a = llr_from_stats(G, yr, yi, c)
    b = llr_from_stats(G, yi, yr, c)
    assert np.array_equal(a[:4], b[4:]) and np.array_equal(a[4:], b[:4])


def test_soft_bit_examples():
    assert to_soft_bits(0.0) == 0.0 and from_soft_bits(0.0) == 0.0
    assert to_soft_bits(2.0) == np.tanh(1.0)
    s = to_soft_bits(L_MAX)
    assert s < 1.0
    assert abs(from_soft_bits(s) - 2 * np.arctanh(1 - SOFT_BIT_DELTA)) < 1e-9
    L = np.linspace(-20, 20, 401)
    assert np.allclose(from_soft_bits(to_soft_bits(L)), L, atol=1e-6)


@given(st.lists(st.floats(-L_MAX, L_MAX), min_size=2, max_size=20))
def test_soft_bits_monotone_and_bounded(L):
    L = np.sort(np.array(L))
    s = to_soft_bits(L)
    assert np.all(np.abs(s) < 1.0)
    assert np.all(np.diff(s) >= 0)
