import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradcheck import check_gradients
from twavelet import autodiff as ad
from twavelet.autodiff import Tensor
from twavelet.errors import ConfigError, InvalidInput
from twavelet.lifting import (
    CouplingUnit,
    Mode,
    coupling_forward,
    coupling_inverse,
    decompose,
    decompose_tensor,
    haar_inverse,
    haar_step,
    make_units,
    merge,
    reconstruct,
    split,
)
from twavelet.signal import FrequencyBand, TimeSeriesWindow
from twavelet.spectral import SubbandSet
from twavelet.tree import build_tree, degenerate_tree

f64 = np.float64


def B(a, b):
    return FrequencyBand(float(a), float(b))


def tree_of(*bands, f_max=32.0):
    return build_tree(SubbandSet(tuple(bands), tuple(1.0 for _ in bands), f_max))


TWO = (B(0, 16), B(16, 32))
THREE = (B(0, 8), B(8, 16), B(16, 32))
FOUR = (B(0, 8), B(8, 16), B(16, 24), B(24, 32))


def randomize(unit, rng, scale=0.3):
    """Give the zero-initialized output convs small random weights."""
    for sub in (unit.phi, unit.psi, unit.rho, unit.eta):
        sub.conv2.weight.data[:] = scale * rng.standard_normal(sub.conv2.weight.shape)
        sub.conv2.bias.data[:] = scale * rng.standard_normal(sub.conv2.bias.shape)
    return unit.eval()


class TestSplit:
    def test_example(self):
        even, odd = split(np.array([1, 2, 3, 4]))
        np.testing.assert_array_equal(even, [1, 3])
        np.testing.assert_array_equal(odd, [2, 4])

    def test_pair(self):
        even, odd = split(np.array([[7.0, 9.0]]))
        assert even.tolist() == [[7.0]] and odd.tolist() == [[9.0]]

    def test_merge_inverts_bit_exactly(self):
        x = np.random.default_rng(0).standard_normal((3, 64))
        np.testing.assert_array_equal(merge(*split(x)), x)

    def test_odd_length(self):
        with pytest.raises(InvalidInput):
            split(np.ones(5))


class TestHaar:
    def test_constant(self):
        c, d = haar_step(np.ones(4))
        assert c.tolist() == [1, 1] and d.tolist() == [0, 0]

    def test_pair(self):
        c, d = haar_step(np.array([1.0, 3.0]))
        assert d.tolist() == [2.0] and c.tolist() == [2.0]

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), log_n=st.integers(1, 9))
    def test_mean_preserved_and_roundtrip(self, seed, log_n):
        x = np.random.default_rng(seed).standard_normal((2, 2**log_n))
        c, d = haar_step(x)
        np.testing.assert_allclose(c.mean(axis=-1), x.mean(axis=-1), atol=1e-12)
        assert np.max(np.abs(haar_inverse(c, d) - x)) < 1e-12

    def test_odd_length(self):
        with pytest.raises(InvalidInput):
            haar_step(np.ones(3))


class TestCoupling:
    def test_zero_parameters_are_identity(self):
        unit = CouplingUnit(1, rng=np.random.default_rng(0), dtype=f64).eval()
        for sub in (unit.phi, unit.psi, unit.rho, unit.eta):
            for p in sub.parameters():
                p.data[:] = 0
        x = np.random.default_rng(1).standard_normal((1, 8))
        c, d = coupling_forward(x, unit)
        np.testing.assert_array_equal(c.data, x[:, 0::2])
        np.testing.assert_array_equal(d.data, x[:, 1::2])
        np.testing.assert_array_equal(coupling_inverse(c.data, d.data, unit).data, x)

    def test_default_init_is_identity(self):
        # the output conv of every subnet starts at zero
        unit = CouplingUnit(2, rng=np.random.default_rng(0), dtype=f64).eval()
        x = np.random.default_rng(1).standard_normal((2, 8))
        c, d = coupling_forward(x, unit)
        np.testing.assert_array_equal(c.data, x[:, 0::2])
        np.testing.assert_array_equal(d.data, x[:, 1::2])

    def test_log_two_scale(self):
        unit = CouplingUnit(1, rng=np.random.default_rng(0), dtype=f64).eval()
        # phi = tanh(bias) with zero weights; choose the bias so phi == ln 2
        unit.phi.conv2.bias.data[:] = np.arctanh(np.log(2.0))
        c, d = coupling_forward(np.array([[1.0, 3.0]]), unit)
        np.testing.assert_allclose(d.data, [[6.0]], rtol=1e-14)
        np.testing.assert_allclose(c.data, [[1.0]], rtol=1e-14)
        x = coupling_inverse(np.array([[1.0]]), np.array([[6.0]]), unit)
        np.testing.assert_allclose(x.data, [[1.0, 3.0]], rtol=1e-14)

    def test_haar_mode_has_no_parameters(self):
        unit = CouplingUnit(3, Mode.HAAR)
        assert unit.parameters() == []
        c, d = coupling_forward(np.array([[1.0, 3.0]]), unit)
        assert c.data.tolist() == [[2.0]] and d.data.tolist() == [[2.0]]

    def test_single_precision_roundtrips(self):
        rng = np.random.default_rng(2)
        worst = 0.0
        for _ in range(1000):
            C = int(rng.integers(1, 5))
            N = int(2 ** rng.integers(1, 9))
            unit = randomize(CouplingUnit(C, rng=rng), rng)
            x = rng.standard_normal((C, N)).astype(np.float32)
            c, d = coupling_forward(x, unit)
            worst = max(worst, float(np.max(np.abs(coupling_inverse(c, d, unit).data - x))))
        assert worst < 1e-5

    def test_odd_length(self):
        with pytest.raises(InvalidInput):
            coupling_forward(np.ones((1, 5)), CouplingUnit(1))

    def test_batched_matches_single(self):
        rng = np.random.default_rng(3)
        unit = randomize(CouplingUnit(2, rng=rng, dtype=f64), rng)
        x = rng.standard_normal((4, 2, 16))
        cb, db = coupling_forward(x, unit)
        for i in range(4):
            c, d = coupling_forward(x[i], unit)
            np.testing.assert_allclose(cb.data[i], c.data, rtol=1e-12)
            np.testing.assert_allclose(db.data[i], d.data, rtol=1e-12)


class TestDecompose:
    def test_degenerate_bypass(self):
        x = np.random.default_rng(0).standard_normal((2, 16))
        feats = decompose(x, degenerate_tree(32.0), {})
        assert len(feats) == 1
        np.testing.assert_array_equal(feats[0].signal, x)
        np.testing.assert_allclose(feats[0].pooled, x.mean(axis=-1))

    def test_height_one_haar_constant(self):
        t = tree_of(*TWO)
        feats = decompose(np.ones((1, 4)), t, make_units(t, 1, Mode.HAAR))
        assert feats[0].signal.tolist() == [[1, 1]] and feats[1].signal.tolist() == [[0, 0]]
        assert [f.band for f in feats] == list(TWO)

    def test_three_leaf_zero_units_match_two_level_split(self):
        t = tree_of(*THREE)
        units = make_units(t, 1, Mode.INN, dtype=f64)
        x = np.arange(8, dtype=f64)[None]
        feats = decompose(x, t, units)
        # by hand: root splits into evens/odds, then the evens split again
        assert feats[0].signal.tolist() == [[0, 4]]
        assert feats[1].signal.tolist() == [[2, 6]]
        assert feats[2].signal.tolist() == [[1, 3, 5, 7]]

    def test_length_not_divisible(self):
        t = tree_of(*FOUR)
        with pytest.raises(InvalidInput):
            decompose(np.ones((1, 6)), t, make_units(t, 1, Mode.HAAR))

    def test_missing_unit(self):
        t = tree_of(*THREE)
        units = make_units(t, 1, Mode.HAAR)
        del units[1]
        with pytest.raises(ConfigError):
            decompose(np.ones((1, 8)), t, units)

    def test_accepts_window(self):
        t = tree_of(*TWO)
        w = TimeSeriesWindow(np.ones((1, 8)), 64.0)
        assert len(decompose(w, t, make_units(t, 1, Mode.HAAR))) == 2


ALL_TREES = [TWO, THREE, FOUR, (B(0, 16), B(16, 24), B(24, 32)), (B(0, 4), B(4, 8), B(8, 16), B(16, 32))]


class TestTreeProperties:
    @settings(max_examples=40, deadline=None)
    @given(bands=st.sampled_from(ALL_TREES), seed=st.integers(0, 2**16), C=st.integers(1, 4), log_n=st.integers(3, 8))
    def test_shape_law_and_pooling(self, bands, seed, C, log_n):
        rng = np.random.default_rng(seed)
        t = tree_of(*bands)
        N = 2**log_n
        units = {k: randomize(u, rng) for k, u in make_units(t, C, Mode.INN, seed).items()}
        feats = decompose(rng.standard_normal((C, N)), t, units)
        assert sum(f.signal.shape[-1] for f in feats) == N
        for f, node in zip(feats, sorted((n for n in t.nodes() if n.gate == 0), key=lambda n: n.band.f_start_hz)):
            assert f.signal.shape == (C, N // 2**node.depth)
            np.testing.assert_allclose(f.pooled, f.signal.mean(axis=-1), rtol=1e-6)

    @settings(max_examples=40, deadline=None)
    @given(bands=st.sampled_from(ALL_TREES), seed=st.integers(0, 2**16))
    def test_inn_invertible(self, bands, seed):
        rng = np.random.default_rng(seed)
        t = tree_of(*bands)
        units = {k: randomize(u, rng) for k, u in make_units(t, 3, Mode.INN, seed).items()}
        x = rng.standard_normal((3, 64)).astype(np.float32)
        assert np.max(np.abs(reconstruct(decompose(x, t, units), t, units) - x)) < 1e-5

    @settings(max_examples=40, deadline=None)
    @given(bands=st.sampled_from(ALL_TREES), seed=st.integers(0, 2**16))
    def test_haar_invertible_double(self, bands, seed):
        t = tree_of(*bands)
        units = make_units(t, 2, Mode.HAAR)
        x = np.random.default_rng(seed).standard_normal((2, 64))
        assert np.max(np.abs(reconstruct(decompose(x, t, units), t, units) - x)) < 1e-10

    @settings(max_examples=30, deadline=None)
    @given(bands=st.sampled_from(ALL_TREES), seed=st.integers(0, 2**16))
    def test_haar_mean_chain(self, bands, seed):
        t = tree_of(*bands)
        x = Tensor(np.random.default_rng(seed).standard_normal((1, 2, 64)), dtype=f64)
        _, pairs = decompose_tensor(x, t, make_units(t, 2, Mode.HAAR))
        for inp, c in pairs:
            np.testing.assert_allclose(c.data.mean(axis=-1), inp.data.mean(axis=-1), atol=1e-12)

    def test_gradients_along_root_path(self):
        rng = np.random.default_rng(4)
        t = tree_of(*THREE)
        units = {k: randomize(CouplingUnit(2, rng=rng, dtype=f64), rng) for k in t.unit_ids}
        x = Tensor(rng.standard_normal((2, 2, 16)), dtype=f64)
        weights = [rng.standard_normal((2, 2, 16 // 2**d)) for d in (2, 2, 1)]

        def f():
            leaves, _ = decompose_tensor(x, t, units)
            return sum(((leaf * w).sum() for leaf, w in zip(leaves, weights)), ad.as_tensor(np.float64(0)))

        params = [p for u in units.values() for p in u.parameters()]
        check_gradients(f, params, rng, samples=2)


def haar_low_share(omega):
    """Energy share of c for a tone at angular frequency omega under one Haar step."""
    lo = np.cos(omega / 2) ** 2
    hi = 4 * np.sin(omega / 2) ** 2
    return lo / (lo + hi)


def tone(f, n=1024, fs=64.0):
    return np.sin(2 * np.pi * f * np.arange(n) / fs + 0.3)[None]


# (bands, tone band, passes the 60% floor). Unnormalized Haar gives d a gain of up
# to 2 and c at most 1, and c-to-low routing flips the order under a detail branch,
# so several leaves fall short; those are recorded as strict expected failures.
SEPARATION_CASES = [
    (TWO, B(0, 16), False),
    (TWO, B(16, 32), True),
    (FOUR, B(0, 8), False),
    (FOUR, B(8, 16), False),
    (FOUR, B(16, 24), False),
    (FOUR, B(24, 32), False),
    (THREE, B(16, 32), True),
]


class TestFrequencySeparation:
    @pytest.mark.parametrize("omega", np.linspace(0.1, np.pi - 0.1, 6))  # skips pi/2, where decimation lands on Nyquist
    def test_one_step_share_matches_closed_form(self, omega):
        x = np.sin(omega * np.arange(4096) + 0.2)[None]
        c, d = haar_step(x)
        share = np.sum(c**2) / (np.sum(c**2) + np.sum(d**2))
        assert share == pytest.approx(haar_low_share(omega), abs=2e-3)

    def test_height_one_tone_lands_in_its_own_half(self):
        t = tree_of(*TWO)
        units = make_units(t, 1, Mode.HAAR)
        for f, leaf in ((8.0, 0), (24.0, 1)):
            e = [feat.energy for feat in decompose(tone(f), t, units)]
            assert int(np.argmax(e)) == leaf

    @pytest.mark.parametrize(
        "bands, band, ok",
        [
            pytest.param(
                *case,
                marks=[] if case[2] else pytest.mark.xfail(strict=True, reason="unnormalized Haar leakage below the 60% floor"),
                id=f"{len(case[0])}leaves-{case[1].f_start_hz:g}-{case[1].f_end_hz:g}",
            )
            for case in SEPARATION_CASES
        ],
    )
    def test_sixty_percent_floor(self, bands, band, ok):
        t = tree_of(*bands)
        feats = decompose(tone(band.mid), t, make_units(t, 1, Mode.HAAR))
        e = np.array([f.energy for f in feats])
        share = e[[f.band for f in feats].index(band)] / e.sum()
        assert share >= 0.6
