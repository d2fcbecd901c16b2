import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import sici

from chiral_smatrix import (
    CoherentInput,
    CoherentOutput,
    DivisionByZeroDensity,
    StatisticsConfig,
    TruncationExceeded,
    TwoLevel,
    UnorderedCoordinates,
    WaveguideBox,
    beta_amplitude,
    broadened_delta,
    fock_amplitude,
    g2_zero_distance,
    photon_statistics,
    s1_two_level,
)

from conftest import G


def make(k=0.0, alpha=0.8, L=20.0, g=G, Omega=0.0, n_max=4):
    return CoherentOutput(CoherentInput(k, alpha, WaveguideBox(L)), TwoLevel(Omega, g), n_max)


class TestBox:
    def test_spacing(self):
        box = WaveguideBox(7.3)
        assert box.Delta * box.L == pytest.approx(2 * math.pi, rel=1e-15)

    def test_positive_length(self):
        with pytest.raises(ValueError):
            WaveguideBox(0.0)

    def test_drive_density(self):
        inp = CoherentInput(0.0, 2.0 + 1.0j, WaveguideBox(4.0))
        assert inp.alpha_bar == pytest.approx((2 + 1j) / 2)
        assert inp.mean_photons == pytest.approx(5.0)


class TestBroadenedDelta:
    def test_peak(self):
        box = WaveguideBox(12.0)
        assert broadened_delta(0.0, box) == pytest.approx(1 / box.Delta, rel=1e-15)

    def test_first_zero(self):
        box = WaveguideBox(12.0)
        assert abs(broadened_delta(2 * math.pi / box.L, box)) <= 1e-15

    def test_window_integral(self):
        from scipy.integrate import quad

        L = 10.0
        box = WaveguideBox(L)
        val, _ = quad(lambda q: broadened_delta(q, box), -50 / L, 50 / L, limit=200)
        # (2/pi) Si(25): the +-50/L window holds 97.5 % of the weight
        assert val == pytest.approx(2 / math.pi * sici(25.0)[0], rel=1e-10)
        wide, _ = quad(lambda q: broadened_delta(q, box), -500 / L, 500 / L, limit=2000)
        assert abs(wide - 1) <= 0.02

    def test_matches_exponential_form(self):
        box = WaveguideBox(3.0)
        q = np.linspace(-10, 10, 41)
        q = q[q != 0]
        ref = (np.exp(1j * q * box.L / 2) - np.exp(-1j * q * box.L / 2)) / (2j * math.pi * q)
        assert np.max(np.abs(broadened_delta(q, box) - ref)) <= 1e-14


class TestAmplitudes:
    def test_interior_single_photon(self):
        out = make(k=0.3, L=30.0)
        gam = math.pi * G**2
        for x in (-10.0, 0.0, 5.0, 10.0):
            ref = (s1_two_level(0.3, out.emitter) - 1) * out.input.alpha_bar * np.exp(1j * 0.3 * x)
            err = abs(beta_amplitude(1, [x], out) - ref) / abs(ref)
            assert err <= math.exp(-gam * (15.0 - x)) + 1e-10

    def test_large_box_convergence(self):
        errs = []
        g = math.sqrt(0.05 / math.pi)  # narrow line so the edge transient stays above roundoff
        for L in (50.0, 100.0, 200.0):
            out = make(k=0.2, alpha=1.0, L=L, g=g)
            x = -L / 4
            ref = (s1_two_level(0.2, out.emitter) - 1) * out.input.alpha_bar * np.exp(0.2j * x)
            errs.append(abs(beta_amplitude(1, [x], out) - ref) / abs(ref))
        assert errs[0] > errs[1] > errs[2]

    @given(st.integers(2, 4), st.floats(-9.0, 9.0), st.data())
    def test_coincident_coordinates_vanish(self, n, x, data):
        out = make(L=20.0)
        xs = sorted(data.draw(st.lists(st.floats(-12.0, 9.5), min_size=n - 1, max_size=n - 1)) + [x])
        j = data.draw(st.integers(0, n - 2))
        xs[j + 1] = xs[j]
        scale = abs(out.c * out.input.alpha_bar) ** n
        assert abs(beta_amplitude(n, xs, out)) <= 1e-12 * scale

    def test_branch_continuity(self):
        out = make(k=0.4, L=16.0)
        edge = -8.0
        for x2 in (-7.0, -2.0, 3.5, 7.9):
            inside = beta_amplitude(2, [edge, x2], out)
            outside = beta_amplitude(2, [edge - 1e-13, x2], out)
            assert abs(inside - outside) <= 1e-10 * abs(inside)

    def test_single_photon_branch_continuity(self):
        out = make(k=-0.3, L=16.0)
        a = beta_amplitude(1, [-8.0], out)
        b = beta_amplitude(1, [-8.0 - 1e-13], out)
        assert abs(a - b) <= 1e-10 * abs(a)

    def test_two_left_of_box_vanish(self):
        out = make(L=10.0)
        assert beta_amplitude(3, [-9.0, -6.0, 0.0], out) == 0

    def test_antibunching_slope(self):
        out = make(k=0.3, L=20.0)
        x = -3.0
        hs = np.array([1e-6, 2e-6, 4e-6])
        vals = np.array([abs(beta_amplitude(2, [x, x + h], out)) for h in hs])
        slope = np.polyfit(hs, vals, 1)[0]
        rest = abs(1 - np.exp(1j * out.kappa * (10.0 - x)))
        ref = abs(out.c * out.input.alpha_bar) ** 2 * abs(out.kappa) * rest
        assert slope == pytest.approx(ref, rel=1e-4)

    def test_unordered(self):
        with pytest.raises(UnorderedCoordinates):
            beta_amplitude(2, [1.0, 0.0], make())

    def test_truncation(self):
        with pytest.raises(TruncationExceeded):
            beta_amplitude(3, [0.0, 1.0, 2.0], make(n_max=2))

    def test_one_photon_coefficient(self):
        out = make(k=0.5, alpha=0.6, L=12.0)
        x = 1.5
        full = fock_amplitude(1, np.array([x]), out, include_vacuum_factor=False)
        expected = out.input.alpha_bar * np.exp(0.5j * x) + beta_amplitude(1, [x], out)
        assert full == pytest.approx(expected, rel=1e-14)


class TestStatistics:
    def test_free_light_is_poisson(self):
        out = make(g=0.0, alpha=0.8, L=10.0, n_max=3)
        st = photon_statistics(out, StatisticsConfig(panel_width=2.0))
        nbar = 0.64
        ref = [math.exp(-nbar) * nbar**n / math.factorial(n) for n in range(4)]
        assert np.max(np.abs(st.weights - ref)) <= 1e-10

    def test_normalization(self):
        out = make(alpha=0.5, L=10.0, n_max=3)
        st = photon_statistics(out, StatisticsConfig(panel_width=2.0))
        assert abs(st.total - 1) <= 1e-3
        assert np.all(st.errors <= 1e-6)

    def test_weak_drive_single_photon_weight(self):
        out = make(k=0.4, alpha=1e-3, L=10.0, n_max=1)
        st = photon_statistics(out, StatisticsConfig(panel_width=2.0))
        assert st.weights[1] / out.input.mean_photons == pytest.approx(1.0, abs=1e-5)

    def test_cap(self):
        with pytest.raises(ValueError):
            photon_statistics(make(n_max=5))


class TestG2:
    def test_scattered_zero_at_coincidence(self):
        out = make(k=0.2, L=20.0)
        x = np.linspace(-9.0, 9.0, 37)
        assert np.all(g2_zero_distance(out, x, x, component="scattered") <= 1e-12)

    def test_decoupled_is_coherent(self):
        out = make(g=0.0, L=20.0)
        x1, x2 = np.meshgrid(np.linspace(-9, 9, 13), np.linspace(-9, 9, 13))
        assert np.max(np.abs(g2_zero_distance(out, x1, x2) - 1)) <= 1e-12

    def test_far_detuned_is_coherent(self):
        out = make(k=1e3, L=20.0)
        x1, x2 = np.meshgrid(np.linspace(-9, 9, 13), np.linspace(-9, 9, 13))
        assert np.max(np.abs(g2_zero_distance(out, x1, x2) - 1)) <= 1e-3

    def test_resonant_full_coincidence_bunches(self):
        # deep inside the box the background-plus-scattered pair amplitude is |1 + 2c|^2 = 9
        out = make(k=0.0, L=40.0)
        assert g2_zero_distance(out, -15.0, -15.0) == pytest.approx(9.0, rel=1e-10)

    def test_zero_density_flagged(self):
        out = make(g=0.0, L=20.0)
        with pytest.warns(DivisionByZeroDensity):
            val = g2_zero_distance(out, 0.0, 1.0, component="scattered")
        assert np.isnan(val)

    def test_needs_two_photons(self):
        with pytest.raises(TruncationExceeded):
            g2_zero_distance(make(n_max=1), 0.0, 1.0)
