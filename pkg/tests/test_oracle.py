import json
import math
import warnings

import numpy as np
import pytest

from chiral_smatrix import (
    Dicke,
    EmitterChain,
    Lambda,
    Sigma,
    TwoLevel,
    UnsupportedSpec,
    Vscheme,
    s1_chain,
    s1_dicke,
    s1_lambda,
    s1_sigma,
    s1_two_level,
    s1_v,
    s2_full,
)
from chiral_smatrix.oracle import (
    DiscretizationConfig,
    PacketNotSeparated,
    ResolutionWarning,
    StepControlFailure,
    build_hamiltonian,
    evolve,
    extract_s1,
    fit_resonance,
    forward_leakage,
    make_grid,
    manifest,
    pair_overlap,
    predict_two_photon,
    run_single_photon,
    run_two_photon,
    single_photon_packet,
)

from conftest import G

CFG = DiscretizationConfig()
# longer box so that two emitters finish radiating before the packet wraps
LONG = DiscretizationConfig(n_modes=384, packet_start=-20.0, t_final=44.0)


def max_err(res, ref, min_weight=1e-2):
    sel = res.select(min_weight)
    return float(np.max(np.abs(res.S[sel] - ref(res.p[sel]))))


class TestConfig:
    def test_derived(self):
        assert CFG.spacing == pytest.approx(40 / 256)
        assert CFG.box_length == pytest.approx(2 * math.pi * 256 / 40)
        assert CFG.dt == pytest.approx(CFG.t_final / CFG.n_steps)

    def test_resolution_warnings(self):
        with pytest.warns(ResolutionWarning):
            DiscretizationConfig(bandwidth=10.0).check_resolution(1.0)
        with pytest.warns(ResolutionWarning):
            DiscretizationConfig(n_modes=32).check_resolution(1.0)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            CFG.check_resolution(1.0)

    def test_uniform_core(self):
        grid = make_grid(CFG, 0.3)
        assert grid.n == CFG.n_modes
        assert np.allclose(np.diff(grid.nu), CFG.spacing)
        assert grid.nu.mean() == pytest.approx(0.3)


class TestHamiltonian:
    @pytest.mark.parametrize(
        "system,sector",
        [
            (TwoLevel(0.2, G), 1),
            (EmitterChain.of((TwoLevel(0.0, G), 0.0), (TwoLevel(0.3, 0.5), 2.0)), 1),
            (Lambda(0.0, -0.3, 0.1, 0.6, 0.5), 1),
            (Vscheme(0.0, 1.0, -1.0, 0.6, 0.5), 1),
            (Sigma(0.0, 0.2, 1.0, G, G), 1),
            (TwoLevel(0.2, G), 2),
            (Dicke(2, 0.0, 0.5), 2),
        ],
    )
    def test_hermitian(self, system, sector):
        cfg = DiscretizationConfig(n_modes=32, bandwidth=8.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ResolutionWarning)
            H = build_hamiltonian(system, cfg, sector).H
        assert abs(H - H.getH()).max() == 0

    @pytest.mark.parametrize(
        "system,levels",
        [
            (TwoLevel(0.0, G), 1),
            (Dicke(3, 0.0, G), 3),
            (Vscheme(0.0, 1.0, -1.0, G, G), 2),
            (Sigma(0.0, 0.2, 1.0, G, G), 1),
            (EmitterChain.of((TwoLevel(0.0, G), 0.0), (TwoLevel(0.3, G), 1.0)), 2),
        ],
    )
    def test_one_excitation_dimension(self, system, levels):
        assert build_hamiltonian(system, CFG, 1, wings=False).dim == CFG.n_modes + levels

    def test_two_excitation_dimension(self):
        n = 16
        cfg = DiscretizationConfig(n_modes=n, bandwidth=4.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ResolutionWarning)
            ham = build_hamiltonian(TwoLevel(0.0, G), cfg, 2)
        # pairs + atom x photon
        assert ham.dim == n * (n + 1) // 2 + n

    def test_three_level_two_photons_unsupported(self):
        with pytest.raises(UnsupportedSpec):
            build_hamiltonian(Lambda(0, 0, 1, G, G), CFG, 2)

    def test_two_photons_on_bare_band_only(self):
        with pytest.raises(ValueError):
            build_hamiltonian(TwoLevel(0.0, G), CFG, 2, wings=True)

    @pytest.mark.parametrize("Omega,g", [(0.0, G), (0.3, G), (-0.5, 0.7 * G)])
    def test_resonance_fit(self, Omega, g):
        centre, half = fit_resonance(TwoLevel(Omega, g), CFG)
        assert centre == pytest.approx(Omega, abs=0.05 * math.pi * g**2)
        assert half == pytest.approx(math.pi * g**2, rel=0.05)


class TestEvolution:
    def test_free_propagation(self):
        ham = build_hamiltonian(TwoLevel(0.0, 0.0), CFG, 1)
        init = single_photon_packet(ham, 0.0, CFG.packet_width, CFG.packet_start)
        final = evolve(ham, init, CFG)
        res = extract_s1(ham, final, init)
        assert np.max(np.abs(res.S - 1)) <= 1e-8
        moved = ham.block(final.vec, "photon") * np.exp(1j * (ham.grid.nu - ham.grid.k0) * final.t)
        assert pair_overlap(moved, ham.block(init.vec, "photon")) >= 1 - 1e-8

    def test_norm_conserved(self):
        ham = build_hamiltonian(TwoLevel(0.0, G), CFG, 1)
        init = single_photon_packet(ham, 0.0, CFG.packet_width, CFG.packet_start)
        assert init.norm == pytest.approx(1, abs=1e-12)
        assert abs(evolve(ham, init, CFG).norm - 1) <= 1e-8

    def test_krylov_path_matches_dense(self):
        cfg = DiscretizationConfig(dense_limit=10)
        ham = build_hamiltonian(TwoLevel(0.0, G), cfg, 1)
        init = single_photon_packet(ham, 0.0, cfg.packet_width, cfg.packet_start)
        a = evolve(ham, init, cfg).vec
        b = evolve(ham, init, CFG).vec
        assert np.max(np.abs(a - b)) <= 1e-8

    def test_unnormalized_input_rejected(self):
        from chiral_smatrix.oracle import SectorState

        ham = build_hamiltonian(TwoLevel(0.0, G), CFG, 1)
        with pytest.raises((ValueError, StepControlFailure)):
            evolve(ham, SectorState(2 * np.ones(ham.dim, complex) / math.sqrt(ham.dim), 0.0), CFG)

    def test_emitter_still_excited(self):
        ham = build_hamiltonian(TwoLevel(0.0, G), CFG, 1)
        init = single_photon_packet(ham, 0.0, CFG.packet_width, CFG.packet_start)
        mid = evolve(ham, init, CFG, t=16.0)
        with pytest.raises(PacketNotSeparated):
            extract_s1(ham, mid, init)

    def test_chiral_no_forward_leakage(self):
        ham = build_hamiltonian(TwoLevel(0.0, G), LONG, 1)
        init = single_photon_packet(ham, 0.0, LONG.packet_width, LONG.packet_start)
        final = evolve(ham, init, LONG)
        assert ham.emitter_weight(final.vec) <= 1e-4
        assert forward_leakage(ham, final, init, LONG) <= 1e-8


class TestSinglePhotonAgreement:
    def test_resonant_phase_flip(self):
        at = TwoLevel(0.0, G)
        # shift the band by half a spacing so a mode sits on resonance
        res = run_single_photon(at, CFG, 0.0, k0=CFG.spacing / 2)
        i = int(np.argmin(np.abs(res.p)))
        assert res.p[i] == pytest.approx(0.0, abs=1e-12)
        assert abs(res.S[i] + 1) <= 0.01
        assert res.residual <= 1e-4

    @pytest.mark.parametrize("p0", [-5.0, -2.5, 0.0, 2.5, 5.0])
    def test_two_level_across_line(self, p0):
        at = TwoLevel(0.0, G)
        res = run_single_photon(at, CFG, p0)
        assert max_err(res, lambda p: s1_two_level(p, at)) <= 0.01

    @pytest.mark.parametrize("sep", [0.5, 2.0, 10.0])
    def test_chain_position_independent(self, sep):
        ch = EmitterChain.of((TwoLevel(0.0, G), -sep / 2), (TwoLevel(0.3, 0.9 * G), sep / 2))
        res = run_single_photon(ch, LONG, 0.0)
        assert max_err(res, lambda p: s1_chain(p, ch)) <= 0.01

    def test_dicke(self):
        d = Dicke(3, 0.0, 0.6 * G)
        assert max_err(run_single_photon(d, CFG, 0.0), lambda p: s1_dicke(p, d)) <= 0.01

    def test_v_scheme(self):
        v = Vscheme(0.0, 2.0, -2.0, G, 0.8 * G)
        assert max_err(run_single_photon(v, CFG, 0.0), lambda p: s1_v(p, v)) <= 0.01

    def test_sigma(self):
        sg = Sigma(0.0, 0.2, 1.0, G, G)
        assert max_err(run_single_photon(sg, CFG, 0.0), lambda p: s1_sigma(p, sg)) <= 0.01

    def test_lambda_raman(self):
        lam = Lambda(0.0, -3 * CFG.spacing, 0.0, 0.8 * G, 0.6 * G)
        res = run_single_photon(lam, CFG, 0.0)
        assert max_err(res, lambda p: s1_lambda(p, lam).channels[..., 0, 0]) <= 0.01
        sel = res.raman_weight >= 1e-2
        p_in = res.raman_p[sel] - lam.eps1 + lam.eps2
        ref = s1_lambda(p_in, lam).channels[..., 1, 0]
        assert np.max(np.abs(res.raman[sel] - ref)) <= 0.01


class TestTwoPhoton:
    small = DiscretizationConfig(n_modes=64, bandwidth=20.0)

    def test_decoupled_pair_free(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ResolutionWarning)
            _, res = run_two_photon(TwoLevel(0.0, 0.0), self.small, 0.0)
        assert pair_overlap(res.psi_in, res.psi_out) >= 1 - 1e-6

    def test_symmetric_pair_amplitude(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ResolutionWarning)
            _, res = run_two_photon(TwoLevel(0.0, G), DiscretizationConfig(n_modes=128, bandwidth=20.0), 0.0)
        assert np.max(np.abs(res.psi_out - res.psi_out.T)) <= 1e-12

    @pytest.mark.slow
    def test_two_atoms_match_prediction(self):
        ch = EmitterChain.of((TwoLevel(0.2, G), 1.0), (TwoLevel(-0.5, math.sqrt(2) * G), -1.0))
        _, res = run_two_photon(ch, CFG, 0.0)
        dec = s2_full(ch)
        pred = predict_two_photon(res.psi_in, res.grid, dec.one_photon, lambda *a: 1j * dec.irreducible_kernel(*a))
        assert pair_overlap(pred, res.psi_out) >= 0.98


def test_manifest_is_deterministic():
    a = manifest(CFG, "two-level", {"S": np.array([1 + 1j, -1.0])})
    b = manifest(CFG, "two-level", {"S": np.array([1 + 1j, -1.0])})
    assert a == b
    doc = json.loads(a)
    assert doc["config"]["n_modes"] == 256
