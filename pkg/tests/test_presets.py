import numpy as np
import pytest

from jflow.cohomology import verify_omega0_conditions
from jflow.presets import (
    PRESET_NAMES,
    build_preset,
    degenerate_profile,
    random_bandlimited_potential,
)
from jflow.torus import complex_hessian, positivity_margin


class TestBuildPreset:
    def test_all_presets_build(self):
        for name in PRESET_NAMES:
            pb = build_preset(name)
            assert pb.name == name

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="unknown preset"):
            build_preset("bogus")

    def test_identity_background(self):
        pb = build_preset("identity", n=8)
        assert positivity_margin(pb.chi0.realized) == 1.0
        assert pb.chi0_class().m11 == 1.0

    def test_smooth_profile_realization(self):
        pb = build_preset("smooth_split", n=16)
        f, g = pb.omega0.profiles()
        x = pb.grid.coords()[0]
        assert np.abs(f - (1 + 0.5 * np.sin(2 * np.pi * x))).max() < 1e-12
        assert np.abs(g - 1.0).max() < 1e-12

    def test_degenerate_profile_and_classes(self):
        pb = build_preset("degenerate_split", n=16)
        f, _ = pb.omega0.profiles()
        assert abs(f.min()) < 1e-12  # vanishes on the divisor
        assert np.isclose(f.max(), 2.0)
        cls = pb.omega_eps_class(0.0)
        assert np.isclose(cls.m11, 1.0) and np.isclose(cls.m22, 1.0)

    def test_divisor_model_consistency(self):
        pb = build_preset("degenerate_split", n=16)
        div = pb.divisor
        assert div.beta == 1.0 and div.rho == 0.5
        # r_h lies in c1([D]) = diag(1, 0)
        assert np.isclose(div.r_h.a1, 1.0) and np.isclose(div.r_h.a2, 0.0)
        # omega0 - rho * R_H is the constant form diag(1 - rho, 1)
        shifted = pb.omega0.add(div.r_h.scale(-div.rho))
        a, b = shifted.profiles()
        assert np.abs(a - 0.5).max() < 1e-12
        assert np.abs(b - 1.0).max() < 1e-12
        full = pb.to_full()
        cert = verify_omega0_conditions(full.omega0, full.divisor, full.omega_hat)
        assert cert.ok and np.isclose(cert.c0, 2.0, atol=1e-9)

    def test_nonsplit_perturbation(self):
        pb = build_preset("nonsplit_perturbed", n=12)
        assert pb.backend == "full"
        margin = positivity_margin(pb.chi0.realized)
        # Id + dd^c(0.05 cos(2pi(x1+x2))): eigenvalues 1 and 1 - 0.1 pi^2 cos,
        # and cos = 1 is attained on the grid
        assert np.isclose(margin, 1.0 - 0.1 * np.pi ** 2, atol=1e-12)

    def test_s2_proxy_matches_degenerate_profile(self):
        pb = build_preset("degenerate_split", n=16)
        s2 = pb.divisor.s2_proxy_factor(pb.grid)
        assert np.abs(s2 - degenerate_profile(pb.grid)).max() == 0.0

    def test_offsets_move_locus_off_grid(self):
        pb = build_preset("degenerate_split", n=16, offsets=(0.003, 0.0))
        s2 = pb.divisor.s2_proxy_factor(pb.grid)
        assert s2.min() > 0.0


class TestRandomPotential:
    def test_split_potential_positive(self):
        pb = build_preset("degenerate_split", n=12)
        rng = np.random.default_rng(5)
        for _ in range(3):
            phi = random_bandlimited_potential(pb, rng)
            full = pb.to_full()
            chi = full.chi0.realized.add(complex_hessian(phi.assemble(full.grid)))
            assert positivity_margin(chi) > 0.2

    def test_full_potential_positive(self):
        pb = build_preset("nonsplit_perturbed", n=8)
        rng = np.random.default_rng(6)
        phi = random_bandlimited_potential(pb, rng)
        chi = pb.chi0.realized.add(complex_hessian(phi))
        assert positivity_margin(chi) > 0.0

    def test_deterministic_given_seed(self):
        pb = build_preset("smooth_split", n=8)
        a = random_bandlimited_potential(pb, np.random.default_rng(7))
        b = random_bandlimited_potential(pb, np.random.default_rng(7))
        assert np.array_equal(a.phi1, b.phi1)
        assert np.array_equal(a.phi2, b.phi2)
