import numpy as np
import pytest

from jflow.errors import PositivityError
from jflow.torus import (
    Grid,
    HermitianFormField,
    ScalarField,
    complex_hessian,
    generalized_eigenvalues,
    integrate,
    positivity_margin,
    trace_with,
    wedge_density,
)


@pytest.fixture(scope="module")
def grid():
    return Grid(12)


def make_field(grid, fn):
    x1, y1, x2, y2 = grid.coords()
    return ScalarField(grid, np.broadcast_to(fn(x1, y1, x2, y2), grid.shape).copy())


def random_bandlimited(grid, rng, amp=0.1, kmax=2):
    """Random real trigonometric polynomial with modes up to kmax."""
    v = np.zeros(grid.shape)
    x = grid.coords()
    for _ in range(6):
        k = rng.integers(-kmax, kmax + 1, size=4)
        if not np.any(k):
            continue
        phase = rng.uniform(0, 2 * np.pi)
        arg = sum(2 * np.pi * ki * xi for ki, xi in zip(k, x))
        v = v + rng.normal() * np.cos(arg + phase)
    v *= amp / max(np.abs(v).max(), 1e-30)
    return ScalarField(grid, v)


class TestGrid:
    def test_rejects_odd_or_tiny(self):
        with pytest.raises(ValueError):
            Grid(15)
        with pytest.raises(ValueError):
            Grid(2)

    def test_offsets_validated(self):
        Grid(8, (0.01, 0.0, 0.0, 0.0))
        with pytest.raises(ValueError):
            Grid(8, (0.2, 0.0, 0.0, 0.0))

    def test_spacing(self):
        assert Grid(16).spacing == 1.0 / 16


class TestComplexHessian:
    def test_zero_potential(self, grid):
        h = complex_hessian(ScalarField.zeros(grid))
        for comp in (h.h11, h.h22, h.h12_re, h.h12_im):
            assert np.all(comp == 0.0)

    def test_single_mode_x1(self, grid):
        phi = make_field(grid, lambda x1, y1, x2, y2: 0.1 * np.cos(2 * np.pi * x1))
        h = complex_hessian(phi)
        x1 = grid.coords()[0]
        expected = np.broadcast_to(-0.1 * np.pi ** 2 * np.cos(2 * np.pi * x1), grid.shape)
        assert np.abs(h.h11 - expected).max() < 1e-12
        assert np.abs(h.h22).max() < 1e-12
        assert np.abs(h.h12_re).max() < 1e-12
        assert np.abs(h.h12_im).max() < 1e-12

    def test_diagonal_mode(self, grid):
        phi = make_field(
            grid, lambda x1, y1, x2, y2: 0.1 * np.cos(2 * np.pi * (x1 + x2))
        )
        h = complex_hessian(phi)
        x1, _, x2, _ = grid.coords()
        expected = np.broadcast_to(
            -0.1 * np.pi ** 2 * np.cos(2 * np.pi * (x1 + x2)), grid.shape
        )
        for comp in (h.h11, h.h22, h.h12_re):
            assert np.abs(comp - expected).max() < 1e-12
        assert np.abs(h.h12_im).max() < 1e-12

    def test_mixed_mode_imaginary_part(self, grid):
        # phi = cos(2pi x1) cos(2pi y2) has h12 = pi^2 sin(2pi x1) sin(2pi y2) * i/... :
        # d_z1 d_z2bar phi = (1/4)(dx1 + i ... ) check against closed form
        phi = make_field(
            grid,
            lambda x1, y1, x2, y2: np.cos(2 * np.pi * x1) * np.cos(2 * np.pi * y2),
        )
        h = complex_hessian(phi)
        x1, _, _, y2 = grid.coords()
        # d_{x1}d_{y2} phi = 4 pi^2 sin sin ; h12 = (1/4)(phi_{x1 x2} + phi_{y1 y2}
        # + i (phi_{x1 y2} - phi_{y1 x2})) = i pi^2 sin(2pi x1) sin(2pi y2)
        expected = np.broadcast_to(
            np.pi ** 2 * np.sin(2 * np.pi * x1) * np.sin(2 * np.pi * y2), grid.shape
        )
        assert np.abs(h.h12_im - expected).max() < 1e-11
        assert np.abs(h.h12_re).max() < 1e-11

    def test_diagonal_mean_zero(self, grid):
        rng = np.random.default_rng(7)
        phi = random_bandlimited(grid, rng)
        h = complex_hessian(phi)
        assert abs(h.h11.mean()) < 1e-15
        assert abs(h.h22.mean()) < 1e-15

    def test_rejects_nonfinite(self, grid):
        v = np.zeros(grid.shape)
        v[0, 0, 0, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            complex_hessian(ScalarField(grid, v))


class TestWedgeAndTrace:
    def test_identity_wedge(self, grid):
        i = HermitianFormField.identity(grid)
        assert np.all(wedge_density(i, i).values == 2.0)

    def test_diagonal_wedge(self, grid):
        a = HermitianFormField.constant(grid, 2.0, 3.0)
        b = HermitianFormField.constant(grid, 5.0, 7.0)
        assert np.all(wedge_density(a, b).values == 2.0 * 7.0 + 3.0 * 5.0)

    def test_offdiag_wedge(self, grid):
        a = HermitianFormField.constant(grid, 1.0, 1.0, 0.5j)
        assert np.allclose(wedge_density(a, a).values, 1.5)

    def test_trace_identity_background(self, grid):
        i = HermitianFormField.identity(grid)
        b = HermitianFormField.constant(grid, 3.0, 4.0)
        assert np.allclose(trace_with(i, b).values, 7.0)

    def test_trace_self_is_dimension(self, grid):
        a = HermitianFormField.constant(grid, 2.0, 4.0)
        assert np.allclose(trace_with(a, a).values, 2.0)

    def test_trace_wedge_identity_random(self, grid):
        rng = np.random.default_rng(3)
        a = HermitianFormField(
            grid,
            2.0 + rng.uniform(-0.5, 0.5, grid.shape),
            2.0 + rng.uniform(-0.5, 0.5, grid.shape),
            rng.uniform(-0.3, 0.3, grid.shape),
            rng.uniform(-0.3, 0.3, grid.shape),
        )
        b = HermitianFormField(
            grid,
            rng.normal(size=grid.shape),
            rng.normal(size=grid.shape),
            rng.normal(size=grid.shape),
            rng.normal(size=grid.shape),
        )
        tr = trace_with(a, b).values
        alt = 2.0 * wedge_density(a, b).values / wedge_density(a, a).values
        assert np.abs(tr - alt).max() < 1e-13

    def test_trace_rejects_nonpositive(self, grid):
        bad = HermitianFormField.constant(grid, -1.0, 1.0)
        i = HermitianFormField.identity(grid)
        with pytest.raises(PositivityError) as err:
            trace_with(bad, i)
        assert err.value.margin == -1.0
        assert err.value.point is not None


class TestGeneralizedEigenvalues:
    def test_diagonal(self, grid):
        i = HermitianFormField.identity(grid)
        lo, hi = generalized_eigenvalues(i, HermitianFormField.constant(grid, 3.0, 5.0))
        assert np.allclose(lo.values, 3.0) and np.allclose(hi.values, 5.0)

    def test_scaled_background(self, grid):
        a = HermitianFormField.constant(grid, 2.0, 2.0)
        lo, hi = generalized_eigenvalues(a, HermitianFormField.identity(grid))
        assert np.allclose(lo.values, 0.5) and np.allclose(hi.values, 0.5)

    def test_symmetric_offdiag(self, grid):
        i = HermitianFormField.identity(grid)
        b = HermitianFormField.constant(grid, 2.0, 2.0, 1.0)
        lo, hi = generalized_eigenvalues(i, b)
        assert np.allclose(lo.values, 1.0) and np.allclose(hi.values, 3.0)

    def test_product_is_determinant_ratio(self, grid):
        rng = np.random.default_rng(11)
        a = HermitianFormField(
            grid,
            2.0 + rng.uniform(-0.5, 0.5, grid.shape),
            2.0 + rng.uniform(-0.5, 0.5, grid.shape),
            rng.uniform(-0.3, 0.3, grid.shape),
            rng.uniform(-0.3, 0.3, grid.shape),
        )
        b = HermitianFormField(
            grid,
            rng.normal(size=grid.shape),
            rng.normal(size=grid.shape),
            rng.normal(size=grid.shape),
            rng.normal(size=grid.shape),
        )
        lo, hi = generalized_eigenvalues(a, b)
        ratio = wedge_density(b, b).values / wedge_density(a, a).values
        assert np.abs(lo.values * hi.values - ratio).max() < 1e-12


class TestIntegrateAndMargin:
    def test_unit_density(self, grid):
        assert integrate(ScalarField.constant(grid, 1.0)) == 4.0

    def test_mean_zero_mode(self, grid):
        f = make_field(grid, lambda x1, y1, x2, y2: np.cos(2 * np.pi * x1))
        assert abs(integrate(f)) < 1e-14

    def test_identity_wedge_integral(self, grid):
        i = HermitianFormField.identity(grid)
        assert integrate(wedge_density(i, i)) == 8.0

    def test_margin_identity(self, grid):
        assert positivity_margin(HermitianFormField.identity(grid)) == 1.0

    def test_margin_degenerate_profile(self):
        g = Grid(8)  # contains x1 = y1 = 0
        x1, y1, _, _ = g.coords()
        f = np.sin(np.pi * x1) ** 2 + np.sin(np.pi * y1) ** 2
        h = HermitianFormField(
            g,
            np.broadcast_to(f, g.shape).copy(),
            np.ones(g.shape),
            np.zeros(g.shape),
            np.zeros(g.shape),
        )
        assert positivity_margin(h) == 0.0

    def test_margin_negative(self, grid):
        assert positivity_margin(HermitianFormField.constant(grid, -1.0, 1.0)) == -1.0


class TestExactness:
    """Integration by parts on the torus holds to rounding."""

    def test_exact_form_pairs_to_zero(self, grid):
        rng = np.random.default_rng(5)
        for trial in range(3):
            phi = random_bandlimited(grid, rng)
            psi = random_bandlimited(grid, rng)
            exact = complex_hessian(phi)
            closed = HermitianFormField.constant(grid, 1.5, 0.7, 0.2j).add(
                complex_hessian(psi)
            )
            assert abs(integrate(wedge_density(exact, closed))) < 1e-10

    def test_exact_wedge_exact_vanishes(self, grid):
        rng = np.random.default_rng(6)
        u = complex_hessian(random_bandlimited(grid, rng))
        v = complex_hessian(random_bandlimited(grid, rng))
        assert abs(integrate(wedge_density(u, v))) < 1e-12
