"""Split (product) backend: per-factor 2-D fields on the two elliptic-curve
factors of the torus.

Product data diag(f(z1), g(z2)) with additive potentials
phi = phi1(z1) + phi2(z2) is preserved by the flow and by the critical
equation, so a surface problem factors into two problems on 2-D tori.
This module holds the factor-level spectral kernels, the separable-product
integrals used to evaluate energy functionals without ever materialising
the 4-D grid, and lazy assembly to full 4-D fields when a pointwise 4-D
quantity is genuinely needed.

Everything here is pure-functional over immutable arrays.
"""

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .torus import Grid, ScalarField


@dataclass(frozen=True)
class FactorGrid:
    """Uniform N^2 lattice on one complex factor [0,1)^2, coords (x, y)."""

    n: int
    offsets: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.n < 4 or self.n % 2 != 0:
            raise ValueError(f"factor grid size must be even and >= 4, got {self.n}")
        object.__setattr__(self, "offsets", tuple(float(o) for o in self.offsets))

    @property
    def shape(self):
        return (self.n, self.n)

    def coords(self):
        x = (np.arange(self.n) / self.n + self.offsets[0]).reshape(-1, 1)
        y = (np.arange(self.n) / self.n + self.offsets[1]).reshape(1, -1)
        return x, y

    def laplace_symbol(self):
        """Symbol of d_z d_zbar = quarter Laplacian on the factor."""
        k = sfft.fftfreq(self.n) * self.n
        a = k.reshape(-1, 1)
        b = k.reshape(1, -1)
        return -np.pi ** 2 * (a * a + b * b)


def factor_hessian(grid, phi):
    """d_z d_zbar phi on a factor grid (spectral)."""
    sym = grid.laplace_symbol()
    ncut = grid.n // 2 + 1
    f = sfft.rfftn(phi, axes=(0, 1))
    return sfft.irfftn(sym[:, :ncut] * f, s=grid.shape, axes=(0, 1))


def factor_poisson(grid, src, tol=1e-12):
    """Mean-zero u with d_z d_zbar u = src; src must have (near) zero mean."""
    m = float(np.mean(src))
    if abs(m) > tol:
        raise ValueError(f"factor_poisson: source mean {m:.3e} exceeds {tol:.1e}")
    sym = grid.laplace_symbol().copy()
    sym[0, 0] = 1.0
    ncut = grid.n // 2 + 1
    f = sfft.rfftn(src - m, axes=(0, 1))
    f /= sym[:, :ncut]
    f[0, 0] = 0.0
    return sfft.irfftn(f, s=grid.shape, axes=(0, 1))


@dataclass(frozen=True)
class SplitForm:
    """Closed (1,1)-form of product type diag(A(z1), B(z2)).

    Stored as a diagonal constant class (a1, a2) plus factor potentials;
    the realised profiles are A = a1 + dd^c p1 and B = a2 + dd^c p2, each a
    2-D field on its own factor.  Closed by construction.
    """

    grid: FactorGrid
    a1: float
    a2: float
    p1: np.ndarray
    p2: np.ndarray

    @classmethod
    def constant(cls, grid, a1, a2):
        z = np.zeros(grid.shape)
        return cls(grid, float(a1), float(a2), z, z)

    @classmethod
    def from_profiles(cls, grid, f=None, g=None):
        """Build the form with realised profiles f(z1), g(z2).

        The class entries are the profile means; the potentials come from
        factor Poisson solves (exact for band-limited profiles).
        """
        a1, p1 = 1.0, np.zeros(grid.shape)
        a2, p2 = 1.0, np.zeros(grid.shape)
        if f is not None:
            a1 = float(np.mean(f))
            p1 = factor_poisson(grid, f - a1)
        if g is not None:
            a2 = float(np.mean(g))
            p2 = factor_poisson(grid, g - a2)
        return cls(grid, a1, a2, p1, p2)

    def profiles(self):
        """Realised factor profiles (A, B) as 2-D arrays."""
        a = self.a1 + factor_hessian(self.grid, self.p1)
        b = self.a2 + factor_hessian(self.grid, self.p2)
        return a, b

    def scale(self, c):
        c = float(c)
        return SplitForm(self.grid, c * self.a1, c * self.a2, c * self.p1, c * self.p2)

    def add(self, other):
        return SplitForm(
            self.grid,
            self.a1 + other.a1,
            self.a2 + other.a2,
            self.p1 + other.p1,
            self.p2 + other.p2,
        )


@dataclass(frozen=True)
class SplitPotential:
    """Additive potential phi(z1, z2) = phi1(z1) + phi2(z2)."""

    grid: FactorGrid
    phi1: np.ndarray
    phi2: np.ndarray

    @classmethod
    def zeros(cls, grid):
        z = np.zeros(grid.shape)
        return cls(grid, z, z)

    def mean(self):
        return float(np.mean(self.phi1) + np.mean(self.phi2))

    def sup(self):
        hi = self.phi1.max() + self.phi2.max()
        lo = self.phi1.min() + self.phi2.min()
        return float(max(hi, -lo))

    def mean_normalized(self):
        return SplitPotential(
            self.grid, self.phi1 - np.mean(self.phi1), self.phi2 - np.mean(self.phi2)
        )

    def assemble(self, grid4=None):
        """Materialise the 4-D ScalarField phi1 (+) phi2."""
        if grid4 is None:
            grid4 = Grid(self.grid.n, self.grid.offsets + (0.0, 0.0))
        v = self.phi1[:, :, None, None] + self.phi2[None, None, :, :]
        return ScalarField(grid4, np.broadcast_to(v, grid4.shape).copy())


def assemble_form(form, grid4=None):
    """Materialise a SplitForm as a full-backend closed form."""
    from .cohomology import ClosedForm, CohomologyClass

    if grid4 is None:
        grid4 = Grid(form.grid.n, form.grid.offsets + (0.0, 0.0))
    pot = SplitPotential(form.grid, form.p1, form.p2).assemble(grid4)
    cls = CohomologyClass(form.a1, form.a2, 0.0)
    return ClosedForm(cls, pot)


# --- separable integrals -------------------------------------------------
#
# For split data every wedge density is a sum of terms u(z1) * v(z2), so
# 4-D means reduce to products of factor means.  The helpers below spell
# out the combinations the flow and the functionals need.


def mean4(u, v):
    """Mean over the 4-D grid of u(z1) * v(z2)."""
    return float(np.mean(u)) * float(np.mean(v))


def split_wedge_mean(phi, chi, omega):
    """mean of phi * D(chi, omega) for split phi and split forms.

    D(diag(A,B), diag(F,G)) = A*G + B*F; with phi = phi1 + phi2 the mean
    splits into four factor products.
    """
    a, b = chi
    f, g = omega
    p1, p2 = phi
    return (
        mean4(p1 * a, g)
        + mean4(a, p2 * g)
        + mean4(p1 * f, b)
        + mean4(f, p2 * b)
    )


def split_density_mean(chi, omega):
    """mean of D(chi, omega) for split forms (no potential weight)."""
    a, b = chi
    f, g = omega
    return mean4(a, g) + mean4(f, b)


def split_sup_abs(u1, u2):
    """sup |u1(z1) + u2(z2)| over the product grid (exact, via extrema)."""
    hi = u1.max() + u2.max()
    lo = u1.min() + u2.min()
    return float(max(hi, -lo))
