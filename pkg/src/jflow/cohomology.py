"""Cohomology classes, intersection pairings, cone conditions and the
degenerate-form certificate.

On the flat 2-torus every (1,1)-class has a unique constant (harmonic)
representative, so a class is just a constant 2x2 Hermitian matrix and a
closed form is a (class, potential) pair -- closed by construction, which
removes any need for numerical closedness testing.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import PositivityError
from .torus import (
    HermitianFormField,
    ScalarField,
    complex_hessian,
    generalized_eigenvalues,
)


@dataclass(frozen=True)
class CohomologyClass:
    """Constant Hermitian 2x2 matrix: the harmonic representative."""

    m11: float
    m22: float
    m12: complex = 0.0

    def __post_init__(self):
        object.__setattr__(self, "m11", float(self.m11))
        object.__setattr__(self, "m22", float(self.m22))
        object.__setattr__(self, "m12", complex(self.m12))

    @classmethod
    def identity(cls):
        return cls(1.0, 1.0, 0.0)

    @classmethod
    def diag(cls, a, b):
        return cls(a, b, 0.0)

    def min_eigenvalue(self):
        half_tr = 0.5 * (self.m11 + self.m22)
        rad = np.sqrt((0.5 * (self.m11 - self.m22)) ** 2 + abs(self.m12) ** 2)
        return float(half_tr - rad)

    def is_positive(self):
        return self.min_eigenvalue() > 0.0

    def add(self, other):
        return CohomologyClass(
            self.m11 + other.m11, self.m22 + other.m22, self.m12 + other.m12
        )

    def scale(self, c):
        c = float(c)
        return CohomologyClass(c * self.m11, c * self.m22, c * self.m12)

    def realize(self, grid):
        """Constant representative as a field on the grid."""
        return HermitianFormField.constant(grid, self.m11, self.m22, self.m12)


def class_pairing(a, b):
    """Intersection number of two classes: the integral of their wedge.

    4 * (a11 b22 + a22 b11 - 2 Re(a12 conj(b12))); symmetric bilinear.
    """
    return 4.0 * (
        a.m11 * b.m22
        + a.m22 * b.m11
        - 2.0 * (a.m12 * b.m12.conjugate()).real
    )


def c_constant(x, w):
    """The flow constant c = 2 [X].[W] / [X]^2 for a Kahler class X."""
    if not x.is_positive():
        raise PositivityError(
            f"c_constant: class X is not Kahler (min eigenvalue "
            f"{x.min_eigenvalue():.3e})",
            margin=x.min_eigenvalue(),
        )
    return 2.0 * class_pairing(x, w) / class_pairing(x, x)


def cone_condition(x, w):
    """Margin of the cone condition c[X] - [W] > 0.

    Returns the smallest eigenvalue of the constant matrix c*X - W; the
    condition holds iff the margin is positive (on the torus the Kahler
    cone is exactly the positive-definite matrices).  A nonpositive margin
    is a valid verdict, not an error.
    """
    c = c_constant(x, w)
    diff = x.scale(c).add(w.scale(-1.0))
    return diff.min_eigenvalue()


@dataclass(frozen=True)
class ClosedForm:
    """Closed (1,1)-form: constant class plus dd^c of a potential."""

    cls: CohomologyClass
    potential: ScalarField

    @cached_property
    def realized(self):
        return self.cls.realize(self.grid).add(complex_hessian(self.potential))

    @property
    def grid(self):
        return self.potential.grid

    @classmethod
    def from_class(cls, cohomology_class, grid):
        return cls(cohomology_class, ScalarField.zeros(grid))

    def scale(self, c):
        return ClosedForm(
            self.cls.scale(c), ScalarField(self.grid, float(c) * self.potential.values)
        )

    def add(self, other):
        return ClosedForm(
            self.cls.add(other.cls),
            ScalarField(self.grid, self.potential.values + other.potential.values),
        )


def epsilon_form(omega0, eps, omega_hat):
    """The regularised family member omega_eps = omega0 + eps * omega_hat.

    Class and potential add componentwise; works for both the full-grid
    ClosedForm and the split-backend SplitForm (duck-typed add/scale).
    """
    if eps < 0.0:
        raise ValueError(f"epsilon must be nonnegative, got {eps}")
    if eps == 0.0:
        return omega0
    return omega0.add(omega_hat.scale(eps))


@dataclass(frozen=True)
class DivisorModel:
    """Model of the degeneracy divisor D = {z1 = 0} and its line-bundle data.

    ``s2_proxy`` stands in for |s|^2_H: it vanishes to second order exactly
    on the locus and is used by every estimate monitor; the true Hermitian
    metric H is never constructed, so fitted constants (not exponents) are
    proxy-dependent.  ``r_h`` is a smooth representative of the class
    c1([D]) = diag(1, 0) chosen so that omega0 - rho * r_h is constant.
    """

    beta: float
    rho: float
    r_h: object  # ClosedForm or SplitForm

    def s2_proxy_factor(self, fgrid):
        """Proxy |s|^2 on the z1 factor grid: sin^2(pi x1) + sin^2(pi y1)."""
        x, y = fgrid.coords()
        return np.sin(np.pi * x) ** 2 + np.sin(np.pi * y) ** 2

    def s2_proxy(self, grid):
        """Proxy |s|^2 on the 4-D grid (depends on z1 only)."""
        x1, y1, _, _ = grid.coords()
        v = np.sin(np.pi * x1) ** 2 + np.sin(np.pi * y1) ** 2
        return ScalarField(grid, np.broadcast_to(v, grid.shape).copy())

    def locus_mask(self, grid, tol=1e-12):
        """Boolean mask of grid points lying on the divisor locus."""
        return self.s2_proxy(grid).values < tol


@dataclass(frozen=True)
class Omega0Certificate:
    """Verdict of the degenerate-form condition scan."""

    ok: bool
    c0: float
    beta: float
    rho: float
    failure: str = ""
    point: tuple = ()

    def __bool__(self):
        return self.ok


def verify_omega0_conditions(omega0, div, omega_hat, locus_tol=1e-12):
    """Scan the grid for the smallest C0 certifying the degeneracy condition.

    Checks pointwise (i) omega0 >= (1/C0) * s2^beta * omega_hat and
    (ii) omega0 - rho * r_h >= (1/C0) * omega_hat, reporting the smallest
    C0 that works for both, or a structured failure with the violating
    point and inequality.
    """
    grid = omega0.grid
    w0 = omega0.realized
    what = omega_hat.realized
    s2 = div.s2_proxy(grid).values ** div.beta

    # (i): largest t with omega0 >= t*omega_hat pointwise is the smaller
    # generalized eigenvalue of the pencil (omega_hat, omega0).
    mu, _ = generalized_eigenvalues(what, w0)
    mu = mu.values
    off = s2 > locus_tol
    neg = ~off & (mu < -1e-10)
    if np.any(neg):
        idx = int(np.flatnonzero(neg.ravel())[0])
        return Omega0Certificate(
            False, np.inf, div.beta, div.rho,
            failure="omega0 not nonnegative on the divisor locus",
            point=grid.point(idx),
        )
    ratio = np.where(off, s2 / np.where(off, mu, 1.0), 0.0)
    bad = off & (mu <= 0.0)
    if np.any(bad):
        idx = int(np.flatnonzero(bad.ravel())[0])
        return Omega0Certificate(
            False, np.inf, div.beta, div.rho,
            failure="first inequality fails: omega0 degenerate off the locus",
            point=grid.point(idx),
        )
    c0_first = float(ratio.max())

    # (ii): omega0 - rho * r_h >= (1/C0) * omega_hat needs a positive floor.
    shifted = omega0.add(div.r_h.scale(-div.rho)).realized
    nu, _ = generalized_eigenvalues(what, shifted)
    nu_min = float(nu.values.min())
    if nu_min <= 0.0:
        idx = int(np.argmin(nu.values))
        return Omega0Certificate(
            False, np.inf, div.beta, div.rho,
            failure="second inequality fails: omega0 - rho*R_H not positive",
            point=grid.point(idx),
        )
    c0_second = 1.0 / nu_min

    return Omega0Certificate(True, max(c0_first, c0_second), div.beta, div.rho)
