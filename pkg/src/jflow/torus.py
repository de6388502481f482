"""Discrete calculus on the flat complex 2-torus.

The torus is T^4 = [0,1)^4 with complex coordinates z_j = x_j + i*y_j,
j = 1, 2, sampled on a uniform N^4 lattice stored row-major as
(x1, y1, x2, y2).  Real (1,1)-forms are pointwise 2x2 Hermitian matrices.
Derivatives are pseudospectral: exact for band-limited data, which is what
makes the energy identities in the rest of the package hold to rounding.

Conventions fixed here and used everywhere else:

* d_{z_j} = (d_{x_j} - i d_{y_j}) / 2, so the complex Hessian is
  (dd^c u)_{j kbar} = d2 u / dz_j dzbar_k, i.e. a quarter of the real
  Hessian blocks.
* i dz ^ dzbar = 2 dx ^ dy, hence the integral of a top form with wedge
  density D is 4 * mean(D) over the unit box.

All field values are plain float64 numpy arrays; fields are treated as
immutable values (kernels never write into their inputs).
"""

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .errors import PositivityError

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Grid:
    """Uniform N^4 lattice on [0,1)^4, optionally shifted by per-axis offsets.

    Offsets move lattice points off distinguished loci (e.g. a divisor)
    without changing the spectral operators, which are shift-invariant.
    """

    n: int
    offsets: tuple = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.n < 4 or self.n % 2 != 0:
            raise ValueError(f"grid size must be even and >= 4, got {self.n}")
        if len(self.offsets) != 4:
            raise ValueError("offsets must have 4 entries")
        object.__setattr__(self, "offsets", tuple(float(o) for o in self.offsets))
        for o in self.offsets:
            if not (0.0 <= o < 1.0 / self.n):
                raise ValueError(f"offsets must lie in [0, 1/N), got {o}")

    @property
    def shape(self):
        return (self.n,) * 4

    @property
    def spacing(self):
        return 1.0 / self.n

    def axis(self, i):
        """Sample points along real axis i (0..3), offset included."""
        return (np.arange(self.n) + 0.0) / self.n + self.offsets[i]

    def coords(self):
        """Broadcastable coordinate arrays (x1, y1, x2, y2)."""
        ax = [self.axis(i) for i in range(4)]
        shapes = [(-1, 1, 1, 1), (1, -1, 1, 1), (1, 1, -1, 1), (1, 1, 1, -1)]
        return tuple(a.reshape(s) for a, s in zip(ax, shapes))

    def point(self, index):
        """Coordinates of the lattice point at a flat or tuple index."""
        idx = np.unravel_index(index, self.shape) if np.isscalar(index) else tuple(index)
        return tuple(self.axis(i)[int(idx[i])] for i in range(4))

    # Frequency grids for the spectral operators.  Integer frequencies in
    # cycles per unit length; the Nyquist row is assigned to -N/2 (fftfreq
    # convention), applied uniformly so that the discrete Parseval
    # identities used by the energy functionals hold exactly.
    def _freq(self):
        return sfft.fftfreq(self.n) * self.n

    def hessian_symbols(self):
        """Spectral symbols of dd^c: (s11, s22, s12_even, s12_odd).

        s11/s22 are the symbols of d_{z_j} d_{zbar_j}; the mixed component
        splits as s12 = s12_even + i*s12_odd with both parts real and even,
        so every output field of the Hessian comes from a real transform.
        """
        k = self._freq()
        a = k.reshape(-1, 1, 1, 1)
        b = k.reshape(1, -1, 1, 1)
        c = k.reshape(1, 1, -1, 1)
        d = k.reshape(1, 1, 1, -1)
        pi2 = np.pi ** 2
        s11 = -pi2 * (a * a + b * b)
        s22 = -pi2 * (c * c + d * d)
        # -pi^2 (a - ib)(c + id) = -pi^2 [(ac + bd) + i(ad - bc)]
        s12e = -pi2 * (a * c + b * d)
        s12o = -pi2 * (a * d - b * c)
        return s11, s22, s12e, s12o

    def laplace_symbol(self):
        """Symbol of tr_Id dd^c = quarter Laplacian."""
        s11, s22, _, _ = self.hessian_symbols()
        return s11 + s22


@dataclass(frozen=True)
class ScalarField:
    """Real function sampled on the grid, periodic by construction."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"field shape {v.shape} != grid shape {self.grid.shape}")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid, value):
        return cls(grid, np.full(grid.shape, float(value)))

    def mean(self):
        return float(self.values.mean())

    def sup(self):
        return float(np.abs(self.values).max())

    def shifted(self, c):
        return ScalarField(self.grid, self.values + float(c))

    def mean_normalized(self):
        return self.shifted(-self.mean())


@dataclass(frozen=True)
class HermitianFormField:
    """Pointwise 2x2 Hermitian matrix field: a real (1,1)-form.

    Stored componentwise; h12 is the (1, 2bar) entry, the (2, 1bar) entry is
    its conjugate by construction.  Positivity is a checked property, never
    assumed.
    """

    grid: Grid
    h11: np.ndarray
    h22: np.ndarray
    h12_re: np.ndarray
    h12_im: np.ndarray

    def __post_init__(self):
        for name in ("h11", "h22", "h12_re", "h12_im"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != self.grid.shape:
                v = np.broadcast_to(v, self.grid.shape)
            object.__setattr__(self, name, v)

    @classmethod
    def constant(cls, grid, m11, m22, m12=0.0):
        m12 = complex(m12)
        full = lambda v: np.full(grid.shape, float(v))
        return cls(grid, full(m11), full(m22), full(m12.real), full(m12.imag))

    @classmethod
    def identity(cls, grid):
        return cls.constant(grid, 1.0, 1.0)

    def add(self, other):
        return HermitianFormField(
            self.grid,
            self.h11 + other.h11,
            self.h22 + other.h22,
            self.h12_re + other.h12_re,
            self.h12_im + other.h12_im,
        )

    def scale(self, c):
        c = float(c)
        return HermitianFormField(
            self.grid, c * self.h11, c * self.h22, c * self.h12_re, c * self.h12_im
        )

    def eigenvalues(self):
        """Pointwise eigenvalues (against the identity), sorted ascending."""
        half_tr = 0.5 * (self.h11 + self.h22)
        rad = np.sqrt(
            (0.5 * (self.h11 - self.h22)) ** 2 + self.h12_re ** 2 + self.h12_im ** 2
        )
        return half_tr - rad, half_tr + rad


def complex_hessian(phi):
    """dd^c of a scalar potential: (dd^c phi)_{j kbar} = d2 phi/dz_j dzbar_k.

    Spectral, hence exact for band-limited input; diagonal components have
    exactly zero mean (the form is dd^c-exact).
    """
    v = phi.values
    if not np.all(np.isfinite(v)):
        raise ValueError("complex_hessian: input field has non-finite entries")
    g = phi.grid
    s11, s22, s12e, s12o = g.hessian_symbols()
    sh = g.shape
    axes = (0, 1, 2, 3)
    f = sfft.rfftn(v, axes=axes)
    ncut = sh[3] // 2 + 1
    crop = (slice(None),) * 3 + (slice(0, ncut),)
    h11 = sfft.irfftn(s11[crop] * f, s=sh, axes=axes)
    h22 = sfft.irfftn(s22[crop] * f, s=sh, axes=axes)
    h12r = sfft.irfftn(s12e[crop] * f, s=sh, axes=axes)
    h12i = sfft.irfftn(s12o[crop] * f, s=sh, axes=axes)
    return HermitianFormField(g, h11, h22, h12r, h12i)


def holomorphic_gradient(phi):
    """(d_{z1} phi, d_{z2} phi) as complex arrays (spectral)."""
    g = phi.grid
    k = g._freq()
    a = k.reshape(-1, 1, 1, 1)
    b = k.reshape(1, -1, 1, 1)
    c = k.reshape(1, 1, -1, 1)
    d = k.reshape(1, 1, 1, -1)
    f = sfft.fftn(phi.values)
    # d_z = (d_x - i d_y)/2acts as multiplication by i*pi*(k_x - i k_y)
    dz1 = sfft.ifftn(1j * np.pi * (a - 1j * b) * f)
    dz2 = sfft.ifftn(1j * np.pi * (c - 1j * d) * f)
    return dz1, dz2


def wedge_density(alpha, beta):
    """Density D of the top form alpha ^ beta.

    alpha ^ beta = D * (i dz1 dz1bar)(i dz2 dz2bar) with
    D = a11*b22 + a22*b11 - 2 Re(a12 * conj(b12)); symmetric in (alpha, beta).
    """
    d = (
        alpha.h11 * beta.h22
        + alpha.h22 * beta.h11
        - 2.0 * (alpha.h12_re * beta.h12_re + alpha.h12_im * beta.h12_im)
    )
    return ScalarField(alpha.grid, d)


def integrate(density):
    """Integral of a top form over the torus: 4 * mean of its wedge density.

    (i dz ^ dzbar = 2 dx ^ dy per factor; the trapezoid rule on a periodic
    grid is the spectrally exact mean.)
    """
    return 4.0 * density.mean()


def _positivity_check(alpha, what):
    lo, _ = alpha.eigenvalues()
    idx = int(np.argmin(lo))
    margin = float(lo.flat[idx])
    if margin <= 0.0:
        point = alpha.grid.point(idx)
        raise PositivityError(
            f"{what}: form not positive definite at grid point {point} "
            f"(margin {margin:.3e})",
            index=idx,
            point=point,
            margin=margin,
        )


def trace_with(alpha, beta, check=True):
    """tr_alpha beta = alpha^{j kbar} beta_{j kbar} for positive alpha.

    In complex dimension 2 this equals 2 D(alpha, beta) / D(alpha, alpha),
    which is how it is computed (no matrix inversion).
    """
    if check:
        _positivity_check(alpha, "trace_with")
    num = wedge_density(alpha, beta).values
    den = wedge_density(alpha, alpha).values
    return ScalarField(alpha.grid, 2.0 * num / den)


def generalized_eigenvalues(alpha, beta, check=True):
    """Pointwise roots of det(beta - lambda * alpha), sorted ascending.

    Requires alpha positive.  The roots solve
    (D(a,a)/2) l^2 - D(a,b) l + D(b,b)/2 = 0; their product is
    D(b,b)/D(a,a) and their sum is tr_alpha beta.
    """
    if check:
        _positivity_check(alpha, "generalized_eigenvalues")
    daa = wedge_density(alpha, alpha).values
    dab = wedge_density(alpha, beta).values
    dbb = wedge_density(beta, beta).values
    # Discriminant of the pencil; clamp tiny negatives from roundoff.
    disc = dab * dab - daa * dbb
    disc = np.sqrt(np.maximum(disc, 0.0))
    lo = (dab - disc) / daa
    hi = (dab + disc) / daa
    g = alpha.grid
    return ScalarField(g, lo), ScalarField(g, hi)


def positivity_margin(alpha, mask=None):
    """Smallest pointwise eigenvalue of alpha over the grid (or a mask).

    Negative values are a valid result: the form fails positivity there.
    """
    lo, _ = alpha.eigenvalues()
    if mask is not None:
        lo = lo[mask]
    return float(lo.min())
