"""Energy functionals: the flow energy J (path and closed forms), the
conserved normalization I, the Aubin-Yau energy E, scalar curvature and the
Mabuchi energy, plus the decomposition report M = J + F.

Path integrals are evaluated by composite trapezoid quadrature with full
Richardson extrapolation (Romberg); along the default linear path the
J integrand is a quadratic polynomial in the path parameter, so the result
is exact to rounding.
"""

from dataclasses import dataclass

import numpy as np

from .errors import PositivityError
from .torus import (
    HermitianFormField,
    ScalarField,
    complex_hessian,
    holomorphic_gradient,
    integrate,
    positivity_margin,
    trace_with,
    wedge_density,
)
from . import split as sp


def _romberg(samples, length=1.0):
    """Romberg value from 2^k + 1 equispaced samples of the integrand."""
    m = len(samples) - 1
    k = int(round(np.log2(m)))
    if 2 ** k != m:
        raise ValueError("romberg needs 2^k + 1 samples")
    samples = np.asarray(samples, dtype=float)
    row = []
    for j in range(k + 1):
        stride = 2 ** (k - j)
        pts = samples[::stride]
        h = length / 2 ** j
        row.append(h * (pts.sum() - 0.5 * (pts[0] + pts[-1])))
    table = np.array(row)
    for m_level in range(1, k + 1):
        factor = 4.0 ** m_level
        table = (factor * table[1:] - table[:-1]) / (factor - 1.0)
    return float(table[0])


def _chi(phi, chi0):
    return chi0.realized.add(complex_hessian(phi))


def j_gradient_density(phi, chi0, omega0, c0):
    """The density of the J-gradient: 2 chi_phi ^ omega0 - c0 chi_phi^2."""
    chi = _chi(phi, chi0)
    d = 2.0 * wedge_density(chi, omega0.realized).values - c0 * wedge_density(chi, chi).values
    return ScalarField(phi.grid, d)


def J_closed(phi, chi0, omega0, c0):
    """Closed-form J: needs no path, extends to the weak space."""
    chi = _chi(phi, chi0)
    chi0r = chi0.realized
    w = omega0.realized
    t1 = wedge_density(chi, w).values + wedge_density(chi0r, w).values
    t2 = (
        wedge_density(chi, chi).values
        + wedge_density(chi, chi0r).values
        + wedge_density(chi0r, chi0r).values
    )
    p = phi.values
    return 4.0 * float(np.mean(p * t1)) - (c0 / 3.0) * 4.0 * float(np.mean(p * t2))


def J_path(phi, chi0, omega0, c0, steps=16, reparam=None):
    """J by quadrature along a path s -> r(s) * phi (linear by default).

    ``steps`` must be a power of two >= 8; ``reparam`` is an optional pair
    of callables (r, r') with r(0) = 0, r(1) = 1 for path-independence
    experiments.
    """
    if steps < 8:
        raise ValueError("J_path needs at least 8 quadrature steps")
    chi0r = chi0.realized
    w = omega0.realized
    p = phi.values
    hess = complex_hessian(phi)
    samples = []
    for j in range(steps + 1):
        s = j / steps
        r = s if reparam is None else reparam[0](s)
        rp = 1.0 if reparam is None else reparam[1](s)
        chi_s = chi0r.add(hess.scale(r))
        dens = 2.0 * wedge_density(chi_s, w).values - c0 * wedge_density(chi_s, chi_s).values
        samples.append(4.0 * float(np.mean(rp * p * dens)))
    return _romberg(samples)


def J_gradient_check(phi, v, chi0, omega0, c0, h=1e-4):
    """Relative error between a central finite difference of J and the
    analytic directional derivative along v."""
    plus = ScalarField(phi.grid, phi.values + h * v.values)
    minus = ScalarField(phi.grid, phi.values - h * v.values)
    fd = (J_closed(plus, chi0, omega0, c0) - J_closed(minus, chi0, omega0, c0)) / (2.0 * h)
    analytic = 4.0 * float(np.mean(v.values * j_gradient_density(phi, chi0, omega0, c0).values))
    scale = max(abs(analytic), abs(fd), 1e-12)
    return abs(fd - analytic) / scale


def I_functional(phi, chi0):
    """The conserved normalization: (1/3) int phi (chi^2 + chi chi0 + chi0^2)."""
    chi = _chi(phi, chi0)
    chi0r = chi0.realized
    t = (
        wedge_density(chi, chi).values
        + wedge_density(chi, chi0r).values
        + wedge_density(chi0r, chi0r).values
    )
    return (4.0 / 3.0) * float(np.mean(phi.values * t))


def E_aubin_yau(phi, chi0):
    """int i d(phi) ^ dbar(phi) ^ (chi0 + chi_phi); nonnegative whenever
    chi0 + chi_phi is."""
    dz1, dz2 = holomorphic_gradient(phi)
    grid = phi.grid
    p = HermitianFormField(
        grid,
        np.abs(dz1) ** 2,
        np.abs(dz2) ** 2,
        (dz1 * dz2.conjugate()).real,
        (dz1 * dz2.conjugate()).imag,
    )
    total = chi0.realized.add(_chi(phi, chi0))
    return integrate(wedge_density(p, total))


def scalar_curvature(chi, margin_tol=1e-10):
    """Scalar curvature of a positive (1,1)-form field.

    R = tr_chi Ric with Ric = -dd^c log det(chi); flat backgrounds give 0.
    """
    margin = positivity_margin(chi)
    if margin <= margin_tol:
        raise PositivityError(
            f"scalar_curvature: form not positive (margin {margin:.3e})",
            margin=margin,
        )
    det = 0.5 * wedge_density(chi, chi).values
    ric = complex_hessian(ScalarField(chi.grid, -np.log(det)))
    return trace_with(chi, ric, check=False)


def mean_scalar_curvature(chi):
    """Average R over the chi-volume: int R chi^2 / int chi^2 (0 on the torus)."""
    r = scalar_curvature(chi)
    vol = wedge_density(chi, chi)
    num = integrate(ScalarField(chi.grid, r.values * vol.values))
    return num / integrate(vol)


def mabuchi_path(phi, chi0, steps=16, rbar=None, margin_tol=1e-10):
    """Mabuchi energy along the linear path; every intermediate form must
    stay positive.  ``rbar`` defaults to the average scalar curvature of
    the background."""
    if steps < 8:
        raise ValueError("mabuchi_path needs at least 8 quadrature steps")
    chi0r = chi0.realized
    if rbar is None:
        rbar = mean_scalar_curvature(chi0r)
    hess = complex_hessian(phi)
    p = phi.values
    samples = []
    for j in range(steps + 1):
        s = j / steps
        chi_s = chi0r.add(hess.scale(s))
        r_s = scalar_curvature(chi_s, margin_tol=margin_tol)
        vol = wedge_density(chi_s, chi_s).values
        samples.append(-4.0 * float(np.mean(p * (r_s.values - rbar) * vol)))
    return _romberg(samples)


@dataclass(frozen=True)
class FunctionalReport:
    """Snapshot of all functionals; F = M - J is only defined when the two
    path integrals were taken at the same resolution."""

    j: float
    i: float
    e: float
    m: float = None
    f: float = None
    path_resolution: int = 0
    notes: str = ""

    def to_dict(self):
        return {
            "J": self.j,
            "I": self.i,
            "E": self.e,
            "M": self.m,
            "F": self.f,
            "path_resolution": self.path_resolution,
            "notes": self.notes,
        }


def evaluate_suite(phi, chi0, omega0, c0, steps=16, with_mabuchi=True):
    """FunctionalReport for one potential; Mabuchi is skipped (with a note)
    when some path form loses positivity."""
    j = J_closed(phi, chi0, omega0, c0)
    i = I_functional(phi, chi0)
    e = E_aubin_yau(phi, chi0)
    m = f = None
    notes = ""
    if with_mabuchi:
        try:
            m = mabuchi_path(phi, chi0, steps=steps)
            f = m - j
        except PositivityError as err:
            notes = f"mabuchi skipped: {err}"
    return FunctionalReport(j, i, e, m, f, steps, notes)


# --- split-backend evaluations (separable products, no 4-D assembly) -----


def j_closed_split(phi, chi0, omega, c):
    """J_closed for split data, via factor means."""
    a, b = _split_chi(phi, chi0)
    p0, q0 = chi0.profiles()
    f, g = omega.profiles()
    pp = (phi.phi1, phi.phi2)
    t1 = sp.split_wedge_mean(pp, (a, b), (f, g)) + sp.split_wedge_mean(pp, (p0, q0), (f, g))
    t2 = (
        sp.split_wedge_mean(pp, (a, b), (a, b))
        + sp.split_wedge_mean(pp, (a, b), (p0, q0))
        + sp.split_wedge_mean(pp, (p0, q0), (p0, q0))
    )
    return 4.0 * t1 - (c / 3.0) * 4.0 * t2


def i_functional_split(phi, chi0):
    a, b = _split_chi(phi, chi0)
    p0, q0 = chi0.profiles()
    pp = (phi.phi1, phi.phi2)
    t = (
        sp.split_wedge_mean(pp, (a, b), (a, b))
        + sp.split_wedge_mean(pp, (a, b), (p0, q0))
        + sp.split_wedge_mean(pp, (p0, q0), (p0, q0))
    )
    return (4.0 / 3.0) * t


def _split_chi(phi, chi0):
    a0, b0 = chi0.profiles()
    a = a0 + sp.factor_hessian(phi.grid, phi.phi1)
    b = b0 + sp.factor_hessian(phi.grid, phi.phi2)
    return a, b
