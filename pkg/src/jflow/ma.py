"""Elliptic side of the lab: the reduction of the critical equation to a
complex Monge-Ampere equation, a damped Newton-Krylov solver for it,
spectral Poisson solves, and the split-ansatz closed-form oracle.

The critical equation 2 chi ^ omega = c chi^2 for chi = chi0 + dd^c(phi)
is algebraically equivalent to

    (alpha + c dd^c psi)^2 = omega^2,    alpha := c chi0 - omega,

so a converged Newton solution is an independent check on the flow limit.
Newton runs on the log-quotient G(psi) = log (A_psi)^2 - log (target)^2,
whose linearization is the variable-coefficient complex Laplacian
c tr_{A_psi} dd^c; each step is solved by GMRES preconditioned with the
constant-coefficient operator built from the mean of A_psi.
"""

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator, gmres

from .cohomology import class_pairing, cone_condition, c_constant
from .errors import ConeConditionError, MAConvergenceError, PositivityError
from .split import SplitForm, SplitPotential, factor_hessian, factor_poisson
from .torus import (
    ScalarField,
    complex_hessian,
    positivity_margin,
    wedge_density,
)


@dataclass(frozen=True)
class MASolverConfig:
    newton_tol: float = 1e-10   # sup norm of the log residual
    max_newton: int = 50
    linear_tol: float = 1e-12
    damping: float = 0.5        # backtracking factor, with positivity safeguard

    def __post_init__(self):
        if self.newton_tol <= 0 or self.linear_tol <= 0:
            raise ValueError("tolerances must be positive")
        if not (0.0 < self.damping < 1.0):
            raise ValueError("damping factor must lie in (0, 1)")


def build_alpha(chi0, omega_eps, c_eps):
    """alpha = c_eps * chi0 - omega_eps, with the cone margin enforced and
    the class identity [alpha]^2 = [omega_eps]^2 verified."""
    split = isinstance(chi0, SplitForm)
    if split:
        from .cohomology import CohomologyClass

        x_cls = CohomologyClass.diag(chi0.a1, chi0.a2)
        w_cls = CohomologyClass.diag(omega_eps.a1, omega_eps.a2)
    else:
        x_cls, w_cls = chi0.cls, omega_eps.cls
    margin = cone_condition(x_cls, w_cls)
    if margin <= 0.0:
        raise ConeConditionError(
            f"build_alpha: cone margin {margin:.6e} <= 0", margin=margin
        )
    alpha = chi0.scale(c_eps).add(omega_eps.scale(-1.0))
    a_cls = x_cls.scale(c_eps).add(w_cls.scale(-1.0))
    lhs = class_pairing(a_cls, a_cls)
    rhs = class_pairing(w_cls, w_cls)
    if abs(lhs - rhs) > 1e-10 * max(1.0, abs(rhs)):
        raise AssertionError(
            f"class identity [alpha]^2 = [omega]^2 violated: {lhs} vs {rhs}"
        )
    return alpha


def poisson_solve(src, tol=1e-12):
    """Mean-zero u with tr_Id dd^c u = src (spectral symbol division)."""
    m = src.mean()
    if abs(m) > tol:
        raise ValueError(f"poisson_solve: source mean {m:.3e} exceeds {tol:.1e}")
    grid = src.grid
    sym = grid.laplace_symbol().copy()
    sym[0, 0, 0, 0] = 1.0
    ncut = grid.n // 2 + 1
    crop = (slice(None),) * 3 + (slice(0, ncut),)
    f = sfft.rfftn(src.values - m, axes=(0, 1, 2, 3))
    f /= sym[crop]
    f[0, 0, 0, 0] = 0.0
    return ScalarField(grid, sfft.irfftn(f, s=grid.shape, axes=(0, 1, 2, 3)))


def critical_residual(phi, chi0, omega, c):
    """sup |2 chi_phi ^ omega - c chi_phi^2| in density form.

    No division: finite even where chi degenerates, so it extends to the
    weak space.
    """
    chi = chi0.realized.add(complex_hessian(phi))
    dens = 2.0 * wedge_density(chi, omega.realized).values - c * wedge_density(chi, chi).values
    return float(np.abs(dens).max())


def split_critical(f, g, x11=1.0, x22=1.0, fgrid=None):
    """Closed-form critical data for the product ansatz.

    For profiles f(z1), g(z2) >= 0 with positive means and diagonal class
    X: c_i = mean/X_ii (then c1 + c2 = c0), and the factor potentials solve
    dd^c phi_i = profile/c_i - X_ii.  The assembled chi = diag(f/c1, g/c2)
    satisfies the critical equation exactly.
    """
    from .split import FactorGrid

    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if fgrid is None:
        fgrid = FactorGrid(f.shape[0])
    mf, mg = float(f.mean()), float(g.mean())
    if mf <= 0.0 or mg <= 0.0:
        raise ValueError("split_critical: profiles need positive means")
    c1 = mf / x11
    c2 = mg / x22
    phi1 = factor_poisson(fgrid, f / c1 - x11)
    phi2 = factor_poisson(fgrid, g / c2 - x22)
    return c1, c2, phi1, phi2


# --------------------------------------------------------------------------
# Newton solver, full backend


def _gauge(psi, gauge):
    if gauge == "sup":
        return ScalarField(psi.grid, psi.values - psi.values.max())
    return psi.mean_normalized()


@dataclass
class MASolution:
    psi: object
    residuals: list
    newton_iterations: int

    def residual(self):
        return self.residuals[-1] if self.residuals else np.inf


def solve_ma(alpha, c, target, cfg=None, psi0=None, gauge="mean"):
    """Newton-Krylov solve of (alpha + c dd^c psi)^2 = target^2, full grid.

    The unknown is mean-zero; ``gauge="sup"`` shifts the output to the
    sup psi = 0 normalization on export.  If the realized alpha is not
    positive and no psi0 is given, the iteration starts from the harmonic
    gauge psi = -potential(alpha)/c, which makes the initial A_psi the
    (positive) constant class representative.
    """
    cfg = cfg or MASolverConfig()
    grid = alpha.grid
    a_real = alpha.realized
    t_real = target.realized
    t_dens = wedge_density(t_real, t_real).values
    if t_dens.min() <= 1e-12 * max(float(t_dens.max()), 1.0):
        raise PositivityError(
            "solve_ma: target density vanishes; use epsilon-continuation "
            "for degenerate targets",
            margin=float(t_dens.min()),
        )
    log_t = np.log(t_dens)

    if psi0 is not None:
        psi = psi0.values - psi0.values.mean()
    elif positivity_margin(a_real) <= 0.0:
        psi = -alpha.potential.values / c
        psi = psi - psi.mean()
    else:
        psi = np.zeros(grid.shape)

    ncut = grid.n // 2 + 1
    crop = (slice(None),) * 3 + (slice(0, ncut),)
    s11, s22, s12e, s12o = grid.hessian_symbols()
    sym = (s11[crop], s22[crop], s12e[crop], s12o[crop])
    shape = grid.shape
    axes = (0, 1, 2, 3)
    base = (a_real.h11, a_real.h22, a_real.h12_re, a_real.h12_im)

    def a_field(p):
        f = sfft.rfftn(p, axes=axes)
        return (
            base[0] + c * sfft.irfftn(sym[0] * f, s=shape, axes=axes),
            base[1] + c * sfft.irfftn(sym[1] * f, s=shape, axes=axes),
            base[2] + c * sfft.irfftn(sym[2] * f, s=shape, axes=axes),
            base[3] + c * sfft.irfftn(sym[3] * f, s=shape, axes=axes),
        )

    def dens(a):
        return 2.0 * (a[0] * a[1] - a[2] ** 2 - a[3] ** 2)

    def margin(a):
        lo = 0.5 * (a[0] + a[1]) - np.sqrt(
            (0.5 * (a[0] - a[1])) ** 2 + a[2] ** 2 + a[3] ** 2
        )
        return float(lo.min())

    a = a_field(psi)
    m = margin(a)
    if m <= 0.0:
        raise PositivityError(
            f"solve_ma: initial A_psi not positive (margin {m:.3e})", margin=m
        )
    g_res = np.log(dens(a)) - log_t
    residuals = [float(np.abs(g_res).max())]

    size = psi.size
    for iteration in range(cfg.max_newton):
        if residuals[-1] <= cfg.newton_tol:
            break
        delta = _newton_direction(g_res, a, c, sym, shape, axes, size, cfg, residuals[-1])
        # backtracking: keep A positive and require residual decrease
        s = 1.0
        accepted = False
        for _ in range(40):
            trial = psi + s * delta
            trial -= trial.mean()
            a_trial = a_field(trial)
            if margin(a_trial) > 0.0:
                g_trial = np.log(dens(a_trial)) - log_t
                r_trial = float(np.abs(g_trial).max())
                if r_trial < residuals[-1] or r_trial <= cfg.newton_tol:
                    accepted = True
                    break
            s *= cfg.damping
        if not accepted:
            raise MAConvergenceError(
                f"solve_ma: no acceptable damped step at iteration {iteration}",
                residuals=residuals,
            )
        psi, a, g_res = trial, a_trial, g_trial
        residuals.append(r_trial)
    else:
        raise MAConvergenceError(
            f"solve_ma: not converged in {cfg.max_newton} iterations "
            f"(residual {residuals[-1]:.3e})",
            residuals=residuals,
        )

    out = ScalarField(grid, psi)
    return MASolution(_gauge(out, gauge), residuals, len(residuals) - 1)


def _newton_direction(g_res, a, c, sym, shape, axes, size, cfg, res_sup):
    """Solve c tr_A dd^c(delta) = -G by preconditioned GMRES (mean-zero)."""
    det = a[0] * a[1] - a[2] ** 2 - a[3] ** 2

    def hess_apply(p):
        f = sfft.rfftn(p.reshape(shape), axes=axes)
        h11 = sfft.irfftn(sym[0] * f, s=shape, axes=axes)
        h22 = sfft.irfftn(sym[1] * f, s=shape, axes=axes)
        h12r = sfft.irfftn(sym[2] * f, s=shape, axes=axes)
        h12i = sfft.irfftn(sym[3] * f, s=shape, axes=axes)
        return h11, h22, h12r, h12i

    def matvec(p):
        p = p - p.mean()
        h = hess_apply(p)
        tr = (a[0] * h[1] + a[1] * h[0] - 2.0 * (a[2] * h[2] + a[3] * h[3])) / det
        out = c * tr
        return (out - out.mean()).ravel()

    # constant-coefficient preconditioner from the mean matrix of A
    am = (float(a[0].mean()), float(a[1].mean()), float(a[2].mean()), float(a[3].mean()))
    det_m = am[0] * am[1] - am[2] ** 2 - am[3] ** 2
    denom = c * (am[0] * sym[1] + am[1] * sym[0] - 2.0 * (am[2] * sym[2] + am[3] * sym[3])) / det_m
    denom_safe = denom.copy()
    denom_safe[(0,) * len(shape)] = 1.0

    def precond(r):
        f = sfft.rfftn(r.reshape(shape), axes=axes)
        f /= denom_safe
        f[(0,) * len(shape)] = 0.0
        return sfft.irfftn(f, s=shape, axes=axes).ravel()

    rhs = -(g_res - g_res.mean()).ravel()
    op = LinearOperator((size, size), matvec=lambda p: matvec(p.reshape(shape)))
    pre = LinearOperator((size, size), matvec=precond)
    # inexact Newton: modest relative tolerance early, cfg.linear_tol near the end
    rtol = float(np.clip(0.01 * res_sup, cfg.linear_tol, 1e-2))
    delta, info = gmres(op, rhs, M=pre, rtol=rtol, atol=0.0, restart=60, maxiter=40)
    if info != 0 and not np.all(np.isfinite(delta)):
        raise MAConvergenceError(f"solve_ma: GMRES breakdown (info={info})")
    delta = delta.reshape(shape)
    return delta - delta.mean()


# --------------------------------------------------------------------------
# Newton solver, split backend


def solve_ma_split(alpha, c, target, cfg=None, gauge="mean"):
    """Split-mode Monge-Ampere solve: the product equation factorises into
    one log-linear equation per factor, each solved by a damped Newton
    iteration whose linear step is a constant-coefficient Poisson solve.

    The partition constant kappa between the factors is fixed by the class
    means (the factor problems must each balance in cohomology).
    """
    cfg = cfg or MASolverConfig()
    fgrid = alpha.grid
    a1, a2 = alpha.profiles()
    f, g = target.profiles()
    floor = 1e-12 * max(float(f.max()), float(g.max()), 1.0)
    if f.min() <= floor or g.min() <= floor:
        raise PositivityError(
            "solve_ma_split: target profile vanishes; use epsilon-continuation",
            margin=float(min(f.min(), g.min())),
        )
    kappa = alpha.a1 / float(f.mean())
    psi1, res1 = _factor_newton(fgrid, a1, c, kappa * f, cfg)
    psi2, res2 = _factor_newton(fgrid, a2, c, g / kappa, cfg)
    k = max(len(res1), len(res2))
    ext = lambda r: r + [r[-1]] * (k - len(r))
    residuals = [max(x, y) for x, y in zip(ext(res1), ext(res2))]
    if gauge == "sup":
        psi = SplitPotential(fgrid, psi1 - psi1.max(), psi2 - psi2.max())
    else:
        psi = SplitPotential(fgrid, psi1, psi2).mean_normalized()
    return MASolution(psi, residuals, len(residuals) - 1)


def _factor_newton(fgrid, a, c, target, cfg):
    """Newton on log(a + c dd^c psi) = log(target) for one factor."""
    if abs(float(a.mean()) - float(target.mean())) > 1e-8 * abs(float(target.mean())):
        raise ValueError("factor Newton: class means of side and target disagree")
    log_t = np.log(target)
    psi = np.zeros(fgrid.shape)
    a_cur = a.copy()
    if a_cur.min() <= 0.0:
        raise PositivityError(
            f"solve_ma_split: factor side not positive (min {a_cur.min():.3e})",
            margin=float(a_cur.min()),
        )
    g_res = np.log(a_cur) - log_t
    residuals = [float(np.abs(g_res).max())]
    for _ in range(cfg.max_newton):
        if residuals[-1] <= cfg.newton_tol:
            break
        # linearization (c/A) dd^c delta = -G  <=>  c dd^c delta = -A G
        rhs = -a_cur * g_res
        rhs -= rhs.mean()
        delta = factor_poisson(fgrid, rhs) / c
        s = 1.0
        accepted = False
        for _ in range(40):
            trial = psi + s * delta
            a_trial = a + c * factor_hessian(fgrid, trial)
            if a_trial.min() > 0.0:
                g_trial = np.log(a_trial) - log_t
                r_trial = float(np.abs(g_trial).max())
                if r_trial < residuals[-1] or r_trial <= cfg.newton_tol:
                    accepted = True
                    break
            s *= cfg.damping
        if not accepted:
            raise MAConvergenceError(
                "solve_ma_split: no acceptable damped step", residuals=residuals
            )
        psi, a_cur, g_res = trial, a_trial, g_trial
        residuals.append(r_trial)
    else:
        raise MAConvergenceError(
            f"solve_ma_split: not converged in {cfg.max_newton} iterations",
            residuals=residuals,
        )
    return psi - psi.mean(), residuals


def solve_ma_continuation(chi0, omega0, omega_hat, eps_ladder, cfg=None, gauge="mean"):
    """Warm-started epsilon-continuation toward a degenerate target.

    Solves the Monge-Ampere problem at each epsilon in the (descending)
    ladder, reusing the previous solution as the Newton start.  Returns the
    list of (eps, MASolution) pairs.
    """
    from .cohomology import epsilon_form

    cfg = cfg or MASolverConfig()
    split = isinstance(chi0, SplitForm)
    out = []
    psi_prev = None
    for eps in eps_ladder:
        omega_eps = epsilon_form(omega0, eps, omega_hat)
        if split:
            from .cohomology import CohomologyClass

            x = CohomologyClass.diag(chi0.a1, chi0.a2)
            w = CohomologyClass.diag(omega_eps.a1, omega_eps.a2)
        else:
            x, w = chi0.cls, omega_eps.cls
        c_eps = c_constant(x, w)
        alpha = build_alpha(chi0, omega_eps, c_eps)
        if split:
            sol = solve_ma_split(alpha, c_eps, omega_eps, cfg, gauge=gauge)
        else:
            sol = solve_ma(alpha, c_eps, omega_eps, cfg, psi0=psi_prev, gauge=gauge)
            psi_prev = sol.psi
        out.append((eps, sol))
    return out
