"""Method-of-lines integrator for the J-flow

    d(phi)/dt = c_eps - tr_{chi_phi} omega_eps,

its epsilon-regularised family driver, and the maximum-principle monitors.

Time stepping is classical explicit RK4 with an eigenvalue-based step-size
rule; a step whose endpoint loses positivity (off the divisor locus) is
rejected and retried at half the step, up to twenty times.  A single run
is sequential with data-parallel pointwise kernels; family members are
independent and may be dispatched to worker processes.

Two backends share the driver: the full backend integrates a 4-D potential
with spectral Hessians; the split backend integrates two 2-D factor
potentials for product data (see `split`), for which every history
quantity reduces to factor means.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.fft as sfft

from .cohomology import CohomologyClass, cone_condition, epsilon_form
from .errors import (
    ConeConditionError,
    DegenerateStiffnessError,
    PositivityError,
)
from .split import SplitForm, SplitPotential, split_sup_abs
from .torus import ScalarField, complex_hessian, trace_with

_MAX_REJECTIONS = 20


@dataclass(frozen=True)
class FlowConfig:
    """Run parameters; eps = 0 must be acknowledged explicitly because the
    equation is then only degenerate-parabolic."""

    eps: float = 0.0
    dt_safety: float = 0.2
    stop_tolerance: float = 1e-9
    max_time: float = 5.0
    snapshot_stride: int = 50
    allow_degenerate: bool = False
    fixed_dt: Optional[float] = None  # testing hook; bypasses the adaptive rule
    max_field_snapshots: int = 96

    def __post_init__(self):
        if not (0.0 < self.dt_safety < 1.0):
            raise ValueError("dt_safety must lie in (0, 1)")
        if self.stop_tolerance <= 0.0 or self.max_time <= 0.0:
            raise ValueError("tolerances and max_time must be positive")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        if self.eps < 0.0:
            raise ValueError("eps must be nonnegative")


@dataclass(frozen=True)
class HistoryRow:
    t: float
    sup_phi: float
    sup_phidot: float
    j: float
    i: float
    margin: float
    residual: float
    max_phidot: float
    min_phidot: float
    j_rate: float

    CSV_COLUMNS = ("t", "sup_phi", "sup_phidot", "J", "I", "margin", "residual")

    def csv_values(self):
        return (self.t, self.sup_phi, self.sup_phidot, self.j, self.i,
                self.margin, self.residual)


@dataclass
class Trajectory:
    """History plus decimated field snapshots of one run."""

    backend: str
    eps: float
    c_eps: float
    rows: list
    snapshots: list  # (t, potential) pairs, potential per backend
    final: object
    final_residual: float
    stop_reason: str
    steps: int
    rejections: int
    sup_phidot0: float
    chi0_form: object = None  # background form, for snapshot re-analysis

    def final_potential(self):
        """Final potential as a 4-D ScalarField regardless of backend."""
        if self.backend == "split":
            return self.final.assemble()
        return self.final

    def sup_phi_over_run(self):
        return max(r.sup_phi for r in self.rows)

    def sup_phidot_over_run(self):
        return max(r.sup_phidot for r in self.rows)

    def write_csv(self, path):
        from .io import write_history_csv

        write_history_csv(path, self.rows)


# --------------------------------------------------------------------------
# backend kernels


class _FullKernel:
    backend = "full"

    def __init__(self, chi0, omega_eps, c_eps, cfg, divisor=None):
        grid = chi0.grid
        self.grid = grid
        self.c = float(c_eps)
        self.cfg = cfg
        ncut = grid.n // 2 + 1
        crop = (slice(None),) * 3 + (slice(0, ncut),)
        s11, s22, s12e, s12o = grid.hessian_symbols()
        self._sym = (s11[crop], s22[crop], s12e[crop], s12o[crop])
        b = chi0.realized
        self._bg = (b.h11, b.h22, b.h12_re, b.h12_im)
        w = omega_eps.realized
        self._w = (w.h11, w.h22, w.h12_re, w.h12_im)
        self._w_det = w.h11 * w.h22 - w.h12_re ** 2 - w.h12_im ** 2
        self._kmax2 = (np.pi * grid.n) ** 2
        self._chi0_form = chi0
        self._omega_form = omega_eps
        self._off = None
        if divisor is not None:
            mask = ~divisor.locus_mask(grid)
            if not mask.all():
                self._off = mask

    # raw representation: plain ndarray of potential values
    def unwrap(self, phi):
        return phi.values

    def wrap(self, v):
        return ScalarField(self.grid, v)

    def chi(self, v):
        f = sfft.rfftn(v, axes=(0, 1, 2, 3))
        s11, s22, s12e, s12o = self._sym
        sh = self.grid.shape
        b11, b22, b12r, b12i = self._bg
        h11 = b11 + sfft.irfftn(s11 * f, s=sh, axes=(0, 1, 2, 3))
        h22 = b22 + sfft.irfftn(s22 * f, s=sh, axes=(0, 1, 2, 3))
        h12r = b12r + sfft.irfftn(s12e * f, s=sh, axes=(0, 1, 2, 3))
        h12i = b12i + sfft.irfftn(s12o * f, s=sh, axes=(0, 1, 2, 3))
        return h11, h22, h12r, h12i

    def rhs_only(self, v):
        chi = self.chi(v)
        with np.errstate(all="ignore"):
            daa = self._wedge(chi, chi)
            dab = self._wedge(chi, self._w)
            return self.c - 2.0 * dab / daa

    def metrics(self, v):
        """(rhs, chi, margin_off, finite) in one pass."""
        chi = self.chi(v)
        h11, h22, h12r, h12i = chi
        with np.errstate(all="ignore"):
            daa = h11 * h22 - h12r ** 2 - h12i ** 2  # det = D(chi,chi)/2
            dab = self._wedge(chi, self._w)
            rhs = self.c - dab / daa
        lam_lo = 0.5 * (h11 + h22) - np.sqrt(
            (0.5 * (h11 - h22)) ** 2 + h12r ** 2 + h12i ** 2
        )
        if self._off is not None:
            margin = float(lam_lo[self._off].min())
        else:
            margin = float(lam_lo.min())
        finite = bool(np.isfinite(rhs).all())
        return rhs, chi, margin, finite

    @staticmethod
    def _wedge(a, b):
        return a[0] * b[1] + a[1] * b[0] - 2.0 * (a[2] * b[2] + a[3] * b[3])

    def residual_sup(self, rhs):
        return float(np.abs(rhs).max())

    def adaptive_dt(self, chi):
        """dt = safety / (lambda_max(chi^-1 omega chi^-1) * (pi N)^2)."""
        h11, h22, h12r, h12i = chi
        x12 = h12r + 1j * h12i
        det = h11 * h22 - h12r ** 2 - h12i ** 2
        i11 = h22 / det
        i22 = h11 / det
        i12 = -x12 / det
        w11, w22, w12r, w12i = self._w
        w12 = w12r + 1j * w12i
        # m = chi^-1 * omega ; h = m * chi^-1
        m11 = i11 * w11 + i12 * w12.conjugate()
        m12 = i11 * w12 + i12 * w22
        m21 = i12.conjugate() * w11 + i22 * w12.conjugate()
        m22 = i12.conjugate() * w12 + i22 * w22
        t11 = m11 * i11 + m12 * i12.conjugate()
        t22 = m21 * i12 + m22 * i22
        tr = (t11 + t22).real
        det_h = self._w_det / det ** 2
        lam = 0.5 * tr + np.sqrt(np.maximum(0.25 * tr ** 2 - det_h, 0.0))
        lam_max = float(lam.max())
        return self.cfg.dt_safety / (lam_max * self._kmax2)

    def rk4(self, v, k1, dt):
        k2 = self.rhs_only(v + 0.5 * dt * k1)
        k3 = self.rhs_only(v + 0.5 * dt * k2)
        k4 = self.rhs_only(v + dt * k3)
        return v + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def phidot_stats(self, rhs):
        return float(rhs.max()), float(rhs.min()), float(np.abs(rhs).max())

    def sup_phi(self, v):
        return float(np.abs(v).max())

    def row_functionals(self, v, rhs, chi):
        """(J, I, dJ/dt, critical residual) from the cached chi arrays."""
        bg, w, c = self._bg, self._w, self.c
        d_cw = self._wedge(chi, w)
        d_cc = 2.0 * (chi[0] * chi[1] - chi[2] ** 2 - chi[3] ** 2)
        d_c0 = self._wedge(chi, bg)
        d_00 = self._wedge(bg, bg)
        d_0w = self._wedge(bg, w)
        t2 = d_cc + d_c0 + d_00
        j = 4.0 * float(np.mean(v * (d_cw + d_0w))) - (c / 3.0) * 4.0 * float(
            np.mean(v * t2)
        )
        i = (4.0 / 3.0) * float(np.mean(v * t2))
        j_rate = -4.0 * float(np.mean(rhs * rhs * d_cc))
        # density form of the critical residual: finite even where chi degenerates
        crit = float(np.abs(2.0 * d_cw - c * d_cc).max())
        return j, i, j_rate, crit

    def copy_potential(self, v):
        return self.wrap(v.copy())


class _SplitKernel:
    backend = "split"

    def __init__(self, chi0, omega_eps, c_eps, cfg, divisor=None):
        fgrid = chi0.grid
        self.grid = fgrid
        self.cfg = cfg
        self.c = float(c_eps)
        self.p0, self.q0 = chi0.profiles()
        self.w1, self.w2 = omega_eps.profiles()
        # factor constants: c = c1 + c2 with c_i = mean(omega factor)/chi0 class
        self.c1 = float(np.mean(self.w1)) / chi0.a1
        self.c2 = float(np.mean(self.w2)) / chi0.a2
        sym = fgrid.laplace_symbol()
        self._sym = sym[:, : fgrid.n // 2 + 1]
        self._kmax2 = (np.pi * fgrid.n) ** 2
        self._chi0_form = chi0
        self._omega_form = omega_eps
        self._off1 = None
        if divisor is not None:
            s2 = divisor.s2_proxy_factor(fgrid)
            mask = s2 >= 1e-12
            if not mask.all():
                self._off1 = mask

    def unwrap(self, phi):
        return (phi.phi1, phi.phi2)

    def wrap(self, pair):
        return SplitPotential(self.grid, pair[0], pair[1])

    def _hess(self, v):
        f = sfft.rfftn(v, axes=(0, 1))
        return sfft.irfftn(self._sym * f, s=self.grid.shape, axes=(0, 1))

    def chi(self, pair):
        return self.p0 + self._hess(pair[0]), self.q0 + self._hess(pair[1])

    def rhs_only(self, pair):
        a, b = self.chi(pair)
        with np.errstate(all="ignore"):
            return self.c1 - self.w1 / a, self.c2 - self.w2 / b

    def metrics(self, pair):
        a, b = self.chi(pair)
        with np.errstate(all="ignore"):
            r1 = self.c1 - self.w1 / a
            r2 = self.c2 - self.w2 / b
        a_min = float(a[self._off1].min()) if self._off1 is not None else float(a.min())
        margin = min(a_min, float(b.min()))
        finite = bool(np.isfinite(r1).all() and np.isfinite(r2).all())
        return (r1, r2), (a, b), margin, finite

    def residual_sup(self, rhs):
        return split_sup_abs(rhs[0], rhs[1])

    def adaptive_dt(self, chi):
        a, b = chi
        lam_max = max(float((self.w1 / a ** 2).max()), float((self.w2 / b ** 2).max()))
        return self.cfg.dt_safety / (lam_max * self._kmax2)

    def rk4(self, pair, k1, dt):
        u, v = pair
        k2 = self.rhs_only((u + 0.5 * dt * k1[0], v + 0.5 * dt * k1[1]))
        k3 = self.rhs_only((u + 0.5 * dt * k2[0], v + 0.5 * dt * k2[1]))
        k4 = self.rhs_only((u + dt * k3[0], v + dt * k3[1]))
        nu = u + (dt / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        nv = v + (dt / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        return (nu, nv)

    def phidot_stats(self, rhs):
        r1, r2 = rhs
        hi = float(r1.max() + r2.max())
        lo = float(r1.min() + r2.min())
        return hi, lo, max(hi, -lo)

    def sup_phi(self, pair):
        return split_sup_abs(pair[0], pair[1])

    def row_functionals(self, pair, rhs, chi):
        """(J, I, dJ/dt, critical residual) via separable factor means."""
        from .split import split_wedge_mean

        a, b = chi
        r1, r2 = rhs
        p0, q0, w1, w2, c = self.p0, self.q0, self.w1, self.w2, self.c
        t1 = split_wedge_mean(pair, (a, b), (w1, w2)) + split_wedge_mean(
            pair, (p0, q0), (w1, w2)
        )
        t2 = (
            split_wedge_mean(pair, (a, b), (a, b))
            + split_wedge_mean(pair, (a, b), (p0, q0))
            + split_wedge_mean(pair, (p0, q0), (p0, q0))
        )
        j = 4.0 * t1 - (c / 3.0) * 4.0 * t2
        i = (4.0 / 3.0) * t2
        # -int phidot^2 chi^2 with phidot = r1 + r2 and chi^2 density 2AB
        m = (
            float(np.mean(r1 * r1 * a)) * float(np.mean(b))
            + 2.0 * float(np.mean(r1 * a)) * float(np.mean(r2 * b))
            + float(np.mean(a)) * float(np.mean(r2 * r2 * b))
        )
        j_rate = -8.0 * m
        # critical residual |2 chi^omega - c chi^2| = 2|A(g - cB) + fB|
        crit = 2.0 * _split_pairwise_abs_max(a, w1, self.w2 - c * b, b)
        return j, i, j_rate, crit

    def copy_potential(self, pair):
        return self.wrap((pair[0].copy(), pair[1].copy()))


def _support_candidates(p, q):
    """Hull vertices of the 2-D cloud {(p_j, q_j)}: the only points that can
    maximise a linear functional.  Product presets generate collinear
    clouds, which reduce to segment endpoints."""
    pts = np.column_stack([p.ravel(), q.ravel()])
    d = pts - pts.mean(0)
    w, v = np.linalg.eigh(d.T @ d)
    if w[0] <= 1e-24 * max(w[1], 1e-300):
        t = d @ v[:, 1]
        return pts[[int(t.argmin()), int(t.argmax())]]
    try:
        from scipy.spatial import ConvexHull

        return pts[ConvexHull(pts).vertices]
    except Exception:
        return pts


def _split_pairwise_abs_max(u1, v1, p2, q2):
    """Exact sup over the product grid of |u1(z1) p2(z2) + v1(z1) q2(z2)|."""
    cand = _support_candidates(p2, q2)
    u = u1.ravel()[:, None]
    v = v1.ravel()[:, None]
    return float(np.abs(u * cand[:, 0][None, :] + v * cand[:, 1][None, :]).max())


def _make_kernel(chi0, omega_eps, c_eps, cfg, divisor=None):
    if isinstance(chi0, SplitForm):
        return _SplitKernel(chi0, omega_eps, c_eps, cfg, divisor)
    return _FullKernel(chi0, omega_eps, c_eps, cfg, divisor)


# --------------------------------------------------------------------------
# public operations


def flow_rhs(phi, chi0, omega_eps, c_eps):
    """Right-hand side c_eps - tr_{chi_phi} omega_eps on the full backend.

    Raises PositivityError (with the offending point) when chi_phi fails
    to be positive.
    """
    chi = chi0.realized.add(complex_hessian(phi))
    tr = trace_with(chi, omega_eps.realized)  # checks positivity
    return ScalarField(phi.grid, c_eps - tr.values)


@dataclass
class FlowState:
    """Evolving potential plus cached velocity and step bookkeeping."""

    kernel: object
    phi: object
    t: float
    phi_dot: object
    margin: float
    history: list = field(default_factory=list)
    last_dt: float = 0.0
    last_rejections: int = 0

    @property
    def residual(self):
        return self.kernel.residual_sup(self.kernel.unwrap(self.phi_dot))


def make_state(cfg, chi0, omega0, omega_hat, phi0=None, divisor=None):
    """Assemble a FlowState at t = 0, enforcing the run preconditions."""
    if cfg.eps == 0.0 and not cfg.allow_degenerate:
        raise ValueError(
            "eps = 0 runs the degenerate equation; set allow_degenerate=True "
            "to acknowledge"
        )
    omega_eps = epsilon_form(omega0, cfg.eps, omega_hat)
    x_cls, w_cls = _classes(chi0, omega_eps)
    margin = cone_condition(x_cls, w_cls)
    if margin <= 0.0:
        raise ConeConditionError(
            f"cone condition fails for eps={cfg.eps}: margin {margin:.6e} <= 0",
            margin=margin,
        )
    from .cohomology import c_constant

    c_eps = c_constant(x_cls, w_cls)
    kernel = _make_kernel(chi0, omega_eps, c_eps, cfg, divisor)
    if phi0 is None:
        phi0 = kernel.wrap(
            (np.zeros(kernel.grid.shape), np.zeros(kernel.grid.shape))
            if kernel.backend == "split"
            else np.zeros(kernel.grid.shape)
        )
    raw = kernel.unwrap(phi0)
    rhs, chi, margin0, finite = kernel.metrics(raw)
    if not finite or margin0 <= 0.0:
        raise PositivityError(
            f"initial potential leaves chi0 + dd^c(phi) non-positive "
            f"(margin {margin0:.3e})",
            margin=margin0,
        )
    state = FlowState(kernel, phi0, 0.0, kernel.wrap(rhs), margin0)
    state._chi = chi
    state._raw_rhs = rhs
    return state


def _classes(chi0, omega_eps):
    if isinstance(chi0, SplitForm):
        return (
            CohomologyClass.diag(chi0.a1, chi0.a2),
            CohomologyClass.diag(omega_eps.a1, omega_eps.a2),
        )
    return chi0.cls, omega_eps.cls


def adaptive_dt(state):
    """Explicit-stability step size from the current metric:
    dt = dt_safety / (lambda_max(chi^-1 omega chi^-1) * (pi N)^2)."""
    return state.kernel.adaptive_dt(state._chi)


def step(state, dt):
    """One RK4 step with positivity rejection; returns the advanced state.

    A rejected step halves dt and retries (up to 20 times before raising
    DegenerateStiffnessError); the accepted dt is in ``last_dt``.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    kernel = state.kernel
    raw = kernel.unwrap(state.phi)
    rhs = getattr(state, "_raw_rhs", None)
    if rhs is None:
        rhs, chi, _, _ = kernel.metrics(raw)
    rejections = 0
    while True:
        new = kernel.rk4(raw, rhs, dt)
        new_rhs, new_chi, new_margin, finite = kernel.metrics(new)
        if finite and new_margin > 0.0:
            break
        rejections += 1
        if rejections > _MAX_REJECTIONS:
            raise DegenerateStiffnessError(
                f"step rejected {rejections} times at t={state.t:.6g}; "
                f"margin {new_margin:.3e}"
            )
        dt *= 0.5
    out = FlowState(
        kernel,
        kernel.wrap(new),
        state.t + dt,
        kernel.wrap(new_rhs),
        new_margin,
        state.history,
        last_dt=dt,
        last_rejections=rejections,
    )
    out._chi = new_chi
    out._raw_rhs = new_rhs
    return out


def evolve(cfg, chi0, omega0, omega_hat, phi0=None, divisor=None):
    """Run the flow until sup|rhs| < stop_tolerance or t > max_time.

    Returns a Trajectory with per-snapshot history (J decreasing and I
    constant along conforming runs) and decimated field snapshots.
    """
    state = make_state(cfg, chi0, omega0, omega_hat, phi0, divisor)
    kernel = state.kernel
    raw = kernel.unwrap(state.phi)
    rhs, chi = state._raw_rhs, state._chi
    margin = state.margin

    rows = []
    snapshots = []
    t = 0.0
    steps = 0
    rejections = 0
    snap_mult = 1

    def record(force=False):
        nonlocal snap_mult
        hi, lo, sup_pd = kernel.phidot_stats(rhs)
        j, i, j_rate, crit = kernel.row_functionals(raw, rhs, chi)
        rows.append(
            HistoryRow(
                t, kernel.sup_phi(raw), sup_pd, j, i, margin,
                kernel.residual_sup(rhs), hi, lo, j_rate,
            )
        )
        idx = len(rows) - 1
        if force or idx % snap_mult == 0:
            snapshots.append((t, kernel.copy_potential(raw)))
            if len(snapshots) > cfg.max_field_snapshots:
                del snapshots[1::2]
                snap_mult *= 2

    record()
    sup_phidot0 = rows[0].sup_phidot
    stop_reason = "max_time"
    # fixed-dt runs take a whole number of steps so that runs with dt and
    # dt/2 land on identical times (integrator-order checks)
    n_fixed = (
        max(1, round(cfg.max_time / cfg.fixed_dt)) if cfg.fixed_dt is not None else None
    )
    while True:
        residual = kernel.residual_sup(rhs)
        if residual < cfg.stop_tolerance:
            stop_reason = "converged"
            break
        if n_fixed is not None:
            if steps >= n_fixed:
                break
            dt = cfg.fixed_dt
        else:
            if t >= cfg.max_time:
                break
            dt = min(kernel.adaptive_dt(chi), cfg.max_time - t)
        halvings = 0
        while True:
            new = kernel.rk4(raw, rhs, dt)
            new_rhs, new_chi, new_margin, finite = kernel.metrics(new)
            if finite and new_margin > 0.0:
                break
            halvings += 1
            rejections += 1
            if halvings > _MAX_REJECTIONS:
                raise DegenerateStiffnessError(
                    f"step rejected {halvings} times at t={t:.6g}; "
                    f"margin {new_margin:.3e}"
                )
            dt *= 0.5
        raw, rhs, chi, margin = new, new_rhs, new_chi, new_margin
        t += dt
        steps += 1
        if steps % cfg.snapshot_stride == 0:
            record()

    if not rows or rows[-1].t < t:
        record(force=True)
    final = kernel.copy_potential(raw)
    return Trajectory(
        kernel.backend,
        cfg.eps,
        kernel.c,
        rows,
        snapshots,
        final,
        kernel.residual_sup(rhs),
        stop_reason,
        steps,
        rejections,
        sup_phidot0,
        chi0_form=chi0,
    )


# --------------------------------------------------------------------------
# epsilon family


@dataclass
class FamilyMember:
    eps: float
    trajectory: Optional[Trajectory]
    error: str = ""

    @property
    def ok(self):
        return self.trajectory is not None


@dataclass
class FamilyReport:
    """Aggregated record of an epsilon sweep."""

    members: list
    sup_phi_by_eps: dict
    sup_phidot_by_eps: dict
    consecutive_diffs: list  # (eps_hi, eps_lo, sup_full, sup_off_divisor)
    failures: dict

    @property
    def ok(self):
        return not self.failures

    def max_sup_phi(self):
        return max(self.sup_phi_by_eps.values()) if self.sup_phi_by_eps else math.nan

    def max_sup_phidot(self):
        return max(self.sup_phidot_by_eps.values()) if self.sup_phidot_by_eps else math.nan

    def to_dict(self):
        return {
            "eps": [m.eps for m in self.members],
            "sup_phi_by_eps": {str(k): v for k, v in self.sup_phi_by_eps.items()},
            "sup_phidot_by_eps": {str(k): v for k, v in self.sup_phidot_by_eps.items()},
            "consecutive_diffs": [
                {"eps_hi": a, "eps_lo": b, "sup_full_grid": c, "sup_off_divisor": d}
                for (a, b, c, d) in self.consecutive_diffs
            ],
            "failures": dict(self.failures),
            "final_residuals": {
                str(m.eps): (m.trajectory.final_residual if m.ok else None)
                for m in self.members
            },
        }


def _family_worker(args):
    cfg, chi0, omega0, omega_hat, phi0, divisor = args
    try:
        return evolve(cfg, chi0, omega0, omega_hat, phi0, divisor), ""
    except Exception as err:  # recorded by the caller: partial report
        return None, f"{type(err).__name__}: {err}"


def epsilon_family(cfg, eps_list, chi0, omega0, omega_hat, phi0=None,
                   divisor=None, workers=1):
    """Independent runs for a descending positive epsilon ladder.

    Limits are compared after mean normalization (runs share phi0 but carry
    their own conserved-I gauge); differences are reported on the full grid
    and on the off-divisor region {s2_proxy >= 0.1}.  A failing member is
    recorded and the report stays partial rather than raising.
    """
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0.0 for e in eps_list):
        raise ValueError("epsilon_family needs strictly positive epsilons")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("epsilon list must be strictly descending")

    jobs = [
        (replace(cfg, eps=e), chi0, omega0, omega_hat, phi0, divisor)
        for e in eps_list
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_family_worker, jobs))
    else:
        results = [_family_worker(job) for job in jobs]
    members = [
        FamilyMember(e, traj, err) for e, (traj, err) in zip(eps_list, results)
    ]

    sup_phi = {m.eps: m.trajectory.sup_phi_over_run() for m in members if m.ok}
    sup_phidot = {m.eps: m.trajectory.sup_phidot_over_run() for m in members if m.ok}
    failures = {m.eps: m.error for m in members if not m.ok}

    diffs = []
    ok_members = [m for m in members if m.ok]
    for hi, lo in zip(ok_members, ok_members[1:]):
        a = hi.trajectory.final_potential().mean_normalized()
        b = lo.trajectory.final_potential().mean_normalized()
        delta = np.abs(a.values - b.values)
        full = float(delta.max())
        off = full
        if divisor is not None:
            mask = divisor.s2_proxy(a.grid).values >= 0.1
            off = float(delta[mask].max())
        diffs.append((hi.eps, lo.eps, full, off))

    return FamilyReport(members, sup_phi, sup_phidot, diffs, failures)


# --------------------------------------------------------------------------
# maximum-principle monitors


@dataclass(frozen=True)
class MonitorVerdict:
    ok: bool
    failures: tuple

    def __bool__(self):
        return self.ok


def max_principle_monitor(traj, tol=1e-8):
    """sup phi_dot must not increase, inf phi_dot must not decrease, and the
    trace of omega_eps in chi never exceeds c_eps + sup|phi_dot(0)|."""
    rows = traj.rows
    if len(rows) < 3:
        raise ValueError("max_principle_monitor needs at least 3 snapshots")
    failures = []
    for prev, cur in zip(rows, rows[1:]):
        if cur.max_phidot > prev.max_phidot + tol:
            failures.append(
                (cur.t, "sup phi_dot increased", cur.max_phidot - prev.max_phidot)
            )
        if cur.min_phidot < prev.min_phidot - tol:
            failures.append(
                (cur.t, "inf phi_dot decreased", prev.min_phidot - cur.min_phidot)
            )
    bound = traj.c_eps + traj.sup_phidot0 + tol
    for row in rows:
        trace_sup = traj.c_eps - row.min_phidot  # tr = c - phi_dot pointwise
        if trace_sup > bound:
            failures.append((row.t, "trace bound exceeded", trace_sup - bound))
    return MonitorVerdict(not failures, tuple(failures))
