"""Estimate monitors: the a priori bounds of the theory turned into
assertions on computed runs.

Everything here analyses immutable snapshots/reports; nothing mutates a
trajectory.  All divisor-adjacent quantities use the s2 proxy for |s|^2_H
(the exact Hermitian bundle metric is never constructed), so fitted
constants are proxy-dependent while exponents are comparable.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FitError
from .torus import ScalarField

OFF_DIVISOR_THRESHOLD = 0.1
FIT_BAND = (1e-3, 0.5)


@dataclass(frozen=True)
class QMonitorConfig:
    """Constants of the divisor barrier quantity.

    The product A*delta must dominate twice the divisor exponent beta
    (checked against the active divisor model); C0_shift, when not given,
    is chosen at t = 0 so that phi_tilde + C0_shift >= 1 with margin.
    """

    a: float = 10.0
    delta: float = 0.1
    c0_shift: float = None

    def __post_init__(self):
        if self.a <= 1.0:
            raise ValueError("QMonitorConfig: A must exceed 1")
        if self.delta <= 0.0:
            raise ValueError("QMonitorConfig: delta must be positive")

    def validate_against(self, div):
        if self.a * self.delta < 2.0 * div.beta - 1e-12:
            raise ConfigError(
                f"QMonitorConfig: A*delta = {self.a * self.delta:.3g} violates "
                f"A*delta >= 2*beta = {2 * div.beta:.3g}"
            )


@dataclass
class EstimateReport:
    sup_phi_by_eps: dict
    sup_phidot_by_eps: dict
    trace_bound_ok: bool
    gamma_fit: float = None
    q_max_series: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    ok: bool = True
    failures: list = field(default_factory=list)

    def to_dict(self):
        return {
            "sup_phi_by_eps": {str(k): v for k, v in self.sup_phi_by_eps.items()},
            "sup_phidot_by_eps": {str(k): v for k, v in self.sup_phidot_by_eps.items()},
            "trace_bound_ok": self.trace_bound_ok,
            "gamma_fit": self.gamma_fit,
            "q_max_series": list(self.q_max_series),
            "notes": list(self.notes),
            "ok": self.ok,
            "failures": list(self.failures),
        }


def uniformity_report(family, budget_phi=None, budget_phidot=None, trend_ratio=1.1):
    """Uniform-in-epsilon bounds at desk scale.

    Asserts the run-wide sups of |phi| and |phi_dot| stay within the
    configured budgets for every member, and that the sups of the
    gauge-normalized limits do not diverge as epsilon decreases (ratio of
    successive sups <= ``trend_ratio``).  The trend uses mean-normalized
    final potentials: the raw fields carry a conserved-I gauge constant
    that is an epsilon-dependent offset, not a size statement.
    """
    members = [m for m in family.members if m.ok]
    if not members:
        raise ValueError("uniformity_report needs at least one successful member")
    report = EstimateReport(
        dict(family.sup_phi_by_eps), dict(family.sup_phidot_by_eps), True
    )
    report.notes.append("s2 proxy in place of |s|^2_H: constants are proxy-scaled")
    for m in members:
        if budget_phi is not None and family.sup_phi_by_eps[m.eps] > budget_phi:
            report.failures.append(
                f"eps={m.eps}: sup|phi| {family.sup_phi_by_eps[m.eps]:.6g} "
                f"exceeds budget {budget_phi:.6g}"
            )
        if budget_phidot is not None and family.sup_phidot_by_eps[m.eps] > budget_phidot:
            report.failures.append(
                f"eps={m.eps}: sup|phi_dot| {family.sup_phidot_by_eps[m.eps]:.6g} "
                f"exceeds budget {budget_phidot:.6g}"
            )
    if len(members) >= 2:
        sups = [m.trajectory.final_potential().mean_normalized().sup() for m in members]
        for (hi, lo, s_hi, s_lo) in zip(members, members[1:], sups, sups[1:]):
            if s_lo > trend_ratio * s_hi:
                report.failures.append(
                    f"divergent trend between eps={hi.eps} and eps={lo.eps}: "
                    f"sup ratio {s_lo / s_hi:.4f} > {trend_ratio}"
                )
    report.ok = not report.failures
    return report


def trace_bound_check(traj, tol=1e-8):
    """sup tr_{chi} omega_eps <= c_eps + sup|phi_dot(0)| + tol at every
    snapshot (the flow identity tr = c - phi_dot turns the lower metric
    bound into this trace form)."""
    failures = []
    bound = traj.c_eps + traj.sup_phidot0 + tol
    for row in traj.rows:
        trace_sup = traj.c_eps - row.min_phidot
        if trace_sup > bound:
            failures.append((row.t, trace_sup, bound))
    from .flow import MonitorVerdict

    return MonitorVerdict(not failures, tuple(failures))


def singular_profile_fit(u, s2, band=FIT_BAND, min_points=8):
    """Least-squares exponent of u against the divisor distance proxy.

    Fits log u = log C + gamma * (-log s2) over the band of s2 values and
    returns (gamma_hat, C) with gamma_hat clamped at 0; a bounded u gives
    gamma ~ 0, a u ~ s2^(-gamma) profile returns gamma.
    """
    u = np.asarray(u, dtype=float).ravel()
    s2 = np.asarray(s2, dtype=float).ravel()
    sel = (s2 >= band[0]) & (s2 <= band[1]) & (u > 0.0)
    if sel.sum() < min_points:
        raise FitError(
            f"singular_profile_fit: only {int(sel.sum())} grid points have "
            f"s2 in [{band[0]:g}, {band[1]:g}]; need {min_points}"
        )
    x = -np.log(s2[sel])
    y = np.log(u[sel])
    slope, intercept = np.polyfit(x, y, 1)
    return max(float(slope), 0.0), float(np.exp(intercept))


def q_values(phi, u, s2, cfg, mask_tol=1e-12):
    """The barrier quantity Q = log u - A*phi_tilde + 1/(phi_tilde + C0)
    with phi_tilde = phi - delta log s2, masked on the divisor locus.

    Returns (q_max, c0_shift_used).  Raises ConfigError when the locus mask
    eats more than 1% of the grid or the shift cannot keep the reciprocal
    term in [0, 1].
    """
    phi = np.asarray(phi, dtype=float)
    u = np.asarray(u, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    off = s2 >= mask_tol
    if off.sum() < 0.99 * s2.size:
        raise ConfigError(
            f"q_monitor: locus mask covers {(1 - off.sum() / s2.size) * 100:.2f}% "
            "of the grid (> 1%); shift the grid offsets"
        )
    phit = phi[off] - cfg.delta * np.log(s2[off])
    c0 = cfg.c0_shift
    if c0 is None:
        c0 = max(1.5 - float(phit.min()), 1.5)
    if float(phit.min()) + c0 < 1.0:
        raise ConfigError(
            f"q_monitor: phi_tilde + C0_shift dips to {float(phit.min()) + c0:.3g} < 1"
        )
    q = np.log(u[off]) - cfg.a * phit + 1.0 / (phit + c0)
    return float(q.max()), c0


def q_monitor(traj, div, cfg, slack=1.0):
    """Evaluate Q on every retained snapshot of a run and check the
    boundedness assertion q_max(t) <= q_max(0) + slack.

    Works on both backends; the divisor may be None for smooth runs, in
    which case the s2 proxy is replaced by the constant 1 surrogate.
    Returns (series, verdict).
    """
    if div is not None:
        cfg.validate_against(div)
    from .flow import MonitorVerdict

    series = []
    c0_used = cfg.c0_shift
    for t, snap in traj.snapshots:
        phi4 = snap.assemble() if traj.backend == "split" else snap
        grid = phi4.grid
        if div is not None:
            s2 = div.s2_proxy(grid).values
        else:
            s2 = np.ones(grid.shape)
        u = _trace_field(traj, snap, grid)
        q, c0_used = q_values(
            phi4.values, u, s2, QMonitorConfig(cfg.a, cfg.delta, c0_used)
        )
        series.append((t, q))
    q0 = series[0][1]
    failures = tuple(
        (t, q, q0 + slack) for t, q in series if q > q0 + slack
    )
    return series, MonitorVerdict(not failures, failures)


def _trace_field(traj, snap, grid):
    """u = tr_Id chi_phi on the snapshot, per backend."""
    if traj.backend == "split":
        from .split import factor_hessian

        fgrid = snap.grid
        a0, b0 = traj.chi0_form.profiles()
        a = a0 + factor_hessian(fgrid, snap.phi1)
        b = b0 + factor_hessian(fgrid, snap.phi2)
        return np.broadcast_to(
            a[:, :, None, None] + b[None, None, :, :], grid.shape
        )
    from .torus import complex_hessian

    chi = traj.chi0_form.realized.add(complex_hessian(snap))
    return chi.h11 + chi.h22


def compare_up_to_constant(a, b, mask=None):
    """sup over the mask of |a - b - mean_mask(a - b)|: the distance between
    potentials modulo the additive-constant gauge (a pseudometric)."""
    av = a.values if isinstance(a, ScalarField) else np.asarray(a)
    bv = b.values if isinstance(b, ScalarField) else np.asarray(b)
    diff = av - bv
    if mask is not None:
        if not np.any(mask):
            raise ValueError("compare_up_to_constant: empty mask")
        diff = diff[mask]
    return float(np.abs(diff - diff.mean()).max())
