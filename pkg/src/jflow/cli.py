"""Command-line driver: config parsing, experiment orchestration,
persistence and report emission.

Configs are flat ``key=value`` pairs with dotted sections, separated by
commas or newlines (``preset=smooth_split, N=32, flow.max_time=2``); lists
use brackets.  Every command writes its artifacts atomically under the
output directory and exits 0 iff all asserted verdicts pass.
"""

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field, fields as dc_fields

import numpy as np

from . import io as jio
from .cohomology import (
    ClosedForm,
    CohomologyClass,
    cone_condition,
    c_constant,
    verify_omega0_conditions,
)
from .diagnostics import (
    QMonitorConfig,
    q_monitor,
    singular_profile_fit,
    trace_bound_check,
    uniformity_report,
)
from .errors import ConfigError, JFlowError
from .flow import FlowConfig, epsilon_family, evolve, max_principle_monitor
from .functionals import evaluate_suite
from .ma import MASolverConfig, build_alpha, solve_ma, solve_ma_continuation, solve_ma_split
from .presets import (
    FAMILY_BUDGETS,
    PRESET_DEFAULTS,
    PRESET_NAMES,
    PRESET_QMONITOR,
    Problem,
    build_preset,
    random_bandlimited_potential,
)
from .torus import Grid, ScalarField

SCHEMA_VERSION = 1

COMMANDS = ("check-classes", "run", "family", "solve-ma", "functionals", "report")


# --------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    version: int = SCHEMA_VERSION
    preset: str = ""
    n: int = 0  # 0: preset default
    offsets: list = field(default_factory=list)
    backend: str = ""  # "": preset default
    divisor: bool = None
    eps: list = field(default_factory=list)
    out: str = "out"
    seed: int = 0
    workers: int = 1
    flow: dict = field(default_factory=dict)
    ma: dict = field(default_factory=dict)
    q: dict = field(default_factory=dict)
    budget: dict = field(default_factory=dict)
    chi0: dict = field(default_factory=dict)
    omega0: dict = field(default_factory=dict)
    omegahat: dict = field(default_factory=dict)
    phi0: dict = field(default_factory=dict)

    def canonical(self):
        return {f.name: getattr(self, f.name) for f in dc_fields(self)}

    def config_hash(self):
        text = json.dumps(self.canonical(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()


_SECTION_KEYS = {
    "flow": {"dt_safety", "stop_tolerance", "max_time", "snapshot_stride",
             "allow_degenerate", "fixed_dt"},
    "ma": {"newton_tol", "max_newton", "linear_tol", "damping"},
    "q": {"a", "delta", "c0_shift"},
    "budget": {"sup_phi", "sup_phidot"},
    "chi0": {"class", "modes"},
    "omega0": {"class", "modes"},
    "omegahat": {"class", "modes"},
    "phi0": {"modes", "random"},
}
_TOP_KEYS = {"version", "preset", "n", "offsets", "backend", "divisor", "eps",
             "out", "seed", "workers"}


def _split_items(text):
    """Split on commas/newlines outside brackets."""
    items, depth, cur = [], 0, []
    for ch in text:
        if ch in "[(":
            depth += 1
        elif ch in "])":
            depth -= 1
        if ch in ",\n" and depth == 0:
            item = "".join(cur).strip()
            if item:
                items.append(item)
            cur = []
        else:
            cur.append(ch)
    tail = "".join(cur).strip()
    if tail:
        items.append(tail)
    return items


def _parse_value(text):
    text = text.strip()
    if text.startswith("["):
        inner = text[1:-1] if text.endswith("]") else text[1:]
        return [_parse_value(v) for v in _split_items(inner)]
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null"):
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_config(text):
    """Parse and validate; raises ConfigError listing every problem."""
    cfg = RunConfig()
    problems = []
    for item in _split_items(text):
        if item.startswith("#"):
            continue
        if "=" not in item:
            problems.append(f"not a key=value pair: {item!r}")
            continue
        key, _, raw = item.partition("=")
        key = key.strip()
        value = _parse_value(raw)
        lower = key.lower()
        if lower == "n":
            cfg.n = value
        elif "." in lower:
            section, _, sub = lower.partition(".")
            if section not in _SECTION_KEYS:
                problems.append(f"unknown section: {key!r}")
            elif sub not in _SECTION_KEYS[section]:
                problems.append(f"unknown key {key!r} in section {section!r}")
            else:
                getattr(cfg, section)[sub] = value
        elif lower in _TOP_KEYS:
            if lower == "eps" and not isinstance(value, list):
                value = [value]
            setattr(cfg, lower, value)
        else:
            problems.append(f"unknown key: {key!r}")
    problems.extend(validate_config(cfg))
    if problems:
        raise ConfigError(problems)
    _fill_defaults(cfg)
    return cfg


def validate_config(cfg):
    problems = []
    if cfg.version != SCHEMA_VERSION:
        problems.append(
            f"version: schema version {cfg.version} != supported {SCHEMA_VERSION}"
        )
    if cfg.preset and cfg.preset not in PRESET_NAMES:
        problems.append(f"preset: unknown preset {cfg.preset!r}")
    if not cfg.preset and "class" not in cfg.chi0:
        problems.append("either preset or explicit chi0/omega0/omegahat specs required")
    if cfg.n:
        if not isinstance(cfg.n, int) or cfg.n < 4 or cfg.n % 2:
            problems.append(f"N must be even and >= 4, got {cfg.n}")
    if cfg.backend and cfg.backend not in ("full", "split"):
        problems.append(f"backend: must be 'full' or 'split', got {cfg.backend!r}")
    for i, e in enumerate(cfg.eps):
        if not isinstance(e, (int, float)) or e < 0:
            problems.append(f"eps[{i}]: entries must be nonnegative reals, got {e!r}")
    if cfg.offsets and len(cfg.offsets) not in (2, 4):
        problems.append("offsets: give 2 (split) or 4 (full) entries")
    ds = cfg.flow.get("dt_safety")
    if ds is not None and not (0 < ds < 1):
        problems.append(f"flow.dt_safety: must lie in (0,1), got {ds}")
    for name in ("stop_tolerance", "max_time"):
        v = cfg.flow.get(name)
        if v is not None and v <= 0:
            problems.append(f"flow.{name}: must be positive, got {v}")
    for name in ("newton_tol", "linear_tol"):
        v = cfg.ma.get(name)
        if v is not None and v <= 0:
            problems.append(f"ma.{name}: must be positive, got {v}")
    if cfg.workers < 1:
        problems.append(f"workers: must be >= 1, got {cfg.workers}")
    return problems


def _fill_defaults(cfg):
    if cfg.preset:
        d = PRESET_DEFAULTS[cfg.preset]
        cfg.n = cfg.n or d["n"]
        cfg.backend = cfg.backend or d["backend"]
        if cfg.divisor is None:
            cfg.divisor = d["divisor"]
        if not cfg.eps:
            cfg.eps = list(d["eps"])
        if cfg.preset in FAMILY_BUDGETS:
            for key, val in FAMILY_BUDGETS[cfg.preset].items():
                cfg.budget.setdefault(key, val)
        if cfg.divisor:
            cfg.q.setdefault("a", PRESET_QMONITOR["A"])
            cfg.q.setdefault("delta", PRESET_QMONITOR["delta"])
        # direct eps = 0 runs on Kahler presets: acknowledged by default
        if cfg.eps == [0.0] and cfg.preset in ("identity", "smooth_split"):
            cfg.flow.setdefault("allow_degenerate", True)
    else:
        cfg.backend = cfg.backend or "full"
        cfg.n = cfg.n or 8
        if cfg.divisor is None:
            cfg.divisor = False
        if not cfg.eps:
            cfg.eps = [0.0]
            cfg.flow.setdefault("allow_degenerate", True)


def build_problem(cfg):
    """Problem instance from a validated config."""
    if cfg.preset:
        problem = build_preset(cfg.preset, n=cfg.n, offsets=cfg.offsets or None)
        if not cfg.divisor and problem.divisor is not None:
            problem = Problem(problem.name, problem.backend, problem.chi0,
                              problem.omega0, problem.omega_hat, None)
        return problem
    grid = Grid(cfg.n, tuple(cfg.offsets) if cfg.offsets else (0.0,) * 4)
    forms = {}
    for name, spec in (("chi0", cfg.chi0), ("omega0", cfg.omega0),
                       ("omegahat", cfg.omegahat)):
        cls_spec = spec.get("class", [1.0, 1.0, 0.0, 0.0])
        cls = CohomologyClass(cls_spec[0], cls_spec[1],
                              complex(cls_spec[2], cls_spec[3]))
        forms[name] = ClosedForm(cls, _modes_field(grid, spec.get("modes", [])))
    return Problem("explicit", "full", forms["chi0"], forms["omega0"],
                   forms["omegahat"], None)


def _modes_field(grid, modes):
    """Sum of cosine modes [amplitude, k_x1, k_y1, k_x2, k_y2, phase]."""
    v = np.zeros(grid.shape)
    x = grid.coords()
    for mode in modes:
        amp, k1, k2, k3, k4 = mode[:5]
        phase = mode[5] if len(mode) > 5 else 0.0
        arg = 2 * np.pi * (k1 * x[0] + k2 * x[1] + k3 * x[2] + k4 * x[3])
        v = v + amp * np.cos(arg - 2 * np.pi * phase)
    return ScalarField(grid, v)


def _flow_config(cfg, eps):
    kw = {k: v for k, v in cfg.flow.items() if v is not None}
    return FlowConfig(eps=eps, **kw)


def _ma_config(cfg):
    return MASolverConfig(**{k: v for k, v in cfg.ma.items() if v is not None})


def _initial_potential(cfg, problem):
    if cfg.phi0.get("random"):
        rng = np.random.default_rng(cfg.seed)
        return random_bandlimited_potential(problem, rng)
    modes = cfg.phi0.get("modes")
    if not modes:
        return None
    if problem.backend == "split":
        raise ConfigError(["phi0.modes: explicit modes need the full backend"])
    return _modes_field(problem.grid, modes)


# --------------------------------------------------------------------------
# records


@dataclass
class RunRecord:
    command: str
    config_hash: str
    started: str
    finished: str = ""
    preset: str = ""
    n: int = 0
    eps: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)
    scalars: dict = field(default_factory=dict)

    @property
    def ok(self):
        return all(self.verdicts.values()) and not self.failures

    def to_dict(self):
        return {
            "command": self.command,
            "config_hash": self.config_hash,
            "started": self.started,
            "finished": self.finished,
            "preset": self.preset,
            "n": self.n,
            "eps": self.eps,
            "verdicts": self.verdicts,
            "failures": self.failures,
            "artifacts": self.artifacts,
            "scalars": self.scalars,
        }


def write_record(path, record):
    jio.write_json(path, record.to_dict())


def read_record(path):
    try:
        payload = jio.read_json(path)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError([f"record {path}: unreadable ({err})"])
    required = {"command", "config_hash", "started", "verdicts", "artifacts"}
    missing = required - set(payload)
    if missing:
        raise ConfigError([f"record {path}: missing fields {sorted(missing)}"])
    known = {f.name for f in dc_fields(RunRecord)}
    return RunRecord(**{k: v for k, v in payload.items() if k in known})


def _timestamp():
    return time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())


# --------------------------------------------------------------------------
# command implementations


def _new_record(cfg, command):
    return RunRecord(
        command=command,
        config_hash=cfg.config_hash(),
        started=_timestamp(),
        preset=cfg.preset or "explicit",
        n=cfg.n,
        eps=list(cfg.eps),
    )


def _cmd_check_classes(cfg, record, out):
    problem = build_problem(cfg)
    x = problem.chi0_class()
    per_eps = {}
    all_pass = True
    for eps in cfg.eps:
        w = problem.omega_eps_class(eps)
        margin = cone_condition(x, w)
        per_eps[str(eps)] = {"c": c_constant(x, w), "cone_margin": margin}
        all_pass &= margin > 0
    record.verdicts["cone_condition"] = bool(all_pass)
    payload = {"per_eps": per_eps}
    if problem.divisor is not None:
        full = problem.to_full()
        cert = verify_omega0_conditions(full.omega0, full.divisor, full.omega_hat)
        record.verdicts["omega0_conditions"] = bool(cert.ok)
        payload["omega0_certificate"] = {
            "ok": cert.ok, "C0": cert.c0, "beta": cert.beta, "rho": cert.rho,
            "failure": cert.failure, "point": list(cert.point),
        }
    report_path = os.path.join(out, "report.json")
    jio.write_json(report_path, payload)
    record.artifacts.append("report.json")
    record.scalars.update(
        {f"c_eps[{k}]": v["c"] for k, v in per_eps.items()}
    )
    return record


def _run_monitors(cfg, problem, traj, record, label=""):
    tag = f"{label}:" if label else ""
    mp = max_principle_monitor(traj) if len(traj.rows) >= 3 else None
    if mp is not None:
        record.verdicts[f"{tag}max_principle"] = mp.ok
        if not mp.ok:
            record.failures.extend(f"{tag}{f}" for f in mp.failures)
    tb = trace_bound_check(traj)
    record.verdicts[f"{tag}trace_bound"] = tb.ok
    if problem.divisor is not None:
        qcfg = QMonitorConfig(
            a=cfg.q.get("a", PRESET_QMONITOR["A"]),
            delta=cfg.q.get("delta", PRESET_QMONITOR["delta"]),
            c0_shift=cfg.q.get("c0_shift"),
        )
        series, verdict = q_monitor(traj, problem.divisor, qcfg)
        record.verdicts[f"{tag}q_monitor"] = verdict.ok
        record.scalars[f"{tag}q_max_final"] = series[-1][1]
    js = [r.j for r in traj.rows]
    record.verdicts[f"{tag}j_nonincreasing"] = all(
        b <= a + 1e-12 for a, b in zip(js, js[1:])
    )


def _cmd_run(cfg, record, out):
    problem = build_problem(cfg)
    eps = cfg.eps[0]
    traj = evolve(
        _flow_config(cfg, eps),
        problem.chi0, problem.omega0, problem.omega_hat,
        phi0=_initial_potential(cfg, problem),
        divisor=problem.divisor,
    )
    traj.write_csv(os.path.join(out, "series.csv"))
    record.artifacts.append("series.csv")
    final = traj.final_potential()
    jio.write_scalar(os.path.join(out, "fields", "final.jflw"), final)
    record.artifacts.append("fields/final.jflw")
    record.scalars.update(
        {"final_residual": traj.final_residual, "steps": traj.steps,
         "t_final": traj.rows[-1].t, "c_eps": traj.c_eps,
         "J_final": traj.rows[-1].j}
    )
    record.verdicts["completed"] = True
    _run_monitors(cfg, problem, traj, record)
    return record


def _cmd_family(cfg, record, out):
    problem = build_problem(cfg)
    eps_list = [e for e in cfg.eps if e > 0]
    if not eps_list:
        raise ConfigError(["family: needs positive eps entries"])
    report = epsilon_family(
        _flow_config(cfg, eps_list[0]), eps_list,
        problem.chi0, problem.omega0, problem.omega_hat,
        phi0=_initial_potential(cfg, problem),
        divisor=problem.divisor,
        workers=cfg.workers,
    )
    record.verdicts["all_members_ran"] = report.ok
    record.failures.extend(f"eps={k}: {v}" for k, v in report.failures.items())
    est = uniformity_report(
        report,
        budget_phi=cfg.budget.get("sup_phi"),
        budget_phidot=cfg.budget.get("sup_phidot"),
    )
    record.verdicts["uniform_bounds"] = est.ok
    record.failures.extend(est.failures)
    for m in report.members:
        if m.ok:
            m.trajectory.write_csv(os.path.join(out, f"series-eps{m.eps:g}.csv"))
            record.artifacts.append(f"series-eps{m.eps:g}.csv")
            jio.write_scalar(
                os.path.join(out, "fields", f"final-eps{m.eps:g}.jflw"),
                m.trajectory.final_potential(),
            )
            record.artifacts.append(f"fields/final-eps{m.eps:g}.jflw")
            _run_monitors(cfg, problem, m.trajectory, record, label=f"eps={m.eps:g}")
    payload = {"family": report.to_dict(), "uniformity": est.to_dict()}
    jio.write_json(os.path.join(out, "report.json"), payload)
    record.artifacts.append("report.json")
    record.scalars["max_sup_phi"] = report.max_sup_phi()
    record.scalars["max_sup_phidot"] = report.max_sup_phidot()
    return record


def _cmd_solve_ma(cfg, record, out):
    problem = build_problem(cfg)
    macfg = _ma_config(cfg)
    eps_list = cfg.eps
    if len(eps_list) > 1:
        sols = solve_ma_continuation(
            problem.chi0, problem.omega0, problem.omega_hat, eps_list, macfg
        )
    else:
        eps = eps_list[0]
        w = problem.omega_eps(eps)
        c = c_constant(problem.chi0_class(), problem.omega_eps_class(eps))
        alpha = build_alpha(problem.chi0, w, c)
        if problem.backend == "split":
            sols = [(eps, solve_ma_split(alpha, c, w, macfg))]
        else:
            sols = [(eps, solve_ma(alpha, c, w, macfg))]
    table = []
    converged = True
    for eps, sol in sols:
        for k, r in enumerate(sol.residuals):
            table.append((eps, k, r))
        converged &= sol.residual() <= macfg.newton_tol
        psi = sol.psi.assemble() if problem.backend == "split" else sol.psi
        jio.write_scalar(os.path.join(out, "fields", f"psi-eps{eps:g}.jflw"), psi)
        record.artifacts.append(f"fields/psi-eps{eps:g}.jflw")
        record.scalars[f"newton_iterations[{eps:g}]"] = sol.newton_iterations
        record.scalars[f"newton_residual[{eps:g}]"] = sol.residual()
    jio.write_series_csv(
        os.path.join(out, "newton.csv"), ("eps", "iteration", "residual"), table
    )
    record.artifacts.append("newton.csv")
    record.verdicts["newton_converged"] = bool(converged)
    return record


def _cmd_functionals(cfg, record, out):
    problem = build_problem(cfg).to_full()
    snap_path = os.path.join(out, "fields", "final.jflw")
    if os.path.exists(snap_path):
        phi = jio.read_field(snap_path)
        source = "fields/final.jflw"
    else:
        phi = ScalarField.zeros(problem.grid)
        source = "zero potential"
    eps = cfg.eps[0]
    w = problem.omega_eps(eps)
    c = c_constant(problem.chi0_class(), problem.omega_eps_class(eps))
    rep = evaluate_suite(phi, problem.chi0, w, c)
    payload = rep.to_dict()
    payload["source"] = source
    payload["eps"] = eps
    if problem.divisor is not None:
        from .diagnostics import FIT_BAND
        from .torus import complex_hessian

        chi = problem.chi0.realized.add(complex_hessian(phi))
        u = chi.h11 + chi.h22
        s2 = problem.divisor.s2_proxy(problem.grid).values
        try:
            gamma, c_fit = singular_profile_fit(u, s2)
            payload["gamma_fit"] = gamma
            payload["gamma_fit_C"] = c_fit
        except JFlowError as err:
            payload["gamma_fit_error"] = str(err)
        sel = (s2 >= FIT_BAND[0]) & (s2 <= FIT_BAND[1]) & (u > 0)
        scatter = np.column_stack([-np.log(s2[sel]), np.log(u[sel])])
        jio.write_series_csv(
            os.path.join(out, "fit_scatter.csv"), ("neg_log_s2", "log_u"), scatter
        )
        record.artifacts.append("fit_scatter.csv")
    jio.write_json(os.path.join(out, "report.json"), payload)
    record.artifacts.append("report.json")
    record.verdicts["evaluated"] = True
    record.scalars.update({k: payload[k] for k in ("J", "I", "E") if payload.get(k) is not None})
    return record


def _cmd_report(cfg, record, out):
    path = os.path.join(out, "run.json")
    stored = read_record(path)
    warnings = []
    for rel in stored.artifacts:
        if not os.path.exists(os.path.join(out, rel)):
            warnings.append(f"integrity: missing artifact {rel}")
    if stored.config_hash != cfg.config_hash():
        warnings.append(
            "stale record: config hash mismatch "
            f"({stored.config_hash[:12]} != {cfg.config_hash()[:12]})"
        )
    lines = [
        f"record: {stored.command} started {stored.started}",
        f"preset {stored.preset} N={stored.n} eps={stored.eps}",
    ]
    for k, v in stored.verdicts.items():
        lines.append(f"  verdict {k}: {'PASS' if v else 'FAIL'}")
    for k, v in stored.scalars.items():
        lines.append(f"  {k} = {v:.6g}" if isinstance(v, float) else f"  {k} = {v}")
    for w in warnings:
        lines.append(f"  WARNING {w}")
    print("\n".join(lines))
    record.verdicts["stored_verdicts_pass"] = stored.ok
    record.verdicts["integrity"] = not any(w.startswith("integrity") for w in warnings)
    record.failures.extend(warnings)
    return record


_IMPLS = {
    "check-classes": _cmd_check_classes,
    "run": _cmd_run,
    "family": _cmd_family,
    "solve-ma": _cmd_solve_ma,
    "functionals": _cmd_functionals,
    "report": _cmd_report,
}


def execute(cfg, command):
    """Run one command; returns (RunRecord, exit_code)."""
    if command not in COMMANDS:
        raise ConfigError([f"unknown command {command!r}; choose from {COMMANDS}"])
    out = cfg.out
    os.makedirs(out, exist_ok=True)
    record = _new_record(cfg, command)
    try:
        record = _IMPLS[command](cfg, record, out)
    except JFlowError as err:
        record.failures.append(f"{type(err).__name__}: {err}")
        record.verdicts["completed"] = False
    record.finished = _timestamp()
    if command != "report":
        write_record(os.path.join(out, "run.json"), record)
    return record, (0 if record.ok else 1)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="jflow",
        description="J-flow laboratory on the flat complex 2-torus",
    )
    parser.add_argument("--config", help="path to a config file")
    parser.add_argument("--command", required=True, choices=COMMANDS)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--eps", help="comma-separated epsilon list")
    parser.add_argument("--preset", help="preset name")
    parser.add_argument("--seed", type=int, help="seed for randomized potentials")
    args = parser.parse_args(argv)

    text = ""
    if args.config:
        with open(args.config) as fh:
            text = fh.read()
    overrides = []
    if args.preset:
        overrides.append(f"preset={args.preset}")
    if args.out:
        overrides.append(f"out={args.out}")
    if args.eps:
        overrides.append(f"eps=[{args.eps}]")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if overrides:
        text = text + "\n" + "\n".join(overrides)
    try:
        cfg = parse_config(text)
    except ConfigError as err:
        for p in err.problems:
            print(f"config error: {p}", file=sys.stderr)
        return 2
    record, code = execute(cfg, args.command)
    status = "PASS" if code == 0 else "FAIL"
    print(f"{args.command}: {status} ({len(record.verdicts)} verdicts)")
    for failure in record.failures:
        print(f"  {failure}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
