"""Config-driven experiment runner.

    aronsson-lab run --config cfg.json [--out DIR] [--threads N]
    aronsson-lab run --preset grushin-regularity
    aronsson-lab presets [--json]

Exit codes: 0 all checks passed, 2 some check failed (report still written),
1 usage or config error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import json
import logging
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import aronsson as ar
from . import candidates as cd
from . import dynamics as dy
from . import mintime as mt
from . import sysmodel as sm
from .errors import AronssonLabError, ConfigError

log = logging.getLogger("aronsson_lab")

EXPERIMENTS = (
    "check-aronsson",
    "certify",
    "simulate",
    "amf-test",
    "representation",
    "mintime-grid",
    "bound-compare",
    "modulus",
    "excond",
    "counterexample",
)

# descriptive anchors tying each experiment to the statement it reproduces
ANCHORS = {
    "check-aronsson": "explicit gauge solutions: Aronsson residual -grad(H(x,grad U)) . H_p(x,grad U) = 0",
    "certify": "C1 super/subsolution via monotonicity of H(x,grad U(x)) along Hamiltonian trajectories",
    "simulate": "closed-loop feedback a = -sigma^T grad U / |grad U sigma| reaches the target in finite time",
    "amf-test": "C1 solutions are absolutely minimizing: no competitor with equal boundary data lowers sup H",
    "representation": "implicit representation formula U(x0) = t2/(t2-t1) U(x_t1) - t1/(t2-t1) U(x_t2)",
    "mintime-grid": "minimum time T(x) = inf over controls of the target hitting time",
    "bound-compare": "reach-time bound T(x) <= U(x) / H(x, grad U(x))",
    "modulus": "local Lipschitz continuity of T off the singular set, 1/2-Holder along it",
    "excond": "excess-decay condition U(x) <= c d(x) where H(x, grad U(x)) >= eps",
    "counterexample": "infinity-harmonic |x|^{4/3} - |y|^{4/3} is C1 but not a C1 solution along every trajectory",
}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class SystemConfig:
    kind: str
    m: int | None = None
    n: int | None = None
    B: list | None = None
    tables: list | None = None

    def build(self) -> sm.SystemCatalogEntry:
        if self.kind == "isotropic":
            return sm.isotropic(_need(self.n, "system.n"))
        if self.kind == "grushin":
            return sm.grushin(_need(self.m, "system.m"))
        if self.kind == "hormander":
            m = _need(self.m, "system.m")
            return sm.hormander(m, sm.standard_B(m) if self.B is None else np.asarray(self.B, float))
        if self.kind == "custom":
            return sm.custom(_need(self.tables, "system.tables"))
        raise ConfigError(f"system.kind: unknown system {self.kind!r}")


@dataclass
class HamiltonianConfig:
    mode: str = "degree1"
    scale: float = 1.0

    def validate(self):
        if self.mode not in ("degree1", "squared"):
            raise ConfigError(f"hamiltonian.mode: expected 'degree1' or 'squared', got {self.mode!r}")
        if not self.scale > 0:
            raise ConfigError("hamiltonian.scale: must be positive")


@dataclass
class LineConfig:
    base: list
    direction: list
    s_values: list
    band: list
    anchor_to_target: bool = True


def _default_lines():
    s = np.geomspace(0.1, 0.8, 12).tolist()
    return [
        {"base": [0.0, 0.0], "direction": [0.0, 1.0], "s_values": s, "band": [0.35, 0.65], "anchor_to_target": True},
        {"base": [0.0, 0.0], "direction": [1.0, 0.0], "s_values": s, "band": [0.85, 1.15], "anchor_to_target": True},
        {
            "base": [0.8, 0.2],
            "direction": [1.0, 0.0],
            "s_values": np.geomspace(0.04, 0.4, 12).tolist(),
            "band": [0.85, 1.15],
            "anchor_to_target": True,
        },
    ]


@dataclass
class Params:
    # sampling region shared by check-aronsson, amf-test, representation and bound-compare
    box: list | None = None
    x0: list | None = None
    points: int = 200
    fd_step: float = 1e-4
    tol_residual: float = 1e-8
    tol_fd: float = 1e-6
    # trajectories
    horizon: float = 1.0
    direction: str = "forward"
    target_radius: float | None = None
    etas: list = field(default_factory=lambda: [0.0, 1e-8, -1e-8, 1e-6, -1e-6])
    tol_mono: float = 1e-6
    mono_floor: float = 5e-8
    expect_supersolution: bool = True
    expect_subsolution: bool = True
    # absolute minimality
    trials: int = 200
    amplitude: float = 0.2
    tol_amf: float = 1e-3
    amf_family: str = "mixed"
    amf_resolution: int | None = None
    expect_amf_pass: bool = True
    # representation
    tol_repr: float = 1e-4
    repr_horizon: float = 50.0
    # grid oracle
    grid_box: list | None = None
    grid_shape: list | None = None
    grid_rho: float = 0.1
    grid_controls: int | None = None
    grid_dt: float = 0.005
    grid_tol: float = 1e-9
    grid_max_iter: int = 100_000
    eps_grid: float = 0.15
    lines: list = field(default_factory=_default_lines)
    # reach times
    reach_samples: int = 50
    reach_rho: float = 1e-3
    reach_tol: float = 5e-3
    # excess decay
    excond_eps: float = 0.5
    excond_delta: float = 0.5
    excond_samples: int = 20000
    seed: int = 0


@dataclass
class ExperimentConfig:
    experiment: list
    system: SystemConfig
    candidate: dict
    hamiltonian: HamiltonianConfig = field(default_factory=HamiltonianConfig)
    params: Params = field(default_factory=Params)
    output: str | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_CANDIDATE_KEYS = {
    "gauge": {"kind", "m"},
    "abspower": {"kind", "exponents", "signs"},
    "quadratic": {"kind", "Q"},
    "polynomial": {"kind", "n", "terms"},
    "negated": {"kind", "base"},
}


def _need(value, key):
    if value is None:
        raise ConfigError(f"{key}: required for this system kind")
    return value


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    for k in data:
        if k not in names:
            raise ConfigError(f"unknown key '{where}.{k}'" if where else f"unknown key '{k}'")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from None


def _check_candidate(c, where="candidate"):
    if not isinstance(c, dict) or "kind" not in c:
        raise ConfigError(f"{where}.kind: missing")
    allowed = _CANDIDATE_KEYS.get(c["kind"])
    if allowed is None:
        raise ConfigError(f"{where}.kind: unknown candidate {c['kind']!r}")
    for k in c:
        if k not in allowed:
            raise ConfigError(f"unknown key '{where}.{k}'")
    if c["kind"] == "negated":
        _check_candidate(c.get("base"), where + ".base")


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a raw config mapping and materialize every default."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    data = copy.deepcopy(data)
    top = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for k in data:
        if k not in top:
            raise ConfigError(f"unknown key '{k}'")
    for k in ("experiment", "system", "candidate"):
        if k not in data:
            raise ConfigError(f"{k}: required")
    exps = data["experiment"]
    exps = [exps] if isinstance(exps, str) else list(exps)
    for e in exps:
        if e not in EXPERIMENTS:
            raise ConfigError(f"experiment: unknown experiment {e!r}")
    system = _build(SystemConfig, data["system"], "system")
    _check_candidate(data["candidate"])
    ham = _build(HamiltonianConfig, data.get("hamiltonian", {}), "hamiltonian")
    ham.validate()
    params = _build(Params, data.get("params", {}), "params")
    for i, line in enumerate(params.lines):
        _build(LineConfig, line, f"params.lines[{i}]")
    cfg = ExperimentConfig(exps, system, data["candidate"], ham, params, data.get("output"))
    _materialize(cfg)
    return cfg


def _materialize(cfg: ExperimentConfig) -> None:
    entry = cfg.system.build()
    n = entry.n
    p = cfg.params
    if p.box is None:
        p.box = [[0.5, 1.5]] + [[-0.5, 0.5]] * (n - 1)
    if p.x0 is None:
        p.x0 = [1.0] + [0.0] * (n - 2) + [0.3]
    if p.grid_box is None:
        p.grid_box = [[-1.5, 1.5]] * n
    if p.grid_shape is None:
        p.grid_shape = [151] * n if n <= 2 else [41] * n
    if p.amf_resolution is None:
        p.amf_resolution = 101 if n <= 2 else 41
    if p.grid_controls is None:
        p.grid_controls = int(len(sm.sphere_controls(entry.field.m)))
    if len(p.box) != n or len(p.x0) != n:
        raise ConfigError(f"params.box/params.x0: dimension must be {n}")


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

PRESETS = {
    "hormander-gauge": (
        "gauge on the Hormander system (m=2): residual, certificate, representation and excess decay",
        {
            "experiment": ["check-aronsson", "certify", "representation", "excond"],
            "system": {"kind": "hormander", "m": 2},
            "candidate": {"kind": "gauge", "m": 2},
            "params": {
                "box": [[0.5, 1.5], [-0.5, 0.5], [-0.3, 0.7]],
                "x0": [1.0, 0.0, 0.2],
                "excond_eps": 0.25,
            },
        },
    ),
    "grushin-gauge": (
        "gauge on the Grushin plane: residual, certificate, absolute minimality, representation, excess decay",
        {
            "experiment": ["check-aronsson", "certify", "amf-test", "representation", "excond"],
            "system": {"kind": "grushin", "m": 1},
            "candidate": {"kind": "gauge", "m": 1},
            "params": {"box": [[0.25, 1.75], [-1.0, 1.0]], "x0": [1.0, 0.3]},
        },
    ),
    "counterexample-infinity": (
        "|x|^{4/3} - |y|^{4/3} with H^2 = |p|^2/2: the three branch behaviours of the counterexample",
        {
            "experiment": ["counterexample"],
            "system": {"kind": "isotropic", "n": 2},
            "candidate": {"kind": "abspower", "exponents": [4 / 3, 4 / 3], "signs": [1, -1]},
            "hamiltonian": {"mode": "squared", "scale": 0.5},
            "params": {"x0": [1.0, 0.0], "box": [[-1.5, 1.5], [-1.5, 1.5]]},
        },
    ),
    "grushin-regularity": (
        "Grushin minimum-time grid: Holder/Lipschitz moduli and reach-time bound dominance",
        {
            "experiment": ["mintime-grid", "modulus", "bound-compare"],
            "system": {"kind": "grushin", "m": 1},
            "candidate": {"kind": "gauge", "m": 1},
            "params": {"box": [[0.5, 1.5], [-0.5, 0.5]], "reach_samples": 20},
        },
    ),
    "hormander-feedback": (
        "closed-loop gauge feedback on the Hormander system: hit times against U/H",
        {
            "experiment": ["simulate", "bound-compare"],
            "system": {"kind": "hormander", "m": 2},
            "candidate": {"kind": "gauge", "m": 2},
            "params": {"x0": [1.0, 0.0, 0.0], "horizon": 3.0, "target_radius": 1e-3},
        },
    ),
}


def preset_config(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return copy.deepcopy(PRESETS[name][1])


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


@dataclass
class Context:
    cfg: ExperimentConfig
    system: sm.SystemCatalogEntry
    candidate: cd.Candidate
    out: Path
    grid: mt.MinTimeGrid | None = None


def _check(name, value, limit, passed):
    return {"name": name, "value": value, "limit": limit, "passed": bool(passed)}


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _sample_box(box, count, rng):
    box = np.asarray(box, float)
    return box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((count, len(box)))


def _regular_samples(ctx, count, rng, need_hessian=False):
    """Uniform samples in params.box restricted to regular (C^1 or C^2) points."""
    fld = ctx.system.field
    s = ctx.cfg.hamiltonian.scale
    out = []
    while len(out) < count:
        X = _sample_box(ctx.cfg.params.box, 4 * count, rng)
        ok = np.asarray(ctx.candidate.in_domain(X))
        if need_hessian:
            ok &= np.asarray(ctx.candidate.hessian_available(X))
        X = X[ok]
        H = sm.hamiltonian(fld, X, ctx.candidate.gradient(X), scale=s)
        out.extend(X[H > 1e-6])
    return np.array(out[:count])


def _opts(ctx, **kw):
    h = ctx.cfg.hamiltonian
    return dy.IntegrationOptions(mode=h.mode, scale=h.scale, **kw)


def exp_check_aronsson(ctx):
    p = ctx.cfg.params
    rng = np.random.default_rng(p.seed)
    X = _regular_samples(ctx, p.points, rng, need_hessian=True)
    s = ctx.cfg.hamiltonian.scale
    res = np.array([ar.smatrix(ctx.candidate, ctx.system, x, scale=s).residual for x in X])
    fd = np.array([ar.residual_fd(ctx.candidate, ctx.system, x, h=p.fd_step, scale=s) for x in X])
    _write_csv(
        ctx.out / "residuals.csv",
        [f"x{i + 1}" for i in range(X.shape[1])] + ["residual", "residual_fd"],
        [list(x) + [a, b] for x, a, b in zip(X, res, fd)],
    )
    r, f = float(np.max(np.abs(res))), float(np.max(np.abs(fd)))
    summary = {"points": len(X), "max_abs_residual": r, "max_abs_residual_fd": f, "fd_step": p.fd_step}
    return summary, [
        _check("smatrix residual", r, p.tol_residual, r <= p.tol_residual),
        _check("finite-difference residual", f, p.tol_fd, f <= p.tol_fd),
    ]


def _write_branches(ctx, cert, prefix):
    rows = []
    for b in cert.branches:
        rows.append([b.id, b.direction, " ".join(repr(float(v)) for v in b.seed), b.classification, b.max_violation, b.drift, b.event])
        if b.trajectory is not None:
            b.trajectory.to_csv(ctx.out / f"{prefix}_branch{b.id}_{b.direction}.csv")
    _write_csv(ctx.out / f"{prefix}_branches.csv", ["id", "direction", "seed", "classification", "max_violation", "drift", "event"], rows)


def exp_certify(ctx):
    p = ctx.cfg.params
    opts = _opts(ctx, horizon=p.horizon, target_radius=p.target_radius)
    cert = ar.monotonicity_certificate(
        ctx.candidate, ctx.system, p.x0, opts, tuple(p.etas), p.tol_mono, p.mono_floor, keep_trajectories=True
    )
    _write_branches(ctx, cert, "certify")
    return cert.as_dict(), [
        _check("supersolution verdict", cert.verdict_supersolution, p.expect_supersolution, cert.verdict_supersolution == p.expect_supersolution),
        _check("subsolution verdict", cert.verdict_subsolution, p.expect_subsolution, cert.verdict_subsolution == p.expect_subsolution),
    ]


def exp_simulate(ctx):
    p = ctx.cfg.params
    opts = _opts(ctx, horizon=p.horizon, target_radius=p.target_radius)
    tr = dy.integrate(ctx.candidate, ctx.system, p.x0, p.direction, opts)
    tr.to_csv(ctx.out / "trajectory.csv")
    summary = {
        "x0": list(map(float, p.x0)),
        "direction": p.direction,
        "event": tr.event.kind,
        "t_end": tr.event.t,
        "x_end": tr.x[-1].tolist(),
        "V_start": float(tr.V[0]),
        "V_end": float(tr.V[-1]),
        "steps": tr.steps,
    }
    checks = [_check("no step failure", tr.event.kind, "!= step_failure", tr.event.kind != "step_failure")]
    if p.target_radius is not None and ctx.cfg.hamiltonian.mode == "degree1":
        bound = mt.analytic_bound(ctx.candidate, ctx.system, p.x0, scale=ctx.cfg.hamiltonian.scale)
        summary["analytic_bound"] = bound
        ok = tr.event.kind == "target_hit" and tr.event.t <= bound + p.reach_tol
        checks.append(_check("hit time within U/H bound", tr.event.t, bound + p.reach_tol, ok))
    return summary, checks


def exp_amf(ctx):
    p = ctx.cfg.params
    rep = ar.amf_necessary_test(
        ctx.candidate,
        ctx.system,
        p.box,
        trials=p.trials,
        amplitude=p.amplitude,
        tol_amf=p.tol_amf,
        resolution=p.amf_resolution,
        seed=p.seed,
        scale=ctx.cfg.hamiltonian.scale,
        family=p.amf_family,
    )
    if rep.trials:
        keys = list(rep.trials[0])
        _write_csv(ctx.out / "amf_trials.csv", keys, [[t[k] for k in keys] for t in rep.trials])
    return rep.as_dict(), [_check("absolute minimality test", rep.passed, p.expect_amf_pass, rep.passed == p.expect_amf_pass)]


def exp_representation(ctx):
    p = ctx.cfg.params
    r = ar.representation_check(ctx.candidate, ctx.system, p.box, p.x0, p.repr_horizon, scale=ctx.cfg.hamiltonian.scale)
    _write_csv(ctx.out / "representation.csv", ["lhs", "rhs", "t1", "t2", "gap"], [[r.lhs, r.rhs, r.t1, r.t2, r.gap]])
    return r.as_dict(), [_check("representation gap", r.gap, p.tol_repr, r.gap <= p.tol_repr)]


def _ensure_grid(ctx):
    if ctx.grid is None:
        p = ctx.cfg.params
        ctx.grid = mt.solve_grid(
            ctx.system,
            p.grid_box,
            p.grid_shape,
            p.grid_rho,
            p.grid_controls,
            p.grid_dt,
            tol=p.grid_tol,
            max_iter=p.grid_max_iter,
        )
    return ctx.grid


def exp_mintime_grid(ctx):
    g = _ensure_grid(ctx)
    g.write(ctx.out / "grid.csv", ctx.out / "grid.json")
    summary = g.metadata()
    probes = {}
    n = g.n
    for name, x in (("unit_horizontal", [1.0] + [0.0] * (n - 1)),):
        probes[name] = {"x": x, "T": float(g.T_at(x)[0])}
    summary["probes"] = probes
    return summary, [_check("value iteration converged", g.sup_change, ctx.cfg.params.grid_tol, g.sup_change < ctx.cfg.params.grid_tol)]


def exp_bound_compare(ctx):
    p = ctx.cfg.params
    s = ctx.cfg.hamiltonian.scale
    rng = np.random.default_rng(p.seed)
    X = _regular_samples(ctx, p.reach_samples, rng)
    gauge = ctx.candidate.kind == "gauge"
    rows, worst_upper, worst_const = [], -np.inf, -np.inf
    grid = ctx.grid
    worst_oracle = -np.inf
    for x in X:
        bound = mt.analytic_bound(ctx.candidate, ctx.system, x, scale=s)
        H0 = float(sm.hamiltonian(ctx.system, x, ctx.candidate.gradient(x), scale=s))
        tf = mt.feedback_reach_time(ctx.candidate, ctx.system, x, p.reach_rho)
        tf_val = math.inf if tf is None else tf
        worst_upper = max(worst_upper, tf_val - bound)
        if gauge:
            worst_const = max(worst_const, abs(tf_val - bound) - p.reach_rho * (1 + 1 / H0))
        row = list(x) + [bound, tf_val]
        if grid is not None:
            tg = float(grid.T_at(x)[0])
            tf_g = mt.feedback_reach_time(ctx.candidate, ctx.system, x, grid.rho)
            tf_g = math.inf if tf_g is None else tf_g
            worst_oracle = max(worst_oracle, tg - tf_g)
            row += [tg, tf_g]
        rows.append(row)
    header = [f"x{i + 1}" for i in range(X.shape[1])] + ["analytic_bound", "feedback_time"]
    if grid is not None:
        header += ["grid_T", "feedback_time_grid_rho"]
    _write_csv(ctx.out / "bound_compare.csv", header, rows)
    checks = [_check("feedback time <= U/H + tol", float(worst_upper), p.reach_tol, worst_upper <= p.reach_tol)]
    summary = {"samples": len(X), "rho": p.reach_rho, "max_feedback_minus_bound": float(worst_upper)}
    if gauge:
        summary["max_constant_V_gap_excess"] = float(worst_const)
        checks.append(_check("feedback time matches U/H for constant V", float(worst_const), p.reach_tol, worst_const <= p.reach_tol))
    if grid is not None:
        Xg = grid.nodes()
        T = grid.T.reshape(-1)
        keep = (np.linalg.norm(Xg, axis=1) > grid.rho) & np.asarray(ctx.candidate.in_domain(Xg))
        Xg, T = Xg[keep], T[keep]
        H = sm.hamiltonian(ctx.system, Xg, ctx.candidate.gradient(Xg), scale=s)
        reg = H > sm.TOL_H
        excess = T[reg] - np.asarray(ctx.candidate.value(Xg[reg])) / H[reg]
        dom = float(np.max(excess))
        summary.update({"grid_regular_nodes": int(reg.sum()), "max_grid_minus_bound": dom, "max_grid_minus_feedback": float(worst_oracle)})
        checks.append(_check("grid T <= U/H + eps_grid", dom, p.eps_grid, dom <= p.eps_grid))
        checks.append(_check("feedback time >= grid T - eps_grid", float(worst_oracle), p.eps_grid, worst_oracle <= p.eps_grid))
    return summary, checks


def exp_modulus(ctx):
    p = ctx.cfg.params
    g = _ensure_grid(ctx)
    reports, checks, rows = [], [], []
    for i, line in enumerate(p.lines):
        probe = mt.LineSpec(tuple(line["base"]), tuple(line["direction"]), tuple(line["s_values"]), line.get("anchor_to_target", True))
        r = mt.modulus_estimate(g, probe)
        lo, hi = line["band"]
        d = r.as_dict()
        d["band"] = [lo, hi]
        reports.append(d)
        rows.extend([i, dx, dT] for dx, dT in r.pairs)
        checks.append(_check(f"exponent along line {i}", r.fitted_exponent, [lo, hi], lo <= r.fitted_exponent <= hi))
    _write_csv(ctx.out / "modulus.csv", ["line", "dx", "dT"], rows)
    return {"lines": reports}, checks


def exp_excond(ctx):
    p = ctx.cfg.params
    c_hat, wit = mt.excond_scan(ctx.candidate, ctx.system, p.excond_eps, p.excond_delta, p.excond_samples, p.seed, ctx.cfg.hamiltonian.scale)
    _write_csv(ctx.out / "excond_witnesses.csv", ["x", "ratio", "H"], [[" ".join(map(repr, w["x"])), w["ratio"], w["H"]] for w in wit])
    limit = 1.0 / p.excond_eps + 1e-9
    summary = {"eps": p.excond_eps, "delta": p.excond_delta, "c_hat": c_hat, "witnesses": wit}
    return summary, [_check("c_hat <= 1/eps", c_hat, limit, c_hat <= limit)]


def exp_counterexample(ctx):
    """Three branches of |x|^{4/3} - |y|^{4/3}: shrinking, growing and constant V."""
    p = ctx.cfg.params
    opts = _opts(ctx, horizon=1.0)
    k = 2.0 * math.sqrt(2.0) / 3.0

    on_axis = dy.integrate(ctx.candidate, ctx.system, [1.0, 0.0], "forward", opts)
    t = on_axis.t
    x_err = float(np.max(np.abs(on_axis.x - np.stack([(1 - 8 * t / 9) ** 1.5, 0 * t], axis=1))))
    v1_err = float(np.max(np.abs(on_axis.V - k * np.sqrt(1 - 8 * t / 9))))
    up = dy.integrate(ctx.candidate, ctx.system, [0.0, 1.0], "forward", opts)
    v2_err = float(np.max(np.abs(up.V - k * np.sqrt(1 + 8 * up.t / 9))))
    cert = ar.monotonicity_certificate(ctx.candidate, ctx.system, [1.0, 0.0], opts, tuple(p.etas), p.tol_mono, p.mono_floor, keep_trajectories=True)
    seeded = [b for b in cert.forward() if np.any(b.seed != 0)]
    const = [b for b in seeded if b.classification == "constant"]
    drift = min((b.drift for b in const), default=math.inf)

    on_axis.to_csv(ctx.out / "counterexample_x1.csv")
    up.to_csv(ctx.out / "counterexample_x2.csv")
    if const:
        const[0].trajectory.to_csv(ctx.out / "counterexample_x3.csv")
    _write_branches(ctx, cert, "counterexample")

    c1 = ar.classify(on_axis.t, on_axis.V, p.tol_mono, p.mono_floor)[0]
    c2 = ar.classify(up.t, up.V, p.tol_mono, p.mono_floor)[0]
    summary = {
        "branches": {
            "x1_on_axis_from_(1,0)": {"classification": c1, "max_state_error": x_err, "max_V_error": v1_err},
            "x2_on_axis_from_(0,1)": {"classification": c2, "max_V_error": v2_err},
            "x3_seeded_from_(1,0)": {"classification": const[0].classification if const else "none", "V_drift": drift},
        },
        "certificate": cert.as_dict(),
    }
    tol = 1e-6
    return summary, [
        _check("x1 classified nonincreasing", c1, "nonincreasing", c1 == "nonincreasing"),
        _check("x1 state error", x_err, tol, x_err <= tol),
        _check("x1 V error", v1_err, tol, v1_err <= tol),
        _check("x2 classified nondecreasing", c2, "nondecreasing", c2 == "nondecreasing"),
        _check("x2 V error", v2_err, tol, v2_err <= tol),
        _check("x3 constant V drift", drift, tol, drift <= tol),
    ]


RUNNERS = {
    "check-aronsson": exp_check_aronsson,
    "certify": exp_certify,
    "simulate": exp_simulate,
    "amf-test": exp_amf,
    "representation": exp_representation,
    "mintime-grid": exp_mintime_grid,
    "bound-compare": exp_bound_compare,
    "modulus": exp_modulus,
    "excond": exp_excond,
    "counterexample": exp_counterexample,
}


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    return obj


def _dump(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_config(cfg: ExperimentConfig, out: Path, threads: int | None = None) -> int:
    """Run every experiment in ``cfg``, write outputs to ``out`` and return the exit code."""
    out.mkdir(parents=True, exist_ok=True)
    if threads:
        import numba

        numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))
    resolved = cfg.to_dict()
    resolved["output"] = str(out)
    _dump(out / "resolved-config.json", resolved)
    ctx = Context(cfg, cfg.system.build(), cd.from_config(cfg.candidate), out)
    report = {"tool_version": __version__, "experiments": []}
    info = {"started": datetime.now(timezone.utc).isoformat(), "python": platform.python_version(), "timings_s": {}}
    passed = True
    for name in cfg.experiment:
        t0 = time.perf_counter()
        entry = {"name": name, "anchor": ANCHORS[name]}
        try:
            summary, checks = RUNNERS[name](ctx)
            entry["summary"] = summary
        except AronssonLabError as exc:
            checks = [_check("experiment raised", f"{type(exc).__name__}: {exc}", "no error", False)]
        entry["checks"] = checks
        entry["passed"] = all(c["passed"] for c in checks)
        passed &= entry["passed"]
        report["experiments"].append(entry)
        info["timings_s"][name] = round(time.perf_counter() - t0, 3)
        log.info("%s: %s", name, "pass" if entry["passed"] else "FAIL")
    report["passed"] = passed
    _dump(out / "report.json", report)
    info["finished"] = datetime.now(timezone.utc).isoformat()
    _dump(out / "run-info.json", info)
    return 0 if passed else 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="aronsson-lab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run an experiment config or preset")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="JSON experiment config")
    src.add_argument("--preset", help="name of a built-in preset")
    run.add_argument("--out", type=Path, help="output directory (overrides config 'output')")
    run.add_argument("--threads", type=int, default=None, help="worker threads for the grid solver")
    pr = sub.add_parser("presets", help="list built-in presets")
    pr.add_argument("--json", action="store_true", help="print as a JSON array")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.command == "presets":
        if args.json:
            print(json.dumps([{"name": k, "description": d} for k, (d, _) in PRESETS.items()], indent=2))
        else:
            for k, (d, _) in PRESETS.items():
                print(f"{k:<26}{d}")
        return 0
    try:
        if args.preset:
            raw = preset_config(args.preset)
            default_out = Path("runs") / args.preset
        else:
            try:
                raw = json.loads(args.config.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {args.config}: {exc}") from None
            default_out = Path("runs") / args.config.stem
        cfg = parse_config(raw)
    except (ConfigError, AronssonLabError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    out = args.out or (Path(cfg.output) if cfg.output else default_out)
    code = run_config(cfg, out, args.threads)
    print(f"{'pass' if code == 0 else 'FAIL'}: report written to {out / 'report.json'}")
    return code


if __name__ == "__main__":
    sys.exit(main())
