"""Closed-loop Hamiltonian dynamics x' = -H_p(x, grad U(x)).

Integration uses an embedded Dormand-Prince 4(5) pair with the usual
error-ratio step control, and locates events on the cubic Hermite
interpolant of each accepted step.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .candidates import Candidate
from .errors import AronssonLabError
from .sysmodel import TOL_H, _as_field, feedback, hamiltonian, hamiltonian_gradient_p

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0

EVENTS = ("target_hit", "domain_exit", "singular_capture", "horizon", "step_failure")


@dataclass(frozen=True)
class IntegrationOptions:
    horizon: float = 10.0
    target_radius: float | None = None
    box: tuple | None = None
    mode: str = "degree1"
    scale: float = 1.0
    tol_H: float = TOL_H
    rtol: float = 1e-9
    atol: float = 1e-12
    min_step: float = 1e-14
    max_step: float | None = None  # defaults to horizon / 100
    max_steps: int = 200_000
    snap_axes: bool = True
    snap_tol: float = 1e-11


@dataclass(frozen=True)
class Event:
    kind: str
    t: float


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    U: np.ndarray
    V: np.ndarray
    a: np.ndarray | None
    event: Event
    direction: str = "forward"
    branch_seed: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self):
        return len(self.t)

    @property
    def steps(self) -> int:
        return len(self.t) - 1

    def to_rows(self) -> list[dict]:
        n = self.x.shape[1]
        rows = []
        for k in range(len(self.t)):
            row = {"t": float(self.t[k])}
            row.update({f"x{i + 1}": float(self.x[k, i]) for i in range(n)})
            row["U"] = float(self.U[k])
            row["V"] = float(self.V[k])
            if self.a is not None:
                row.update({f"a{j + 1}": float(self.a[k, j]) for j in range(self.a.shape[1])})
            row["event"] = self.event.kind if k == len(self.t) - 1 else ""
            rows.append(row)
        return rows

    def to_csv(self, path) -> None:
        rows = self.to_rows()
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


def hit_time(traj: Trajectory) -> float | None:
    return traj.event.t if traj.event.kind == "target_hit" else None


class _RHSFailure(Exception):
    pass


class ClosedLoop:
    """The vector field F(x) = -H_p(x, grad U(x)) (or -(H^2)_p) with helpers."""

    def __init__(self, candidate: Candidate, system, mode="degree1", scale=1.0, tol_H=TOL_H, sign=1.0):
        self.candidate = candidate
        self.field = _as_field(system)
        self.mode = mode
        self.scale = scale
        self.tol_H = tol_H
        self.sign = sign

    def __call__(self, x):
        try:
            g = self.candidate.gradient(x)
            return -self.sign * hamiltonian_gradient_p(self.field, x, g, self.mode, self.scale, self.tol_H)
        except AronssonLabError as exc:
            raise _RHSFailure(str(exc)) from exc

    def V(self, x) -> float:
        return hamiltonian(self.field, x, self.candidate.gradient(x), scale=self.scale)

    def observe(self, x):
        """(V, control or None) from a single gradient evaluation."""
        try:
            g = self.candidate.gradient(x)
        except AronssonLabError:
            return float("nan"), None
        w = g @ self.field.sigma(x)
        nw = float(np.linalg.norm(w))
        V = math.sqrt(self.scale) * nw
        return V, (-math.sqrt(self.scale) * w / nw if V > self.tol_H else None)

    def control(self, x):
        try:
            return feedback(self.field, x, self.candidate.gradient(x), self.scale, self.tol_H)
        except AronssonLabError:
            return None


def _err_norm(err, y0, y1, rtol, atol):
    sc = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return math.sqrt(float(np.mean((err / sc) ** 2)))


def _initial_step(F, y0, f0, rtol, atol, hmax):
    sc = atol + rtol * np.abs(y0)
    d0 = math.sqrt(float(np.mean((y0 / sc) ** 2)))
    d1 = math.sqrt(float(np.mean((f0 / sc) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, hmax)
    try:
        f1 = F(y0 + h0 * f0)
        d2 = math.sqrt(float(np.mean(((f1 - f0) / sc) ** 2))) / h0
    except _RHSFailure:
        return max(h0 * 1e-3, 1e-12)
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, hmax)


def _dopri_step(F, y, f0, h):
    K = [f0]
    for s in range(1, 7):
        ys = y + h * sum(a * k for a, k in zip(_A[s], K))
        K.append(F(ys))
    y1 = y + h * sum(b * k for b, k in zip(_B5, K) if b)
    err = h * sum(e * k for e, k in zip(_E, K))
    return y1, K[6], err


def _hermite(y0, f0, y1, f1, h, theta):
    t2, t3 = theta * theta, theta * theta * theta
    h00 = 2 * t3 - 3 * t2 + 1
    h10 = t3 - 2 * t2 + theta
    h01 = -2 * t3 + 3 * t2
    h11 = t3 - t2
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def _box_margin(x, lo, hi):
    return float(min(np.min(x - lo), np.min(hi - x)))


def _leaving_at_boundary(x, v, lo, hi, eps=1e-14):
    on_lo = np.abs(x - lo) <= eps
    on_hi = np.abs(hi - x) <= eps
    return bool(np.any(on_lo & (v < 0)) or np.any(on_hi & (v > 0)))


def integrate(
    candidate: Candidate,
    system,
    x0,
    direction: str = "forward",
    opts: IntegrationOptions | None = None,
    seed_offset=None,
    **overrides,
) -> Trajectory:
    """Integrate the closed loop from ``x0 + seed_offset`` until the first event.

    Backward runs integrate the negated field forward and report negative times.
    """
    opts = replace(opts or IntegrationOptions(), **overrides)
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    sgn = 1.0 if direction == "forward" else -1.0
    F = ClosedLoop(candidate, system, opts.mode, opts.scale, opts.tol_H, sign=sgn)
    x0 = np.asarray(x0, dtype=float).copy()
    seed = np.zeros_like(x0) if seed_offset is None else np.asarray(seed_offset, dtype=float)
    y = x0 + seed
    hmax = opts.max_step if opts.max_step is not None else opts.horizon / 100.0
    lo = hi = None
    if opts.box is not None:
        box = np.asarray(opts.box, dtype=float)
        lo, hi = box[:, 0], box[:, 1]
    rho = opts.target_radius
    snap = candidate.nonlipschitz_coords() if opts.snap_axes else ()

    ts, xs, Us, Vs, As = [], [], [], [], []

    def record(tau, x, obs=None):
        V, a = obs if obs is not None else F.observe(x)
        ts.append(sgn * tau)
        xs.append(np.array(x, dtype=float))
        Us.append(float(candidate.value(x)))
        Vs.append(V)
        As.append(a)

    def finish(kind, tau):
        a = None
        if all(v is not None for v in As):
            a = np.array(As)
        elif any(v is not None for v in As):
            m = next(v for v in As if v is not None).size
            a = np.array([v if v is not None else np.full(m, np.nan) for v in As])
        return Trajectory(
            np.array(ts), np.array(xs), np.array(Us), np.array(Vs), a, Event(kind, sgn * tau), direction, seed
        )

    record(0.0, y)
    if rho is not None and np.linalg.norm(y) <= rho:
        return finish("target_hit", 0.0)
    if Vs[0] <= opts.tol_H:
        return finish("singular_capture", 0.0)
    try:
        f = F(y)
    except _RHSFailure:
        return finish("step_failure", 0.0)
    if lo is not None:
        if _box_margin(y, lo, hi) < 0 or _leaving_at_boundary(y, f, lo, hi):
            return finish("domain_exit", 0.0)

    def event_values(x, V=None):
        vals = {}
        if rho is not None:
            vals["target_hit"] = float(np.linalg.norm(x)) - rho
        if lo is not None:
            vals["domain_exit"] = _box_margin(x, lo, hi)
        vals["singular_capture"] = (F.V(x) if V is None else V) - opts.tol_H
        return vals

    def triggered(kind, g):
        return g < 0 if kind == "domain_exit" else g <= 0

    tau = 0.0
    h = _initial_step(F, y, f, opts.rtol, opts.atol, hmax)
    nsteps = 0
    while True:
        if tau >= opts.horizon:
            return finish("horizon", tau)
        if nsteps >= opts.max_steps:
            return finish("step_failure", tau)
        h = min(h, hmax, opts.horizon - tau)
        try:
            y1, f1, err = _dopri_step(F, y, f, h)
            en = _err_norm(err, y, y1, opts.rtol, opts.atol)
            if not np.all(np.isfinite(y1)):
                raise _RHSFailure("non-finite state")
        except _RHSFailure:
            h *= 0.25
            if h < opts.min_step:
                return finish("step_failure", tau)
            continue
        if en > 1.0:
            h *= max(MIN_FACTOR, SAFETY * en ** -0.2)
            if h < opts.min_step:
                return finish("step_failure", tau)
            continue

        # attracting non-Lipschitz hyperplanes are reached in finite time; land on them exactly
        snapped = False
        for i in snap:
            crossed = y[i] != 0.0 and y1[i] * y[i] < 0.0
            landing = 0.0 < abs(y1[i]) <= opts.snap_tol and f1[i] * y1[i] < 0.0
            if crossed or landing:
                y1[i] = 0.0
                snapped = True
        if snapped:
            try:
                f1 = F(y1)
            except _RHSFailure:
                return finish("step_failure", tau)

        # event location on the Hermite interpolant
        obs1 = F.observe(y1)
        hits = {k: g for k, g in event_values(y1, obs1[0]).items() if triggered(k, g)}
        if hits:
            g0 = event_values(y, Vs[-1])
            best = None
            for kind in hits:
                def g(theta, kind=kind):
                    return event_values(_hermite(y, f, y1, f1, h, theta))[kind]

                try:
                    th = brentq(g, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps) if g0[kind] > 0 else 0.0
                except (ValueError, _RHSFailure, AronssonLabError):
                    th = 1.0
                if best is None or th < best[1]:
                    best = (kind, th)
            kind, th = best
            xe = _hermite(y, f, y1, f1, h, th)
            if kind == "domain_exit":
                xe = np.clip(xe, lo, hi)
            record(tau + th * h, xe)
            return finish(kind, tau + th * h)

        tau += h
        y, f = y1, f1
        nsteps += 1
        record(tau, y, obs1)
        fac = MAX_FACTOR if en == 0 else min(MAX_FACTOR, max(MIN_FACTOR, SAFETY * en ** -0.2))
        h *= fac


def seed_offsets(candidate: Candidate, x0, etas=(0.0, 1e-8, -1e-8, 1e-6, -1e-6)) -> list[np.ndarray]:
    """Branch seeds: offsets on coordinates where x0 sits on a non-Lipschitz hyperplane.

    Returns only distinct offsets, so a point away from such sets yields one branch.
    """
    x0 = np.asarray(x0, dtype=float)
    flagged = [i for i in candidate.nonlipschitz_coords() if x0[i] == 0.0]
    seeds = []
    for eta in etas:
        s = np.zeros_like(x0)
        s[flagged] = eta
        if not any(np.array_equal(s, q) for q in seeds):
            seeds.append(s)
    return seeds


def closed_loop_lipschitz(candidate, system, box, samples=2000, seed=0, mode="degree1", scale=1.0, h=1e-6):
    """Sampled estimate of the Lipschitz constant of the closed-loop field on ``box``.

    Points where the field is undefined are skipped.
    """
    F = ClosedLoop(candidate, system, mode, scale)
    box = np.asarray(box, dtype=float)
    n = box.shape[0]
    rng = np.random.default_rng(seed)
    best = 0.0
    for x in box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((samples, n)):
        try:
            J = np.column_stack([(F(x + h * e) - F(x - h * e)) / (2 * h) for e in np.eye(n)])
        except _RHSFailure:
            continue
        best = max(best, float(np.linalg.norm(J, 2)))
    return best
