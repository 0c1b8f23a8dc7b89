"""Minimum-time bounds, a semi-Lagrangian grid oracle and regularity probes."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .candidates import Candidate
from .dynamics import IntegrationOptions, hit_time, integrate
from .errors import CFLViolation, EmptyRegion, InsufficientPoints, NonConvergence, SingularPoint
from .sysmodel import TOL_H, _as_field, hamiltonian, sphere_controls

log = logging.getLogger(__name__)


def analytic_bound(candidate: Candidate, system, x, scale: float = 1.0, tol_H: float = TOL_H) -> float:
    """Reach-time upper bound U(x) / H(x, grad U(x))."""
    x = np.asarray(x, dtype=float)
    H = hamiltonian(system, x, candidate.gradient(x), scale=scale)
    if H <= tol_H:
        raise SingularPoint(x, H, tol_H)
    return float(candidate.value(x)) / H


def feedback_reach_time(
    candidate: Candidate,
    system,
    x,
    rho: float = 1e-3,
    horizon: float | None = None,
    box=None,
) -> float | None:
    """Hit time of the closed-loop (feedback) trajectory, or None if it never reaches the ρ-ball."""
    x = np.asarray(x, dtype=float)
    if np.linalg.norm(x) <= rho:
        return 0.0
    if horizon is None:
        horizon = 4.0 * analytic_bound(candidate, system, x) + 1.0
    opts = IntegrationOptions(horizon=horizon, target_radius=rho, box=None if box is None else tuple(map(tuple, box)))
    return hit_time(integrate(candidate, system, x, "forward", opts))


# ---------------------------------------------------------------------------
# grid oracle
# ---------------------------------------------------------------------------


@numba.njit(parallel=True, cache=True)
def _feet(X, S, A, lo, hi, h, shape, strides):
    """Flat base-cell index (-1 if the foot leaves the box) and cell fractions for every (node, control)."""
    N, n = X.shape
    K, m = A.shape
    base = np.empty((N, K), dtype=np.int64)
    frac = np.empty((N, K, n))
    for i in numba.prange(N):
        for k in range(K):
            flat = 0
            for d in range(n):
                acc = 0.0
                for j in range(m):
                    acc += S[i, d, j] * A[k, j]
                y = X[i, d] + acc
                if y < lo[d] or y > hi[d]:
                    flat = -1
                    break
                s = (y - lo[d]) / h[d]
                b = min(max(int(math.floor(s)), 0), shape[d] - 2)
                frac[i, k, d] = s - b
                flat += b * strides[d]
            base[i, k] = flat
    return base, frac


@numba.njit(parallel=True, cache=True)
def _sweep(v, v_new, base, frac, strides, decay, cost, target):
    N, K = base.shape
    n = frac.shape[2]
    ncorner = 1 << n
    for i in numba.prange(N):
        if target[i]:
            v_new[i] = 0.0
            continue
        best = 1.0
        for k in range(K):
            b = base[i, k]
            if b < 0:
                continue
            val = 0.0
            for c in range(ncorner):
                w = 1.0
                idx = b
                for d in range(n):
                    if (c >> d) & 1:
                        w *= frac[i, k, d]
                        idx += strides[d]
                    else:
                        w *= 1.0 - frac[i, k, d]
                val += w * v[idx]
            cand = cost + decay * val
            if cand < best:
                best = cand
        v_new[i] = best


@dataclass
class MinTimeGrid:
    box: np.ndarray
    shape: tuple
    h: np.ndarray
    values: np.ndarray  # Kruzkov v = 1 - exp(-T), shaped like the grid
    rho: float
    controls: np.ndarray
    dt: float
    iterations: int
    sup_change: float
    history: list = field(default_factory=list, repr=False)

    @property
    def n(self) -> int:
        return len(self.shape)

    def axes(self):
        return [np.linspace(self.box[d, 0], self.box[d, 1], self.shape[d]) for d in range(self.n)]

    def nodes(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1).reshape(-1, self.n)

    @property
    def T(self) -> np.ndarray:
        return kruzkov_inverse(self.values)

    def v_at(self, pts) -> np.ndarray:
        interp = RegularGridInterpolator(self.axes(), self.values, method="linear", bounds_error=True)
        return interp(np.atleast_2d(np.asarray(pts, dtype=float)))

    def T_at(self, pts) -> np.ndarray:
        return kruzkov_inverse(self.v_at(pts))

    def metadata(self) -> dict:
        return {
            "shape": list(self.shape),
            "box": self.box.tolist(),
            "spacing": self.h.tolist(),
            "rho": self.rho,
            "dt": self.dt,
            "controls": int(len(self.controls)),
            "iterations": self.iterations,
            "sup_change": self.sup_change,
        }

    def to_csv(self, path) -> None:
        X = self.nodes()
        v = self.values.reshape(-1)
        T = kruzkov_inverse(v)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{d + 1}" for d in range(self.n)] + ["v", "T"])
            for x, vi, Ti in zip(X, v, T):
                w.writerow([repr(float(c)) for c in x] + [repr(float(vi)), "inf" if math.isinf(Ti) else repr(float(Ti))])

    def write(self, csv_path, json_path) -> None:
        self.to_csv(csv_path)
        with open(json_path, "w") as fh:
            json.dump(self.metadata(), fh, indent=2)


def kruzkov_inverse(v):
    v = np.asarray(v, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(v < 1.0, -np.log1p(-np.minimum(v, 1.0)), np.inf)


@dataclass
class _Scheme:
    box: np.ndarray
    shape: tuple
    h: np.ndarray
    controls: np.ndarray
    target: np.ndarray
    base: np.ndarray
    frac: np.ndarray
    strides: np.ndarray
    decay: float
    cost: float

    def sweep(self, v, out):
        _sweep(v, out, self.base, self.frac, self.strides, self.decay, self.cost, self.target)
        return out


def _prepare(system, box, shape, rho, controls, dt) -> _Scheme:
    fld = _as_field(system)
    box = np.asarray(box, dtype=float)
    shape = tuple(int(s) for s in shape)
    n = fld.n
    if box.shape != (n, 2) or len(shape) != n:
        raise ValueError("box/shape do not match the state dimension")
    if n > 3:
        raise ValueError("grid solver supports n <= 3")
    if isinstance(controls, (int, np.integer)):
        A = sphere_controls(fld.m, int(controls))
    else:
        A = sphere_controls(fld.m) if controls is None else np.asarray(controls, dtype=float)
    axes = [np.linspace(box[d, 0], box[d, 1], shape[d]) for d in range(n)]
    h = (box[:, 1] - box[:, 0]) / (np.array(shape) - 1)
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    S = fld.sigma(X)
    speed = float(np.max(np.linalg.norm(np.einsum("nij,kj->nki", S, A), axis=-1)))
    if speed > 0 and dt > float(np.min(h)) / speed:
        raise CFLViolation(f"dt={dt} exceeds min spacing / max speed = {float(np.min(h)) / speed:.4g}")
    strides = np.array([int(np.prod(shape[d + 1 :])) for d in range(n)], dtype=np.int64)
    # relative slack keeps mirrored nodes on the target circle on the same side despite linspace rounding
    target = np.linalg.norm(X, axis=1) <= rho * (1.0 + 1e-12)
    base, frac = _feet(X, np.ascontiguousarray(S * dt), A, box[:, 0], box[:, 1], h, np.array(shape, dtype=np.int64), strides)
    decay = math.exp(-dt)
    return _Scheme(box, shape, h, A, target, base, frac, strides, decay, 1.0 - decay)


def solve_grid(
    system,
    box,
    shape,
    rho: float = 0.1,
    controls=None,
    dt: float = 0.005,
    tol: float = 1e-9,
    max_iter: int = 100_000,
    threads: int | None = None,
) -> MinTimeGrid:
    """Kruzkov-transformed value iteration for the minimum time to the ρ-ball about the origin.

    v <- min_a {1 - e^-dt + e^-dt v(x + dt sigma(x) a)} with multilinear
    interpolation; feet outside the box read v = 1.  Jacobi sweeps from v = 1.
    ``controls`` is an array of unit vectors, a sample count, or None for the default sample.
    """
    if threads:
        numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))
    sch = _prepare(system, box, shape, rho, controls, dt)
    v = np.ones(len(sch.target))
    v[sch.target] = 0.0
    v_new = np.empty_like(v)
    history = []
    change = np.inf
    while len(history) < max_iter:
        sch.sweep(v, v_new)
        change = float(np.max(np.abs(v_new - v)))
        history.append(change)
        v, v_new = v_new, v
        if change < tol:
            break
    grid = MinTimeGrid(sch.box, sch.shape, sch.h, v.reshape(sch.shape), rho, sch.controls, dt, len(history), change, history)
    if change >= tol:
        raise NonConvergence(f"value iteration stopped after {len(history)} sweeps with sup change {change:.3e}", grid)
    log.info("grid solved: %d sweeps, sup change %.2e", len(history), change)
    return grid


def bellman_residual(grid: MinTimeGrid, system) -> float:
    """Sup change of v under one more sweep of the scheme that produced ``grid``."""
    sch = _prepare(system, grid.box, grid.shape, grid.rho, grid.controls, grid.dt)
    v = grid.values.reshape(-1)
    return float(np.max(np.abs(sch.sweep(v, np.empty_like(v)) - v)))


# ---------------------------------------------------------------------------
# excess decay and regularity
# ---------------------------------------------------------------------------


def excond_scan(
    candidate: Candidate,
    system,
    eps: float,
    delta: float,
    samples: int = 20000,
    seed: int = 0,
    scale: float = 1.0,
):
    """max of U(x)/|x| over sampled x with |x| < delta and H(x, grad U(x)) >= eps.

    Returns (c_hat, witnesses) with witnesses the five largest ratios.
    """
    if eps <= 0 or delta <= 0:
        raise ValueError("eps and delta must be positive")
    fld = _as_field(system)
    rng = np.random.default_rng(seed)
    n = fld.n
    d = rng.standard_normal((samples, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = delta * rng.random(samples) ** (1.0 / n)
    X = d * r[:, None]
    X = X[(r > 0) & (r < delta) & np.asarray(candidate.in_domain(X))]
    H = hamiltonian(fld, X, candidate.gradient(X), scale=scale)
    keep = H >= eps
    if not np.any(keep):
        raise EmptyRegion(f"no sample with H >= {eps} inside |x| < {delta}")
    Xk = X[keep]
    ratio = np.asarray(candidate.value(Xk)) / np.linalg.norm(Xk, axis=1)
    order = np.argsort(ratio)[::-1][:5]
    witnesses = [{"x": Xk[i].tolist(), "ratio": float(ratio[i]), "H": float(H[keep][i])} for i in order]
    return float(ratio[order[0]]), witnesses


@dataclass(frozen=True)
class LineSpec:
    """Probe points base + s * direction.

    With ``anchor_to_target`` and a base inside the target ball, increments
    are measured from the point where the line leaves the ball.
    """

    base: tuple
    direction: tuple
    s_values: tuple
    anchor_to_target: bool = True


@dataclass
class ModulusReport:
    line: dict
    fitted_exponent: float
    fit_r2: float
    pairs: list

    def as_dict(self):
        return {"line": self.line, "fitted_exponent": self.fitted_exponent, "fit_r2": self.fit_r2, "pairs": self.pairs}


def _exit_parameter(base, direction, rho):
    # largest s with |base + s d| <= rho
    b, d = np.asarray(base, float), np.asarray(direction, float)
    a2, b1, c0 = d @ d, 2 * b @ d, b @ b - rho * rho
    disc = b1 * b1 - 4 * a2 * c0
    return (-b1 + math.sqrt(max(disc, 0.0))) / (2 * a2)


def modulus_estimate(grid: MinTimeGrid, line: LineSpec) -> ModulusReport:
    """Least-squares slope of log|T(p) - T(p0)| against log|p - p0| along a line."""
    base = np.asarray(line.base, dtype=float)
    d = np.asarray(line.direction, dtype=float)
    d = d / np.linalg.norm(d)
    s = np.asarray(line.s_values, dtype=float)
    s0 = 0.0
    if line.anchor_to_target and np.linalg.norm(base) <= grid.rho:
        s0 = _exit_parameter(base, d, grid.rho)
    p0 = base + s0 * d
    P = base + s[:, None] * d
    lo, hi = grid.box[:, 0], grid.box[:, 1]
    if np.any(P < lo) or np.any(P > hi) or np.any(p0 < lo) or np.any(p0 > hi):
        raise InsufficientPoints("probe points leave the grid box")
    T0 = float(grid.T_at(p0)[0])
    T = grid.T_at(P)
    dx = s - s0
    dT = np.abs(T - T0)
    ok = np.isfinite(dT) & (dx > 0) & (dT > 0)
    if np.sum(ok) < 3:
        raise InsufficientPoints(f"only {int(np.sum(ok))} usable probe pairs")
    lx, ly = np.log(dx[ok]), np.log(dT[ok])
    slope, icpt = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + icpt)
    ss = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0
    return ModulusReport(
        {"base": base.tolist(), "direction": d.tolist(), "s_values": s.tolist(), "anchor": p0.tolist()},
        float(slope),
        r2,
        [[float(a), float(b)] for a, b in zip(dx[ok], dT[ok])],
    )
