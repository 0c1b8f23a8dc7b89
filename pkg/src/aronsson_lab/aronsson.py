"""Checks for C^1 solutions of the Aronsson equation for H^2.

The monotonicity certificate and the absolute-minimality test are
empirical: they sample trajectories and competitors rather than decide the
underlying property.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .candidates import Candidate
from .dynamics import IntegrationOptions, Trajectory, integrate, seed_offsets
from .errors import EvalOutsideDomain, HessianUnavailable, NoExit, SingularPoint
from .sysmodel import TOL_H, _as_field, hamiltonian, hamiltonian_gradient_p


@dataclass(frozen=True)
class SMatrixReport:
    x: np.ndarray
    S: np.ndarray
    Sstar: np.ndarray
    w: np.ndarray
    residual: float
    eig_Sstar: np.ndarray

    def as_dict(self):
        return {
            "x": self.x.tolist(),
            "S": self.S.tolist(),
            "Sstar": self.Sstar.tolist(),
            "w": self.w.tolist(),
            "residual": self.residual,
            "eig_Sstar": self.eig_Sstar.tolist(),
        }


def smatrix(candidate: Candidate, system, x, scale: float = 1.0) -> SMatrixReport:
    """S = sigma^T D^2U sigma + ((D sigma_j sigma_i) . grad U)_ij and the H^2 residual.

    residual = -4 scale^2 w^T S* w with w = (grad U sigma)^T; a nonnegative
    residual is the supersolution inequality.
    """
    fld = _as_field(system)
    x = np.asarray(x, dtype=float)
    if not candidate.hessian_available(x):
        raise HessianUnavailable(f"hessian unavailable at {x.tolist()}")
    _, g, D2 = candidate.evaluate(x)
    sig = fld.sigma(x)
    dsig = fld.dsigma(x)  # [l, j, k] = d sigma_lj / d x_k
    # bracket_ij = sum_{l,k} g_l * d_k sigma_lj * sigma_ki
    bracket = np.einsum("l,ljk,ki->ij", g, dsig, sig)
    S = sig.T @ D2 @ sig + bracket
    Sstar = 0.5 * (S + S.T)
    w = sig.T @ g
    residual = -4.0 * scale**2 * float(w @ Sstar @ w)
    return SMatrixReport(x, S, Sstar, w, residual, np.linalg.eigvalsh(Sstar))


def residual_fd(candidate: Candidate, system, x, h: float = 1e-4, scale: float = 1.0) -> float:
    """Central difference of -grad(H^2(., grad U(.))) . (H^2)_p along G = (H^2)_p(x, grad U(x))."""
    fld = _as_field(system)
    x = np.asarray(x, dtype=float)
    G = hamiltonian_gradient_p(fld, x, candidate.gradient(x), "squared", scale)
    xp, xm = x + h * G, x - h * G
    if not (candidate.in_domain(xp) and candidate.in_domain(xm)):
        raise EvalOutsideDomain("finite-difference stencil leaves the C^1 domain")
    Hp = hamiltonian(fld, xp, candidate.gradient(xp), "squared", scale)
    Hm = hamiltonian(fld, xm, candidate.gradient(xm), "squared", scale)
    return -(Hp - Hm) / (2.0 * h)


# ---------------------------------------------------------------------------
# monotonicity certificate
# ---------------------------------------------------------------------------

CLASSES = ("constant", "nondecreasing", "nonincreasing", "nonmonotone")


@dataclass
class Branch:
    id: int
    direction: str
    seed: np.ndarray
    classification: str
    max_violation: float
    drift: float
    event: str
    trajectory: Trajectory | None = field(default=None, repr=False)

    def as_dict(self):
        return {
            "id": self.id,
            "direction": self.direction,
            "seed": self.seed.tolist(),
            "classification": self.classification,
            "max_violation": self.max_violation,
            "drift": self.drift,
            "event": self.event,
            "samples": 0 if self.trajectory is None else len(self.trajectory),
        }


@dataclass
class MonotonicityCertificate:
    start: np.ndarray
    branches: list[Branch]
    verdict_supersolution: bool
    verdict_subsolution: bool
    label: str = "empirical"

    def forward(self):
        return [b for b in self.branches if b.direction == "forward"]

    def backward(self):
        return [b for b in self.branches if b.direction == "backward"]

    def as_dict(self):
        return {
            "start": self.start.tolist(),
            "label": self.label,
            "verdict_supersolution": "pass" if self.verdict_supersolution else "fail",
            "verdict_subsolution": "pass" if self.verdict_subsolution else "fail",
            "branches": [b.as_dict() for b in self.branches],
        }


def mono_slack(t, V0, tol_rel: float = 1e-6, floor: float = 5e-8):
    """Per-step slack (1 + |V0|) (tol_rel dt + floor).

    The floor absorbs integrator error on very short steps and the jump from
    landing on an attracting axis; genuine O(1) rates exceed it by orders of magnitude.
    """
    return (1.0 + abs(V0)) * (tol_rel * np.abs(np.diff(t)) + floor)


def classify(t, V, tol_rel: float = 1e-6, floor: float = 5e-8):
    """Classify V(t), sampled in increasing t, allowing ``mono_slack`` per step.

    Returns (classification, max_violation) where max_violation is the worst
    excess beyond the slack against the returned class (0 if it holds; for
    nonmonotone, the smaller of the two violations).
    """
    t = np.asarray(t, dtype=float)
    V = np.asarray(V, dtype=float)
    if len(V) < 2:
        return "constant", 0.0
    d = np.diff(V)
    slack = mono_slack(t, V[0], tol_rel, floor)
    drop = float(np.max(-d - slack, initial=0.0))  # violates nondecreasing
    rise = float(np.max(d - slack, initial=0.0))  # violates nonincreasing
    if drop <= 0 and rise <= 0:
        return "constant", 0.0
    if drop <= 0:
        return "nondecreasing", 0.0
    if rise <= 0:
        return "nonincreasing", 0.0
    return "nonmonotone", min(drop, rise)


def monotonicity_certificate(
    candidate: Candidate,
    system,
    x0,
    opts: IntegrationOptions | None = None,
    etas=(0.0, 1e-8, -1e-8, 1e-6, -1e-6),
    tol_rel: float = 1e-6,
    floor: float = 5e-8,
    keep_trajectories: bool = False,
) -> MonotonicityCertificate:
    """Integrate seeded branches both ways from x0 and classify V = H(x, grad U(x)) on each.

    Supersolution passes when some forward branch has V nondecreasing, subsolution
    when some forward branch has V nonincreasing.  Backward branches are classified
    in increasing time as well.
    """
    opts = opts or IntegrationOptions(horizon=1.0)
    fld = _as_field(system)
    x0 = np.asarray(x0, dtype=float)
    H0 = hamiltonian(fld, x0, candidate.gradient(x0), scale=opts.scale)
    if H0 <= opts.tol_H:
        raise SingularPoint(x0, H0, opts.tol_H)
    branches = []
    for direction in ("forward", "backward"):
        for seed in seed_offsets(candidate, x0, etas):
            tr = integrate(candidate, fld, x0, direction, opts, seed_offset=seed)
            t, V = (tr.t, tr.V) if direction == "forward" else (tr.t[::-1], tr.V[::-1])
            cls, viol = classify(t, V, tol_rel, floor)
            branches.append(
                Branch(
                    len(branches),
                    direction,
                    seed,
                    cls,
                    viol,
                    float(np.max(np.abs(tr.V - tr.V[0]))),
                    tr.event.kind,
                    tr if keep_trajectories else None,
                )
            )
    fwd = [b.classification for b in branches if b.direction == "forward"]
    return MonotonicityCertificate(
        x0,
        branches,
        any(c in ("constant", "nondecreasing") for c in fwd),
        any(c in ("constant", "nonincreasing") for c in fwd),
    )


# ---------------------------------------------------------------------------
# absolute minimality
# ---------------------------------------------------------------------------


def _quartic_bump(x, lo, hi):
    """prod_i 16 ((x_i - lo_i)(hi_i - x_i))^2 / w_i^4 and its gradient; zero with its gradient on the boundary."""
    w = hi - lo
    q = (x - lo) * (hi - x) / w**2
    b1 = 16.0 * q * q
    db1 = 32.0 * q * (hi + lo - 2.0 * x) / w**2
    n = x.shape[-1]
    val = np.prod(b1, axis=-1)
    grad = np.empty_like(x)
    for i in range(n):
        others = np.prod(np.delete(b1, i, axis=-1), axis=-1)
        grad[..., i] = db1[..., i] * others
    return val, grad


def _tent(x, lo, hi):
    """Distance to the box boundary and its a.e. gradient (first minimising face on ties)."""
    d = np.concatenate([x - lo, hi - x], axis=-1)
    k = np.argmin(d, axis=-1)
    n = x.shape[-1]
    grad = np.zeros_like(x)
    idx = np.arange(len(x))
    sign = np.where(k < n, 1.0, -1.0)
    grad[idx, k % n] = sign
    return d[idx, k], grad


@dataclass
class AMFReport:
    k_star: float
    trials: list[dict]
    tol_amf: float
    passed: bool
    refuting: list[dict]
    label: str = "empirical necessary condition"

    def as_dict(self):
        worst = min(self.trials, key=lambda r: r["sup_H"]) if self.trials else None
        return {
            "label": self.label,
            "k_star": self.k_star,
            "tol_amf": self.tol_amf,
            "passed": self.passed,
            "n_trials": len(self.trials),
            "worst_trial": worst,
            "refuting": self.refuting,
        }


def amf_necessary_test(
    candidate: Candidate,
    system,
    box,
    trials: int = 200,
    amplitude: float = 0.2,
    tol_amf: float = 1e-3,
    resolution: int | None = None,
    seed: int = 0,
    scale: float = 1.0,
    family: str = "mixed",
) -> AMFReport:
    """Compare sup H(x, grad W) against k* = sup H(x, grad U) for W = U + perturbation.

    The perturbation is beta_q * quartic bump + beta_t * tent, both zero on the
    box boundary, with betas uniform in [-amplitude, amplitude].  ``family``
    selects "quartic", "tent" or both ("mixed").  Sup norms are taken over a
    tensor grid covering the closed box.  A trial with sup H(grad W) < k* - tol
    exhibits a competitor that beats U.
    """
    fld = _as_field(system)
    box = np.asarray(box, dtype=float)
    n = box.shape[0]
    lo, hi = box[:, 0], box[:, 1]
    if resolution is None:
        resolution = 101 if n <= 2 else 41
    axes = [np.linspace(lo[i], hi[i], resolution) for i in range(n)]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    if not np.all(candidate.in_domain(X)):
        raise EvalOutsideDomain("amf test box must lie inside the C^1 domain")
    gU = candidate.gradient(X)
    S = fld.sigma(X)
    HU = np.sqrt(scale) * np.linalg.norm(np.einsum("ki,kij->kj", gU, S), axis=-1)
    k_star = float(np.max(HU))
    _, gq = _quartic_bump(X, lo, hi)
    _, gt = _tent(X, lo, hi)
    use_q = family in ("mixed", "quartic")
    use_t = family in ("mixed", "tent")
    if not (use_q or use_t):
        raise ValueError(f"unknown competitor family {family!r}")
    # w = gradW sigma is affine in the betas: w = wU + bq * wq + bt * wt
    wU = np.einsum("ki,kij->kj", gU, S)
    wq = np.einsum("ki,kij->kj", gq, S)
    wt = np.einsum("ki,kij->kj", gt, S)
    rng = np.random.default_rng(seed)
    out, refuting = [], []
    for k in range(trials):
        bq, bt = rng.uniform(-amplitude, amplitude, size=2)
        bq, bt = (bq if use_q else 0.0), (bt if use_t else 0.0)
        HW = np.sqrt(scale) * np.linalg.norm(wU + bq * wq + bt * wt, axis=-1)
        sup = float(np.max(HW))
        rec = {"trial": k, "beta_quartic": float(bq), "beta_tent": float(bt), "sup_H": sup}
        out.append(rec)
        if sup < k_star - tol_amf:
            refuting.append(rec)
    return AMFReport(k_star, out, tol_amf, not refuting, refuting)


# ---------------------------------------------------------------------------
# representation formula
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RepresentationResult:
    lhs: float
    rhs: float
    t1: float
    t2: float

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs)

    def as_dict(self):
        return {"lhs": self.lhs, "rhs": self.rhs, "t1": self.t1, "t2": self.t2, "gap": self.gap}


def representation_check(
    candidate: Candidate,
    system,
    box,
    x0,
    horizon: float = 50.0,
    scale: float = 1.0,
    tol_H: float = TOL_H,
) -> RepresentationResult:
    """Recover U(x0) from its values where the closed-loop trajectory meets the box boundary."""
    fld = _as_field(system)
    x0 = np.asarray(x0, dtype=float)
    H0 = hamiltonian(fld, x0, candidate.gradient(x0), scale=scale)
    if H0 <= tol_H:
        raise SingularPoint(x0, H0, tol_H)
    opts = IntegrationOptions(horizon=horizon, box=tuple(map(tuple, np.asarray(box, float))), scale=scale, tol_H=tol_H)
    fw = integrate(candidate, fld, x0, "forward", opts)
    bw = integrate(candidate, fld, x0, "backward", opts)
    for tr in (fw, bw):
        if tr.event.kind != "domain_exit":
            raise NoExit(f"{tr.direction} run ended with {tr.event.kind} at t={tr.event.t:.6g}")
    t2, t1 = fw.event.t, bw.event.t
    U0 = float(candidate.value(x0))
    if t2 - t1 == 0.0:
        return RepresentationResult(U0, U0, t1, t2)
    U1, U2 = float(bw.U[-1]), float(fw.U[-1])
    rhs = t2 / (t2 - t1) * U1 - t1 / (t2 - t1) * U2
    return RepresentationResult(U0, rhs, t1, t2)
