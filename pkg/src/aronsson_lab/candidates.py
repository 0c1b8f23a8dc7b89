"""Candidate value functions with exact first and second derivatives.

All evaluators broadcast over leading axes: ``x`` may be a single point of
shape (n,) or a batch of shape (..., n).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EvalOutsideDomain, HessianUnavailable
from .sysmodel import TOL_H, Poly, hamiltonian


class Candidate:
    n: int
    kind: str

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def hessian(self, x):
        raise NotImplementedError

    def in_domain(self, x) -> np.ndarray | bool:
        """True where the candidate is C^1."""
        x = np.asarray(x, dtype=float)
        out = np.ones(x.shape[:-1], dtype=bool)
        return out if out.ndim else bool(out)

    def hessian_available(self, x) -> np.ndarray | bool:
        return self.in_domain(x)

    def nonlipschitz_coords(self) -> tuple[int, ...]:
        """Coordinates i whose hyperplane {x_i = 0} carries a non-Lipschitz gradient."""
        return ()

    def evaluate(self, x):
        """(U, grad U, hess U or None) at a single point."""
        x = np.asarray(x, dtype=float)
        if not np.all(self.in_domain(x)):
            raise EvalOutsideDomain(f"{self.kind}: x={x.tolist()} outside the C^1 domain")
        hess = self.hessian(x) if np.all(self.hessian_available(x)) else None
        return self.value(x), self.gradient(x), hess

    def to_config(self) -> dict:
        raise NotImplementedError

    def __neg__(self) -> "Candidate":
        return Negated(self)

    def _check(self, x, need_hessian=False):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ValueError(f"{self.kind} expects points of dimension {self.n}, got {x.shape[-1]}")
        ok = self.in_domain(x)
        if not (ok if isinstance(ok, bool) else ok.all()):
            raise EvalOutsideDomain(f"{self.kind}: point outside the C^1 domain")
        if need_hessian and not np.all(self.hessian_available(x)):
            raise HessianUnavailable(f"{self.kind}: hessian unavailable at requested point")
        return x


def _scalar(a):
    return float(a) if np.ndim(a) == 0 else a


class Gauge(Candidate):
    """U(x) = (|x_h|^4 + 4 x_v^2)^(1/4) on R^{m+1} minus the origin."""

    kind = "gauge"

    def __init__(self, m: int):
        self.m = int(m)
        self.n = self.m + 1

    def _u(self, x):
        xh = x[..., : self.m]
        r2 = float(xh @ xh) if x.ndim == 1 else np.sum(xh * xh, axis=-1)
        return r2 * r2 + 4.0 * x[..., -1] ** 2, r2

    def in_domain(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return bool(x.any())
        return np.any(x != 0.0, axis=-1)

    def value(self, x):
        x = self._check(x)
        return _scalar(self._u(x)[0] ** 0.25)

    def grad_u(self, x, r2=None):
        x = np.asarray(x, dtype=float)
        if r2 is None:
            r2 = self._u(x)[1]
        g = np.empty_like(x)
        g[..., : self.m] = 4.0 * np.expand_dims(r2, -1) * x[..., : self.m]
        g[..., -1] = 8.0 * x[..., -1]
        return g

    def gradient(self, x):
        x = self._check(x)
        u, r2 = self._u(x)
        return self.grad_u(x, r2) / (4.0 * np.expand_dims(u, -1) ** 0.75)

    def hessian(self, x):
        # D^2 U = D^2 u / (4 u^{3/4}) - 3/16 grad u grad u^T / u^{7/4}; valid on {x_h = 0, x_v != 0} too
        x = self._check(x)
        u, r2 = map(np.asarray, self._u(x))
        xh = x[..., : self.m]
        D2u = np.zeros(x.shape + (self.n,))
        D2u[..., : self.m, : self.m] = 4.0 * r2[..., None, None] * np.eye(self.m) + 8.0 * xh[..., :, None] * xh[..., None, :]
        D2u[..., -1, -1] = 8.0
        gu = self.grad_u(x)
        return D2u / (4.0 * u[..., None, None] ** 0.75) - 3.0 / 16.0 * gu[..., :, None] * gu[..., None, :] / u[..., None, None] ** 1.75

    def to_config(self):
        return {"kind": "gauge", "m": self.m}


class AbsPower(Candidate):
    """U(x) = sum_i s_i |x_i|^alpha_i with alpha_i > 1.

    alpha = (4/3, 4/3), s = (+1, -1) gives |x|^{4/3} - |y|^{4/3}.
    """

    kind = "abspower"

    def __init__(self, exponents, signs):
        self.alpha = np.asarray(exponents, dtype=float)
        self.signs = np.asarray(signs, dtype=float)
        if self.alpha.shape != self.signs.shape or self.alpha.ndim != 1:
            raise ValueError("exponents and signs must be 1-d of equal length")
        if np.any(self.alpha <= 1):
            raise ValueError("abspower exponents must exceed 1")
        if not np.all(np.isin(self.signs, (-1.0, 1.0))):
            raise ValueError("signs must be +1 or -1")
        self.n = self.alpha.size

    def value(self, x):
        x = self._check(x)
        return _scalar(np.sum(self.signs * np.abs(x) ** self.alpha, axis=-1))

    def gradient(self, x):
        x = self._check(x)
        return self.signs * self.alpha * np.sign(x) * np.abs(x) ** (self.alpha - 1.0)

    def hessian_available(self, x):
        x = np.asarray(x, dtype=float)
        bad = (x == 0.0) & (self.alpha < 2.0)
        ok = ~np.any(bad, axis=-1)
        return ok if np.ndim(ok) else bool(ok)

    def hessian(self, x):
        x = self._check(x, need_hessian=True)
        with np.errstate(divide="ignore"):
            d = self.signs * self.alpha * (self.alpha - 1.0) * np.abs(x) ** (self.alpha - 2.0)
        d = np.where((x == 0.0) & (self.alpha == 2.0), self.signs * 2.0, d)
        d = np.where((x == 0.0) & (self.alpha > 2.0), 0.0, d)
        return d[..., :, None] * np.eye(self.n)

    def nonlipschitz_coords(self):
        return tuple(int(i) for i in np.flatnonzero(self.alpha < 2.0))

    def to_config(self):
        return {"kind": "abspower", "exponents": self.alpha.tolist(), "signs": self.signs.tolist()}


class Quadratic(Candidate):
    """U(x) = x^T Q x / 2."""

    kind = "quadratic"

    def __init__(self, Q):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[0] != Q.shape[1] or not np.allclose(Q, Q.T):
            raise ValueError("Q must be a symmetric square matrix")
        self.Q = Q
        self.n = Q.shape[0]

    def value(self, x):
        x = self._check(x)
        return _scalar(0.5 * np.einsum("...i,ij,...j->...", x, self.Q, x))

    def gradient(self, x):
        x = self._check(x)
        return x @ self.Q

    def hessian(self, x):
        x = self._check(x)
        return np.broadcast_to(self.Q, x.shape[:-1] + self.Q.shape).copy()

    def to_config(self):
        return {"kind": "quadratic", "Q": self.Q.tolist()}


class PolynomialCandidate(Candidate):
    kind = "polynomial"

    def __init__(self, poly: Poly):
        self.poly = poly
        self.n = poly.n
        self._g = tuple(poly.diff(k) for k in range(self.n))
        self._h = tuple(tuple(g.diff(k) for k in range(self.n)) for g in self._g)

    @classmethod
    def from_table(cls, n, table):
        return cls(Poly.from_table(n, table))

    def value(self, x):
        return self.poly(self._check(x))

    def gradient(self, x):
        x = self._check(x)
        return np.stack([np.asarray(g(x), dtype=float) for g in self._g], axis=-1)

    def hessian(self, x):
        x = self._check(x)
        return np.stack(
            [np.stack([np.asarray(h(x), dtype=float) for h in row], axis=-1) for row in self._h], axis=-2
        )

    def to_config(self):
        return {"kind": "polynomial", "n": self.n, "terms": self.poly.to_table()}


class Negated(Candidate):
    kind = "negated"

    def __init__(self, base: Candidate):
        self.base = base
        self.n = base.n

    def value(self, x):
        return -self.base.value(x)

    def gradient(self, x):
        return -self.base.gradient(x)

    def hessian(self, x):
        return -self.base.hessian(x)

    def in_domain(self, x):
        return self.base.in_domain(x)

    def hessian_available(self, x):
        return self.base.hessian_available(x)

    def nonlipschitz_coords(self):
        return self.base.nonlipschitz_coords()

    def __neg__(self):
        return self.base

    def to_config(self):
        return {"kind": "negated", "base": self.base.to_config()}


def from_config(cfg: dict) -> Candidate:
    kind = cfg["kind"]
    if kind == "gauge":
        return Gauge(cfg["m"])
    if kind == "abspower":
        return AbsPower(cfg["exponents"], cfg["signs"])
    if kind == "quadratic":
        return Quadratic(cfg["Q"])
    if kind == "polynomial":
        return PolynomialCandidate.from_table(cfg["n"], cfg["terms"])
    if kind == "negated":
        return Negated(from_config(cfg["base"]))
    raise ValueError(f"unknown candidate kind {kind!r}")


def example_counterexample() -> AbsPower:
    """|x|^{4/3} - |y|^{4/3}: a C^1 infinity-harmonic function that is not C^2."""
    return AbsPower([4 / 3, 4 / 3], [1, -1])


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValueAlongGradient:
    x: np.ndarray
    U: float
    gradU: np.ndarray
    H: float
    singular: bool


def value_V(candidate: Candidate, system, x, scale: float = 1.0, tol_H: float = TOL_H) -> ValueAlongGradient:
    """Bundle U, grad U and V(x) = H(x, grad U(x)) at a point."""
    x = np.asarray(x, dtype=float)
    U = candidate.value(x)
    g = candidate.gradient(x)
    H = hamiltonian(system, x, g, scale=scale)
    return ValueAlongGradient(x, float(U), g, float(H), bool(H <= tol_H))
