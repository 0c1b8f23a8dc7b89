"""Symmetric control systems x' = sigma(x) a with polynomial sigma.

The control set is the closed unit ball of R^m, so the Hamiltonian is
H(x, p) = sqrt(scale) * |p sigma(x)|.  ``scale`` is 1 everywhere except in
scenarios that need the H^2 = |p|^2 / 2 normalisation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, SingularPoint

TOL_H = 1e-12


# ---------------------------------------------------------------------------
# polynomials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Poly:
    """Multivariate polynomial stored as a tuple of (coefficient, exponents)."""

    n: int
    terms: tuple[tuple[float, tuple[int, ...]], ...] = ()

    def __post_init__(self):
        merged: dict[tuple[int, ...], float] = {}
        for c, e in self.terms:
            e = tuple(int(k) for k in e)
            if len(e) != self.n:
                raise DimensionMismatch(f"exponent vector {e} has length {len(e)}, expected {self.n}")
            if any(k < 0 for k in e):
                raise ValueError(f"negative exponent in {e}")
            c = float(c)
            if not np.isfinite(c):
                raise ValueError(f"non-finite coefficient {c}")
            merged[e] = merged.get(e, 0.0) + c
        terms = tuple((c, e) for e, c in sorted(merged.items()) if c != 0.0)
        object.__setattr__(self, "terms", terms)

    @classmethod
    def const(cls, n: int, c: float) -> "Poly":
        return cls(n, ((c, (0,) * n),))

    @classmethod
    def var(cls, n: int, k: int, c: float = 1.0) -> "Poly":
        e = [0] * n
        e[k] = 1
        return cls(n, ((c, tuple(e)),))

    @classmethod
    def from_table(cls, n: int, table) -> "Poly":
        """Build from ``[[coef, [e1, ..., en]], ...]`` or a bare number."""
        if isinstance(table, (int, float)):
            return cls.const(n, table)
        return cls(n, tuple((c, tuple(e)) for c, e in table))

    def to_table(self) -> list:
        return [[c, list(e)] for c, e in self.terms]

    @property
    def degree(self) -> int:
        return max((sum(e) for _, e in self.terms), default=0)

    def __call__(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise DimensionMismatch(f"point has dimension {x.shape[-1]}, polynomial expects {self.n}")
        out = np.zeros(x.shape[:-1])
        for c, e in self.terms:
            mono = np.ones(x.shape[:-1])
            for k, ek in enumerate(e):
                if ek:
                    mono = mono * x[..., k] ** ek
            out = out + c * mono
        return out if out.ndim else float(out)

    def diff(self, k: int) -> "Poly":
        """Exact partial derivative with respect to x_k."""
        terms = []
        for c, e in self.terms:
            if e[k]:
                e2 = list(e)
                e2[k] -= 1
                terms.append((c * e[k], tuple(e2)))
        return Poly(self.n, tuple(terms))


# ---------------------------------------------------------------------------
# sigma fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolyMatrixField:
    """sigma(x) as an n x m matrix of polynomials; f(x, a) = sigma(x) a."""

    n: int
    m: int
    entries: tuple[tuple[Poly, ...], ...]
    lipschitz_bound: float | None = None
    _d: tuple = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.entries) != self.n or any(len(row) != self.m for row in self.entries):
            raise DimensionMismatch(f"entries must be {self.n}x{self.m}")
        for row in self.entries:
            for p in row:
                if p.n != self.n:
                    raise DimensionMismatch("entry polynomial has wrong number of variables")
        if self.lipschitz_bound is not None and not self.lipschitz_bound >= 0:
            raise ValueError("lipschitz_bound must be >= 0")
        # dense monomial bases: sigma(x) = C @ monomials(x), likewise for D sigma
        polys = [self.entries[i][j] for i in range(self.n) for j in range(self.m)]
        dpolys = [p.diff(k) for p in polys for k in range(self.n)]
        object.__setattr__(self, "_d", (_basis(polys, self.n), _basis(dpolys, self.n)))

    @classmethod
    def from_tables(cls, tables, lipschitz_bound=None) -> "PolyMatrixField":
        n = len(tables)
        entries = tuple(tuple(Poly.from_table(n, t) for t in row) for row in tables)
        return cls(n, len(entries[0]), entries, lipschitz_bound)

    def to_tables(self) -> list:
        return [[p.to_table() for p in row] for row in self.entries]

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise DimensionMismatch(f"point has dimension {x.shape[-1]}, field expects {self.n}")
        return x

    def sigma(self, x) -> np.ndarray:
        """sigma(x), shape (..., n, m) for x of shape (..., n)."""
        x = self._check(x)
        return _eval_basis(self._d[0], x).reshape(x.shape[:-1] + (self.n, self.m))

    def dsigma(self, x) -> np.ndarray:
        """Exact derivative, shape (..., n, m, n) with [..., i, j, k] = d sigma_ij / d x_k."""
        x = self._check(x)
        return _eval_basis(self._d[1], x).reshape(x.shape[:-1] + (self.n, self.m, self.n))

    def f(self, x, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if a.shape[-1] != self.m:
            raise DimensionMismatch(f"control has dimension {a.shape[-1]}, field expects {self.m}")
        return np.einsum("...ij,...j->...i", self.sigma(x), a)

    def lipschitz_on_box(self, box, samples: int = 2000, seed: int = 0) -> float:
        """Sampled bound on the operator-norm Lipschitz constant of sigma over ``box``.

        Uses ||D sigma(x)[v]||_op <= ||J(x)||_2 with J the Jacobian of vec(sigma).
        """
        lo, hi = _box_arrays(box, self.n)
        rng = np.random.default_rng(seed)
        pts = lo + (hi - lo) * rng.random((samples, self.n))
        corners = np.array(list(itertools.product(*zip(lo, hi))))
        pts = np.vstack([pts, corners])
        J = self.dsigma(pts).reshape(len(pts), self.n * self.m, self.n)
        return float(np.max(np.linalg.norm(J, ord=2, axis=(1, 2))))

    def with_lipschitz(self, box, **kw) -> "PolyMatrixField":
        return PolyMatrixField(self.n, self.m, self.entries, self.lipschitz_on_box(box, **kw))


def _basis(polys, n):
    exps = sorted({e for p in polys for _, e in p.terms}) or [(0,) * n]
    index = {e: k for k, e in enumerate(exps)}
    C = np.zeros((len(polys), len(exps)))
    for r, p in enumerate(polys):
        for c, e in p.terms:
            C[r, index[e]] = c
    return np.array(exps, dtype=float), C


def _eval_basis(basis, x):
    E, C = basis
    mono = np.prod(x[..., None, :] ** E, axis=-1)
    return mono @ C.T


def _box_arrays(box, n):
    box = np.asarray(box, dtype=float)
    if box.shape != (n, 2):
        raise DimensionMismatch(f"box must have shape ({n}, 2), got {box.shape}")
    return box[:, 0], box[:, 1]


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemCatalogEntry:
    name: str
    field: PolyMatrixField
    m: int | None = None  # horizontal dimension for hormander/grushin
    B: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.field.n

    @property
    def horizontal(self) -> slice:
        """Indices of x_h; x_v is the last coordinate."""
        return slice(0, self.n - 1)


def isotropic(n: int) -> SystemCatalogEntry:
    P = [[Poly.const(n, float(i == j)) for j in range(n)] for i in range(n)]
    fld = PolyMatrixField(n, n, tuple(tuple(r) for r in P), lipschitz_bound=0.0)
    return SystemCatalogEntry("isotropic", fld, params={"n": n})


def hormander(m: int, B) -> SystemCatalogEntry:
    """sigma = [I_m ; (B x_h)^T], requires B^T = -B = B^{-1}."""
    B = np.asarray(B, dtype=float)
    if m % 2:
        raise ValueError("hormander system needs even m")
    if B.shape != (m, m):
        raise DimensionMismatch(f"B must be {m}x{m}")
    if not (np.allclose(B.T, -B, atol=1e-12, rtol=0) and np.allclose(B @ B.T, np.eye(m), atol=1e-12, rtol=0)):
        raise ValueError("B must satisfy B^T = -B = B^{-1}")
    n = m + 1
    rows = [[Poly.const(n, float(i == j)) for j in range(m)] for i in range(m)]
    # last row entry j is (B x_h)_j = sum_k B_jk x_k
    last = [Poly(n, tuple((B[j, k], _unit(n, k)) for k in range(m))) for j in range(m)]
    rows.append(last)
    fld = PolyMatrixField(n, m, tuple(tuple(r) for r in rows), lipschitz_bound=1.0)
    return SystemCatalogEntry("hormander", fld, m=m, B=B, params={"m": m, "B": B.tolist()})


def grushin(m: int) -> SystemCatalogEntry:
    """sigma = [[I_m, 0], [0, x_h^T]], an (m+1) x 2m matrix."""
    n = m + 1
    rows = []
    for i in range(m):
        rows.append([Poly.const(n, float(i == j)) for j in range(m)] + [Poly(n)] * m)
    rows.append([Poly(n)] * m + [Poly.var(n, k) for k in range(m)])
    fld = PolyMatrixField(n, 2 * m, tuple(tuple(r) for r in rows), lipschitz_bound=1.0)
    return SystemCatalogEntry("grushin", fld, m=m, params={"m": m})


def custom(tables, lipschitz_bound=None) -> SystemCatalogEntry:
    fld = PolyMatrixField.from_tables(tables, lipschitz_bound)
    return SystemCatalogEntry("custom", fld, params={"tables": fld.to_tables()})


def standard_B(m: int) -> np.ndarray:
    """Block-diagonal rotation by +90 degrees, the canonical B for even m."""
    B = np.zeros((m, m))
    for k in range(0, m, 2):
        B[k, k + 1] = -1.0
        B[k + 1, k] = 1.0
    return B


def _unit(n, k):
    e = [0] * n
    e[k] = 1
    return tuple(e)


def _as_field(system) -> PolyMatrixField:
    return system.field if isinstance(system, SystemCatalogEntry) else system


# ---------------------------------------------------------------------------
# Hamiltonian-level quantities
# ---------------------------------------------------------------------------


def _p_sigma(fld, x, p):
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != fld.n:
        raise DimensionMismatch(f"covector has dimension {p.shape[-1]}, field expects {fld.n}")
    S = fld.sigma(x)
    if p.ndim == 1 and S.ndim == 2:
        return S, p @ S
    return S, np.einsum("...i,...ij->...j", p, S)


def hamiltonian(system, x, p, mode: str = "degree1", scale: float = 1.0):
    """H(x, p) = sqrt(scale) |p sigma(x)|, or its square for ``mode='squared'``."""
    fld = _as_field(system)
    _, w = _p_sigma(fld, x, p)
    h2 = scale * np.sum(w * w, axis=-1)
    if mode == "squared":
        return h2 if np.ndim(h2) else float(h2)
    if mode != "degree1":
        raise ValueError(f"unknown Hamiltonian mode {mode!r}")
    h = np.sqrt(h2)
    return h if np.ndim(h) else float(h)


def hamiltonian_gradient_p(system, x, p, mode: str = "degree1", scale: float = 1.0, tol_H: float = TOL_H):
    """Gradient in p of H (degree1) or of H^2 (squared)."""
    fld = _as_field(system)
    S, w = _p_sigma(fld, x, p)
    # scale * sigma sigma^T p^T
    g = scale * (S @ w if S.ndim == 2 else np.einsum("...ij,...j->...i", S, w))
    if mode == "squared":
        return 2.0 * g
    if mode != "degree1":
        raise ValueError(f"unknown Hamiltonian mode {mode!r}")
    if w.ndim == 1:
        H = math.sqrt(scale * float(w @ w))
        if H <= tol_H:
            raise SingularPoint(x, float(H), tol_H)
        return g / H
    H = np.sqrt(scale * np.sum(w * w, axis=-1))
    if np.any(H <= tol_H):
        k = int(np.argmax(H <= tol_H))
        raise SingularPoint(np.asarray(x)[k], float(H[k]), tol_H)
    return g / H[..., None]


def feedback(system, x, gradU, scale: float = 1.0, tol_H: float = TOL_H) -> np.ndarray:
    """Closed-loop control a_x with sigma(x) a_x = -H_p(x, grad U(x)).

    |a_x| = sqrt(scale), i.e. a unit vector for the default Hamiltonian.
    """
    fld = _as_field(system)
    _, w = _p_sigma(fld, x, gradU)
    nw = float(np.linalg.norm(w))
    if np.sqrt(scale) * nw <= tol_H:
        raise SingularPoint(x, float(np.sqrt(scale) * nw), tol_H)
    return -np.sqrt(scale) * w / nw


@dataclass(frozen=True)
class Regular:
    H: float
    singular = False


@dataclass(frozen=True)
class Singular:
    H: float
    singular = True


def singular_indicator(system, x, gradU, scale: float = 1.0, tol_H: float = TOL_H):
    H = hamiltonian(system, x, gradU, scale=scale)
    return Singular(H) if H <= tol_H else Regular(H)


# ---------------------------------------------------------------------------
# control sampling and evasion
# ---------------------------------------------------------------------------


def sphere_controls(m: int, count: int | None = None) -> np.ndarray:
    """Deterministic, antipodally symmetric sample of the unit sphere in R^m."""
    if m == 1:
        return np.array([[1.0], [-1.0]])
    if m == 2:
        count = 64 if count is None else count
        if count % 2:
            raise ValueError("control count must be even to keep -A = A")
        th = 2 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(th), np.sin(th)])
    if m == 3:
        # 11 latitude rings (the middle one is the equator) of 24 longitudes plus the poles: 266 points
        n_lat, n_lon = (11, 24) if count is None else _lat_lon_for(count)
        pts = [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]
        for i in range(1, n_lat + 1):
            th = np.pi * i / (n_lat + 1)
            for j in range(n_lon):
                ph = 2 * np.pi * j / n_lon
                pts.append([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
        return np.array(pts)
    # m >= 4: normalised nonzero points of {-1, 0, 1}^m
    P = np.array([v for v in itertools.product((-1.0, 0.0, 1.0), repeat=m) if any(v)])
    return P / np.linalg.norm(P, axis=1, keepdims=True)


def _lat_lon_for(count):
    # odd ring counts keep the equator; even longitude counts keep antipodal symmetry
    best = None
    for n_lat in range(1, 64, 2):
        n_lon, r = divmod(count - 2, n_lat)
        if r == 0 and n_lon % 2 == 0 and n_lon >= 4:
            if best is None or abs(n_lon - 2 * n_lat) < abs(best[1] - 2 * best[0]):
                best = (n_lat, n_lon)
    if best is None:
        raise ValueError(f"cannot build a symmetric lat-long grid with {count} points")
    return best


def evasion_check(entry: SystemCatalogEntry, x, controls: Sequence | None = None) -> float:
    """Largest |x_h-component of f(x, a)| over sampled unit controls.

    A positive value means f(x, A) is not tangent to the singular manifold {x_h = 0}.
    """
    x = np.asarray(x, dtype=float)
    A = sphere_controls(entry.field.m) if controls is None else np.asarray(controls, dtype=float)
    F = entry.field.f(np.broadcast_to(x, (len(A), x.size)), A)
    return float(np.max(np.linalg.norm(F[:, entry.horizontal], axis=1)))
