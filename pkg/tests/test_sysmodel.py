import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aronsson_lab import candidates as cd
from aronsson_lab import sysmodel as sm
from aronsson_lab.errors import DimensionMismatch, SingularPoint

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
systems = st.sampled_from(["grushin1", "grushin2", "hormander2", "hormander4", "iso3"])


def make(name):
    return {
        "grushin1": lambda: sm.grushin(1),
        "grushin2": lambda: sm.grushin(2),
        "hormander2": lambda: sm.hormander(2, sm.standard_B(2)),
        "hormander4": lambda: sm.hormander(4, sm.standard_B(4)),
        "iso3": lambda: sm.isotropic(3),
    }[name]()


# --- polynomials --------------------------------------------------------------


def test_poly_merges_and_differentiates():
    p = sm.Poly.from_table(2, [(2.0, (2, 1)), (1.0, (2, 1)), (-1.0, (0, 0))])
    assert p.to_table() == [[-1.0, [0, 0]], [3.0, [2, 1]]]
    assert p(np.array([2.0, 3.0])) == pytest.approx(3 * 4 * 3 - 1)
    dx = p.diff(0)
    assert dx(np.array([2.0, 3.0])) == pytest.approx(6 * 2 * 3)
    assert p.diff(1).diff(1)(np.array([5.0, 7.0])) == 0.0


def test_poly_rejects_bad_exponents():
    with pytest.raises(ValueError):
        sm.Poly.from_table(2, [(1.0, (1,))])
    with pytest.raises(ValueError):
        sm.Poly.from_table(2, [(float("nan"), (1, 0))])


@given(arrays(float, 3, elements=finite))
def test_dsigma_matches_finite_differences(x):
    fld = sm.grushin(2).field
    h = 1e-6
    D = fld.dsigma(x)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (fld.sigma(x + e) - fld.sigma(x - e)) / (2 * h)
        assert np.allclose(D[..., k], fd, atol=1e-6)


def test_catalog_shapes():
    assert sm.grushin(1).field.sigma(np.array([1.0, 2.0])).tolist() == [[1, 0], [0, 1]]
    s = sm.grushin(2).field.sigma(np.array([1.0, 2.0, 3.0]))
    assert s.shape == (3, 4)
    assert np.allclose(s, [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 2]])
    h = sm.hormander(2, sm.standard_B(2)).field.sigma(np.array([1.0, 0.0, 1.0]))
    B = sm.standard_B(2)
    assert np.allclose(h[:2], np.eye(2))
    assert np.allclose(h[2], B @ np.array([1.0, 0.0]))
    assert np.allclose(sm.isotropic(3).field.sigma(np.zeros(3)), np.eye(3))


def test_hormander_validation():
    with pytest.raises(ValueError):
        sm.hormander(3, np.eye(3))
    with pytest.raises(ValueError):
        sm.hormander(2, np.eye(2))  # symmetric, not skew
    with pytest.raises(ValueError):
        sm.hormander(2, 2 * sm.standard_B(2))  # skew but not orthogonal


def test_custom_round_trip():
    entry = sm.grushin(1)
    again = sm.custom(entry.field.to_tables())
    x = np.random.default_rng(1).normal(size=(20, 2))
    assert np.allclose(again.field.sigma(x), entry.field.sigma(x))


def test_lipschitz_bound_on_box():
    L = sm.grushin(1).field.lipschitz_on_box([[-1, 1], [-1, 1]])
    assert L == pytest.approx(1.0)
    assert sm.isotropic(2).field.lipschitz_on_box([[-1, 1], [-1, 1]]) == 0.0


# --- Hamiltonian oracles --------------------------------------------------------


def test_hamiltonian_grushin_closed_form():
    H2 = sm.hamiltonian(sm.grushin(1), np.array([1.0, 2.0]), np.array([4.0, 16.0]), mode="squared")
    assert H2 == pytest.approx(272.0, rel=1e-14)


def test_hamiltonian_hormander_direct():
    H = sm.hamiltonian(sm.hormander(2, sm.standard_B(2)), np.array([1.0, 0.0, 1.0]), np.array([4.0, 0.0, 8.0]))
    assert H == pytest.approx(math.sqrt(80), rel=1e-14)


def test_zero_covector():
    assert sm.hamiltonian(sm.grushin(1), np.array([0.3, 1.0]), np.zeros(2)) == 0.0


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        sm.hamiltonian(sm.grushin(1), np.array([1.0, 2.0]), np.zeros(3))


def test_squared_gradient_with_half_scale():
    g = sm.hamiltonian_gradient_p(sm.isotropic(2), np.array([1.0, 0.0]), np.array([4 / 3, 0.0]), mode="squared", scale=0.5)
    assert np.allclose(g, [4 / 3, 0.0])


def test_degree1_gradient_singular():
    with pytest.raises(SingularPoint):
        sm.hamiltonian_gradient_p(sm.grushin(1), np.array([0.0, 1.0]), np.array([0.0, 1.0]))


def test_feedback_hormander():
    g = np.array([1.0, 0.0, 2.0]) / 5**0.75
    a = sm.feedback(sm.hormander(2, sm.standard_B(2)), np.array([1.0, 0.0, 1.0]), g)
    assert np.allclose(a, -np.array([1.0, 2.0]) / math.sqrt(5), atol=1e-12)


def test_feedback_grushin_axis():
    a = sm.feedback(sm.grushin(1), np.array([1.0, 0.0]), np.array([1.0, 0.0]))
    assert np.allclose(a, [-1.0, 0.0])


def test_feedback_consistency_grushin_point():
    x = np.array([1.0, 2.0])
    g = np.array([1.0, 4.0]) / 17**0.75
    fld = sm.grushin(1)
    a = sm.feedback(fld, x, g)
    Hp = sm.hamiltonian_gradient_p(fld, x, g)
    assert np.allclose(fld.field.sigma(x) @ a, -Hp, atol=1e-12)


def test_singular_indicator_examples(grushin1, hormander2):
    U1, U2 = cd.Gauge(1), cd.Gauge(2)
    x = np.array([0.0, 0.7])
    assert isinstance(sm.singular_indicator(grushin1, x, U1.gradient(x)), sm.Singular)
    x = np.array([1.0, 2.0])
    r = sm.singular_indicator(grushin1, x, U1.gradient(x))
    assert isinstance(r, sm.Regular) and r.H == pytest.approx(17**-0.25, rel=1e-12)
    x = np.array([0.0, 0.0, 1.0])
    assert isinstance(sm.singular_indicator(hormander2, x, U2.gradient(x)), sm.Singular)


@pytest.mark.parametrize("entry,x", [("grushin1", [0.0, 1.0]), ("hormander2", [0.0, 0.0, 1.0]), ("iso3", [0.3, -1.0, 2.0])])
def test_evasion(entry, x):
    assert sm.evasion_check(make(entry), np.array(x)) == pytest.approx(1.0)


@pytest.mark.parametrize("m,count", [(1, 2), (2, 64), (3, 266)])
def test_sphere_controls_symmetric(m, count):
    A = sm.sphere_controls(m)
    assert A.shape == (count, m)
    assert np.allclose(np.linalg.norm(A, axis=1), 1.0)
    # -A is a subset of A
    for a in A:
        assert np.min(np.linalg.norm(A + a, axis=1)) < 1e-12


# --- properties -----------------------------------------------------------------


@given(systems, st.integers(0, 2**32 - 1))
def test_symmetry_and_nonnegativity(name, seed):
    e = make(name)
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(50, e.n))
    p = rng.normal(size=(50, e.n))
    H = sm.hamiltonian(e, x, p)
    assert np.all(H >= 0)
    assert np.array_equal(H, sm.hamiltonian(e, x, -p))


@given(systems, st.integers(0, 2**32 - 1), st.floats(1e-3, 10.0))
def test_positive_homogeneity(name, seed, lam):
    e = make(name)
    rng = np.random.default_rng(seed)
    x, p = rng.normal(size=(2, 20, e.n))
    for mode, r in (("degree1", 1), ("squared", 2)):
        H = sm.hamiltonian(e, x, p, mode=mode)
        assert np.allclose(sm.hamiltonian(e, x, lam * p, mode=mode), lam**r * H, rtol=1e-12, atol=0)


@given(systems, st.integers(0, 2**32 - 1), st.floats(0.1, 4.0))
def test_euler_identity(name, seed, scale):
    e = make(name)
    rng = np.random.default_rng(seed)
    x, p = rng.normal(size=(2, e.n))
    H = sm.hamiltonian(e, x, p, scale=scale)
    if H > 1e-6:
        assert p @ sm.hamiltonian_gradient_p(e, x, p, scale=scale) == pytest.approx(H, rel=1e-10)
    H2 = sm.hamiltonian(e, x, p, mode="squared", scale=scale)
    assert p @ sm.hamiltonian_gradient_p(e, x, p, mode="squared", scale=scale) == pytest.approx(2 * H2, rel=1e-10, abs=1e-14)


@given(systems, st.integers(0, 2**32 - 1))
def test_feedback_consistency(name, seed):
    e = make(name)
    rng = np.random.default_rng(seed)
    x, p = rng.normal(size=(2, e.n))
    if sm.hamiltonian(e, x, p) <= 1e-6:
        return
    a = sm.feedback(e, x, p)
    assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-10)
    assert np.allclose(e.field.sigma(x) @ a + sm.hamiltonian_gradient_p(e, x, p), 0.0, atol=1e-10)


@pytest.mark.parametrize("fixture", ["grushin1", "hormander2"])
def test_closed_form_H2_of_u(fixture, request):
    e = request.getfixturevalue(fixture)
    m = e.n - 1
    U = cd.Gauge(m)
    x = np.random.default_rng(3).normal(size=(1000, e.n))
    u = U._u(x)[0]
    H2 = sm.hamiltonian(e, x, U.grad_u(x), mode="squared")
    r2 = np.sum(x[:, :m] ** 2, axis=1)
    assert np.allclose(H2, 16 * r2 * u, rtol=1e-10, atol=0)
