import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from aronsson_lab import candidates as cd
from aronsson_lab import dynamics as dy
from aronsson_lab import sysmodel as sm

K = 2 * math.sqrt(2) / 3
HALF = dict(mode="squared", scale=0.5)


def counterexample_run(x0, **kw):
    opts = dy.IntegrationOptions(horizon=1.0, **HALF)
    return dy.integrate(cd.example_counterexample(), sm.isotropic(2), x0, "forward", opts, **kw)


# --- closed-form trajectories ---------------------------------------------------


def test_on_axis_branch_matches_closed_form():
    tr = counterexample_run([1.0, 0.0])
    t = tr.t
    assert tr.event.kind == "horizon" and t[-1] == pytest.approx(1.0)
    assert np.max(np.abs(tr.x[:, 0] - (1 - 8 * t / 9) ** 1.5)) <= 1e-6
    assert np.all(tr.x[:, 1] == 0.0)
    assert np.max(np.abs(tr.V - K * np.sqrt(1 - 8 * t / 9))) <= 1e-6


def test_on_axis_branch_midpoint():
    tr = dy.integrate(
        cd.example_counterexample(), sm.isotropic(2), [1.0, 0.0], opts=dy.IntegrationOptions(horizon=0.5, **HALF)
    )
    assert tr.x[-1, 0] == pytest.approx((5 / 9) ** 1.5, abs=1e-6)
    assert (5 / 9) ** 1.5 == pytest.approx(0.414086, abs=1e-6)


def test_vertical_branch_grows():
    tr = counterexample_run([0.0, 1.0])
    assert np.max(np.abs(tr.x[:, 1] - (1 + 8 * tr.t / 9) ** 1.5)) <= 1e-6
    assert np.max(np.abs(tr.V - K * np.sqrt(1 + 8 * tr.t / 9))) <= 1e-6
    assert np.all(np.diff(tr.V) > 0)


def test_seeded_branch_has_constant_V():
    runs = [counterexample_run([1.0, 0.0], seed_offset=s) for s in dy.seed_offsets(cd.example_counterexample(), [1.0, 0.0])[1:]]
    drifts = [np.max(np.abs(r.V - r.V[0])) for r in runs]
    assert min(drifts) <= 1e-6


def test_hormander_gauge_hits_at_unit_time(hormander2):
    tr = dy.integrate(cd.Gauge(2), hormander2, [1.0, 0.0, 0.0], opts=dy.IntegrationOptions(horizon=3.0, target_radius=1e-3))
    assert tr.event.kind == "target_hit"
    assert dy.hit_time(tr) == pytest.approx(1.0, abs=1e-3)
    assert np.linalg.norm(tr.x[-1]) == pytest.approx(1e-3, rel=1e-6)


def test_domain_exit_has_no_hit_time(grushin1):
    tr = dy.integrate(cd.Gauge(1), grushin1, [1.0, 0.3], "backward", dy.IntegrationOptions(horizon=5.0, box=((0.5, 1.5), (-1, 1))))
    assert tr.event.kind == "domain_exit"
    assert dy.hit_time(tr) is None
    assert tr.event.t < 0
    assert np.all(tr.x[-1] >= [0.5, -1]) and np.all(tr.x[-1] <= [1.5, 1])


def test_start_inside_target(grushin1):
    tr = dy.integrate(cd.Gauge(1), grushin1, [1e-4, 0.0], opts=dy.IntegrationOptions(target_radius=1e-3))
    assert dy.hit_time(tr) == 0.0


def test_singular_start_is_captured(grushin1):
    tr = dy.integrate(cd.Gauge(1), grushin1, [0.0, 0.5])
    assert tr.event.kind == "singular_capture" and tr.event.t == 0.0


def test_seed_offsets():
    U = cd.example_counterexample()
    seeds = dy.seed_offsets(U, [1.0, 0.0])
    assert len(seeds) == 5
    assert all(s[0] == 0.0 for s in seeds)
    assert len(dy.seed_offsets(U, [1.0, 0.5])) == 1
    assert len(dy.seed_offsets(cd.Gauge(1), [0.0, 0.5])) == 1


def test_csv_columns(tmp_path, hormander2):
    tr = dy.integrate(cd.Gauge(2), hormander2, [1.0, 0.2, 0.1], opts=dy.IntegrationOptions(horizon=0.2))
    tr.to_csv(tmp_path / "t.csv")
    with open(tmp_path / "t.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "x1", "x2", "x3", "U", "V", "a1", "a2", "event"]
    assert rows[-1][-1] == "horizon"
    assert len(rows) == len(tr) + 1


# --- invariants -------------------------------------------------------------------


def test_time_monotone_and_step_sanity(grushin1):
    U = cd.Gauge(1)
    F = dy.ClosedLoop(U, grushin1)
    for direction in ("forward", "backward"):
        tr = dy.integrate(U, grushin1, [1.0, 0.4], direction, dy.IntegrationOptions(horizon=0.8))
        dt = np.diff(tr.t)
        assert np.all(dt > 0) if direction == "forward" else np.all(dt < 0)
        speed = np.array([np.linalg.norm(F(x)) for x in tr.x])
        step = np.linalg.norm(np.diff(tr.x, axis=0), axis=1)
        assert np.all(step <= np.abs(dt) * np.maximum(speed[:-1], speed[1:]) * 1.01 + 1e-12)


@pytest.mark.parametrize("which", [0, 1])
def test_energy_slope_identity(which, gauge_pairs):
    e, U = gauge_pairs[which]
    x0 = [1.0, 0.5] if e.n == 2 else [1.0, 0.3, 0.2]
    tr = dy.integrate(U, e, x0, opts=dy.IntegrationOptions(horizon=0.9))
    dt = np.diff(tr.t)
    assert np.all(np.abs(np.diff(tr.U) + tr.V[:-1] * dt) <= 1e-6 * dt)
    assert np.all(np.diff(tr.U) < 0)


def test_reproducible_bitwise():
    a = counterexample_run([1.0, 0.0], seed_offset=[0.0, 1e-8])
    b = counterexample_run([1.0, 0.0], seed_offset=[0.0, 1e-8])
    assert np.array_equal(a.t, b.t) and np.array_equal(a.x, b.x) and np.array_equal(a.V, b.V)


@given(st.floats(0.3, 1.4), st.floats(-1.0, 1.0), st.sampled_from([0, 1]))
def test_reach_time_bound(r, xv, which):
    e = sm.grushin(1) if which == 0 else sm.hormander(2, sm.standard_B(2))
    U = cd.Gauge(e.n - 1)
    x0 = np.array([r, xv]) if e.n == 2 else np.array([r * 0.6, r * 0.8, xv])
    V0 = sm.hamiltonian(e, x0, U.gradient(x0))
    tr = dy.integrate(U, e, x0, opts=dy.IntegrationOptions(horizon=4 * U.value(x0) / V0 + 1, target_radius=1e-3))
    assert tr.event.kind == "target_hit"
    assert dy.hit_time(tr) <= U.value(x0) / V0 + 5e-3


def test_matches_scipy_reference(hormander2):
    U = cd.Gauge(2)
    F = dy.ClosedLoop(U, hormander2)
    x0 = np.array([1.1, -0.3, 0.4])
    tr = dy.integrate(U, hormander2, x0, opts=dy.IntegrationOptions(horizon=0.7))
    ref = solve_ivp(lambda t, x: F(x), (0, 0.7), x0, method="DOP853", rtol=1e-12, atol=1e-14, dense_output=True)
    assert np.max(np.abs(ref.sol(tr.t).T - tr.x)) <= 1e-7


def test_backward_run_is_reversed_forward(grushin1):
    U = cd.Gauge(1)
    fw = dy.integrate(U, grushin1, [1.0, 0.2], opts=dy.IntegrationOptions(horizon=0.5))
    bw = dy.integrate(U, grushin1, fw.x[-1], "backward", dy.IntegrationOptions(horizon=0.5))
    assert np.allclose(bw.x[-1], [1.0, 0.2], atol=1e-7)
