import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from centralplace.economy import DegenerateIndustryError, ModelParams, NumericError, utility
from centralplace.solver import (
    DIRECTION_RULE,
    SolverConfig,
    armijo_step,
    check_equilibrium,
    default_gamma_bar,
    default_gamma_min,
    evaluate,
    in_feasible_set,
    merit,
    pd_map,
    project_feasible,
    solve_equilibrium,
)

from . import oracles


def random_h(rng, R, I, H=1000.0):
    h = rng.random((R, I)) + 1e-3
    return h / h.sum() * H


# projection -------------------------------------------------------------------


def test_projection_examples():
    np.testing.assert_allclose(project_feasible(np.array([1.0, 1.0]), 1.0), [0.5, 0.5], rtol=1e-15)
    np.testing.assert_allclose(project_feasible(np.array([2.0, 0.0]), 1.0), [1.0, 0.0], atol=1e-15)
    x = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(project_feasible(x, 1.0), x, atol=1e-15)


def test_projection_matches_oracle():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(300):
        n = int(rng.integers(1, 9))
        x = rng.normal(0, 3, n) * rng.choice([0.01, 1, 100])
        H = float(rng.uniform(0.1, 50))
        z = project_feasible(x, H)
        worst = max(worst, np.max(np.abs(z - oracles.project_simplex(list(x), H))))
    assert worst < 1e-10


@settings(max_examples=200, deadline=None)
@given(
    x=st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=40),
    H=st.floats(1e-3, 1e4),
)
def test_projection_properties(x, H):
    x = np.array(x)
    z = project_feasible(x, H)
    assert np.all(z >= 0)
    assert abs(z.sum() - H) <= 1e-12 * max(H, np.abs(x).max(initial=0)) * x.size + 1e-12 * H
    np.testing.assert_allclose(project_feasible(z, H), z, atol=1e-12 * max(1.0, H))
    # optimality: z = max(x - lam, 0) for a single threshold
    pos = z > 0
    lam = x[pos] - z[pos]
    assert np.ptp(lam) <= 1e-9 * max(1.0, np.abs(x).max())
    assert np.all(x[~pos] <= lam.mean() + 1e-9 * max(1.0, np.abs(x).max()))


def test_projection_shape_and_errors():
    z = project_feasible(np.ones((3, 2)), 6.0)
    assert z.shape == (3, 2)
    with pytest.raises(NumericError):
        project_feasible(np.array([np.inf, 0.0]), 1.0)
    with pytest.raises(ValueError):
        project_feasible(np.array([1.0]), 0.0)


def test_projection_terminates_on_projected_input():
    # re-projecting these outputs once cycled between two active sets
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(1, 11))
        x = rng.normal(0, 1, n) * 10.0 ** rng.integers(-2, 3)
        H = float(rng.uniform(0.01, 100))
        z = project_feasible(x, H)
        np.testing.assert_allclose(project_feasible(z, H), z, atol=1e-12 * max(1.0, H))


def test_projection_huge_entries():
    x = np.array([1e34, 1e34 - 1e18, -5.0])
    z = project_feasible(x, 10.0)
    assert z.sum() == pytest.approx(10.0, rel=1e-12)
    assert z[2] == 0.0


# F and G ----------------------------------------------------------------------


def test_single_cell_trivial():
    p = ModelParams(R=1, sigmas=(2.0,))
    h = np.array([[1000.0]])
    np.testing.assert_array_equal(pd_map(h, p), h)
    assert merit(h, p) == 0.0
    out, diag = solve_equilibrium(h, p)
    assert diag.converged and diag.iterations == 0 and diag.G == 0.0
    np.testing.assert_array_equal(out, h)


@settings(max_examples=40, deadline=None)
@given(R=st.integers(1, 12), I=st.integers(1, 3), seed=st.integers(0, 10_000))
def test_pd_map_mass_and_merit_nonnegative(R, I, seed):
    rng = np.random.default_rng(seed)
    p = ModelParams(R=R, sigmas=tuple(rng.uniform(1.1, 20, I)))
    h = random_h(rng, R, I)
    F = pd_map(h, p)
    assert F.sum() == pytest.approx(p.H, rel=1e-12)
    assert np.all(F >= 0)
    assert merit(h, p) >= -1e-12


def test_merit_positive_off_equilibrium():
    rng = np.random.default_rng(4)
    p = ModelParams(R=8, sigmas=(1.5, 4.0))
    assert merit(random_h(rng, 8, 2), p) > 0


def test_merit_formula():
    rng = np.random.default_rng(9)
    p = ModelParams(R=5, sigmas=(2.0, 3.0))
    h = random_h(rng, 5, 2)
    v = utility(h, p)
    F = np.array(oracles.project_simplex(list((h + v).ravel()), p.H)).reshape(h.shape)
    G = -np.sum(v * (h - F)) - 0.5 * np.sum((F - h) ** 2)
    assert merit(h, p) == pytest.approx(G, rel=1e-10)


def test_evaluate_degenerate():
    p = ModelParams(R=3, sigmas=(2.0, 3.0))
    h = np.zeros((3, 2))
    h[:, 0] = 1000 / 3
    with pytest.raises(DegenerateIndustryError):
        evaluate(h, p)


# line search ------------------------------------------------------------------


def naive_armijo(h, params, cfg, n):
    """Sequential Armijo search straight from the written rule."""
    G0 = merit(h, params)
    d = pd_map(h, params) - h
    dd = float(np.sum(d * d))
    gmin = cfg.gamma_min_schedule(n)
    for k in range(cfg.k_max + 1):
        t = cfg.gamma**k
        if t <= gmin:
            break
        try:
            Gt = merit(h + t * d, params)
        except (DegenerateIndustryError, NumericError):
            continue
        if Gt - G0 <= -cfg.delta * t * dd:
            return h + t * d, t, k, False
    t = cfg.gamma_bar_rule(G0)
    return h + t * d, t, None, True


@pytest.mark.parametrize("seed", range(6))
def test_armijo_matches_sequential_rule(seed):
    rng = np.random.default_rng(seed)
    p = ModelParams(R=int(rng.integers(3, 12)), sigmas=tuple(rng.uniform(1.2, 12, 2)))
    cfg = SolverConfig()
    h = random_h(rng, p.R, 2)
    for n in range(1, 30):
        res = armijo_step(evaluate(h, p), p, cfg, n)
        ref, t, k, esc = naive_armijo(h, p, cfg, n)
        assert res.escaped == esc
        assert res.step == t
        if not esc:
            assert res.k == k
        np.testing.assert_allclose(res.point.h, ref, rtol=1e-12, atol=1e-12)
        h = res.point.h


def test_armijo_zero_direction():
    p = ModelParams(R=1, sigmas=(2.0,))
    cur = evaluate(np.array([[1000.0]]), p)
    res = armijo_step(cur, p, SolverConfig(), 1)
    assert res.k == 0 and not res.escaped
    np.testing.assert_array_equal(res.point.h, cur.h)


def test_armijo_full_step_on_steep_descent():
    # two locations, one industry: pushing mass toward the better location
    # cuts G sharply, so k = 0 is accepted
    p = ModelParams(R=2, sigmas=(5.0,), phi=0.1)
    h = np.array([[600.0], [400.0]])
    cur = evaluate(h, p)
    cfg = SolverConfig()
    res = armijo_step(cur, p, cfg, 1)
    d = cur.direction
    assert res.k == 0 and res.step == 1.0
    assert merit(h + d, p) - cur.G <= -cfg.delta * np.sum(d * d)


def test_armijo_escape_when_no_step_admissible():
    rng = np.random.default_rng(1)
    p = ModelParams(R=6, sigmas=(2.0, 3.0))
    cfg = SolverConfig(gamma_min_schedule=lambda n: 2.0)
    cur = evaluate(random_h(rng, 6, 2), p)
    res = armijo_step(cur, p, cfg, 1)
    gbar = default_gamma_bar(cur.G)
    assert res.escaped and res.step == gbar and res.n_trials == 1
    np.testing.assert_allclose(res.point.h, cur.h + gbar * cur.direction, rtol=1e-13, atol=1e-12)


def test_armijo_failure_flag_when_kmax_exhausted():
    rng = np.random.default_rng(2)
    p = ModelParams(R=6, sigmas=(2.0, 3.0))
    cfg = SolverConfig(k_max=0, gamma_min_schedule=lambda n: 0.0, delta=1e6)
    res = armijo_step(evaluate(random_h(rng, 6, 2), p), p, cfg, 1)
    assert res.escaped and res.failed


def test_schedules():
    assert default_gamma_min(0) == 5e-3
    assert default_gamma_min(1_000_000) == pytest.approx(5e-4)
    assert default_gamma_min(10**8) == pytest.approx(5e-8)
    assert default_gamma_bar(1e-5) == 5e-3
    assert default_gamma_bar(1e-6) == 2e-2


@pytest.mark.parametrize(
    "kw", [dict(delta=0), dict(gamma=1.0), dict(gamma=0), dict(tol_G=0), dict(max_iter=-1), dict(certify_rtol=0.0)]
)
def test_solver_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_solver_config_records_direction():
    assert SolverConfig().to_dict()["direction_rule"] == DIRECTION_RULE


# solve ------------------------------------------------------------------------


def test_solver_conserves_mass_and_is_deterministic():
    rng = np.random.default_rng(7)
    p = ModelParams(R=8, sigmas=(1.8, 6.0))
    h0 = random_h(rng, 8, 2)
    seen = []

    def cb(n, cur):
        assert abs(cur.h.sum() - p.H) <= 1e-9 * p.H
        assert np.all(cur.h >= 0)
        seen.append(n)

    cfg = SolverConfig(max_iter=300)
    a, da = solve_equilibrium(h0, p, cfg, callback=cb)
    b, db = solve_equilibrium(h0, p, cfg)
    assert seen == list(range(1, 301))
    np.testing.assert_array_equal(a, b)
    assert da.G == db.G and not da.converged and da.stop_reason == "max_iter"
    assert da.n_escapes <= da.iterations


def test_solver_rejects_infeasible_start():
    p = ModelParams(R=2, sigmas=(2.0,))
    with pytest.raises(ValueError):
        solve_equilibrium(np.array([[1.0], [1.0]]), p)
    with pytest.raises(ValueError):
        solve_equilibrium(np.ones((3, 1)), p)


def test_solver_time_limit():
    rng = np.random.default_rng(8)
    p = ModelParams(R=16, sigmas=(1.5, 8.0))
    _, d = solve_equilibrium(random_h(rng, 16, 2), p, SolverConfig(time_limit=0.0))
    assert d.stop_reason == "time_limit" and not d.converged


def test_agglomeration_certified_two_locations():
    # strong scale economies and cheap transport: everyone in one place
    p = ModelParams(R=2, sigmas=(1.5,), phi=0.95)
    h_star = np.array([[1000.0], [0.0]])
    rep = check_equilibrium(h_star, p)
    v = utility(h_star, p)
    assert rep.passed and v[1, 0] < v[0, 0]
    h0 = np.array([[999.0], [1.0]])
    h, d = solve_equilibrium(h0, p)
    assert d.converged and d.G < 1e-8
    np.testing.assert_allclose(h, h_star, atol=1e-6)
    assert check_equilibrium(h, p).passed


def test_small_instance_converges_and_certifies():
    p = ModelParams(R=3, sigmas=(2.0, 5.0), phi=0.6)
    h0 = random_h(np.random.default_rng(0), 3, 2)
    h, d = solve_equilibrium(h0, p)
    assert d.converged and d.G < 1e-8 and d.stop_reason == "tolerance"
    assert d.iterations_to_tol <= d.iterations
    assert check_equilibrium(h, p).passed


def test_uncertified_stop_on_g_alone():
    p = ModelParams(R=3, sigmas=(2.0, 5.0), phi=0.6)
    h0 = random_h(np.random.default_rng(0), 3, 2)
    _, d = solve_equilibrium(h0, p, SolverConfig(certify_rtol=None))
    assert d.converged and d.G < 1e-8 and d.iterations == d.iterations_to_tol


@pytest.mark.parametrize("R", [2, 3])
def test_fixed_point_equivalence_on_grid(R):
    # every grid point that meets the long-run conditions has G ~ 0, and
    # every grid point with G ~ 0 meets them
    p = ModelParams(R=R, sigmas=(1.5,), phi=0.8)
    steps = 40
    for c in itertools.product(range(steps + 1), repeat=R - 1):
        if sum(c) > steps:
            continue
        h = np.array([*c, steps - sum(c)], dtype=float)[:, None] / steps * p.H
        G = merit(h, p)
        ok = check_equilibrium(h, p, tol=1e-9).passed
        assert ok == (G < 1e-10), (h.ravel(), G, ok)


def test_check_equilibrium_uniform_symmetric_passes():
    p = ModelParams(R=6, sigmas=(2.0, 2.0))
    rep = check_equilibrium(np.full((6, 2), 1000 / 12), p)
    assert rep.passed and rep.mass_error < 1e-15


def test_check_equilibrium_detects_perturbation():
    p = ModelParams(R=2, sigmas=(1.5,), phi=0.95)
    h = np.array([[990.0], [10.0]])
    rep = check_equilibrium(h, p)
    assert not rep.passed and rep.occupied_residual > rep.tol


def test_check_equilibrium_empty_cell_violation():
    # a passing state, then move 1% of H into an empty cell
    p = ModelParams(R=4, sigmas=(1.5, 1.5), phi=0.95)
    h = np.zeros((4, 2))
    h[0] = 500.0
    assert check_equilibrium(h, p).passed
    bad = h.copy()
    bad[0, 0] -= 10.0
    bad[2, 0] += 10.0
    assert not check_equilibrium(bad, p).passed


def test_in_feasible_set():
    assert in_feasible_set(np.array([0.5, 0.5]), 1.0)
    assert not in_feasible_set(np.array([1.5, -0.5]), 1.0)
    assert not in_feasible_set(np.array([0.5, 0.6]), 1.0)
