import itertools

import numpy as np
import pytest

from comstab.lp import (
    INFEASIBLE_BASIS,
    LPSolution,
    ParametricDirection,
    StandardFormLP,
    fixed_basis_resolve,
    objective_sensitivity,
    solve_lp,
    standardize,
)


def brute_force_optimum(lp: StandardFormLP) -> float:
    """Enumerate all basic feasible solutions and return the best objective."""
    m, n = lp.m, lp.n
    best = -np.inf
    for cols in itertools.combinations(range(n), m):
        b_mat = lp.A[:, cols]
        if abs(np.linalg.det(b_mat)) < 1e-10:
            continue
        xb = np.linalg.solve(b_mat, lp.b)
        if xb.min(initial=0.0) < -1e-9:
            continue
        best = max(best, float(lp.c[list(cols)] @ xb))
    return best


def random_feasible_lp(rng, n_vars=6, n_rows=3) -> StandardFormLP:
    """Random standard-form LP guaranteed feasible (b = A x0 for x0 >= 0)."""
    a = rng.normal(size=(n_rows, n_vars))
    x0 = rng.uniform(0.1, 1.0, size=n_vars)
    b = a @ x0
    c = rng.normal(size=n_vars)
    # Bound the feasible set so the problem is never unbounded.
    a_full = np.vstack([a, np.ones(n_vars)])
    b_full = np.concatenate([b, [x0.sum() + rng.uniform(1.0, 3.0)]])
    a_full = np.hstack([a_full, np.zeros((n_rows + 1, 1))])
    a_full[-1, -1] = 1.0
    c_full = np.concatenate([c, [0.0]])
    return StandardFormLP(
        c=c_full,
        A=a_full,
        b=b_full,
        n_structural=n_vars + 1,
        split=None,
        n_core_rows=n_rows + 1,
    )


def check_certificates(lp: StandardFormLP, sol: LPSolution):
    assert sol.optimal
    b_scale = 1.0 + np.abs(lp.b).max(initial=0.0)
    assert np.abs(lp.A @ sol.x - lp.b).max() <= 1e-9 * b_scale
    assert sol.x.min() >= -1e-9
    primal = lp.c @ sol.x
    dual = lp.b @ sol.y
    assert abs(primal - dual) <= 1e-8 * (1.0 + abs(primal))
    # Complementary slackness: nonbasic variables with nonzero reduced cost sit at zero.
    rc = lp.c - sol.y @ lp.A
    nonbasic = np.setdiff1d(np.arange(lp.n), np.array(sol.basis, dtype=int))
    active = nonbasic[np.abs(rc[nonbasic]) > 1e-9]
    assert np.all(np.abs(sol.x[active]) <= 1e-9)
    # Dual feasibility for a maximization: reduced costs nonpositive.
    assert rc.max(initial=0.0) <= 1e-7


def test_box_corner():
    # max x1 + x2 s.t. x1 + s1 = 1, x2 + s2 = 1
    lp = standardize(
        c=np.array([1.0, 1.0]),
        a_eq=np.zeros((0, 2)),
        b_eq=np.zeros(0),
        a_ub=np.eye(2),
        b_ub=np.ones(2),
    )
    sol = solve_lp(lp)
    assert sol.optimal
    assert sol.objective == pytest.approx(2.0, abs=1e-12)
    np.testing.assert_allclose(sol.x, [1.0, 1.0, 0.0, 0.0], atol=1e-12)


def test_degenerate_origin():
    # max x s.t. x + s = 0: optimum pinned at the origin.
    lp = standardize(
        c=np.array([1.0]),
        a_eq=np.zeros((0, 1)),
        b_eq=np.zeros(0),
        a_ub=np.array([[1.0]]),
        b_ub=np.array([0.0]),
    )
    sol = solve_lp(lp)
    assert sol.optimal
    assert sol.objective == pytest.approx(0.0, abs=1e-12)
    assert sol.degenerate


def test_infeasible_and_unbounded_are_statuses():
    infeasible = StandardFormLP(
        c=np.array([1.0]),
        A=np.array([[1.0], [1.0]]),
        b=np.array([1.0, 2.0]),
        n_structural=1,
        split=None,
        n_core_rows=2,
    )
    assert solve_lp(infeasible).status == "infeasible"

    unbounded = StandardFormLP(
        c=np.array([1.0, 0.0]),
        A=np.array([[1.0, -1.0]]),
        b=np.array([0.0]),
        n_structural=2,
        split=None,
        n_core_rows=1,
    )
    assert solve_lp(unbounded).status == "unbounded"


def test_random_lps_match_brute_force():
    rng = np.random.default_rng(42)
    for _ in range(60):
        lp = random_feasible_lp(rng)
        sol = solve_lp(lp)
        assert sol.optimal
        check_certificates(lp, sol)
        assert sol.objective == pytest.approx(brute_force_optimum(lp), abs=1e-7)


def test_determinism_bit_identical():
    rng = np.random.default_rng(7)
    lp = random_feasible_lp(rng)
    a = solve_lp(lp)
    b = solve_lp(lp)
    assert a.basis == b.basis
    assert a.objective == b.objective
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.y, b.y)


def test_fixed_basis_identity_resolve():
    rng = np.random.default_rng(3)
    for _ in range(20):
        lp = random_feasible_lp(rng)
        sol = solve_lp(lp)
        re = fixed_basis_resolve(lp, sol.basis)
        assert re is not INFEASIBLE_BASIS
        assert re.objective == pytest.approx(sol.objective, abs=1e-9)
        np.testing.assert_allclose(re.x, sol.x, atol=1e-9)


def test_fixed_basis_tracks_small_rhs_perturbations():
    rng = np.random.default_rng(11)
    hits = 0
    for _ in range(30):
        lp = random_feasible_lp(rng)
        sol = solve_lp(lp)
        delta = rng.normal(size=lp.m) * 1e-6
        lp2 = StandardFormLP(
            c=lp.c, A=lp.A, b=lp.b + delta,
            n_structural=lp.n_structural, split=lp.split, n_core_rows=lp.n_core_rows,
        )
        re = fixed_basis_resolve(lp2, sol.basis)
        if re is INFEASIBLE_BASIS:
            continue  # degenerate optimum can lose feasibility at any size
        fresh = solve_lp(lp2)
        if fresh.basis == sol.basis:
            hits += 1
            assert re.objective == pytest.approx(fresh.objective, abs=1e-8)
    assert hits >= 15


def test_fixed_basis_signals_on_large_perturbation():
    # Line search on the rhs shift until a basic variable goes negative.
    lp = standardize(
        c=np.array([1.0, 1.0]),
        a_eq=np.zeros((0, 2)),
        b_eq=np.zeros(0),
        a_ub=np.eye(2),
        b_ub=np.ones(2),
    )
    sol = solve_lp(lp)
    shift = np.array([-1.0, 0.0])
    scale = 0.25
    while scale < 64.0:
        lp_shifted = StandardFormLP(
            c=lp.c, A=lp.A, b=lp.b + scale * shift,
            n_structural=lp.n_structural, split=lp.split, n_core_rows=lp.n_core_rows,
        )
        if fixed_basis_resolve(lp_shifted, sol.basis) is INFEASIBLE_BASIS:
            break
        scale *= 2.0
    else:
        pytest.fail("no perturbation size broke the cached basis")
    assert scale > 0.5  # small shifts stayed feasible


def test_fixed_basis_singular_signal():
    lp = standardize(
        c=np.array([1.0, 0.0]),
        a_eq=np.zeros((0, 2)),
        b_eq=np.zeros(0),
        a_ub=np.array([[1.0, 1.0], [2.0, 2.0]]),
        b_ub=np.array([1.0, 2.0]),
    )
    # Columns 0 and 1 are linearly dependent with the duplicated row structure.
    assert fixed_basis_resolve(lp, [0, 1]) is INFEASIBLE_BASIS


def test_sensitivity_reciprocal_example():
    # max x s.t. theta * x = 1 at theta = 2: a*(theta) = 1/theta.
    lp = StandardFormLP(
        c=np.array([1.0]),
        A=np.array([[2.0]]),
        b=np.array([1.0]),
        n_structural=1,
        split=None,
        n_core_rows=1,
    )
    sol = solve_lp(lp)
    assert sol.x[0] == pytest.approx(0.5)
    assert sol.y[0] == pytest.approx(0.5)
    ds = objective_sensitivity(sol, ParametricDirection(G=np.array([[1.0]])))
    assert ds == pytest.approx(-0.25, abs=1e-12)


def test_sensitivity_zero_direction():
    rng = np.random.default_rng(5)
    lp = random_feasible_lp(rng)
    sol = solve_lp(lp)
    assert objective_sensitivity(sol, ParametricDirection(G=np.zeros_like(lp.A))) == 0.0


def test_sensitivity_matches_finite_difference():
    rng = np.random.default_rng(2024)
    eps = 1e-6
    checked = 0
    for _ in range(40):
        lp = random_feasible_lp(rng)
        sol = solve_lp(lp)
        g = rng.normal(size=lp.A.shape) * 0.1
        lp_p = StandardFormLP(
            c=lp.c, A=lp.A + eps * g, b=lp.b,
            n_structural=lp.n_structural, split=lp.split, n_core_rows=lp.n_core_rows,
        )
        lp_m = StandardFormLP(
            c=lp.c, A=lp.A - eps * g, b=lp.b,
            n_structural=lp.n_structural, split=lp.split, n_core_rows=lp.n_core_rows,
        )
        sol_p = solve_lp(lp_p)
        sol_m = solve_lp(lp_m)
        if not (sol_p.optimal and sol_m.optimal):
            continue
        if sol_p.basis != sol.basis or sol_m.basis != sol.basis:
            continue  # sensitivity formula only holds on a stable basis
        fd = (sol_p.objective - sol_m.objective) / (2 * eps)
        ds = objective_sensitivity(sol, ParametricDirection(G=g))
        assert ds == pytest.approx(fd, rel=1e-4, abs=1e-9)
        checked += 1
    assert checked >= 20


def test_standardize_roundtrip_free_variables():
    rng = np.random.default_rng(9)
    c = rng.normal(size=4)
    a_eq = rng.normal(size=(2, 4))
    x_true = rng.normal(size=4)  # free components may be negative
    free = np.array([True, True, False, False])
    x_true[~free] = np.abs(x_true[~free])
    b_eq = a_eq @ x_true
    a_ub = rng.normal(size=(3, 4))
    b_ub = a_ub @ x_true + rng.uniform(0.5, 1.0, size=3)
    lp = standardize(c, a_eq, b_eq, a_ub, b_ub, free_mask=free)
    # Bound all columns so the LP is bounded.
    cap_row = np.ones((1, lp.n))
    a_capped = np.vstack([lp.A, cap_row])
    # Slack for the cap row.
    a_capped = np.hstack([a_capped, np.zeros((a_capped.shape[0], 1))])
    a_capped[-1, -1] = 1.0
    lp2 = StandardFormLP(
        c=np.concatenate([lp.c, [0.0]]),
        A=a_capped,
        b=np.concatenate([lp.b, [100.0]]),
        n_structural=lp.n_structural,
        split=lp.split,
        n_core_rows=lp.n_core_rows,
    )
    sol = solve_lp(lp2)
    assert sol.optimal
    x_orig = lp.split.to_original(sol.x[: lp.n])
    np.testing.assert_allclose(a_eq @ x_orig, b_eq, atol=1e-8)
    assert np.all(a_ub @ x_orig <= b_ub + 1e-8)


def test_warm_start_reuses_basis():
    rng = np.random.default_rng(21)
    lp = random_feasible_lp(rng)
    sol = solve_lp(lp)
    warm = solve_lp(lp, warm_basis=sol.basis)
    assert warm.basis == sol.basis
    assert warm.iterations == 0
