import numpy as np
import pytest

from convoy.qpsolver import (ConvoyQp, QpSolution, closed_form_input,
                             feasible_seed, grid_oracle, kkt_residuals,
                             objective_value, solve)
from convoy.subtasks import ConstraintRow


def row(grad, gamma, has_slack=False, kind="target", ref=0, absolute=False):
    return ConstraintRow(grad=np.asarray(grad, dtype=float), gamma=gamma,
                         has_slack=has_slack, kind=kind, ref=ref,
                         absolute=absolute)


def make_qp(v_hat, rows, zeta, weight=10.0, box=None):
    v_hat = np.asarray(v_hat, dtype=float)
    return ConvoyQp(v_hat=v_hat, rows=rows, zeta=zeta, weight=weight,
                    n=v_hat.size, box=box)


def random_instance(rng):
    """Production-shaped random instance: one slack row first, hard rows with
    nonpositive gammas (positive hard gammas can make the program infeasible,
    which the oracle's contract excludes)."""
    n = int(rng.integers(2, 4))
    zeta = float(rng.uniform(0.5, 6.0))
    weight = float(rng.uniform(1.1, 20.0))
    v_hat = rng.uniform(-zeta, zeta, size=n) * rng.uniform(0.2, 0.999)
    m = int(rng.integers(0, 7))
    rows = []
    for k in range(m):
        grad = rng.normal(size=n)
        grad /= np.linalg.norm(grad)
        if k == 0:
            rows.append(row(grad, float(rng.uniform(-2 * zeta, 2 * zeta)),
                            has_slack=True))
        else:
            rows.append(row(grad, float(rng.uniform(-2 * zeta, 0.0)),
                            kind="neighbor", ref=k))
    return make_qp(v_hat, rows, zeta, weight)


class TestSolveBasics:
    def test_no_rows_returns_reference(self):
        qp = make_qp([0.4, -0.1], [], zeta=1.0)
        sol = solve(qp)
        assert sol.status == "optimal"
        np.testing.assert_allclose(sol.u_star, qp.v_hat, atol=1e-12)
        assert sol.delta_star == pytest.approx(0.0, abs=1e-12)

    def test_single_row_analytic(self):
        # One slack row, large box: u* = v - (l*gamma/(1+l)) grad,
        # delta* = gamma/(1+l).
        qp = make_qp([0.0, 0.0], [row([1.0, 0.0], 6.0, has_slack=True)],
                     zeta=100.0, weight=10.0)
        sol = solve(qp)
        np.testing.assert_allclose(sol.u_star, [-60.0 / 11.0, 0.0], atol=1e-9)
        assert sol.delta_star == pytest.approx(6.0 / 11.0, abs=1e-9)
        cf = closed_form_input(np.array([[1.0, 0.0]]), [6.0], qp.v_hat, 10.0)
        np.testing.assert_allclose(sol.u_star, cf, atol=1e-9)
        oracle = grid_oracle(qp, resolution=1e-3)
        assert abs(sol.objective - oracle.objective) <= 1e-3 * (1 + abs(sol.objective))

    def test_single_row_box_active(self):
        qp = make_qp([0.0, 0.0], [row([1.0, 0.0], 6.0, has_slack=True)],
                     zeta=0.2, weight=10.0)
        sol = solve(qp)
        np.testing.assert_allclose(sol.u_star, [-0.2, 0.0], atol=1e-9)
        # slack adjusts so the target row is tight: -0.2 + 6 - delta = 0
        assert sol.delta_star == pytest.approx(5.8, abs=1e-9)
        assert sol.box_active
        oracle = grid_oracle(qp, resolution=1e-3)
        assert abs(sol.objective - oracle.objective) <= 1e-3 * (1 + abs(sol.objective))

    def test_nonbinding_rows_keep_reference(self):
        # v_hat = 0 and nothing binding: the optimum is zero input.
        qp = make_qp([0.0, 0.0],
                     [row([1.0, 0.0], 0.0, has_slack=True),
                      row([0.0, 1.0], -1.0, kind="neighbor", ref=2)],
                     zeta=1.0)
        sol = solve(qp)
        np.testing.assert_allclose(sol.u_star, [0.0, 0.0], atol=1e-12)

    def test_determinism_bit_identical(self):
        rng = np.random.default_rng(5)
        qp = random_instance(rng)
        a = solve(qp)
        b = solve(qp)
        assert np.array_equal(a.u_star, b.u_star)
        assert a.delta_star == b.delta_star
        assert a.active_set == b.active_set
        assert np.array_equal(a.lam, b.lam)


class TestFeasibleSeed:
    def test_slack_row_residual(self):
        qp = make_qp([0.3, -0.1], [row([1.0, 0.0], 6.0, has_slack=True)],
                     zeta=1.0)
        u, delta = feasible_seed(qp)
        np.testing.assert_allclose(u, qp.v_hat)
        assert delta == pytest.approx(6.0)

    def test_large_warm_start_is_feasible(self):
        # A deliberately large initial slack still satisfies every row.
        qp = make_qp([0.1, 0.0], [row([1.0, 0.0], 6.0, has_slack=True),
                                  row([0.0, 1.0], -0.5, kind="neighbor", ref=2)],
                     zeta=0.2)
        u, _ = feasible_seed(qp)
        delta = 100.0
        for r in qp.rows:
            residual = r.grad @ (u - qp.v_hat) + r.gamma - (delta if r.has_slack else 0.0)
            assert residual <= 1e-12
        sol = solve(qp, start_delta=delta)
        ref = solve(qp)
        np.testing.assert_allclose(sol.u_star, ref.u_star, atol=1e-9)
        assert sol.delta_star == pytest.approx(ref.delta_star, abs=1e-9)

    def test_box_rows_satisfied_for_interior_reference(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            qp = random_instance(rng)
            u, delta = feasible_seed(qp)
            assert np.max(np.abs(u)) <= qp.zeta + 1e-12
            assert delta >= 0.0

    def test_infeasible_absolute_row_raises(self):
        # Reference velocity streams into a static obstacle faster than the
        # clearance rate allows: u = v_hat is not feasible.
        qp = make_qp([1.0, 0.0],
                     [row([0.0, 1.0], 6.0, has_slack=True),
                      row([1.0, 0.0], -0.1, kind="obstacle", absolute=True)],
                     zeta=6.0)
        with pytest.raises(ValueError, match="obstacle row infeasible"):
            feasible_seed(qp)
        # the solver still finds the optimum by enumeration
        sol = solve(qp)
        assert sol.status == "optimal"
        assert sol.u_star[0] <= 0.1 + 1e-9
        rep = kkt_residuals(qp, sol)
        assert rep.primal <= 1e-7
        assert rep.stationarity <= 1e-6


class TestOracleEquivalence:
    def test_two_hundred_random_instances(self):
        rng = np.random.default_rng(2024)
        for _ in range(200):
            qp = random_instance(rng)
            sol = solve(qp)
            assert sol.status == "optimal"
            oracle = grid_oracle(qp, resolution=1e-3)
            tol = 1e-3 * (1.0 + abs(sol.objective))
            assert sol.objective <= oracle.objective + tol
            assert oracle.objective <= sol.objective + tol
            rep = kkt_residuals(qp, sol)
            assert rep.stationarity <= 1e-6
            assert rep.primal <= 1e-7
            assert rep.dual_min >= -1e-9
            assert rep.complementarity <= 1e-6
            assert np.max(np.abs(sol.u_star)) <= qp.zeta + 1e-9
            assert sol.delta_star >= -1e-12

    def test_remark_seed_always_feasible(self):
        rng = np.random.default_rng(77)
        for _ in range(100):
            qp = random_instance(rng)
            u, delta = feasible_seed(qp)
            for r in qp.rows:
                residual = r.grad @ (u - qp.v_hat) + r.gamma
                if r.has_slack:
                    residual -= delta
                assert residual <= 1e-9


class TestClosedForm:
    def test_unit_row(self):
        a = np.array([0.6, -0.8])
        u = closed_form_input(a[None, :], [6.0], np.zeros(2), 10.0)
        np.testing.assert_allclose(u, -(60.0 / 11.0) * a, atol=1e-12)

    def test_zero_gammas_return_reference(self):
        rng = np.random.default_rng(4)
        J = rng.normal(size=(3, 3))
        v = rng.normal(size=3)
        np.testing.assert_allclose(
            closed_form_input(J, np.zeros(3), v, 10.0), v, atol=1e-12)

    def test_woodbury_agrees_with_direct(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            m = int(rng.integers(1, 7))
            n = int(rng.integers(2, 4))
            J = rng.normal(size=(m, n))
            J /= np.maximum(np.linalg.norm(J, axis=1, keepdims=True), 1e-9)
            gamma = rng.uniform(-12, 12, size=m)
            v = rng.normal(size=n)
            direct = closed_form_input(J, gamma, v, 10.0, method="direct")
            wood = closed_form_input(J, gamma, v, 10.0, method="woodbury")
            assert np.max(np.abs(direct - wood)) <= 1e-9

    def test_condition_guard(self):
        J = np.array([[1.0, 0.0], [1.0, 0.0]])
        with pytest.raises(np.linalg.LinAlgError):
            closed_form_input(J, [1.0, 1.0], np.zeros(2), weight=1e13)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            closed_form_input(np.eye(2), [0.0, 0.0], np.zeros(2), 10.0,
                              method="qr")


class TestKktResiduals:
    def test_unconstrained(self):
        qp = make_qp([0.2, 0.1], [], zeta=1.0)
        rep = kkt_residuals(qp, solve(qp))
        assert rep.stationarity <= 1e-9
        assert rep.primal <= 1e-9
        assert rep.complementarity <= 1e-9
        assert rep.slack_identity <= 1e-9

    def test_slack_multiplier_identity(self):
        qp = make_qp([0.0, 0.0], [row([1.0, 0.0], 6.0, has_slack=True)],
                     zeta=100.0, weight=10.0)
        sol = solve(qp)
        rep = kkt_residuals(qp, sol)
        # stationarity in delta: 2*l*delta = lambda_slack
        assert rep.slack_identity <= 1e-7
        assert sol.lam[0] == pytest.approx(2 * 10.0 * sol.delta_star, abs=1e-7)

    def test_dual_feasibility(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            sol_qp = random_instance(rng)
            rep = kkt_residuals(sol_qp, solve(sol_qp))
            assert rep.dual_min >= -1e-9

    def test_rejects_non_optimal_status(self):
        qp = make_qp([0.0, 0.0], [], zeta=1.0)
        sol = solve(qp)
        bad = QpSolution(u_star=sol.u_star, delta_star=sol.delta_star,
                         lam=sol.lam, varsigma=0.0, active_set=(),
                         iterations=1, status="max_iter")
        with pytest.raises(ValueError):
            kkt_residuals(qp, bad)


def random_orthogonal(rng, n):
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    return q * np.sign(np.diag(r))


class TestFrameInvariance:
    def test_hundred_rotations(self):
        rng = np.random.default_rng(31)
        for trial in range(100):
            qp = random_instance(rng)
            if not qp.rows:
                continue
            Q = random_orthogonal(rng, qp.n)
            rotated = make_qp(Q @ qp.v_hat,
                              [row(Q @ r.grad, r.gamma, r.has_slack, r.kind,
                                   r.ref, r.absolute) for r in qp.rows],
                              qp.zeta, qp.weight, box=Q.T)
            base = solve(qp)
            rot = solve(rotated)
            np.testing.assert_allclose(rot.u_star, Q @ base.u_star, atol=1e-8)
            assert rot.delta_star == pytest.approx(base.delta_star, abs=1e-8)


class TestMonotoneSlack:
    def test_increasing_target_gamma_never_decreases_delta(self):
        rng = np.random.default_rng(17)
        for _ in range(40):
            qp = random_instance(rng)
            if not qp.rows:
                continue
            deltas = []
            for bump in (0.0, 0.3, 0.9, 2.1):
                rows = [row(r.grad, r.gamma + (bump if r.has_slack else 0.0),
                            r.has_slack, r.kind, r.ref, r.absolute)
                        for r in qp.rows]
                deltas.append(solve(make_qp(qp.v_hat, rows, qp.zeta,
                                            qp.weight)).delta_star)
            assert all(b >= a - 1e-9 for a, b in zip(deltas, deltas[1:]))


class TestDegenerateContactVertex:
    def test_jammed_robot_rides_with_reference(self):
        # Five touching neighbors (gamma exactly 0) plus the target row: more
        # tight rows than variables. The optimum is u = v_hat with the slack
        # absorbing the whole attraction rate.
        grads = [
            [-0.709099, -0.498412, 0.498763],
            [0.705109, 0.501594, 0.501224],
            [0.705105, -0.498405, 0.5044],
            [-0.003986, 0.003176, 0.999987],
            [-0.70909, 0.501583, 0.495587],
        ]
        rows = [row([0.003986, -0.003176, -0.999987], 1.5, has_slack=True)]
        rows += [row(np.asarray(g) / np.linalg.norm(g), 0.0, kind="neighbor",
                     ref=j + 1) for j, g in enumerate(grads)]
        qp = make_qp([1.0, 0.0, 0.0], rows, zeta=6.0, weight=10.0)
        sol = solve(qp)
        assert sol.status == "optimal"
        np.testing.assert_allclose(sol.u_star, qp.v_hat, atol=1e-7)
        rep = kkt_residuals(qp, sol)
        assert rep.stationarity <= 1e-6
        assert rep.primal <= 1e-7
        assert rep.dual_min >= -1e-9
