import math

import numpy as np
import pytest

from convoy.core import Obstacle, RobotState
from convoy.subtasks import (ConstraintRow, SingularityError,
                             assemble_constraints, eval_neighbor_subtask,
                             eval_obstacle_subtask, eval_target_subtask,
                             gamma1, gamma2, neighbor_set)


class Params:
    r = 1.5
    R = 4.0
    zeta = 6.0
    eta1 = 2.0
    eta2 = 2.5


class TestTargetSubtask:
    def test_axis_aligned(self):
        ev = eval_target_subtask(np.array([3.0, 0.0]), np.array([0.0, 0.0]))
        assert ev.phi == pytest.approx(3.0)
        np.testing.assert_allclose(ev.grad, [1.0, 0.0])

    def test_diagonal(self):
        ev = eval_target_subtask(np.array([1.0, 1.0, 1.0]), np.zeros(3))
        assert ev.phi == pytest.approx(math.sqrt(3.0))
        np.testing.assert_allclose(ev.grad, np.ones(3) / math.sqrt(3.0))

    def test_singularity(self):
        with pytest.raises(SingularityError):
            eval_target_subtask(np.array([1.0, 2.0]), np.array([1.0, 2.0]))


class TestGamma1:
    def test_experiment_gain(self):
        assert gamma1(3.0, 2.0) == pytest.approx(6.0)

    def test_class_k_zero(self):
        assert gamma1(0.0, 2.0) == 0.0

    def test_identity_gain(self):
        assert gamma1(1.0, 1.0) == 1.0

    def test_strictly_increasing_grid(self):
        values = [gamma1(phi, 2.0) for phi in np.linspace(0.0, 10.0, 50)]
        assert all(b > a for a, b in zip(values, values[1:]))


class TestNeighborSubtask:
    def test_collision_boundary(self):
        ev = eval_neighbor_subtask(np.array([1.5, 0.0]), np.zeros(2), r=1.5)
        assert ev.phi == pytest.approx(0.0)

    def test_sensing_boundary_value(self):
        ev = eval_neighbor_subtask(np.array([4.0, 0.0]), np.zeros(2), r=1.5)
        assert ev.phi == pytest.approx(-2.5)

    def test_axis_gradient(self):
        ev = eval_neighbor_subtask(np.array([0.0, 1.0]), np.zeros(2), r=1.0)
        assert ev.phi == pytest.approx(0.0)
        np.testing.assert_allclose(ev.grad, [0.0, -1.0])

    def test_antisymmetry_sampled(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            n = rng.integers(2, 4)
            x_i = rng.normal(size=n) * 5
            x_j = x_i + rng.normal(size=n)
            if np.linalg.norm(x_i - x_j) < 1e-3:
                continue
            a = eval_neighbor_subtask(x_i, x_j, r=1.5)
            b = eval_neighbor_subtask(x_j, x_i, r=1.5)
            assert a.phi == pytest.approx(b.phi)
            np.testing.assert_allclose(a.grad, -b.grad, atol=1e-12)


class TestGamma2:
    def test_sensing_boundary_is_minus_two_zeta(self):
        assert gamma2(-2.5, zeta=0.2, eta2=2.5) == pytest.approx(-0.4)

    def test_zero(self):
        assert gamma2(0.0, zeta=0.2, eta2=2.5) == 0.0

    def test_simulation_limit(self):
        assert gamma2(-2.5, zeta=6.0, eta2=2.5) == pytest.approx(-12.0)

    def test_strictly_increasing_grid(self):
        values = [gamma2(phi, 6.0, 2.5) for phi in np.linspace(-5.0, 5.0, 60)]
        assert all(b > a for a, b in zip(values, values[1:]))


class TestObstacleSubtask:
    def test_surface_point(self):
        obs = Obstacle(center=[2.0, 8.0, 0.0], radius=1.2)
        ev = eval_obstacle_subtask(np.array([2.0, 9.2, 0.0]), obs)
        assert ev.phi == pytest.approx(0.0)
        np.testing.assert_allclose(ev.grad, [0.0, 1.0, 0.0])

    def test_unit_clearance(self):
        obs = Obstacle(center=[2.0, 13.0, 0.0], radius=1.0)
        ev = eval_obstacle_subtask(np.array([2.0, 15.0, 0.0]), obs)
        assert ev.phi == pytest.approx(1.0)

    def test_center_singularity(self):
        obs = Obstacle(center=[1.0, 1.0], radius=0.5)
        with pytest.raises(SingularityError):
            eval_obstacle_subtask(np.array([1.0, 1.0]), obs)


class TestGradientsMatchFiniteDifferences:
    def _check(self, fn, point, step=1e-6, tol=1e-5):
        ev = fn(point)
        for axis in range(point.size):
            plus = point.copy()
            plus[axis] += step
            minus = point.copy()
            minus[axis] -= step
            numeric = (fn(plus).phi - fn(minus).phi) / (2 * step)
            assert abs(numeric - ev.grad[axis]) < tol

    def test_thousand_random_points(self):
        rng = np.random.default_rng(11)
        x_d = np.array([0.5, -0.25, 1.0])
        other = np.array([-1.0, 2.0, 0.0])
        obs = Obstacle(center=[3.0, 3.0, 3.0], radius=1.0)
        checked = 0
        while checked < 1000:
            p = rng.normal(size=3) * 4
            if (np.linalg.norm(p - x_d) < 1e-2 or np.linalg.norm(p - other) < 1e-2
                    or np.linalg.norm(p - obs.center) < 1e-2):
                continue
            which = checked % 3
            if which == 0:
                self._check(lambda q: eval_target_subtask(q, x_d), p)
            elif which == 1:
                self._check(lambda q: eval_neighbor_subtask(q, other, 1.5), p)
            else:
                self._check(lambda q: eval_obstacle_subtask(q, obs), p)
            checked += 1

    def test_gradients_unit_norm(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            p = rng.normal(size=3) * 3
            if np.linalg.norm(p) < 1e-3:
                continue
            assert np.linalg.norm(eval_target_subtask(p, np.zeros(3)).grad) == pytest.approx(1.0, abs=1e-9)
            assert np.linalg.norm(eval_neighbor_subtask(p, np.zeros(3), 1.5).grad) == pytest.approx(1.0, abs=1e-9)


def _states(positions, broken=()):
    return [RobotState(id=i + 1, position=p,
                       status="broken" if (i + 1) in broken else "active")
            for i, p in enumerate(positions)]


class TestNeighborSet:
    def test_inclusive_boundary(self):
        states = _states([[0.0, 0.0], [3.9, 0.0], [4.0, 0.0], [4.1, 0.0]])
        assert neighbor_set(1, states, R=4.0) == [2, 3]

    def test_single_robot(self):
        assert neighbor_set(1, _states([[0.0, 0.0]]), R=4.0) == []

    def test_broken_excluded(self):
        states = _states([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], broken=(2,))
        assert neighbor_set(1, states, R=4.0) == [3]

    def test_sorted_by_id(self):
        states = _states([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
        assert neighbor_set(3, states, R=4.0) == [1, 2, 4]


class TestAssembleConstraints:
    def test_isolated_robot_single_row(self):
        states = _states([[0.0, 0.0, 0.0]])
        rows = assemble_constraints(1, states, np.array([3.0, 0.0, 0.0]), [], Params)
        assert len(rows) == 1
        assert rows[0].kind == "target" and rows[0].has_slack

    def test_two_neighbors_one_obstacle(self):
        states = _states([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
        obstacles = [Obstacle(center=[0.0, 0.0, 3.0], radius=1.0)]
        rows = assemble_constraints(1, states, np.array([5.0, 5.0, 0.0]),
                                    obstacles, Params)
        assert [row.kind for row in rows] == ["target", "neighbor", "neighbor",
                                              "obstacle"]
        assert [row.ref for row in rows[1:3]] == [2, 3]
        assert [row.has_slack for row in rows] == [True, False, False, False]

    def test_far_neighbor_contributes_no_row(self):
        states = _states([[0.0, 0.0], [10.0, 0.0]])
        rows = assemble_constraints(1, states, np.array([3.0, 0.0]), [], Params)
        assert len(rows) == 1

    def test_far_obstacle_gated_out(self):
        states = _states([[0.0, 0.0]])
        # clearance 4.0 exceeds sensing reach R - r = 2.5
        obstacles = [Obstacle(center=[5.0, 0.0], radius=1.0)]
        rows = assemble_constraints(1, states, np.array([0.0, 3.0]), obstacles, Params)
        assert len(rows) == 1

    def test_neighbor_row_caps_closing_speed(self):
        # At distance d the row must allow approach up to 2*zeta*(d-r)/eta2
        # and forbid anything faster.
        states = _states([[0.0, 0.0], [2.5, 0.0]])
        rows = assemble_constraints(1, states, np.array([-3.0, 0.0]), [], Params)
        row = rows[1]
        allowed = 2 * Params.zeta * (2.5 - Params.r) / Params.eta2
        toward = np.array([1.0, 0.0])  # robot 1 moving toward robot 2
        # grad . u + gamma <= 0 at the cap speed, violated just beyond it
        assert row.grad @ (allowed * toward) + row.gamma == pytest.approx(0.0, abs=1e-12)
        assert row.grad @ ((allowed + 0.01) * toward) + row.gamma > 0

    def test_obstacle_row_caps_absolute_approach(self):
        states = _states([[0.0, 0.0]])
        obstacles = [Obstacle(center=[2.0, 0.0], radius=1.0)]
        rows = assemble_constraints(1, states, np.array([0.0, 3.0]), obstacles, Params)
        row = rows[1]
        assert row.kind == "obstacle" and row.absolute
        clearance = 1.0
        allowed = 2 * Params.zeta * clearance / Params.eta2
        toward = np.array([1.0, 0.0])
        assert row.grad @ (allowed * toward) + row.gamma == pytest.approx(0.0, abs=1e-12)
        assert row.grad @ ((allowed + 0.01) * toward) + row.gamma > 0

    def test_broken_robot_rejected(self):
        states = _states([[0.0, 0.0], [2.0, 0.0]], broken=(1,))
        with pytest.raises(ValueError):
            assemble_constraints(1, states, np.array([3.0, 0.0]), [], Params)


class TestNonNeighborInequality:
    """Rows beyond the sensing margin are satisfied by any box-bounded input.

    The sharp closing-speed bound under an inf-norm box is 2*zeta*sqrt(n)
    (worst case aligns the pair axis with a box diagonal), so the guarantee
    holds whenever d >= r + sqrt(n)*eta2.
    """

    def _violations(self, rng, n, lo_margin, hi_margin, samples=10_000):
        r, eta2, zeta = 1.5, 2.5, 6.0
        dirs = rng.normal(size=(samples, n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        d = r + rng.uniform(lo_margin, hi_margin, size=samples)
        u = rng.uniform(-zeta, zeta, size=(samples, n))
        v_hat = rng.uniform(-zeta, zeta, size=(samples, n))
        lhs = np.einsum("ij,ij->i", -dirs, u - v_hat)
        rhs = 2.0 * zeta * (d - r) / eta2
        return int(np.sum(lhs > rhs + 1e-12))

    def test_margin_sqrt_n_eta2_never_violates(self):
        rng = np.random.default_rng(21)
        for n in (2, 3):
            margin = math.sqrt(n) * 2.5
            assert self._violations(rng, n, margin, margin + 2 * 2.5) == 0

    @pytest.mark.xfail(
        strict=True,
        reason="the closing-speed bound under an inf-norm input box is "
               "2*zeta*sqrt(n), not 2*zeta: pairs just past d = r + eta2 can "
               "violate the row for diagonal inputs (e.g. n=2, pair axis "
               "(1,1)/sqrt2, u=(zeta,zeta), v_hat=-u gives 2*sqrt2*zeta > "
               "2*zeta), so a sampler spanning the claimed margin finds "
               "violations")
    def test_margin_eta2_alone(self):
        rng = np.random.default_rng(0)
        assert self._violations(rng, 3, 2.5, 2 * 2.5) == 0
