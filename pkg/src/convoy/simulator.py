"""Deterministic time-stepping of the convoying system.

Per step, in fixed order: fire due events, advance the target, update every
estimator against the measured target position, solve every active robot's
program on the pre-step position snapshot, then integrate all robots
synchronously. Records carry the post-step state together with the commands
that produced it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (ACTIVE, BROKEN, EPS_SING, RobotState, ScenarioConfig,
                   ScenarioError, TargetMotionSpec, TargetState, Vec, as_vec,
                   validate_scenario)
from .estimator import EstimatorState, estimator_step
from .qpsolver import ConvoyQp, closed_form_input, solve
from .subtasks import SingularityError, assemble_constraints


class SimulationError(RuntimeError):
    """A step failed; the message carries the time and robot context."""


def target_velocity(spec: TargetMotionSpec, t: float, x_d: Vec) -> Vec:
    """Commanded target velocity at time t and position x_d."""
    if spec.kind == "constant":
        return spec.velocity.copy()
    rel = np.asarray(x_d, dtype=float) - spec.center
    if math.hypot(rel[0], rel[1]) < EPS_SING:
        raise SingularityError("circular target at orbit center; angle undefined")
    theta = math.atan2(rel[1], rel[0])
    v = np.zeros(len(rel))
    v[0] = 2.0 * spec.omega * math.cos(theta + math.pi / 2.0)
    v[1] = 2.0 * spec.omega * math.sin(theta + math.pi / 2.0)
    return v


@dataclass
class UnicyclePose:
    """Planar unicycle pose; heading wrapped to (-pi, pi]."""

    position: Vec
    theta: float

    def __post_init__(self) -> None:
        self.position = as_vec(self.position, n=2)
        self.theta = _wrap_angle(float(self.theta))


def _wrap_angle(theta: float) -> float:
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


def nid_transform(u_star: Vec, theta: float, ell: float) -> tuple:
    """Map a planar velocity command to unicycle (speed, turn rate) commands:

        v = u1 cos(theta) + u2 sin(theta)
        u_theta = (-u1 sin(theta) + u2 cos(theta)) / ell
    """
    if ell <= 0:
        raise ValueError(f"ell must be positive, got {ell}")
    u = as_vec(u_star, n=2)
    c, s = math.cos(theta), math.sin(theta)
    v = u[0] * c + u[1] * s
    u_theta = (-u[0] * s + u[1] * c) / ell
    return float(v), float(u_theta)


def unicycle_step(pose: UnicyclePose, v: float, u_theta: float, dt: float) -> UnicyclePose:
    """Explicit-Euler unicycle update with heading wrap."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = pose.position
    new_pos = np.array([x[0] + dt * v * math.cos(pose.theta),
                        x[1] + dt * v * math.sin(pose.theta)])
    return UnicyclePose(new_pos, pose.theta + dt * u_theta)


def baseline_gradient_step(x: Vec, subtask: Callable, dt: float) -> Vec:
    """Best-effort descent x <- x - dt * grad(phi(x)) for a single integrator.

    Used only by the motivational comparison against the constraint-based
    controller: the value decreases along the flow but nothing is invariant.
    """
    ev = subtask(np.asarray(x, dtype=float))
    return np.asarray(x, dtype=float) - dt * ev.grad


@dataclass
class SimState:
    t: float
    robots: list
    target: TargetState
    estimators: dict
    poses: dict = field(default_factory=dict)
    events_fired: int = 0


@dataclass
class StepRecord:
    t: float
    active: np.ndarray      # (N,) bool
    pos: np.ndarray         # (N, n)
    u: np.ndarray           # (N, n)
    delta: np.ndarray       # (N,)
    n_active_rows: np.ndarray  # (N,) working-set size at the optimum
    iterations: np.ndarray  # (N,)
    x_d: np.ndarray
    v_d: np.ndarray
    vhat_err: np.ndarray    # (N,) |v_hat_i - v_d|
    min_pair: float
    min_target: float
    min_obstacle: float
    lyapunov: float
    max_residual: float
    cf_dev: float           # worst closed-form disagreement this step
    cf_checks: int          # robots in the all-rows-active, box-inactive regime


@dataclass
class SimLog:
    """Time-indexed arrays, one entry per step at t = dt, 2*dt, ..., duration."""

    dt: float
    n: int
    robot_ids: np.ndarray   # (N,)
    t: np.ndarray           # (S,)
    active: np.ndarray      # (S, N)
    pos: np.ndarray         # (S, N, n)
    u: np.ndarray           # (S, N, n)
    delta: np.ndarray       # (S, N)
    n_active_rows: np.ndarray
    iterations: np.ndarray
    x_d: np.ndarray         # (S, n)
    v_d: np.ndarray         # (S, n)
    vhat_err: np.ndarray    # (S, N)
    min_pair: np.ndarray    # (S,)
    min_target: np.ndarray
    min_obstacle: np.ndarray
    lyapunov: np.ndarray
    max_residual: np.ndarray
    cf_dev: np.ndarray      # (S,)
    cf_checks: np.ndarray   # (S,)

    @property
    def steps(self) -> int:
        return self.t.size

    def window(self, t_from: float, t_to: Optional[float] = None) -> np.ndarray:
        """Boolean mask of records with t_from <= t <= t_to (end by default)."""
        hi = self.t[-1] if t_to is None else t_to
        return (self.t >= t_from - 1e-12) & (self.t <= hi + 1e-12)


def initial_state(cfg: ScenarioConfig) -> SimState:
    robots = [s.copy() for s in cfg.robots]
    v_d0 = target_velocity(cfg.target_motion, 0.0, cfg.target_start)
    target = TargetState(cfg.target_start.copy(), v_d0)
    estimators = {
        s.id: EstimatorState(
            x_hat=cfg.target_start.copy(),
            v_hat=np.zeros(cfg.n),
            chi1=cfg.chi1,
            chi2=cfg.chi2,
            zeta=cfg.zeta,
        )
        for s in robots
    }
    poses = {}
    if cfg.unicycle:
        poses = {s.id: UnicyclePose(s.position.copy(), s.heading or 0.0)
                 for s in robots}
    return SimState(t=0.0, robots=robots, target=target,
                    estimators=estimators, poses=poses)


def _step_diagnostics(pos: np.ndarray, x_d: Vec, cfg: ScenarioConfig) -> tuple:
    """(min_pair, min_target, min_obstacle, lyapunov, max_residual) for the
    active-robot positions `pos` (M, n), vectorized over pairs.

    Matches metrics.stationarity_residual / metrics.lyapunov_value; the
    simulator recomputes them here to keep the step loop out of per-pair
    Python.
    """
    M = pos.shape[0]
    if M == 0:
        return math.inf, math.inf, math.inf, 0.0, 0.0
    tdiff = pos - x_d
    tdist = np.sqrt(np.einsum("ij,ij->i", tdiff, tdiff))
    min_target = float(tdist.min())

    residual = cfg.eta1 * tdiff.copy()
    lyap = float(np.sum((cfg.eta1 * tdist) ** 2))
    min_pair = math.inf
    if M > 1:
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        iu = np.triu_indices(M, k=1)
        min_pair = float(dist[iu].min())
        mask = (dist <= cfg.R) & ~np.eye(M, dtype=bool)
        if np.any(mask):
            g2 = np.where(mask, 2.0 * cfg.zeta * (cfg.r - dist) / cfg.eta2, 0.0)
            safe = np.where(dist > 0, dist, 1.0)
            # row grad for pair (i, j) is -(x_i - x_j)/d; sum grad * gamma over j
            residual += np.einsum("ij,ijk->ik", -g2 / safe, diff)
            lyap += 0.5 * float(np.sum(g2[mask] ** 2))

    min_obstacle = math.inf
    for obs in cfg.obstacles:
        odiff = pos - obs.center
        odist = np.sqrt(np.einsum("ij,ij->i", odiff, odiff))
        clearance = odist - obs.radius
        min_obstacle = min(min_obstacle, float(clearance.min()))
        in_range = clearance <= cfg.R - cfg.r
        if np.any(in_range):
            # obstacle row: grad = -odiff/d, gamma = -gamma2(clearance);
            # the product is +odiff/d * gamma2(clearance)
            g2 = 2.0 * cfg.zeta * clearance / cfg.eta2
            scale = np.where(in_range, g2 / odist, 0.0)
            residual += scale[:, None] * odiff

    max_residual = float(np.sqrt(np.einsum("ij,ij->i", residual, residual)).max())
    return min_pair, min_target, min_obstacle, lyap, max_residual


def sim_step(state: SimState, cfg: ScenarioConfig, dt: float,
             first_step: bool = False) -> tuple:
    """Advance one step; returns (new_state, record)."""
    t_next = state.t + dt
    robots = [s.copy() for s in state.robots]

    events = sorted(cfg.events, key=lambda e: (e.time, e.robot_ids))
    fired = state.events_fired
    while fired < len(events) and events[fired].time <= state.t + 1e-12:
        for rid in events[fired].robot_ids:
            for s in robots:
                if s.id == rid:
                    s.status = BROKEN
        fired += 1

    v_d = target_velocity(cfg.target_motion, state.t, state.target.position)
    x_d = state.target.position + dt * v_d
    target = TargetState(x_d, v_d)

    estimators = {}
    for s in robots:
        estimators[s.id] = estimator_step(state.estimators[s.id], x_d, dt)

    N = len(robots)
    u_cmd = np.zeros((N, cfg.n))
    deltas = np.zeros(N)
    nact = np.zeros(N, dtype=np.int16)
    iters = np.zeros(N, dtype=np.int16)
    vhat_err = np.zeros(N)
    cf_dev = 0.0
    cf_checks = 0
    snapshot = robots  # QPs read pre-integration positions

    for idx, s in enumerate(robots):
        if not s.is_active:
            continue
        v_hat = v_d if cfg.oracle_velocity else estimators[s.id].v_hat
        vhat_err[idx] = float(np.linalg.norm(v_hat - v_d))
        try:
            rows = assemble_constraints(s.id, snapshot, x_d, cfg.obstacles, cfg)
            qp = ConvoyQp(v_hat=v_hat, rows=rows, zeta=cfg.zeta,
                          weight=cfg.weight, n=cfg.n)
            sol = solve(qp, start_delta=cfg.delta0 if first_step else None)
        except (SingularityError, ValueError, np.linalg.LinAlgError) as exc:
            raise SimulationError(f"robot {s.id} at t={t_next:.4f}: {exc}") from exc
        if sol.status != "optimal":
            raise SimulationError(
                f"robot {s.id} at t={t_next:.4f}: solver status {sol.status}")
        u_cmd[idx] = sol.u_star
        deltas[idx] = sol.delta_star
        nact[idx] = len(sol.active_set) + len(sol.box_active) + int(sol.delta_active)
        iters[idx] = sol.iterations

        # In the regime the all-rows-active closed form describes (every row
        # tight, box inactive, no world-frame obstacle rows), cross-check the
        # solver against it.
        if (len(sol.active_set) == len(rows) and rows and not sol.box_active
                and not any(r.absolute for r in rows)):
            u_cf = closed_form_input(
                np.array([r.grad for r in rows]),
                np.array([r.gamma for r in rows]), v_hat, cfg.weight)
            cf_dev = max(cf_dev, float(np.linalg.norm(u_cf - sol.u_star)))
            cf_checks += 1

    poses = dict(state.poses)
    for idx, s in enumerate(robots):
        if not s.is_active:
            continue
        if cfg.unicycle:
            pose = poses[s.id]
            v, u_theta = nid_transform(u_cmd[idx], pose.theta, cfg.nid_ell)
            pose = unicycle_step(pose, v, u_theta, dt)
            poses[s.id] = pose
            s.position = pose.position.copy()
            s.heading = pose.theta
        else:
            s.position = s.position + dt * u_cmd[idx]

    active_mask = np.array([s.is_active for s in robots])
    all_pos = np.array([s.position for s in robots])
    min_pair, min_target, min_obstacle, lyap, max_resid = _step_diagnostics(
        all_pos[active_mask], x_d, cfg)

    record = StepRecord(
        t=t_next,
        active=active_mask,
        pos=all_pos,
        u=u_cmd,
        delta=deltas,
        n_active_rows=nact,
        iterations=iters,
        x_d=x_d.copy(),
        v_d=v_d.copy(),
        vhat_err=vhat_err,
        min_pair=min_pair,
        min_target=min_target,
        min_obstacle=min_obstacle,
        lyapunov=lyap,
        max_residual=max_resid,
        cf_dev=cf_dev,
        cf_checks=cf_checks,
    )
    new_state = SimState(t=t_next, robots=robots, target=target,
                         estimators=estimators, poses=poses, events_fired=fired)
    return new_state, record


def run(cfg: ScenarioConfig) -> SimLog:
    """Drive sim_step for duration/dt steps; identical configs give identical logs."""
    report = validate_scenario(cfg)
    if not report.passed:
        raise ScenarioError("scenario validation failed:\n" + report.summary())

    steps = int(round(cfg.duration / cfg.dt))
    N = len(cfg.robots)
    n = cfg.n
    log = SimLog(
        dt=cfg.dt,
        n=n,
        robot_ids=np.array([s.id for s in cfg.robots], dtype=np.int64),
        t=np.zeros(steps),
        active=np.zeros((steps, N), dtype=bool),
        pos=np.zeros((steps, N, n)),
        u=np.zeros((steps, N, n)),
        delta=np.zeros((steps, N)),
        n_active_rows=np.zeros((steps, N), dtype=np.int16),
        iterations=np.zeros((steps, N), dtype=np.int16),
        x_d=np.zeros((steps, n)),
        v_d=np.zeros((steps, n)),
        vhat_err=np.zeros((steps, N)),
        min_pair=np.zeros(steps),
        min_target=np.zeros(steps),
        min_obstacle=np.zeros(steps),
        lyapunov=np.zeros(steps),
        max_residual=np.zeros(steps),
        cf_dev=np.zeros(steps),
        cf_checks=np.zeros(steps, dtype=np.int16),
    )

    state = initial_state(cfg)
    for k in range(steps):
        state, rec = sim_step(state, cfg, cfg.dt, first_step=(k == 0))
        log.t[k] = rec.t
        log.active[k] = rec.active
        log.pos[k] = rec.pos
        log.u[k] = rec.u
        log.delta[k] = rec.delta
        log.n_active_rows[k] = rec.n_active_rows
        log.iterations[k] = rec.iterations
        log.x_d[k] = rec.x_d
        log.v_d[k] = rec.v_d
        log.vhat_err[k] = rec.vhat_err
        log.min_pair[k] = rec.min_pair
        log.min_target[k] = rec.min_target
        log.min_obstacle[k] = rec.min_obstacle
        log.lyapunov[k] = rec.lyapunov
        log.max_residual[k] = rec.max_residual
        log.cf_dev[k] = rec.cf_dev
        log.cf_checks[k] = rec.cf_checks
    return log
