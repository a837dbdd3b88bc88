"""Barrier subtasks, extended class-K rate functions, and constraint-row assembly.

Each subtask evaluates to a scalar value phi and its gradient with respect to
the robot's own position. A constraint row encodes one linearized inequality

    grad . (u - v_hat) + gamma <= (delta if has_slack else 0)

acting on the robot's input u relative to the target-velocity reference v_hat.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .core import EPS_SING, Obstacle, RobotState, Vec

KIND_TARGET = "target"
KIND_NEIGHBOR = "neighbor"
KIND_OBSTACLE = "obstacle"


class SingularityError(ValueError):
    """A defining distance fell below the singularity guard EPS_SING."""


@dataclass
class SubtaskEval:
    """Barrier value (m) and its unit-norm gradient direction."""

    phi: float
    grad: Vec


def eval_target_subtask(x_i: Vec, x_d: Vec) -> SubtaskEval:
    """Target-approaching subtask: phi = |x_i - x_d|, grad = (x_i - x_d)/|.|."""
    diff = np.asarray(x_i, dtype=float) - np.asarray(x_d, dtype=float)
    dist = math.sqrt(float(diff @ diff))
    if dist < EPS_SING:
        raise SingularityError(f"robot coincides with target (distance {dist:.3g})")
    return SubtaskEval(phi=dist, grad=diff / dist)


def gamma1(phi: float, eta1: float) -> float:
    """Attraction rate: linear class-K, eta1 * phi."""
    return eta1 * phi


def eval_neighbor_subtask(x_i: Vec, x_j: Vec, r: float) -> SubtaskEval:
    """Collision-free subtask: phi = r - |x_i - x_j|, grad = -(x_i - x_j)/|.|.

    phi <= 0 is the safe region; the constraint caps the approach speed toward
    the neighbor by -gamma2(phi), which vanishes as the pair reaches distance r.
    """
    diff = np.asarray(x_i, dtype=float) - np.asarray(x_j, dtype=float)
    dist = math.sqrt(float(diff @ diff))
    if dist < EPS_SING:
        raise SingularityError(f"robots coincide (distance {dist:.3g})")
    return SubtaskEval(phi=r - dist, grad=-diff / dist)


def gamma2(phi: float, zeta: float, eta2: float) -> float:
    """Repulsion rate: 2*zeta*phi/eta2, scaled so rows beyond the sensing
    margin are satisfied by any box-bounded input."""
    return 2.0 * zeta * phi / eta2


def eval_obstacle_subtask(x_i: Vec, obs: Obstacle) -> SubtaskEval:
    """Obstacle clearance subtask: phi = |x_i - c| - radius, grad away from c."""
    diff = np.asarray(x_i, dtype=float) - obs.center
    dist = math.sqrt(float(diff @ diff))
    if dist < EPS_SING:
        raise SingularityError(f"robot at obstacle center (distance {dist:.3g})")
    return SubtaskEval(phi=dist - obs.radius, grad=diff / dist)


def neighbor_set(i: int, states: Iterable[RobotState], R: float) -> list:
    """Ids of active robots j != i with |x_i - x_j| <= R, ascending by id.

    Broken robots are excluded regardless of distance.
    """
    me = None
    for s in states:
        if s.id == i:
            me = s
            break
    if me is None:
        raise ValueError(f"robot id {i} not present")
    out = []
    for s in states:
        if s.id == i or not s.is_active:
            continue
        diff = me.position - s.position
        if math.sqrt(float(diff @ diff)) <= R:
            out.append(s.id)
    out.sort()
    return out


@dataclass
class ConstraintRow:
    """One linearized inequality row of the per-robot program.

    Relative rows read grad . (u - v_hat) + gamma <= (delta if has_slack);
    absolute rows read grad . u + gamma <= 0. Target and neighbor rows are
    relative (the target and the neighbors ride with the reference velocity);
    obstacle rows are absolute (a static obstacle does not).
    """

    grad: Vec
    gamma: float
    has_slack: bool
    kind: str
    ref: int = 0  # neighbor robot id or obstacle index; 0 for the target row
    absolute: bool = False


def assemble_constraints(
    i: int,
    states: Iterable[RobotState],
    x_d: Vec,
    obstacles: Iterable[Obstacle],
    params,
) -> list:
    """Build robot i's constraint rows: target first, then sensing neighbors by
    ascending id, then in-range obstacles by index.

    `params` supplies r, R, zeta, eta1, eta2 (a ScenarioConfig works).
    Obstacle rows are emitted only while the obstacle surface is within
    sensing reach (clearance <= R - r); farther rows cannot bind under the
    input box. Obstacle rows cap the absolute approach speed toward the
    obstacle by gamma2(clearance), the same closing-speed form as neighbor
    rows but in the world frame, because the obstacle is static.
    """
    states = list(states)
    me = None
    for s in states:
        if s.id == i:
            me = s
            break
    if me is None:
        raise ValueError(f"robot id {i} not present")
    if not me.is_active:
        raise ValueError(f"robot {i} is broken and takes no input")

    rows = []
    tgt = eval_target_subtask(me.position, x_d)
    rows.append(ConstraintRow(
        grad=tgt.grad,
        gamma=gamma1(tgt.phi, params.eta1),
        has_slack=True,
        kind=KIND_TARGET,
    ))

    by_id = {s.id: s for s in states}
    for j in neighbor_set(i, states, params.R):
        ev = eval_neighbor_subtask(me.position, by_id[j].position, params.r)
        rows.append(ConstraintRow(
            grad=ev.grad,
            gamma=gamma2(ev.phi, params.zeta, params.eta2),
            has_slack=False,
            kind=KIND_NEIGHBOR,
            ref=j,
        ))

    for k, obs in enumerate(obstacles):
        ev = eval_obstacle_subtask(me.position, obs)
        if ev.phi > params.R - params.r:
            continue
        rows.append(ConstraintRow(
            grad=-ev.grad,
            gamma=-gamma2(ev.phi, params.zeta, params.eta2),
            has_slack=False,
            kind=KIND_OBSTACLE,
            ref=k,
            absolute=True,
        ))

    return rows
