"""Quantitative verification of the convoying objectives from a finished log.

Objective 1: the active-robot centroid tracks the target. Objective 2: the
formation becomes rigid with a steady spatial ordering whose adjacent
distances sit in [r, R). Objective 3: no inter-robot collision and no
robot-target overlap, ever.

The planar ordering rule sorts robots anticlockwise by angle about their
centroid, starting from the smallest angle in [0, 2*pi); in 3-D the same rule
is applied to the xy-projection (an artifact choice, flagged in the report).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Optional

import numpy as np

from .core import EPS_SING, RobotState, Vec
from .subtasks import assemble_constraints, gamma1, gamma2, neighbor_set

if TYPE_CHECKING:  # pragma: no cover
    from .simulator import SimLog

ORDERING_RULE = "anticlockwise-about-centroid, xy-projection in 3-D"

# Floating-point guard on the adjacent-distance lower bound: converged
# formations sit exactly at distance r, so the comparison needs an ulp margin.
ADJ_LOWER_GUARD = 1e-9

# Discretization budget on the hard collision bound.
PAIR_MARGIN = 0.01


class DegenerateOrderingError(ValueError):
    """A robot projects onto the centroid; its ordering angle is undefined."""


@dataclass
class OrderingSequence:
    perm: tuple
    t: float = 0.0


def convoy_error(states: Iterable[RobotState], x_d: Vec) -> Vec:
    """Centroid of active robots minus the target position."""
    act = [s.position for s in states if s.is_active]
    if not act:
        raise ValueError("no active robots")
    return np.mean(np.asarray(act), axis=0) - np.asarray(x_d, dtype=float)


def _ordering_from_arrays(pos: np.ndarray, ids: np.ndarray,
                          active: np.ndarray) -> tuple:
    live = np.flatnonzero(active)
    if live.size < 3:
        raise ValueError(f"ordering needs >= 3 active robots, got {live.size}")
    pts = pos[live]
    centroid = pts.mean(axis=0)
    offsets = pts - centroid
    keys = []
    for row, idx in zip(offsets, live):
        planar = math.hypot(row[0], row[1])
        if planar < EPS_SING:
            raise DegenerateOrderingError(
                f"robot {int(ids[idx])} projects onto the centroid")
        angle = math.atan2(row[1], row[0]) % (2.0 * math.pi)
        z = float(row[2]) if row.size > 2 else 0.0
        keys.append((angle, z, int(ids[idx])))
    keys.sort()
    return tuple(k[2] for k in keys)


def ordering_sequence(states: Iterable[RobotState], t: float = 0.0) -> OrderingSequence:
    """Spatial ordering of the active robots at time t."""
    states = list(states)
    act = [s for s in states if s.is_active]
    pos = np.asarray([s.position for s in act])
    ids = np.asarray([s.id for s in act])
    perm = _ordering_from_arrays(pos, ids, np.ones(len(act), dtype=bool))
    return OrderingSequence(perm=perm, t=t)


def ordering_series(log: "SimLog") -> list:
    """Per-step ordering tuples (None where fewer than 3 robots are active)."""
    out = []
    for k in range(log.steps):
        try:
            out.append(_ordering_from_arrays(log.pos[k], log.robot_ids, log.active[k]))
        except (ValueError, DegenerateOrderingError):
            out.append(None)
    return out


def stationarity_residual(states: Iterable[RobotState], x_d: Vec, params) -> np.ndarray:
    """Per active robot: |sum over its rows of grad * gamma|.

    This is the attraction/repulsion balance vector; it vanishes only when the
    target pull is cancelled by in-range repulsion terms.
    """
    states = list(states)
    out = []
    for s in states:
        if not s.is_active:
            continue
        rows = assemble_constraints(s.id, states, x_d, getattr(params, "obstacles", ()), params)
        total = np.zeros(s.position.size)
        for row in rows:
            total += row.grad * row.gamma
        out.append(float(np.linalg.norm(total)))
    return np.asarray(out)


def lyapunov_value(states: Iterable[RobotState], x_d: Vec, params) -> float:
    """V = sum gamma1(phi_target)^2 + 1/2 sum over sensing pairs gamma2(phi)^2."""
    states = list(states)
    act = [s for s in states if s.is_active]
    by_id = {s.id: s for s in act}
    total = 0.0
    for s in act:
        d = float(np.linalg.norm(s.position - x_d))
        total += gamma1(d, params.eta1) ** 2
        for j in neighbor_set(s.id, states, params.R):
            dij = float(np.linalg.norm(s.position - by_id[j].position))
            total += 0.5 * gamma2(params.r - dij, params.zeta, params.eta2) ** 2
    return total


@dataclass
class ConvoyReport:
    objective1_pass: bool
    e_mean_final: float
    tol_e: float
    objective2a_pass: bool
    rel_speed_max: float
    tol_v: float
    objective2b_pass: bool
    adj_min: float
    adj_max: float
    ordering_constant: bool
    ordering_stable_since: float
    objective3_pass: bool
    min_pair: float
    min_target: float
    lyapunov_settled: bool
    residual_final: float
    final_ordering: tuple = ()
    ordering_rule: str = ORDERING_RULE

    @property
    def passed(self) -> bool:
        return (self.objective1_pass and self.objective2a_pass
                and self.objective2b_pass and self.objective3_pass)

    def to_dict(self) -> dict:
        return {
            "objective1": {"passed": self.objective1_pass,
                           "e_mean_final": self.e_mean_final, "tol": self.tol_e},
            "objective2a": {"passed": self.objective2a_pass,
                            "rel_speed_max": self.rel_speed_max, "tol": self.tol_v},
            "objective2b": {"passed": self.objective2b_pass,
                            "adj_min": self.adj_min, "adj_max": self.adj_max,
                            "ordering_constant": self.ordering_constant,
                            "ordering_stable_since": self.ordering_stable_since},
            "objective3": {"passed": self.objective3_pass,
                           "min_pair": self.min_pair, "min_target": self.min_target},
            "lyapunov_settled": self.lyapunov_settled,
            "residual_final": self.residual_final,
            "final_ordering": list(self.final_ordering),
            "ordering_rule": self.ordering_rule,
            "passed": self.passed,
        }


def _adjacent_distances(pos: np.ndarray, ids: np.ndarray, active: np.ndarray,
                        perm: tuple) -> np.ndarray:
    index_of = {int(i): k for k, i in enumerate(ids)}
    pts = [pos[index_of[i]] for i in perm]
    out = []
    for a in range(len(pts)):
        b = (a + 1) % len(pts)
        out.append(float(np.linalg.norm(pts[a] - pts[b])))
    return np.asarray(out)


def check_objectives(log: "SimLog", cfg) -> ConvoyReport:
    """Evaluate every convoying objective on a complete log; no re-simulation."""
    if log.steps == 0:
        raise ValueError("empty log")
    t_end = float(log.t[-1])
    final_mask = log.window(t_end - 5.0)
    stable_mask = log.window(t_end - 0.2 * t_end)

    tol_e = 0.2 if cfg.target_motion.kind == "circular" else 0.1
    tol_v = 0.05 * cfg.zeta

    # Objective 1: centroid error over the final window.
    e_norms = []
    for k in np.flatnonzero(final_mask):
        live = log.active[k]
        centroid = log.pos[k][live].mean(axis=0)
        e_norms.append(float(np.linalg.norm(centroid - log.x_d[k])))
    e_mean = float(np.mean(e_norms)) if e_norms else math.inf

    orderings = ordering_series(log)

    # Objective 2a: commanded-velocity agreement between ordering-adjacent robots.
    rel_max = 0.0
    ok_2a = True
    index_of = {int(i): k for k, i in enumerate(log.robot_ids)}
    for k in np.flatnonzero(final_mask):
        perm = orderings[k]
        if perm is None:
            ok_2a = False
            continue
        for a in range(len(perm)):
            b = (a + 1) % len(perm)
            du = log.u[k][index_of[perm[a]]] - log.u[k][index_of[perm[b]]]
            rel_max = max(rel_max, float(np.linalg.norm(du)))
    ok_2a = ok_2a and rel_max <= tol_v

    # Objective 2b: adjacent ordering distances within [r, R), steady ordering.
    adj_min, adj_max = math.inf, -math.inf
    ok_dist = True
    for k in np.flatnonzero(final_mask):
        perm = orderings[k]
        if perm is None:
            ok_dist = False
            continue
        dists = _adjacent_distances(log.pos[k], log.robot_ids, log.active[k], perm)
        adj_min = min(adj_min, float(dists.min()))
        adj_max = max(adj_max, float(dists.max()))
        if dists.min() < cfg.r - ADJ_LOWER_GUARD or dists.max() >= cfg.R:
            ok_dist = False
    stable_idx = np.flatnonzero(stable_mask)
    window_orderings = [orderings[k] for k in stable_idx]
    ordering_constant = (len(window_orderings) > 0
                         and all(o is not None for o in window_orderings)
                         and len(set(window_orderings)) == 1)
    ok_2b = ok_dist and ordering_constant

    final_ordering = orderings[-1] if orderings and orderings[-1] else ()
    stable_since = t_end
    for k in range(log.steps - 1, -1, -1):
        if orderings[k] is not None and orderings[k] == final_ordering:
            stable_since = float(log.t[k])
        else:
            break

    # Objective 3: hard safety over the whole log.
    min_pair = float(np.min(log.min_pair)) if log.steps else math.inf
    min_target = float(np.min(log.min_target)) if log.steps else math.inf
    ok_3 = min_pair >= cfg.r - PAIR_MARGIN and min_target > 0.0

    settle_idx = int(np.flatnonzero(final_mask)[0]) if np.any(final_mask) else 0
    v_ref = float(log.lyapunov[settle_idx])
    v_end = float(log.lyapunov[-1])
    lyap_settled = abs(v_end - v_ref) <= 0.01 * v_ref if v_ref > 0 else True

    return ConvoyReport(
        objective1_pass=e_mean <= tol_e,
        e_mean_final=e_mean,
        tol_e=tol_e,
        objective2a_pass=ok_2a,
        rel_speed_max=rel_max,
        tol_v=tol_v,
        objective2b_pass=ok_2b,
        adj_min=adj_min,
        adj_max=adj_max,
        ordering_constant=ordering_constant,
        ordering_stable_since=stable_since,
        objective3_pass=ok_3,
        min_pair=min_pair,
        min_target=min_target,
        lyapunov_settled=lyap_settled,
        residual_final=float(log.max_residual[-1]),
        final_ordering=final_ordering,
    )
