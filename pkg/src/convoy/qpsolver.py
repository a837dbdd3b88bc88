"""Per-robot convoying program and its dense active-set solver.

The decision variables are z = (u, delta) in R^(n+1):

    minimize  |u - v_hat|^2 + weight * delta^2
    s.t.      grad_k . (u - v_hat) + gamma_k - (delta if slack row) <= 0
              |B u|_inf <= zeta     (B orthogonal, identity by default)
              delta >= 0

The box is encoded internally as 2n linear rows. The solver is a primal
active-set method warm-started from the always-feasible point u = v_hat,
delta = max(0, slack-row gamma). Problems have at most ~13 rows and n+1 <= 4
variables; determinism comes from fixed tie-breaking (lowest row index).

Also provided: a zooming grid-search oracle for testing, the all-rows-active
closed-form input with its Woodbury cross-check, and KKT residual diagnostics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import Vec, as_vec, inf_norm
from .subtasks import ConstraintRow

STATUS_OPTIMAL = "optimal"
STATUS_MAX_ITER = "max_iter"
STATUS_NUMERICS = "infeasible_numerics"

MAX_ITER = 100
COND_LIMIT = 1e12

_DIR_TOL = 1e-12   # directional derivative below this: row treated as parallel
_STEP_TOL = 1e-11  # relative step size considered zero
_MULT_TOL = 1e-10  # multipliers above -this are accepted as nonnegative


@dataclass
class ConvoyQp:
    """One robot's program: reference velocity, rows, limits, cost weight.

    `box` optionally replaces the axis-aligned input box with |B u|_inf <=
    zeta for an orthogonal matrix B (local-frame implementations); None means
    the identity frame.
    """

    v_hat: Vec
    rows: list
    zeta: float
    weight: float
    n: int
    box: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.n = int(self.n)
        self.v_hat = as_vec(self.v_hat, n=self.n)
        self.zeta = float(self.zeta)
        self.weight = float(self.weight)
        if self.box is not None:
            self.box = np.asarray(self.box, dtype=float)
        framed = self.v_hat if self.box is None else self.box @ self.v_hat
        if inf_norm(framed) > self.zeta + 1e-12:
            raise ValueError(
                f"|v_hat|_inf = {inf_norm(framed):.6g} in the box frame "
                f"exceeds zeta = {self.zeta}")
        n_slack = sum(1 for r in self.rows if r.has_slack)
        if n_slack > 1:
            raise ValueError(f"at most one slack row allowed, got {n_slack}")


@dataclass
class QpSolution:
    u_star: Vec
    delta_star: float
    lam: Vec                 # multipliers of the provided rows
    varsigma: float          # total multiplier mass on the box rows
    active_set: tuple        # provided-row indices in the optimal working set
    iterations: int
    status: str
    objective: float = 0.0
    box_lam: Vec = field(default_factory=lambda: np.zeros(0))
    delta_lam: float = 0.0
    box_active: tuple = ()   # active internal box-row indices (0..2n-1)
    delta_active: bool = False


@dataclass
class ResidualReport:
    stationarity: float
    primal: float
    dual_min: float
    complementarity: float
    slack_identity: float


def objective_value(qp: ConvoyQp, u: Vec, delta: float) -> float:
    diff = np.asarray(u, dtype=float) - qp.v_hat
    return float(diff @ diff + qp.weight * delta * delta)


def _build_rows(qp: ConvoyQp):
    """Stack provided rows, 2n box rows, and the delta >= 0 row into G z <= h."""
    n = qp.n
    m_r = len(qp.rows)
    m_total = m_r + 2 * n + 1
    G = np.zeros((m_total, n + 1))
    h = np.zeros(m_total)
    for k, row in enumerate(qp.rows):
        grad = as_vec(row.grad, n=n)
        G[k, :n] = grad
        if row.has_slack:
            G[k, n] = -1.0
        offset = 0.0 if getattr(row, "absolute", False) else float(grad @ qp.v_hat)
        h[k] = offset - row.gamma
    B = np.eye(n) if qp.box is None else qp.box
    for k in range(n):
        G[m_r + 2 * k, :n] = B[k]
        h[m_r + 2 * k] = qp.zeta
        G[m_r + 2 * k + 1, :n] = -B[k]
        h[m_r + 2 * k + 1] = qp.zeta
    G[m_total - 1, n] = -1.0
    h[m_total - 1] = 0.0
    return G, h


def feasible_seed(qp: ConvoyQp) -> tuple:
    """The start point u = v_hat, delta = max(0, slack-row gamma).

    Verifies every hard row is satisfied there. Relative rows always are at a
    valid state (neighbor gammas are nonpositive while distances exceed the
    collision radius); an absolute obstacle row can reject the seed when the
    reference velocity streams into the obstacle, in which case this raises
    and the solver switches to its enumeration path.
    """
    delta = 0.0
    for row in qp.rows:
        if row.has_slack:
            delta = max(delta, row.gamma)
            continue
        residual = row.gamma
        if getattr(row, "absolute", False):
            residual = float(row.grad @ qp.v_hat) + row.gamma
        if residual > 1e-9:
            raise ValueError(
                f"hard {row.kind} row infeasible at u = v_hat "
                f"(residual {residual:.6g})")
    return qp.v_hat.copy(), float(delta)


def _active_set(G: np.ndarray, h: np.ndarray, z0: np.ndarray, hdiag: np.ndarray,
                c: np.ndarray, slack_row: Optional[int]) -> tuple:
    """Primal active-set iteration from a feasible z0; returns
    (z, working_set, multipliers, iterations, status)."""
    m_total, nz = G.shape
    two_h = 2.0 * hdiag
    inv_two_h = 1.0 / two_h
    z = z0.copy()

    # The slack row is tight at the seed whenever its gamma is nonnegative;
    # starting the working set there saves an iteration on most solves.
    work: list = []
    if slack_row is not None and abs(h[slack_row] - G[slack_row] @ z) <= 1e-12:
        work.append(slack_row)
    lam_work = np.zeros(0)
    status = STATUS_MAX_ITER
    iterations = 0
    seen_sets: set = set()  # working sets visited since the last real move

    for iterations in range(1, MAX_ITER + 1):
        g = two_h * z - 2.0 * c
        k = len(work)
        if k:
            # H is diagonal: eliminate p and solve the k x k Schur system
            # (G_W H^-1 G_W^T) lam = -G_W H^-1 g for the multipliers, then
            # p = -(g + G_W^T lam) / (2h).
            GW = G[work]
            A = GW * inv_two_h
            S = A @ GW.T
            rhs = -(A @ g)
            try:
                lam_work = np.linalg.solve(S, rhs)
            except np.linalg.LinAlgError:
                status = STATUS_NUMERICS
                break
            if not np.all(np.abs(S @ lam_work - rhs) <= 1e-7 * (1.0 + np.abs(rhs).max())):
                status = STATUS_NUMERICS
                break
            p = -(g + GW.T @ lam_work) * inv_two_h
        else:
            p = -g * inv_two_h
            lam_work = np.zeros(0)

        if np.abs(p).max() <= _STEP_TOL * (1.0 + np.abs(z).max()):
            if k == 0 or lam_work.min() >= -_MULT_TOL:
                status = STATUS_OPTIMAL
                break
            key = frozenset(work)
            if key in seen_sets:
                break  # cycling at a degenerate vertex; caller falls back
            seen_sets.add(key)
            if iterations > 3 * m_total:
                # Bland-style anti-cycling: lowest row index among negatives.
                drop_rows = [work[j] for j in range(k)
                             if lam_work[j] < -_MULT_TOL]
            else:
                lam_min = lam_work.min()
                drop_rows = [work[j] for j in range(k)
                             if lam_work[j] <= lam_min + 1e-15]
            work.remove(min(drop_rows))
            continue

        Gp = G @ p
        slack = h - G @ z
        alpha = 1.0
        blocker = -1
        for r in range(m_total):
            if r in work or Gp[r] <= _DIR_TOL:
                continue
            a_r = max(slack[r], 0.0) / Gp[r]
            if a_r < alpha:
                alpha = a_r
                blocker = r
        if alpha > 0.0:
            z = z + alpha * p
            seen_sets.clear()
        if blocker >= 0:
            work.append(blocker)

    return z, work, lam_work, iterations, status


def _enumerate_active_sets(G: np.ndarray, h: np.ndarray, hdiag: np.ndarray,
                           c: np.ndarray) -> tuple:
    """Exact fallback: try every working set of at most n+1 rows and keep the
    best KKT-consistent candidate. Batched per subset size and bounded
    (<= ~1100 tiny equality solves); used only when pivoting cycles at a
    degenerate vertex."""
    from itertools import combinations

    m_total, nz = G.shape
    inv_two_h = 1.0 / (2.0 * hdiag)
    z_free = c / hdiag  # unconstrained minimizer of z'Hz - 2c'z
    best = None

    def consider(obj: float, z: np.ndarray, subset, lam: np.ndarray) -> None:
        nonlocal best
        if np.any(G @ z - h > 1e-9):
            return
        if best is None or obj < best[0] - 1e-15:
            best = (obj, z, list(subset), lam)

    consider(float(z_free @ (hdiag * z_free) - 2.0 * (c @ z_free)),
             z_free, (), np.zeros(0))
    for size in range(1, nz + 1):
        subsets = np.array(list(combinations(range(m_total), size)))
        GW = G[subsets]                       # (N, size, nz)
        S = (GW * inv_two_h) @ np.swapaxes(GW, 1, 2)  # (N, size, size)
        rhs = GW @ z_free - h[subsets]        # (N, size)
        dets = np.abs(np.linalg.det(S))
        ok = dets > 1e-14
        if not np.any(ok):
            continue
        lam = np.full(rhs.shape, np.nan)
        lam[ok] = np.linalg.solve(S[ok], rhs[ok][..., None])[..., 0]
        residual = np.abs(np.einsum("nij,nj->ni", S, np.nan_to_num(lam)) - rhs)
        good = ok & np.all(np.nan_to_num(lam, nan=-1.0) >= -_MULT_TOL, axis=1) \
                  & np.all(residual <= 1e-9 * (1.0 + np.abs(rhs).max()), axis=1)
        for idx in np.flatnonzero(good):
            z = z_free - (GW[idx].T @ lam[idx]) * inv_two_h
            obj = float(z @ (hdiag * z) - 2.0 * (c @ z))
            consider(obj, z, subsets[idx], lam[idx])
    if best is None:
        return z_free, [], np.zeros(0), STATUS_NUMERICS
    _, z, work, lam = best
    return z, work, lam, STATUS_OPTIMAL


def solve(qp: ConvoyQp, start_delta: Optional[float] = None) -> QpSolution:
    """Global optimum of the strictly convex program via primal active set.

    `start_delta` optionally enlarges the warm-start slack (any value at or
    above the feasible seed remains feasible).
    """
    n = qp.n
    m_r = len(qp.rows)
    G, h = _build_rows(qp)
    m_total = G.shape[0]

    hdiag = np.concatenate([np.ones(n), [qp.weight]])
    c = np.concatenate([qp.v_hat, [0.0]])
    slack_row = next((k for k, row in enumerate(qp.rows) if row.has_slack), None)

    try:
        u0, delta0 = feasible_seed(qp)
        if start_delta is not None:
            delta0 = max(delta0, float(start_delta))
        z0 = np.concatenate([u0, [delta0]])
        seeded = True
    except ValueError:
        # No cheap feasible start (an absolute obstacle row rejects u=v_hat);
        # solve by exact working-set enumeration instead.
        seeded = False

    if seeded:
        violation = G @ z0 - h
        if np.any(violation > 1e-9):
            raise ValueError("seed point infeasible; qp invariants violated")
        # Long contact phases erode distances at rounding level, leaving hard
        # rows violated by ~1e-12 at the seed; shift those rows so they forbid
        # further penetration instead of demanding a sub-nanometer retreat.
        h = h + np.maximum(violation, 0.0)
        z, work, lam_work, iterations, status = _active_set(
            G, h, z0, hdiag, c, slack_row)
    else:
        status = STATUS_MAX_ITER
        iterations = 0
    if status != STATUS_OPTIMAL:
        # Heavily degenerate vertices (more tight rows than variables) can
        # defeat active-set pivoting; enumeration of candidate working sets
        # is exact and cheap at this problem size.
        z, work, lam_work, status = _enumerate_active_sets(G, h, hdiag, c)
        iterations += 1

    mu = np.zeros(m_total)
    if status == STATUS_OPTIMAL and len(work):
        mu[work] = lam_work

    u_star = z[:n].copy()
    delta_star = float(z[n])
    lam = mu[:m_r].copy()
    box_lam = mu[m_r: m_r + 2 * n].copy()
    delta_lam = float(mu[-1])
    return QpSolution(
        u_star=u_star,
        delta_star=delta_star,
        lam=lam,
        varsigma=float(box_lam.sum()),
        active_set=tuple(sorted(w for w in work if w < m_r)),
        iterations=iterations,
        status=status,
        objective=objective_value(qp, u_star, delta_star),
        box_lam=box_lam,
        delta_lam=delta_lam,
        box_active=tuple(sorted(w - m_r for w in work if m_r <= w < m_total - 1)),
        delta_active=(m_total - 1) in work,
    )


def grid_oracle(qp: ConvoyQp, resolution: float) -> QpSolution:
    """Independent brute-force reference: zooming grid search over the box.

    A travel-then-zoom grid search (21 points per axis; at each window size
    the grid re-centers on the best candidates while the value improves, then
    the window shrinks until the spacing falls to resolution/100) followed by
    per-axis ternary refinement of the incumbent. Hard-row violations enter
    as a quadratic penalty rather than a feasibility filter: filtered grids
    stall on thin feasible wedges, and the penalized objective is smooth,
    strictly convex, and separable-friendly, so the refinement converges to
    the optimum with hard-row residuals at rounding level (<= ~1e-7). delta
    is set per candidate to max(0, slack-row residual); v_hat is always
    injected as a candidate.
    """
    n = qp.n
    zeta = qp.zeta
    l = qp.weight

    hard = [r for r in qp.rows if not r.has_slack]
    hard_g = np.array([r.grad for r in hard], dtype=float)
    hard_gamma = np.array([r.gamma for r in hard], dtype=float)
    hard_offset = np.array(
        [0.0 if getattr(r, "absolute", False) else float(np.dot(r.grad, qp.v_hat))
         for r in hard], dtype=float)
    slack_rows = [r for r in qp.rows if r.has_slack]
    slack_g = slack_rows[0].grad if slack_rows else None
    slack_gamma = slack_rows[0].gamma if slack_rows else 0.0

    K = 13
    penalty = 1e9
    # Candidates are drawn in the box frame (w = B u), where the feasible box
    # is axis-aligned; u = B^T w maps them back.
    B = np.eye(n) if qp.box is None else qp.box

    def scan(centers, half, target_spacing, penalized, n_starts):
        best_u = None
        best_delta = 0.0
        best_score = np.inf
        evaluated = 0
        while True:
            spacing = 2.0 * half / (K - 1)
            for _ in range(8):
                blocks = []
                for center in centers:
                    axes = [np.clip(np.linspace(center[d] - half,
                                                center[d] + half, K),
                                    -zeta, zeta) for d in range(n)]
                    mesh = np.meshgrid(*axes, indexing="ij")
                    blocks.append(np.stack([m.ravel() for m in mesh], axis=1))
                cand = np.vstack([np.vstack(blocks) @ B, qp.v_hat[None, :]])
                evaluated += cand.shape[0]

                violation = np.zeros(cand.shape[0])
                if hard_g.size:
                    resid = cand @ hard_g.T - hard_offset + hard_gamma
                    violation = np.maximum(resid, 0.0).max(axis=1)
                if penalized:
                    keep = np.ones(cand.shape[0], dtype=bool)
                else:
                    keep = violation <= 1e-9
                    if not np.any(keep):
                        break
                cand_k = cand[keep]
                diff = cand_k - qp.v_hat
                if slack_rows:
                    delta = np.maximum(0.0, diff @ slack_g + slack_gamma)
                else:
                    delta = np.zeros(cand_k.shape[0])
                score = np.einsum("ij,ij->i", diff, diff) + l * delta * delta
                if penalized:
                    score = score + penalty * violation[keep] ** 2
                order = np.argsort(score, kind="stable")
                j = int(order[0])
                improved = score[j] < best_score - 1e-12 * (1.0 + abs(best_score))
                if score[j] < best_score:
                    best_score = float(score[j])
                    best_u = cand_k[j].copy()
                    best_delta = float(delta[j])
                centers = []
                for idx in order:
                    w = B @ cand_k[idx]
                    if all(np.abs(w - c).max() > spacing for c in centers):
                        centers.append(w)
                    if len(centers) == n_starts:
                        break
                if not improved:
                    break
            if best_u is not None and not any(
                    np.abs(B @ best_u - c).max() <= spacing for c in centers):
                centers.insert(0, B @ best_u)
            if spacing <= target_spacing:
                break
            half = 2.5 * spacing
        return best_u, best_delta, best_score, evaluated

    def penalized_score(u: np.ndarray) -> float:
        diff = u - qp.v_hat
        value = float(diff @ diff)
        if slack_rows:
            value += l * max(0.0, float(diff @ slack_g) + slack_gamma) ** 2
        if hard_g.size:
            resid = hard_g @ u - hard_offset + hard_gamma
            value += penalty * float(np.maximum(resid, 0.0) @ np.maximum(resid, 0.0))
        return value

    start = [np.clip(B @ qp.v_hat, -zeta, zeta)]
    best_u, best_delta, _, evaluated = scan(start, zeta, resolution / 100.0,
                                            penalized=True, n_starts=2)
    if best_u is None:
        raise ValueError("grid oracle found no candidate")

    golden = (math.sqrt(5.0) - 1.0) / 2.0

    def line_minimize(w: np.ndarray, direction: np.ndarray) -> np.ndarray:
        """Golden-section search along w + t*direction inside the box."""
        t_lo, t_hi = -np.inf, np.inf
        for d in range(n):
            if abs(direction[d]) < 1e-15:
                continue
            bounds = sorted(((-zeta - w[d]) / direction[d],
                             (zeta - w[d]) / direction[d]))
            t_lo = max(t_lo, bounds[0])
            t_hi = min(t_hi, bounds[1])
        if not np.isfinite(t_lo) or t_hi <= t_lo:
            return w
        a, b = t_lo, t_hi
        c = b - golden * (b - a)
        d_ = a + golden * (b - a)
        fc = penalized_score((w + c * direction) @ B)
        fd = penalized_score((w + d_ * direction) @ B)
        for _ in range(70):
            if fc < fd:
                b, d_, fd = d_, c, fc
                c = b - golden * (b - a)
                fc = penalized_score((w + c * direction) @ B)
            else:
                a, c, fc = c, d_, fd
                d_ = a + golden * (b - a)
                fd = penalized_score((w + d_ * direction) @ B)
            if b - a <= 1e-14:
                break
        return w + 0.5 * (a + b) * direction

    # Refine the incumbent in the box frame: cyclic per-axis line searches
    # plus one search along each sweep's net displacement (the valley
    # direction), which keeps near-singular penalty valleys from stalling
    # the axis-only zigzag.
    w = B @ best_u
    axes_dirs = [np.eye(n)[d] for d in range(n)]
    score_now = penalized_score(w @ B)
    for _ in range(40):
        w_before = w.copy()
        for d in range(n):
            w = line_minimize(w, axes_dirs[d])
        net = w - w_before
        if np.abs(net).max() > 1e-15:
            w = line_minimize(w, net / np.abs(net).max())
        score_new = penalized_score(w @ B)
        stalled = score_now - score_new <= 1e-14 * (1.0 + abs(score_now))
        score_now = score_new
        if stalled or np.abs(w - w_before).max() <= 1e-12 * (1.0 + np.abs(w).max()):
            break
    refined = w @ B
    if slack_rows:
        refined_delta = max(0.0, float((refined - qp.v_hat) @ slack_g) + slack_gamma)
    else:
        refined_delta = 0.0
    if penalized_score(refined) <= penalized_score(best_u):
        best_u = refined
        best_delta = refined_delta
    best_obj = objective_value(qp, best_u, best_delta)
    # the trivial incumbent guards against degenerate scans
    if (not hard or np.all(hard_g @ qp.v_hat - hard_offset + hard_gamma <= 1e-9)):
        seed_delta = max(0.0, slack_gamma) if slack_rows else 0.0
        seed_obj = objective_value(qp, qp.v_hat, seed_delta)
        if seed_obj < best_obj:
            best_u = qp.v_hat.copy()
            best_delta = seed_delta
            best_obj = seed_obj
    return QpSolution(
        u_star=best_u,
        delta_star=best_delta,
        lam=np.zeros(len(qp.rows)),
        varsigma=0.0,
        active_set=(),
        iterations=evaluated,
        status=STATUS_OPTIMAL,
        objective=best_obj,
        box_lam=np.zeros(2 * n),
    )


def closed_form_input(J: np.ndarray, gamma_vec: Sequence[float], v_hat: Vec,
                      weight: float, method: str = "direct") -> Vec:
    """All-rows-active, box-inactive optimal input:

        u* = v_hat - weight * J^T Xi gamma,   Xi = (I_m + weight * J J^T)^-1.

    method="woodbury" computes Xi = I_m - weight * J XiT J^T with
    XiT = (I_n + weight * J^T J)^-1 instead; both must agree to rounding.
    Valid only in the regime where every row holds with equality and the box
    is inactive; the simulator cross-checks it only when the solver reports
    exactly that regime.
    """
    J = np.atleast_2d(np.asarray(J, dtype=float))
    m, n = J.shape
    gamma = as_vec(gamma_vec, n=m)
    v_hat = as_vec(v_hat, n=n)
    l = float(weight)
    if method == "direct":
        M = np.eye(m) + l * (J @ J.T)
        if np.linalg.cond(M) > COND_LIMIT:
            raise np.linalg.LinAlgError(
                f"row system condition {np.linalg.cond(M):.3g} beyond {COND_LIMIT:g}")
        xi_gamma = np.linalg.solve(M, gamma)
    elif method == "woodbury":
        Mt = np.eye(n) + l * (J.T @ J)
        if np.linalg.cond(Mt) > COND_LIMIT:
            raise np.linalg.LinAlgError(
                f"column system condition {np.linalg.cond(Mt):.3g} beyond {COND_LIMIT:g}")
        Xi = np.eye(m) - l * (J @ np.linalg.solve(Mt, J.T))
        xi_gamma = Xi @ gamma
    else:
        raise ValueError(f"unknown method {method!r}")
    return v_hat - l * (J.T @ xi_gamma)


def kkt_residuals(qp: ConvoyQp, sol: QpSolution) -> ResidualReport:
    """First-order optimality diagnostics for a reported-optimal solution."""
    if sol.status != STATUS_OPTIMAL:
        raise ValueError(f"solution status is {sol.status!r}, not optimal")
    n = qp.n
    G, h = _build_rows(qp)
    z = np.concatenate([sol.u_star, [sol.delta_star]])
    mu = np.concatenate([sol.lam, sol.box_lam, [sol.delta_lam]])
    hdiag = np.concatenate([np.ones(n), [qp.weight]])
    c = np.concatenate([qp.v_hat, [0.0]])

    grad_lagrangian = 2.0 * hdiag * z - 2.0 * c + G.T @ mu
    residuals = G @ z - h
    slack_idx = next((k for k, r in enumerate(qp.rows) if r.has_slack), None)
    lam_slack = float(sol.lam[slack_idx]) if slack_idx is not None else 0.0
    return ResidualReport(
        stationarity=float(np.abs(grad_lagrangian).max()),
        primal=float(max(0.0, residuals.max())) if residuals.size else 0.0,
        dual_min=float(mu.min()) if mu.size else 0.0,
        complementarity=float(np.abs(mu * residuals).max()) if mu.size else 0.0,
        slack_identity=abs(lam_slack - 2.0 * qp.weight * sol.delta_star),
    )
