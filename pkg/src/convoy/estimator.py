"""Per-robot target-velocity estimator from position-only measurements.

Continuous form, per coordinate:

    x_hat' = -chi1 * (x_hat - x_d) + v_hat
    v_hat' = -chi1 * chi2 * (x_hat - x_d)

The error (x_hat - x_d, v_hat - v_d) obeys a linear system with matrix
[[-chi1, 1], [-chi1*chi2, 0]], Hurwitz exactly when both gains are positive.
Discretized by explicit Euler at the simulation step. The velocity estimate is
clamped strictly inside the input box before use, preserving QP feasibility.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Vec, as_vec

CLAMP_MARGIN = 1e-6


@dataclass
class EstimatorState:
    x_hat: Vec
    v_hat: Vec
    chi1: float
    chi2: float
    zeta: float

    def __post_init__(self) -> None:
        self.x_hat = as_vec(self.x_hat)
        self.v_hat = as_vec(self.v_hat, n=self.x_hat.size)
        if self.chi1 <= 0 or self.chi2 <= 0:
            raise ValueError(f"gains must be positive, got chi1={self.chi1}, chi2={self.chi2}")
        if self.zeta <= 0:
            raise ValueError(f"zeta must be positive, got {self.zeta}")


def estimator_step(est: EstimatorState, x_d_measured: Vec, dt: float) -> EstimatorState:
    """One explicit-Euler update of both estimates, then clamp v_hat into the box."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x_d = as_vec(x_d_measured, n=est.x_hat.size)
    err = est.x_hat - x_d
    x_new = est.x_hat + dt * (-est.chi1 * err + est.v_hat)
    v_new = est.v_hat + dt * (-est.chi1 * est.chi2 * err)
    limit = est.zeta * (1.0 - CLAMP_MARGIN)
    v_new = np.clip(v_new, -limit, limit)
    return EstimatorState(x_new, v_new, est.chi1, est.chi2, est.zeta)


def hurwitz_check(chi1: float, chi2: float) -> bool:
    """True iff both roots of s^2 + chi1*s + chi1*chi2 have negative real part.

    By Routh-Hurwitz for a monic quadratic this is exactly: both coefficients
    positive, i.e. chi1 > 0 and chi2 > 0.
    """
    return chi1 > 0.0 and chi1 * chi2 > 0.0
