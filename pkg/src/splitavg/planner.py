"""Machine-count planning under error constraints.

Two scaling modes: fixed per-machine memory (n fixed; more machines buy more
data, find the minimal m meeting an error bound) and fixed sample budget
(N fixed; splitting trades accuracy for speed, find the maximal m).  Error is
predicted by the second-order fixed-dimension expansion or by the
high-dimensional first-order law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, InfeasiblePlanError
from .fixed_p import GammaSet, m2_parallel
from .highdim import QuadratureSpec, solve_rc
from .losses import LossSpec
from .model import NoiseDist, sigma_as_matrix


@dataclass(frozen=True)
class FixedPRegime:
    gammas: GammaSet

    @property
    def p(self) -> int:
        return self.gammas.p


@dataclass(frozen=True)
class HighDimRegime:
    loss: LossSpec
    noise: NoiseDist
    p: int
    sigma: object = None  # covariance spec; None = identity
    quadrature: QuadratureSpec | None = None

    @property
    def tr_sigma_inv(self) -> float:
        sig = sigma_as_matrix(self.sigma, self.p)
        return float(np.trace(np.linalg.inv(sig)))


@dataclass(frozen=True)
class PlannerProblem:
    """mode: 'fixed_n' (size = n per machine) or 'fixed_N' (size = total N);
    constraint: 'absolute' (total-MSE bound eps) or 'relative' (allowed
    fractional excess eps over the m = 1 error)."""

    mode: str
    size: int
    constraint: str
    eps: float
    regime: object

    def __post_init__(self):
        if self.mode not in ("fixed_n", "fixed_N"):
            raise ConfigError("mode must be fixed_n or fixed_N")
        if self.constraint not in ("absolute", "relative"):
            raise ConfigError("constraint must be absolute or relative")
        if self.eps <= 0:
            raise ConfigError("eps must be > 0")
        if self.size < 1:
            raise ConfigError("size must be >= 1")
        if not isinstance(self.regime, (FixedPRegime, HighDimRegime)):
            raise ConfigError("regime must be FixedPRegime or HighDimRegime")


@dataclass(frozen=True)
class PlannerResult:
    m: int
    achieved_error: float
    binding: bool


def predicted_error(prob: PlannerProblem, m: float) -> float:
    """Total MSE predicted at machine count m (m may be fractional during search)."""
    if m < 1:
        raise ConfigError("m must be >= 1")
    n_eff = prob.size if prob.mode == "fixed_n" else prob.size / m
    if n_eff < 1:
        raise InfeasiblePlanError(f"m = {m} leaves less than one sample per machine")
    reg = prob.regime
    if isinstance(reg, FixedPRegime):
        return float(np.trace(m2_parallel(reg.gammas, n_eff, m)))
    kappa = reg.p / n_eff
    if kappa >= 1:
        raise InfeasiblePlanError(
            f"m = {m} puts p/n = {kappa:.3f} outside the (0, 1) regime")
    sol = solve_rc(reg.loss, reg.noise, kappa, reg.quadrature)
    return sol.r_squared * reg.tr_sigma_inv / (m * reg.p)


def _bound(prob: PlannerProblem) -> float:
    if prob.constraint == "absolute":
        return prob.eps
    return (1.0 + prob.eps) * predicted_error(prob, 1.0)


def _max_feasible_m(prob: PlannerProblem) -> float:
    """Largest m the regime itself allows (domain limit, not the error bound)."""
    if prob.mode == "fixed_n":
        return 1e12
    if isinstance(prob.regime, HighDimRegime):
        # keep kappa comfortably inside the solver's range
        return max(1.0, 0.99 * prob.size / prob.regime.p)
    return float(prob.size)


def choose_m(prob: PlannerProblem) -> PlannerResult:
    """Minimal (fixed_n) or maximal (fixed_N) machine count meeting the bound.

    The real-valued feasibility boundary (where the predicted error equals
    the bound) is located first; the returned integer is the nearest one.
    This boundary-nearest convention reproduces the worked planning examples
    this module is checked against; the boundary itself is available to
    callers via predicted_error.
    """
    bound = _bound(prob)
    e1 = predicted_error(prob, 1.0)
    minimizing = prob.mode == "fixed_n"

    if minimizing:
        if e1 <= bound:
            return PlannerResult(1, e1, False)
        # error falls like 1/m with n fixed; bracket then root-find
        lo, hi = 1.0, 2.0
        while predicted_error(prob, hi) > bound:
            lo, hi = hi, hi * 2.0
            if hi > 1e12:
                raise InfeasiblePlanError("error bound unreachable at any m",
                                          error_at_one=e1)
        m_star = brentq(lambda m: predicted_error(prob, m) - bound, lo, hi,
                        xtol=1e-9, rtol=1e-14)
        m = max(1, math.floor(m_star + 0.5))
        return PlannerResult(m, predicted_error(prob, m), True)

    # fixed_N: error grows with m (second-order and high-dim regimes)
    if e1 > bound:
        raise InfeasiblePlanError(
            f"even a single machine exceeds the bound ({e1:.3e} > {bound:.3e})",
            error_at_one=e1)
    m_cap = _max_feasible_m(prob)
    lo, hi = 1.0, min(2.0, m_cap)
    while hi < m_cap and predicted_error(prob, hi) <= bound:
        lo, hi = hi, min(hi * 2.0, m_cap)
    if predicted_error(prob, hi) <= bound:
        m = int(math.floor(hi))
        return PlannerResult(m, predicted_error(prob, m), False)
    m_star = brentq(lambda m: predicted_error(prob, m) - bound, lo, hi,
                    xtol=1e-9, rtol=1e-14)
    m = max(1, math.floor(m_star + 0.5))
    return PlannerResult(m, predicted_error(prob, m), True)
