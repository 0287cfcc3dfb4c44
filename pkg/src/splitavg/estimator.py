"""Per-machine empirical risk minimization.

Generic damped-Newton ERM for the smooth model families, closed-form OLS and
ridge, population targets, and the plug-in sandwich covariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigError, RankError, SingularHessianError
from .losses import LossSpec, derivative_array
from .model import Dataset, sigma_as_matrix

_SUPPORTED_PAIRS = {
    ("squared", "linear"),
    ("ridge", "linear"),
    ("squared", "exp_nonlinear"),
    ("logistic", "logistic"),
}

_MAX_ITER = 200
_ARMIJO_BETA = 0.5
_ARMIJO_C1 = 1e-4


@dataclass(frozen=True)
class ModelSpec:
    """Loss/link pair to be fit by empirical risk minimization."""

    loss: LossSpec
    link: str = "linear"

    def __post_init__(self):
        if (self.loss.kind, self.link) not in _SUPPORTED_PAIRS:
            raise ConfigError(
                f"unsupported loss/link combination ({self.loss.kind}, {self.link})"
            )

    @property
    def penalty(self) -> float:
        return self.loss.penalty if self.loss.kind == "ridge" else 0.0

    @staticmethod
    def ols() -> "ModelSpec":
        return ModelSpec(LossSpec.squared(), "linear")

    @staticmethod
    def ridge(penalty: float) -> "ModelSpec":
        return ModelSpec(LossSpec.ridge(penalty), "linear")

    @staticmethod
    def nonlinear_ls() -> "ModelSpec":
        return ModelSpec(LossSpec.squared(), "exp_nonlinear")

    @staticmethod
    def logistic() -> "ModelSpec":
        return ModelSpec(LossSpec.logistic(), "logistic")


@dataclass(frozen=True, eq=False)
class FitReport:
    theta_hat: np.ndarray
    grad_norm: float
    iterations: int
    converged: bool


def _loss_values(d: Dataset, model: ModelSpec, theta: np.ndarray) -> np.ndarray:
    s = d.X @ theta
    loss = model.loss
    if model.link == "linear":
        return derivative_array(loss, d.y - s, 0)
    if model.link == "exp_nonlinear":
        return derivative_array(loss, d.y - np.exp(s), 0)
    return derivative_array(loss, (2.0 * d.y - 1.0) * s, 0)


def _score_weights(d: Dataset, model: ModelSpec, theta: np.ndarray):
    """Weights (w1, w2) with grad = X' w1 / n + pen' and hess = X' diag(w2) X / n + pen''.

    Only evaluated at points of finite risk, so the link transforms stay in
    range.
    """
    s = d.X @ theta
    loss = model.loss
    if model.link == "linear":
        r = d.y - s
        return -derivative_array(loss, r, 1), derivative_array(loss, r, 2)
    if model.link == "exp_nonlinear":
        mu = np.exp(s)
        r = d.y - mu
        f1 = derivative_array(loss, r, 1)
        f2 = derivative_array(loss, r, 2)
        return -f1 * mu, f2 * mu * mu - f1 * mu
    yy = 2.0 * d.y - 1.0  # logistic link, margin form with labels in {-1, +1}
    t = yy * s
    return derivative_array(loss, t, 1) * yy, derivative_array(loss, t, 2)


def _risk(d: Dataset, model: ModelSpec, theta: np.ndarray) -> float:
    # Exploratory line-search points may overflow the exp link; map any
    # non-finite value to +inf so they are rejected, without warnings.
    with np.errstate(over="ignore", invalid="ignore"):
        vals = _loss_values(d, model, theta)
        total = float(np.mean(vals))
    pen = 0.5 * model.penalty * float(theta @ theta)
    risk = total + pen
    return risk if np.isfinite(risk) else np.inf


def _grad_hess(d: Dataset, model: ModelSpec, theta: np.ndarray):
    w1, w2 = _score_weights(d, model, theta)
    n = d.n
    grad = d.X.T @ w1 / n + model.penalty * theta
    hess = (d.X.T * w2) @ d.X / n + model.penalty * np.eye(d.p)
    return grad, hess


def default_tol(n: int) -> float:
    """Stopping tolerance well inside the o(1/n) approximate-minimizer margin."""
    return min(1e-10, 1.0 / (n * n))


def _default_init(d: Dataset, model: ModelSpec) -> np.ndarray:
    if model.link == "exp_nonlinear":
        pos = d.y > 0
        if int(pos.sum()) >= d.p:
            try:
                return fit_closed(Dataset(d.X[pos], np.log(d.y[pos])), 0.0)
            except RankError:
                pass
    return np.zeros(d.p)


def _newton_direction(hess: np.ndarray, grad: np.ndarray, quadratic: bool):
    """Newton step; the second return marks a clean (unshifted) factorization."""
    try:
        cf = scipy.linalg.cho_factor(hess, check_finite=False)
        return scipy.linalg.cho_solve(cf, -grad, check_finite=False), True
    except (scipy.linalg.LinAlgError, ValueError):
        if quadratic:
            raise SingularHessianError("Hessian is numerically singular") from None
    # Non-quadratic objectives: Levenberg-style shift until factorizable.
    tau = 1e-8 * max(1.0, float(np.max(np.abs(np.diag(hess)))))
    for _ in range(40):
        try:
            cf = scipy.linalg.cho_factor(hess + tau * np.eye(hess.shape[0]), check_finite=False)
            return scipy.linalg.cho_solve(cf, -grad, check_finite=False), False
        except (scipy.linalg.LinAlgError, ValueError):
            tau *= 10.0
    raise SingularHessianError("Hessian is numerically singular")


def fit_erm(
    d: Dataset,
    model: ModelSpec,
    init: np.ndarray | None = None,
    tol: float | None = None,
    max_iter: int = _MAX_ITER,
    trace: list | None = None,
) -> FitReport:
    """Minimize the empirical risk by damped Newton with Armijo backtracking.

    Stops when the gradient norm drops below ``tol`` (default
    ``min(1e-10, n^-2)``).  Hitting the iteration cap returns
    ``converged=False`` rather than raising; callers decide (logistic fits on
    separable data legitimately never converge).
    """
    if not model.loss.is_smooth:
        raise ConfigError("fit_erm requires a smooth loss")
    if tol is None:
        tol = default_tol(d.n)
    if tol <= 0:
        raise ConfigError("tol must be > 0")
    theta = np.array(_default_init(d, model) if init is None else init, dtype=float)
    if theta.shape != (d.p,):
        raise ConfigError(f"init must have shape ({d.p},)")
    quadratic = model.link == "linear"
    risk = _risk(d, model, theta)
    if trace is not None:
        trace.append(risk)
    def certified(gnorm, direction, clean):
        # A small gradient alone is not a minimizer certificate: on separable
        # logistic data the risk is exponentially flat and the (shifted)
        # Newton step underflows while no finite minimizer exists.  Require a
        # cleanly factorizable Hessian and a small Newton step as well.
        step_ok = float(np.linalg.norm(direction)) <= 1e-6 * (1.0 + float(np.linalg.norm(theta)))
        return gnorm <= tol and clean and step_ok

    iterations = 0
    for _ in range(max_iter):
        grad, hess = _grad_hess(d, model, theta)
        gnorm = float(np.linalg.norm(grad))
        direction, clean = _newton_direction(hess, grad, quadratic)
        if certified(gnorm, direction, clean):
            return FitReport(theta, gnorm, iterations, True)
        slope = float(grad @ direction)
        if slope >= 0:  # not a descent direction; fall back to steepest descent
            direction = -grad
            slope = -gnorm * gnorm
        step = 1.0
        accepted = False
        for _ in range(60):
            cand = theta + step * direction
            cand_risk = _risk(d, model, cand)
            if cand_risk <= risk + _ARMIJO_C1 * step * slope:
                accepted = True
                break
            step *= _ARMIJO_BETA
        if not accepted:
            break
        theta = cand
        risk = cand_risk
        iterations += 1
        if trace is not None:
            trace.append(risk)
    grad, hess = _grad_hess(d, model, theta)
    gnorm = float(np.linalg.norm(grad))
    try:
        direction, clean = _newton_direction(hess, grad, quadratic)
        ok = certified(gnorm, direction, clean)
    except SingularHessianError:
        ok = False
    return FitReport(theta, gnorm, iterations, ok)


def fit_closed(d: Dataset, penalty: float = 0.0) -> np.ndarray:
    """Closed-form (X'X/n + penalty I)^-1 X'y/n; penalty = 0 is OLS."""
    if penalty < 0:
        raise ConfigError("penalty must be >= 0")
    a = d.X.T @ d.X / d.n + penalty * np.eye(d.p)
    b = d.X.T @ d.y / d.n
    try:
        cf = scipy.linalg.cho_factor(a, check_finite=False)
    except (scipy.linalg.LinAlgError, ValueError):
        raise RankError("normal equations are singular (rank-deficient design)") from None
    return scipy.linalg.cho_solve(cf, b, check_finite=False)


def ridge_population_target(theta0: np.ndarray, sigma, penalty: float) -> np.ndarray:
    """Population minimizer (Sigma + penalty I)^-1 Sigma theta0 of the ridge risk."""
    theta0 = np.asarray(theta0, dtype=float)
    p = theta0.shape[0]
    sig = sigma_as_matrix(sigma, p)
    return np.linalg.solve(sig + penalty * np.eye(p), sig @ theta0)


def per_sample_gradients(d: Dataset, model: ModelSpec, theta: np.ndarray) -> np.ndarray:
    """n x p matrix whose i-th row is the gradient of the i-th loss term."""
    w1, _ = _score_weights(d, model, theta)
    grads = d.X * w1[:, None]
    if model.penalty:
        grads = grads + model.penalty * theta[None, :]
    return grads


def sandwich_covariance(d: Dataset, theta_hat: np.ndarray, model: ModelSpec) -> np.ndarray:
    """Plug-in asymptotic covariance of sqrt(n) (theta_hat - theta*).

    V^-1 (mean of grad grad') V^-1 with V the empirical Hessian at the fit.
    Divide by n for standard errors of theta_hat itself.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    _, hess = _grad_hess(d, model, theta_hat)
    grads = per_sample_gradients(d, model, theta_hat)
    meat = grads.T @ grads / d.n
    try:
        cf = scipy.linalg.cho_factor(hess, check_finite=False)
    except (scipy.linalg.LinAlgError, ValueError):
        raise SingularHessianError("empirical Hessian is singular") from None
    out = scipy.linalg.cho_solve(cf, scipy.linalg.cho_solve(cf, meat, check_finite=False).T,
                                 check_finite=False)
    return (out + out.T) / 2.0
