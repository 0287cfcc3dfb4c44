"""Brute-force verifiers: Monte-Carlo Wishart identities and moment-coefficient fits.

These are deliberately independent of the closed forms they check.  The
Wishart expressions are evaluated from raw Gaussian draws (each S_i is the
rank-one x_i x_i'), and the moment fit recovers the 1/n and 1/n^2 error
coefficients of an estimator purely from simulation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .estimator import ModelSpec, fit_erm, ridge_population_target
from .model import GenerativeConfig, sample_dataset

FIRST_KIND_IDS = ("E_S", "E_SBS", "E_SBS2BS")
SECOND_KIND_IDS = (
    "E_SS2BSS2",
    "E_SS2BS",
    "E_SS2BS2S",
    "E_S2BS",
    "E_SS2S_BS2",
    "E_SS22BS",
)
ALL_IDENTITY_IDS = FIRST_KIND_IDS + SECOND_KIND_IDS


@dataclass(frozen=True, eq=False)
class WishartIdentity:
    """One moment identity for S_i = x_i x_i' with x_i ~ N(0, Sigma).

    The second-kind identities (products mixing S_1 and S_2 beyond one B)
    hold only for Sigma = I and are rejected otherwise.
    """

    id: str
    sigma: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        if self.id not in ALL_IDENTITY_IDS:
            raise ConfigError(f"unknown identity {self.id!r}")
        B = np.asarray(self.B, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise ConfigError("B must be square")
        if not np.allclose(B, B.T, atol=1e-12 * (1 + np.abs(B).max())):
            raise ConfigError("B must be symmetric")
        if sigma.shape != B.shape:
            raise ConfigError("Sigma and B shapes must match")
        if self.id in SECOND_KIND_IDS and not np.allclose(sigma, np.eye(B.shape[0])):
            raise ConfigError(f"{self.id} requires Sigma = I")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "sigma", sigma)

    @property
    def p(self) -> int:
        return self.B.shape[0]


def wishart_closed_form(w: WishartIdentity) -> np.ndarray:
    sig, B, p = w.sigma, w.B, w.p
    eye = np.eye(p)
    tr_b = float(np.trace(B))
    if w.id == "E_S":
        return sig.copy()
    if w.id == "E_SBS":
        return 2.0 * sig @ B @ sig + np.trace(sig @ B) * sig
    if w.id == "E_SBS2BS":
        sbs = sig @ B @ sig
        return 2.0 * sbs @ B @ sig + np.trace(B @ sig @ B @ sig) * sig
    if w.id == "E_SS2BSS2":
        return (p + 6.0) * B + 2.0 * tr_b * eye
    if w.id == "E_SS2BS":
        return 2.0 * B + tr_b * eye
    if w.id == "E_SS2BS2S":
        return 4.0 * B + (4.0 + p) * tr_b * eye
    if w.id == "E_S2BS":
        return (8.0 + 2.0 * p) * B + (4.0 + p) * tr_b * eye
    if w.id == "E_SS2S_BS2":
        # (6+p) B + 2 tr(B) I; the scalar case pins the trace weight at 2
        # (E[S^2]^2 = 9 = 7 + 2 for chi-squared_1 factors)
        return (6.0 + p) * B + 2.0 * tr_b * eye
    return (4.0 + 2.0 * p) * B + (2.0 + p) * tr_b * eye  # E_SS22BS


def _mc_terms(w: WishartIdentity, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Per-draw matrix expression, using the rank-one structure S_i = x_i x_i'."""
    B = w.B
    if w.id == "E_S":
        return np.einsum("ri,rj->rij", x1, x1)
    bx1 = x1 @ B
    if w.id == "E_SBS":
        q = np.einsum("ri,ri->r", bx1, x1)  # x1' B x1
        return q[:, None, None] * np.einsum("ri,rj->rij", x1, x1)
    dot12 = np.einsum("ri,ri->r", x1, x2)
    bx12 = np.einsum("ri,ri->r", bx1, x2)  # x1' B x2
    if w.id == "E_SBS2BS":
        return (bx12 ** 2)[:, None, None] * np.einsum("ri,rj->rij", x1, x1)
    if w.id == "E_SS2BSS2":
        return (dot12 ** 2 * bx12)[:, None, None] * np.einsum("ri,rj->rij", x1, x2)
    if w.id == "E_SS2BS":
        return (dot12 * bx12)[:, None, None] * np.einsum("ri,rj->rij", x1, x1)
    if w.id == "E_SS2BS2S":
        q = np.einsum("ri,ri->r", x2 @ B, x2)  # x2' B x2
        return (dot12 ** 2 * q)[:, None, None] * np.einsum("ri,rj->rij", x1, x1)
    if w.id == "E_S2BS":
        q = np.einsum("ri,ri->r", bx1, x1)
        n1 = np.einsum("ri,ri->r", x1, x1)
        return (n1 * q)[:, None, None] * np.einsum("ri,rj->rij", x1, x1)
    if w.id == "E_SS2S_BS2":
        return (dot12 ** 2 * bx12)[:, None, None] * np.einsum("ri,rj->rij", x1, x2)
    # E_SS22BS
    n2 = np.einsum("ri,ri->r", x2, x2)
    return (dot12 * n2 * bx12)[:, None, None] * np.einsum("ri,rj->rij", x1, x1)


@dataclass(frozen=True, eq=False)
class WishartCheckResult:
    mc_estimate: np.ndarray
    closed_form: np.ndarray
    max_abs_z: float


def wishart_check(w: WishartIdentity, reps: int, seed: int,
                  chunk: int = 200_000) -> WishartCheckResult:
    """Compare the MC average of the identity's expression with its closed form.

    Returns the entrywise worst |difference| / standard-error ratio.
    """
    if reps < 10_000:
        raise ConfigError("reps must be >= 1e4 for a meaningful z-test")
    p = w.p
    chol = np.linalg.cholesky(w.sigma)
    rng = np.random.default_rng(seed)
    total = np.zeros((p, p))
    total_sq = np.zeros((p, p))
    done = 0
    while done < reps:
        c = min(chunk, reps - done)
        x1 = rng.standard_normal((c, p)) @ chol.T
        x2 = rng.standard_normal((c, p)) @ chol.T
        terms = _mc_terms(w, x1, x2)
        total += terms.sum(axis=0)
        total_sq += (terms * terms).sum(axis=0)
        done += c
    mean = total / reps
    var = (total_sq / reps - mean * mean) * reps / (reps - 1)
    se = np.sqrt(np.maximum(var, 0.0) / reps)
    closed = wishart_closed_form(w)
    diff = np.abs(mean - closed)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(diff == 0.0, 0.0, diff / np.where(se > 0, se, np.nan))
    max_z = float(np.nanmax(z)) if np.isfinite(z).any() else float("inf")
    return WishartCheckResult(mean, closed, max_z)


# ---------------------------------------------------------------------------
# Moment-coefficient fitting oracle
# ---------------------------------------------------------------------------


@dataclass
class MomentFitResult:
    """Fitted 1/n and 1/n^2 coefficients of the estimator's bias and MSE.

    ``bias_coeffs = (delta_hat, bias_n2_hat)`` from bias(n) ~ d/n + e/n^2;
    ``mse_coeffs = (gamma1_hat, second_order_sum_hat)`` from
    mse(n) ~ a/n + b/n^2.  The *_se fields carry the propagated Monte-Carlo
    standard errors of each fitted coefficient.
    """

    n_grid: list
    bias_coeffs: tuple
    mse_coeffs: tuple
    bias_se: tuple
    mse_se: tuple
    bias_by_n: dict = field(repr=False, default_factory=dict)
    mse_by_n: dict = field(repr=False, default_factory=dict)
    fit_residual_bias: float = 0.0
    fit_residual_mse: float = 0.0


def _target(cfg: GenerativeConfig, model: ModelSpec) -> np.ndarray:
    if model.loss.kind == "ridge":
        return ridge_population_target(cfg.theta0, cfg.sigma_spec, model.penalty)
    return cfg.theta0


def _batched_linear_errors(cfg, model, n, reps, rng):
    """Closed-form OLS/ridge errors, vectorized over replications."""
    lam = model.penalty
    target = _target(cfg, model)
    chol_t = None if cfg.sigma_spec is None else np.linalg.cholesky(cfg.sigma).T
    p = cfg.p
    out = np.empty((reps, p))
    chunk = max(1, int(2e7 / (n * p)))
    done = 0
    eye = np.eye(p)
    while done < reps:
        c = min(chunk, reps - done)
        x = rng.standard_normal((c, n, p))
        if chol_t is not None:
            x = x @ chol_t
        s = np.einsum("rni,i->rn", x, cfg.theta0)
        if cfg.noise.kind == "gaussian":
            eps = np.sqrt(cfg.noise.param) * rng.standard_normal((c, n))
        else:
            u = rng.random((c, n)) - 0.5
            u = np.clip(u, -0.5 * (1 - 1e-16), 0.5 * (1 - 1e-16))
            eps = -cfg.noise.param * np.sign(u) * np.log1p(-2.0 * np.abs(u))
        y = s + eps
        a = np.einsum("rni,rnj->rij", x, x) / n + lam * eye
        b = np.einsum("rni,rn->ri", x, y) / n
        out[done:done + c] = np.linalg.solve(a, b[:, :, None])[:, :, 0] - target
        done += c
    return out


def _erm_errors(cfg, model, n, reps, rng):
    target = _target(cfg, model)
    out = np.empty((reps, cfg.p))
    for r in range(reps):
        d = sample_dataset(cfg, n, int(rng.integers(0, 2 ** 63 - 1)))
        report = fit_erm(d, model, init=target.copy(), tol=1e-8)
        out[r] = report.theta_hat - target
    return out


def _wls(n_grid, values, ses):
    """Weighted LS fit of values(n) = a/n + b/n^2 with known standard errors."""
    ns = np.asarray(n_grid, dtype=float)
    design = np.vstack([1.0 / ns, 1.0 / ns ** 2]).T
    ses = np.asarray(ses, dtype=float)
    floor = max(1e-300, 1e-8 * float(np.max(ses))) if np.max(ses) > 0 else 1.0
    w = 1.0 / np.maximum(ses, floor) ** 2
    zw = design * np.sqrt(w)[:, None]
    yw = np.asarray(values) * np.sqrt(w)
    cov = np.linalg.inv(zw.T @ zw)
    coef = cov @ (zw.T @ yw)
    resid = float(np.linalg.norm(design @ coef - values))
    return coef, np.sqrt(np.diag(cov)), resid, np.linalg.cond(zw)


def mc_moment_fit(
    cfg: GenerativeConfig,
    model: ModelSpec,
    n_grid=None,
    reps: int = 2000,
    seed: int = 0,
) -> MomentFitResult:
    """Estimate delta and the (gamma1, second-order-sum) MSE coefficients by simulation.

    At each n the estimator's error mean and second-moment matrix are
    averaged over ``reps`` replications, then a/n + b/n^2 laws are fitted by
    weighted least squares.  Emits a warning if the fit design is poorly
    conditioned (n_grid too narrow).
    """
    if n_grid is None:
        n_grid = [200 * cfg.p, 400 * cfg.p, 800 * cfg.p]
    n_grid = sorted(int(n) for n in n_grid)
    if len(set(n_grid)) < 3:
        raise ConfigError("n_grid needs >= 3 distinct values")
    if min(n_grid) < 10 * cfg.p:
        raise ConfigError("n_grid values must be well above p")
    rng = np.random.default_rng(seed)
    closed_form = model.link == "linear" and model.loss.kind in ("squared", "ridge")
    p = cfg.p
    bias_by_n, bias_se_by_n = {}, {}
    mse_by_n, mse_se_by_n = {}, {}
    for n in n_grid:
        errs = (_batched_linear_errors if closed_form else _erm_errors)(
            cfg, model, n, reps, rng)
        bias_by_n[n] = errs.mean(axis=0)
        bias_se_by_n[n] = errs.std(axis=0, ddof=1) / np.sqrt(reps)
        prods = np.einsum("ri,rj->rij", errs, errs)
        mse_by_n[n] = prods.mean(axis=0)
        mse_se_by_n[n] = prods.std(axis=0, ddof=1) / np.sqrt(reps)

    delta_hat = np.empty(p)
    bias_n2 = np.empty(p)
    delta_se = np.empty(p)
    bias_n2_se = np.empty(p)
    worst_cond = 0.0
    resid_bias = 0.0
    for j in range(p):
        coef, se, resid, cond = _wls(
            n_grid,
            [bias_by_n[n][j] for n in n_grid],
            [bias_se_by_n[n][j] for n in n_grid],
        )
        delta_hat[j], bias_n2[j] = coef
        delta_se[j], bias_n2_se[j] = se
        worst_cond = max(worst_cond, cond)
        resid_bias = max(resid_bias, resid)

    gamma1_hat = np.empty((p, p))
    sum_hat = np.empty((p, p))
    gamma1_se = np.empty((p, p))
    sum_se = np.empty((p, p))
    resid_mse = 0.0
    for i in range(p):
        for j in range(p):
            coef, se, resid, cond = _wls(
                n_grid,
                [mse_by_n[n][i, j] for n in n_grid],
                [mse_se_by_n[n][i, j] for n in n_grid],
            )
            gamma1_hat[i, j], sum_hat[i, j] = coef
            gamma1_se[i, j], sum_se[i, j] = se
            worst_cond = max(worst_cond, cond)
            resid_mse = max(resid_mse, resid)
    if worst_cond > 1e8:
        warnings.warn("moment fit is ill-conditioned; widen n_grid", RuntimeWarning)
    return MomentFitResult(
        n_grid=list(n_grid),
        bias_coeffs=(delta_hat, bias_n2),
        mse_coeffs=(gamma1_hat, sum_hat),
        bias_se=(delta_se, bias_n2_se),
        mse_se=(gamma1_se, sum_se),
        bias_by_n=bias_by_n,
        mse_by_n=mse_by_n,
        fit_residual_bias=resid_bias,
        fit_residual_mse=resid_mse,
    )
