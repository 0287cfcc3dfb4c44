"""Generative data models and uniform random splitting across machines.

Linear, exponential-nonlinear and logistic responses over Gaussian designs,
with seeded, bit-reproducible sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DivisibilityError

LINKS = ("linear", "exp_nonlinear", "logistic")


@dataclass(frozen=True)
class NoiseDist:
    """Additive noise: gaussian(variance) or laplace(scale).

    ``variance`` is the distribution variance in both cases (laplace variance
    is 2 b^2).  A zero-variance gaussian is allowed as the noiseless
    degenerate case.
    """

    kind: str
    param: float

    def __post_init__(self):
        if self.kind not in ("gaussian", "laplace"):
            raise ConfigError(f"unknown noise kind {self.kind!r}")
        if self.kind == "gaussian" and self.param < 0:
            raise ConfigError("gaussian variance must be >= 0")
        if self.kind == "laplace" and self.param <= 0:
            raise ConfigError("laplace scale must be > 0")

    @property
    def variance(self) -> float:
        if self.kind == "gaussian":
            return self.param
        return 2.0 * self.param * self.param

    @staticmethod
    def gaussian(variance: float) -> "NoiseDist":
        return NoiseDist("gaussian", variance)

    @staticmethod
    def laplace(scale: float) -> "NoiseDist":
        return NoiseDist("laplace", scale)


def sigma_as_matrix(sigma_spec, p: int) -> np.ndarray:
    """Expand a covariance spec (None = identity, 1-d diagonal, 2-d dense) to p x p."""
    if sigma_spec is None:
        return np.eye(p)
    arr = np.asarray(sigma_spec, dtype=float)
    if arr.ndim == 1:
        if arr.shape != (p,):
            raise ConfigError(f"diagonal covariance must have length {p}")
        return np.diag(arr)
    if arr.shape != (p, p):
        raise ConfigError(f"covariance must be {p} x {p}")
    return arr


@dataclass(frozen=True, eq=False)
class GenerativeConfig:
    """True model: design covariance, coefficients, noise and response link."""

    p: int
    theta0: np.ndarray
    noise: NoiseDist
    link: str = "linear"
    sigma_spec: object = None  # None (identity), length-p diagonal, or dense PSD
    _chol: np.ndarray = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.p < 1:
            raise ConfigError("dimension p must be >= 1")
        if self.link not in LINKS:
            raise ConfigError(f"unknown link {self.link!r}")
        theta0 = np.asarray(self.theta0, dtype=float)
        if theta0.shape != (self.p,):
            raise ConfigError(f"theta0 must have shape ({self.p},)")
        object.__setattr__(self, "theta0", theta0)
        sigma = sigma_as_matrix(self.sigma_spec, self.p)
        if not np.allclose(sigma, sigma.T, atol=1e-12):
            raise ConfigError("covariance must be symmetric")
        try:
            chol = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            raise ConfigError("covariance must be positive definite") from None
        object.__setattr__(self, "_chol", chol)

    @property
    def sigma(self) -> np.ndarray:
        return sigma_as_matrix(self.sigma_spec, self.p)


@dataclass(frozen=True, eq=False)
class Dataset:
    """An n x p design with its n-vector response."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ConfigError("X must be n x p and y length n")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def _laplace_inverse_cdf(u: np.ndarray, scale: float) -> np.ndarray:
    # Inverse CDF keeps the draw deterministic and quadrature-friendly.
    q = u - 0.5
    q = np.clip(q, -0.5 * (1 - 1e-16), 0.5 * (1 - 1e-16))
    return -scale * np.sign(q) * np.log1p(-2.0 * np.abs(q))


def sample_noise(noise: NoiseDist, n: int, rng: np.random.Generator) -> np.ndarray:
    if noise.kind == "gaussian":
        return np.sqrt(noise.param) * rng.standard_normal(n)
    return _laplace_inverse_cdf(rng.random(n), noise.param)


def sample_dataset(cfg: GenerativeConfig, n: int, seed: int) -> Dataset:
    """Draw n i.i.d. samples from the generative model, deterministically in seed.

    Draw order is fixed (design first, then noise/uniforms) so results are
    bit-reproducible for a given (cfg, n, seed).
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, cfg.p))
    if cfg.sigma_spec is not None:
        X = X @ cfg._chol.T
    s = X @ cfg.theta0
    if cfg.link == "linear":
        y = s + sample_noise(cfg.noise, n, rng)
    elif cfg.link == "exp_nonlinear":
        y = np.exp(s) + sample_noise(cfg.noise, n, rng)
    else:  # logistic: Bernoulli responses in {0, 1}; noise is ignored
        prob = 1.0 / (1.0 + np.exp(-s))
        y = (rng.random(n) < prob).astype(float)
    return Dataset(X, y)


def split_uniform(d: Dataset, m: int, seed: int) -> list[Dataset]:
    """Partition d uniformly at random into m shards of exactly n/m rows.

    Seeded permutation followed by contiguous chunking, so the shards form an
    exact partition of the input rows.
    """
    if m < 1:
        raise ConfigError("machine count m must be >= 1")
    if d.n % m != 0:
        raise DivisibilityError(f"m = {m} does not divide n = {d.n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(d.n)
    size = d.n // m
    return [
        Dataset(d.X[perm[j * size:(j + 1) * size]], d.y[perm[j * size:(j + 1) * size]])
        for j in range(m)
    ]
