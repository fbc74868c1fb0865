"""Synthetic causal survival cohorts with latent treatment-assignment imbalance.

Three standard-normal covariates drive a logistic treatment assignment.
Counterfactual times come from a Weibull model,
``Y(z) = lambda_z * (-log u / exp(h_z))**(1/alpha)``, with linear predictors
``h_0``, ``h_1`` of the covariates.  Right censoring is independent
``Uniform(0, c)`` with ``c`` calibrated to a target censoring proportion.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .dataset import Dataset
from .errors import ConfigError, IpwSurvError
from .propensity import expit

# treatment-assignment coefficients by imbalance level
SCENARIOS: dict[str, tuple[float, float, float]] = {
    "balanced": (0.0, 0.0, 0.0),
    "mild": (0.3, -0.2, 0.1),
    "moderate": (0.75, -0.5, 0.25),
    "severe": (1.2, -0.8, 0.4),
    "extreme": (6.0, -4.0, 2.0),
}


class CalibrationError(IpwSurvError, ValueError):
    pass


@dataclass(frozen=True)
class Weibull:
    lambda0: float = 18.0
    lambda1: float = 20.0
    alpha: float = 2.0


@dataclass(frozen=True)
class SimulationConfig:
    n: int = 1000
    beta: tuple[float, float, float] = SCENARIOS["mild"]
    collider: bool = False
    weibull: Weibull = field(default_factory=Weibull)
    h0_coef: tuple[float, float, float] = (0.2, 0.7, 0.4)
    h1_coef: tuple[float, float, float] = (-0.5, -2.0, -0.25)
    censoring_target: float = 0.0
    seed: int = 0
    collider_deterministic: bool = False
    independent_u: bool = False

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        object.__setattr__(self, "h0_coef", tuple(float(b) for b in self.h0_coef))
        object.__setattr__(self, "h1_coef", tuple(float(b) for b in self.h1_coef))
        if isinstance(self.weibull, dict):
            object.__setattr__(self, "weibull", Weibull(**self.weibull))
        if self.n < 1:
            raise ConfigError(f"n must be positive, got {self.n}")
        if len(self.beta) != 3 or len(self.h0_coef) != 3 or len(self.h1_coef) != 3:
            raise ConfigError("beta, h0_coef and h1_coef must have length 3")
        w = self.weibull
        if min(w.lambda0, w.lambda1, w.alpha) <= 0:
            raise ConfigError("Weibull parameters must be positive")
        if not 0 <= self.censoring_target < 1:
            raise ConfigError(f"censoring_target must be in [0, 1), got {self.censoring_target}")

    @classmethod
    def scenario(cls, level: str, **kw) -> "SimulationConfig":
        try:
            beta = SCENARIOS[level]
        except KeyError:
            raise ConfigError(f"unknown imbalance level {level!r}; choose from {list(SCENARIOS)}") from None
        return cls(beta=beta, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationConfig":
        return cls(**d)


@dataclass(frozen=True)
class SimulatedCohort:
    dataset: Dataset
    true_times: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    propensity_truth: np.ndarray
    censoring_times: np.ndarray
    c_max: float
    config: SimulationConfig

    @property
    def true_ate(self) -> float:
        return float(np.mean(self.y1 - self.y0))

    def subset(self, idx) -> "SimulatedCohort":
        idx = np.asarray(idx, dtype=int)
        return replace(self, dataset=self.dataset.subset(idx), true_times=self.true_times[idx],
                       y0=self.y0[idx], y1=self.y1[idx], propensity_truth=self.propensity_truth[idx],
                       censoring_times=self.censoring_times[idx])


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def generate_covariates(n: int, collider: bool = False, seed=None, deterministic: bool = False) -> np.ndarray:
    """``(n, 3)`` standard normals; with ``collider`` X2 becomes ``5 X1 + 5 X3`` (+ N(0,1) noise)."""
    if n < 1:
        raise ConfigError(f"n must be positive, got {n}")
    x = _rng(seed).standard_normal((n, 3))
    if collider:
        noise = 0.0 if deterministic else x[:, 1]
        x[:, 1] = 5 * x[:, 0] + 5 * x[:, 2] + noise
    return x


def assign_treatment(x: np.ndarray, beta, seed=None) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``Z ~ Bernoulli(expit(x @ beta))``; returns ``(Z, true propensities)``."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (x.shape[1],):
        raise ConfigError(f"beta must have length {x.shape[1]}")
    p = expit(x @ beta)
    z = (_rng(seed).random(len(p)) < p).astype(int)
    return z, p


def weibull_times(u: np.ndarray, h: np.ndarray, scale: float, alpha: float) -> np.ndarray:
    return scale * (-np.log(u) / np.exp(h)) ** (1.0 / alpha)


def _open_uniform(rng: np.random.Generator, n: int) -> np.ndarray:
    # Generator.random is [0, 1); reflect to (0, 1]
    u = 1.0 - rng.random(n)
    # u == 1 gives time 0
    while np.any(u >= 1.0):
        bad = u >= 1.0
        u[bad] = 1.0 - rng.random(int(bad.sum()))
    return u


def generate_times(x: np.ndarray, z: np.ndarray, config: SimulationConfig, seed=None,
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Counterfactual and factual event times ``(Y, Y0, Y1)``.

    One uniform ``u`` per subject drives both arms unless ``config.independent_u``.
    """
    rng = _rng(seed)
    n = len(x)
    u0 = _open_uniform(rng, n)
    u1 = _open_uniform(rng, n) if config.independent_u else u0
    h0 = x @ np.asarray(config.h0_coef)
    h1 = x @ np.asarray(config.h1_coef)
    w = config.weibull
    y0 = weibull_times(u0, h0, w.lambda0, w.alpha)
    y1 = weibull_times(u1, h1, w.lambda1, w.alpha)
    y = np.where(np.asarray(z) == 1, y1, y0)
    return y, y0, y1


def expected_censoring(y: np.ndarray, c: float) -> float:
    """``P(C < Y)`` for ``C ~ Uniform(0, c)``, averaged over the given event times."""
    return float(np.mean(np.minimum(y / c, 1.0)))


def calibrate_censoring(y: np.ndarray, target: float, seed=None, *, iterations: int = 60,
                        tolerance: float = 0.01) -> tuple[np.ndarray, float]:
    """Find ``c`` so that ``Uniform(0, c)`` censoring hits ``target``, then draw ``C``.

    Bisection runs on the exact conditional censoring probability given ``y``
    (monotone decreasing in ``c``).  ``target == 0`` returns ``C = inf``.
    """
    y = np.asarray(y, dtype=float)
    if not 0 <= target <= 0.95:
        raise CalibrationError(f"censoring target must lie in [0, 0.95], got {target}")
    if target == 0:
        return np.full(len(y), np.inf), float("inf")
    lo, hi = 0.0, float(np.max(y))
    while expected_censoring(y, hi) > target:
        hi *= 2
    lo = hi
    while expected_censoring(y, lo) < target:
        lo /= 2
        if lo < 1e-300:
            raise CalibrationError(f"censoring target {target} is unattainable")
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if expected_censoring(y, mid) > target:
            lo = mid
        else:
            hi = mid
    c_max = 0.5 * (lo + hi)
    if abs(expected_censoring(y, c_max) - target) > tolerance:
        raise CalibrationError(f"could not reach censoring target {target}")
    c = _rng(seed).uniform(0.0, c_max, len(y))
    return c, c_max


def simulate(config: SimulationConfig) -> SimulatedCohort:
    """Compose covariates, assignment, event times and censoring from one seed."""
    s_x, s_z, s_t, s_c = np.random.SeedSequence(config.seed).spawn(4)
    x = generate_covariates(config.n, config.collider, np.random.default_rng(s_x),
                            deterministic=config.collider_deterministic)
    z, p = assign_treatment(x, config.beta, np.random.default_rng(s_z))
    y, y0, y1 = generate_times(x, z, config, np.random.default_rng(s_t))
    c, c_max = calibrate_censoring(y, config.censoring_target, np.random.default_rng(s_c))
    t = np.minimum(y, c)
    delta = (y < c).astype(int)
    data = Dataset(x, z, t, delta, ("x1", "x2", "x3"))
    return SimulatedCohort(data, y, y0, y1, p, c, c_max, config)


def standardized_mean_difference(x: np.ndarray, z: np.ndarray, beta) -> float:
    """Absolute standardized mean difference of ``x @ beta`` between arms (pooled sd)."""
    s = np.asarray(x) @ np.asarray(beta, dtype=float)
    z = np.asarray(z).astype(bool)
    a, b = s[z], s[~z]
    pooled = np.sqrt(0.5 * (a.var(ddof=1) + b.var(ddof=1)))
    return float(abs(a.mean() - b.mean()) / pooled)
