"""Domain types, dataset transformation and likelihood evaluation.

The cause ``x`` has a Gaussian distribution with mean ``theta`` and the
mechanism is additive, ``y = x + eta`` with ``eta`` Gaussian with mean ``psi``.
Both inference engines (closed-form and grid) build on the helpers here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


class ValidationError(ValueError):
    """Raised when a domain object violates one of its invariants."""


@dataclass(frozen=True, eq=False)
class Gaussian2:
    """Bivariate Gaussian over (theta, psi)."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        if mean.shape != (2,) or cov.shape != (2, 2):
            raise ValidationError(f"expected 2-vector and 2x2 matrix, got {mean.shape} and {cov.shape}")
        a, b, c, d = cov.ravel().tolist()
        if not all(map(math.isfinite, (a, b, c, d, *mean.tolist()))):
            raise ValidationError("mean and covariance must be finite")
        if abs(b - c) > 1e-12 * max(abs(b), abs(c), 1.0):
            raise ValidationError("covariance is not symmetric")
        off = 0.5 * (b + c)
        if not (a > 0 and a * d - off * off > 0):
            raise ValidationError("covariance is not positive definite")
        cov[0, 1] = cov[1, 0] = off
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def det(self) -> float:
        c = self.cov
        return float(c[0, 0] * c[1, 1] - c[0, 1] * c[1, 0])

    @property
    def corr(self) -> float:
        c = self.cov
        return float(c[0, 1] / math.sqrt(c[0, 0] * c[1, 1]))

    def logpdf(self, theta, psi):
        """Log-density, broadcasting over array-valued ``theta`` and ``psi``."""
        c = self.cov
        det = self.det
        dt = np.asarray(theta, dtype=float) - self.mean[0]
        dp = np.asarray(psi, dtype=float) - self.mean[1]
        quad = (c[1, 1] * dt * dt - 2.0 * c[0, 1] * dt * dp + c[0, 0] * dp * dp) / det
        return -LOG_2PI - 0.5 * math.log(det) - 0.5 * quad

    def __repr__(self):
        return f"Gaussian2(mean={self.mean.tolist()}, cov={self.cov.tolist()})"


@dataclass(frozen=True)
class PriorSpec:
    mean_theta: float = 0.0
    mean_psi: float = 0.0
    var_theta: float = 1.0
    var_psi: float = 1.0
    rho: float = 0.0

    def __post_init__(self):
        for name in ("mean_theta", "mean_psi", "var_theta", "var_psi", "rho"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite")
        if self.var_theta <= 0:
            raise ValidationError("var_theta must be > 0")
        if self.var_psi <= 0:
            raise ValidationError("var_psi must be > 0")
        if not abs(self.rho) < 1:
            raise ValidationError(f"rho must satisfy |rho| < 1, got {self.rho}")

    def to_gaussian(self) -> Gaussian2:
        off = self.rho * math.sqrt(self.var_theta * self.var_psi)
        return Gaussian2(
            mean=[self.mean_theta, self.mean_psi],
            cov=[[self.var_theta, off], [off, self.var_psi]],
        )


@dataclass(frozen=True)
class LikelihoodSpec:
    """Per-sample observation variances of the cause and of the noise."""

    var_x: float = 3.0
    var_eta: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.var_x) and self.var_x > 0):
            raise ValidationError("var_x must be finite and > 0")
        if not (math.isfinite(self.var_eta) and self.var_eta > 0):
            raise ValidationError("var_eta must be finite and > 0")

    @classmethod
    def from_matrix(cls, cov) -> "LikelihoodSpec":
        """Build from a 2x2 observation covariance; only diagonal matrices are accepted."""
        cov = np.asarray(cov, dtype=float)
        if cov.shape != (2, 2):
            raise ValidationError("observation covariance must be 2x2")
        if cov[0, 1] != 0 or cov[1, 0] != 0:
            raise ValidationError("cause and noise must be independent (diagonal covariance)")
        return cls(var_x=float(cov[0, 0]), var_eta=float(cov[1, 1]))

    @property
    def cov(self) -> np.ndarray:
        return np.diag([self.var_x, self.var_eta])


@dataclass(frozen=True)
class LabeledSample:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValidationError("labeled sample values must be finite")


@dataclass(frozen=True)
class ObservationSet:
    labeled: tuple[LabeledSample, ...] = ()
    unlabeled_causes: tuple[float, ...] = ()

    def __post_init__(self):
        labeled = tuple(s if isinstance(s, LabeledSample) else LabeledSample(*s) for s in self.labeled)
        causes = tuple(float(c) for c in self.unlabeled_causes)
        if not all(math.isfinite(c) for c in causes):
            raise ValidationError("unlabeled causes must be finite")
        object.__setattr__(self, "labeled", labeled)
        object.__setattr__(self, "unlabeled_causes", causes)

    @property
    def n(self) -> int:
        return len(self.labeled)

    @property
    def m(self) -> int:
        return len(self.unlabeled_causes)


@dataclass(frozen=True)
class SufficientStats:
    """Sample size and means of a labeled dataset. Means are 0 when ``n == 0``."""

    n: int = 0
    mean_x: float = 0.0
    mean_eta: float = 0.0

    @classmethod
    def combine(cls, a: "SufficientStats", b: "SufficientStats") -> "SufficientStats":
        n = a.n + b.n
        if n == 0:
            return cls()
        return cls(
            n=n,
            mean_x=(a.n * a.mean_x + b.n * b.mean_x) / n,
            mean_eta=(a.n * a.mean_eta + b.n * b.mean_eta) / n,
        )


def transform_labeled(labeled: Iterable[LabeledSample]) -> list[tuple[float, float]]:
    """Map labeled pairs (x, y) to cause/noise pairs (x, y - x)."""
    return [(s.x, s.y - s.x) for s in labeled]


def sufficient_stats(pairs: Sequence[tuple[float, float]]) -> SufficientStats:
    n = len(pairs)
    if n == 0:
        return SufficientStats()
    arr = np.asarray(pairs, dtype=float).reshape(n, 2)
    mx, me = arr.mean(axis=0)
    return SufficientStats(n=n, mean_x=float(mx), mean_eta=float(me))


def _gaussian_logpdf_sum(values: np.ndarray, loc, var: float):
    # sum_i log N(v_i; loc, var) via sum_i (v_i - loc)^2 = S + n (vbar - loc)^2
    n = values.size
    if n == 0:
        return np.zeros(np.shape(loc)) if np.ndim(loc) else 0.0
    vbar = values.mean()
    scatter = float(np.sum((values - vbar) ** 2))
    d = np.asarray(loc, dtype=float) - vbar
    out = -0.5 * n * (LOG_2PI + math.log(var)) - (scatter + n * d * d) / (2.0 * var)
    return out if np.ndim(out) else float(out)


def log_likelihood(pairs: Sequence[tuple[float, float]], theta, psi, lik: LikelihoodSpec):
    """Log-likelihood of cause/noise pairs given (theta, psi).

    ``theta`` and ``psi`` may be arrays; the result broadcasts over them.
    """
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
    return _gaussian_logpdf_sum(arr[:, 0], theta, lik.var_x) + _gaussian_logpdf_sum(arr[:, 1], psi, lik.var_eta)


def unlabeled_log_likelihood(causes: Sequence[float], theta, lik: LikelihoodSpec):
    """Log-likelihood of cause-only data. Depends on theta alone."""
    return _gaussian_logpdf_sum(np.asarray(causes, dtype=float).reshape(-1), theta, lik.var_x)
