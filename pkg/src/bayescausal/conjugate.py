"""Closed-form Gaussian belief updates over (theta, psi).

Updates consume sufficient statistics, so their cost does not depend on the
number of samples. Unlabeled causes only add precision to the theta block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    LOG_2PI,
    Gaussian2,
    LikelihoodSpec,
    ObservationSet,
    SufficientStats,
    ValidationError,
    sufficient_stats,
    transform_labeled,
)

SINGULAR_RTOL = 1e-15


class SingularMatrixError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Gaussian1:
    mean: float
    var: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.var)):
            raise ValidationError("mean and variance must be finite")
        if self.var <= 0:
            raise ValidationError(f"variance must be > 0, got {self.var}")

    def pdf(self, values):
        return np.exp(log_density_1d(self, values))


def _inv2(a: float, b: float, c: float, d: float) -> tuple[float, float, float]:
    det = a * d - b * c
    if not det > SINGULAR_RTOL * (a * a + b * b + c * c + d * d):
        raise SingularMatrixError(f"matrix is numerically singular (det={det:.3e})")
    return d / det, -0.5 * (b + c) / det, a / det


def inv2(m) -> np.ndarray:
    """Inverse of a symmetric 2x2 matrix via the adjugate, re-symmetrized."""
    a, b, c, d = np.asarray(m, dtype=float).ravel().tolist()
    p, q, r = _inv2(a, b, c, d)
    return np.array([[p, q], [q, r]])


def _update(prior: Gaussian2, info: tuple[float, float], weighted: tuple[float, float]) -> Gaussian2:
    # precision and linear term are additive; info is diagonal
    a, b, _, d = prior.cov.ravel().tolist()
    m0, m1 = prior.mean.tolist()
    p00, p01, p11 = _inv2(a, b, b, d)
    l0 = weighted[0] + p00 * m0 + p01 * m1
    l1 = weighted[1] + p01 * m0 + p11 * m1
    s00, s01, s11 = _inv2(p00 + info[0], p01, p01, p11 + info[1])
    return Gaussian2(
        mean=[s00 * l0 + s01 * l1, s01 * l0 + s11 * l1],
        cov=[[s00, s01], [s01, s11]],
    )


def supervised_update(prior: Gaussian2, stats: SufficientStats, lik: LikelihoodSpec) -> Gaussian2:
    """Posterior after ``stats.n`` labeled (x, eta) pairs."""
    if stats.n < 0:
        raise ValidationError("sample count must be >= 0")
    if stats.n == 0:
        inv2(prior.cov)
        return prior
    n = stats.n
    info = (n / lik.var_x, n / lik.var_eta)
    weighted = (n * stats.mean_x / lik.var_x, n * stats.mean_eta / lik.var_eta)
    return _update(prior, info, weighted)


def semi_supervised_update(prior: Gaussian2, m: int, mean_x_unlabeled: float, lik: LikelihoodSpec) -> Gaussian2:
    """Posterior after ``m`` cause-only samples with mean ``mean_x_unlabeled``.

    The noise component of the data vector is fixed to 0; the masked
    precision ``diag(1/var_x, 0)`` never reads it.
    """
    if m < 0:
        raise ValidationError("unlabeled count must be >= 0")
    if m == 0:
        inv2(prior.cov)
        return prior
    info = (m / lik.var_x, 0.0)
    return _update(prior, info, (info[0] * mean_x_unlabeled, info[1] * 0.0))


def chain_update(
    prior: Gaussian2,
    m: int,
    mean_x_unlabeled: float,
    stats: SufficientStats,
    lik: LikelihoodSpec,
) -> Gaussian2:
    """Cause-only update followed by the labeled update."""
    return supervised_update(semi_supervised_update(prior, m, mean_x_unlabeled, lik), stats, lik)


def posterior(prior: Gaussian2, obs: ObservationSet, lik: LikelihoodSpec) -> Gaussian2:
    """Conjugate posterior from raw observations."""
    stats = sufficient_stats(transform_labeled(obs.labeled))
    mean_u = float(np.mean(obs.unlabeled_causes)) if obs.m else 0.0
    return chain_update(prior, obs.m, mean_u, stats, lik)


def marginal_psi(g: Gaussian2) -> Gaussian1:
    return Gaussian1(mean=float(g.mean[1]), var=float(g.cov[1, 1]))


def marginal_theta(g: Gaussian2) -> Gaussian1:
    return Gaussian1(mean=float(g.mean[0]), var=float(g.cov[0, 0]))


def condition_psi_on_theta(g: Gaussian2, theta: float) -> Gaussian1:
    """Conditional belief about psi once theta is known exactly."""
    c = g.cov
    gain = c[0, 1] / c[0, 0]
    return Gaussian1(
        mean=float(g.mean[1] + gain * (theta - g.mean[0])),
        var=float(c[1, 1] - gain * c[0, 1]),
    )


def log_density_1d(g: Gaussian1, value):
    d = np.asarray(value, dtype=float) - g.mean
    out = -0.5 * (LOG_2PI + math.log(g.var)) - 0.5 * d * d / g.var
    return out if np.ndim(out) else float(out)
