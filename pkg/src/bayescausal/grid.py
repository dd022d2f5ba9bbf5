"""Discretized joint posterior over (theta, psi) on a uniform midpoint grid.

This is the numerical oracle for arbitrary (non-conjugate) priors. Densities
live in log space; linear-space values are produced only for sums and export.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Union

import numpy as np
from scipy.special import logsumexp

from .model import (
    Gaussian2,
    LikelihoodSpec,
    ObservationSet,
    log_likelihood,
    transform_labeled,
    unlabeled_log_likelihood,
)

LOG_FLOOR = -745.0
BOUNDARY_MASS_TOL = 1e-3
ROW_MASS_MIN = 1e-8

LogDensityFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
UnlabeledLogLik = Callable[[np.ndarray, np.ndarray, tuple, LikelihoodSpec], np.ndarray]


class BoundaryMassError(RuntimeError):
    """Too much posterior mass sits in the outermost cells of the grid."""

    def __init__(self, mass: float):
        super().__init__(f"{mass:.3e} of the posterior mass lies in edge cells (limit {BOUNDARY_MASS_TOL:g})")
        self.mass = mass


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    theta_min: float
    theta_max: float
    psi_min: float
    psi_max: float
    n_theta: int = 401
    n_psi: int = 401

    def __post_init__(self):
        if not (self.theta_max > self.theta_min and self.psi_max > self.psi_min):
            raise ValueError("grid bounds must satisfy max > min on both axes")
        if self.n_theta < 2 or self.n_psi < 2:
            raise ValueError("grid needs at least 2 cells per axis")

    @classmethod
    def around(cls, g: Gaussian2, n_sigma: float = 6.0, n_cells: int = 401) -> "GridSpec":
        """Grid spanning ``mean +- n_sigma`` marginal standard deviations of ``g``."""
        st, sp = math.sqrt(g.cov[0, 0]), math.sqrt(g.cov[1, 1])
        mt, mp = float(g.mean[0]), float(g.mean[1])
        return cls(mt - n_sigma * st, mt + n_sigma * st, mp - n_sigma * sp, mp + n_sigma * sp, n_cells, n_cells)

    @property
    def h_theta(self) -> float:
        return (self.theta_max - self.theta_min) / self.n_theta

    @property
    def h_psi(self) -> float:
        return (self.psi_max - self.psi_min) / self.n_psi

    @property
    def max_width(self) -> float:
        return max(self.h_theta, self.h_psi)

    @property
    def cell_area(self) -> float:
        return self.h_theta * self.h_psi

    def theta_centers(self) -> np.ndarray:
        return self.theta_min + (np.arange(self.n_theta) + 0.5) * self.h_theta

    def psi_centers(self) -> np.ndarray:
        return self.psi_min + (np.arange(self.n_psi) + 0.5) * self.h_psi

    def refined(self, factor: int = 2) -> "GridSpec":
        return replace(self, n_theta=self.n_theta * factor, n_psi=self.n_psi * factor)

    def widened(self, factor: float = 1.5) -> "GridSpec":
        ct, cp = 0.5 * (self.theta_min + self.theta_max), 0.5 * (self.psi_min + self.psi_max)
        ht, hp = 0.5 * factor * (self.theta_max - self.theta_min), 0.5 * factor * (self.psi_max - self.psi_min)
        return replace(self, theta_min=ct - ht, theta_max=ct + ht, psi_min=cp - hp, psi_max=cp + hp)


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Log-density values at cell centers; axis 0 is theta, axis 1 is psi."""

    spec: GridSpec
    log_values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        lv = np.maximum(np.array(self.log_values, dtype=float), LOG_FLOOR)
        if lv.shape != (self.spec.n_theta, self.spec.n_psi):
            raise ValueError(f"log_values shape {lv.shape} does not match grid")
        if not np.all(np.isfinite(lv)):
            raise ValueError("log_values must be finite")
        lv.setflags(write=False)
        object.__setattr__(self, "log_values", lv)

    def density(self) -> np.ndarray:
        """Linear-space density; cells at the log floor are exactly 0."""
        lv = self.log_values
        return np.where(lv > LOG_FLOOR, np.exp(lv), 0.0)

    def total_mass(self) -> float:
        return float(self.density().sum() * self.spec.cell_area)

    def marginal_theta(self) -> np.ndarray:
        return self.density().sum(axis=1) * self.spec.h_psi

    def marginal_psi(self) -> np.ndarray:
        return self.density().sum(axis=0) * self.spec.h_theta

    def moments(self) -> dict[str, float]:
        """Marginal means and variances plus the covariance, by the midpoint rule."""
        s = self.spec
        t, p = s.theta_centers(), s.psi_centers()
        pt, pp = self.marginal_theta() * s.h_theta, self.marginal_psi() * s.h_psi
        mt, mp = float(pt @ t), float(pp @ p)
        cross = float(((t - mt) @ (self.density() * s.cell_area)) @ (p - mp))
        return {
            "mean_theta": mt,
            "mean_psi": mp,
            "var_theta": float(pt @ (t - mt) ** 2),
            "var_psi": float(pp @ (p - mp) ** 2),
            "cov": cross,
        }

    def edge_mass(self) -> float:
        d = self.density() * self.spec.cell_area
        interior = d[1:-1, 1:-1].sum()
        return float(d.sum() - interior)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        t, p = self.spec.theta_centers(), self.spec.psi_centers()
        dens = self.density()
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["theta", "psi", "density"])
            for i in range(t.size):
                for j in range(p.size):
                    w.writerow([format(t[i], ".17g"), format(p[j], ".17g"), format(dens[i, j], ".17g")])
        return path


def normalize(log_values: np.ndarray, spec: GridSpec) -> GridDensity:
    lv = np.maximum(np.asarray(log_values, dtype=float), LOG_FLOOR)
    log_z = logsumexp(lv) + math.log(spec.cell_area)
    return GridDensity(spec, lv - log_z, normalized=True)


def _prior_log_values(prior, tt: np.ndarray, pp: np.ndarray) -> np.ndarray:
    if isinstance(prior, Gaussian2):
        return prior.logpdf(tt, pp)
    return np.broadcast_to(np.asarray(prior(tt, pp), dtype=float), (tt.shape[0], pp.shape[1]))


def default_unlabeled_loglik(theta, psi, causes, lik: LikelihoodSpec):
    return unlabeled_log_likelihood(causes, theta, lik)


def grid_posterior(
    prior: Union[Gaussian2, LogDensityFn],
    obs: ObservationSet,
    lik: LikelihoodSpec,
    spec: GridSpec,
    unlabeled_loglik: UnlabeledLogLik = default_unlabeled_loglik,
    check_boundary: bool = True,
) -> GridDensity:
    """Normalized joint posterior p(theta, psi | D, D_x) on ``spec``.

    ``prior`` is a Gaussian2 or a callable returning the (possibly
    unnormalized) prior log-density on broadcast (theta, psi) arrays.
    ``unlabeled_loglik`` is exposed so tests can inject a likelihood in which
    cause-only data depend on psi.
    """
    tt = spec.theta_centers()[:, None]
    pp = spec.psi_centers()[None, :]
    lv = _prior_log_values(prior, tt, pp)
    if obs.n:
        lv = lv + log_likelihood(transform_labeled(obs.labeled), tt, pp, lik)
    if obs.m:
        lv = lv + unlabeled_loglik(tt, pp, obs.unlabeled_causes, lik)
    g = normalize(lv, spec)
    if check_boundary:
        edge = g.edge_mass()
        if edge > BOUNDARY_MASS_TOL:
            raise BoundaryMassError(edge)
    return g


def auto_grid_posterior(prior, obs, lik, spec: GridSpec, max_widen: int = 8, **kw) -> GridDensity:
    """``grid_posterior`` that widens the grid until the boundary-mass check passes."""
    for _ in range(max_widen):
        try:
            return grid_posterior(prior, obs, lik, spec, **kw)
        except BoundaryMassError:
            spec = spec.widened()
    return grid_posterior(prior, obs, lik, spec, **kw)


def factorization_gap(g: GridDensity) -> float:
    """Total-variation distance between ``g`` and the product of its marginals."""
    _require_normalized(g)
    p = g.density()
    prod = np.outer(g.marginal_theta(), g.marginal_psi())
    tv = 0.5 * float(np.abs(p - prod).sum()) * g.spec.cell_area
    return min(max(tv, 0.0), 1.0)


def _row_conditionals(g: GridDensity, rows: np.ndarray) -> np.ndarray:
    lv = g.log_values[rows]
    lv = lv - logsumexp(lv, axis=1, keepdims=True)
    return np.exp(lv)


def conditional_slice_gap(with_dx: GridDensity, without_dx: GridDensity, row_mass_min: float = ROW_MASS_MIN) -> float:
    """Largest TV distance between p(psi | theta, ...) rows of two grids.

    Rows whose theta-mass is below ``row_mass_min`` in either grid are
    skipped. Each compared row is renormalized (in log space) first.
    """
    if with_dx.spec != without_dx.spec:
        raise GridMismatchError("grids must share one GridSpec")
    _require_normalized(with_dx)
    _require_normalized(without_dx)
    h = with_dx.spec.h_theta
    mass_a = with_dx.marginal_theta() * h
    mass_b = without_dx.marginal_theta() * h
    rows = np.flatnonzero((mass_a > row_mass_min) & (mass_b > row_mass_min))
    if rows.size == 0:
        return 0.0
    a = _row_conditionals(with_dx, rows)
    b = _row_conditionals(without_dx, rows)
    return float(0.5 * np.abs(a - b).sum(axis=1).max())


def grid_mutual_information(g: GridDensity) -> float:
    """Mutual information (nats) between theta and psi under ``g``."""
    _require_normalized(g)
    s = g.spec
    lv = g.log_values
    keep = lv > LOG_FLOOR
    mt, mp = g.marginal_theta(), g.marginal_psi()
    with np.errstate(divide="ignore"):
        log_prod = np.log(mt)[:, None] + np.log(mp)[None, :]
    terms = np.where(keep, np.exp(lv) * (lv - log_prod), 0.0)
    mi = float(terms.sum()) * s.cell_area
    if -1e-9 <= mi < 0:
        mi = 0.0
    return mi


def _require_normalized(g: GridDensity):
    if not g.normalized:
        raise ValueError("grid density must be normalized")
