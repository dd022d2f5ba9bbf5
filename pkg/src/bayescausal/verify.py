"""Grid-based verification battery.

Checks the closed-form engine against the grid oracle, and measures on the
grid that a factorized prior stays factorized and that cause-only data leave
p(psi | theta, D) untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np

from .conjugate import posterior
from .experiments import ExperimentConfig, TrueParams, draw_observations, stream
from .grid import (
    GridDensity,
    GridSpec,
    auto_grid_posterior,
    conditional_slice_gap,
    default_unlabeled_loglik,
    factorization_gap,
    grid_mutual_information,
    grid_posterior,
)
from .model import Gaussian2, LikelihoodSpec, ObservationSet, PriorSpec, unlabeled_log_likelihood

BATTERY_RHOS = (-0.9, 0.0, 0.5, 0.9)
BATTERY_N = (0, 1, 5)
BATTERY_M = (0, 10)

ORACLE_TOL = 1e-3
REFINEMENT_MIN_RATIO = 3.0
FACTORIZATION_TOL = 1e-6
MI_ZERO_TOL = 1e-5
PRIOR_MI_TOL = 1e-3
SLICE_TOL = 1e-6
DETECTOR_MIN_GAP = 0.01
SLICE_N, SLICE_M, SLICE_RHO = 5, 50, 0.75

_MIX = (
    (0.5, Gaussian2([-1.0, 1.0], [[0.5, 0.3], [0.3, 0.5]])),
    (0.5, Gaussian2([1.5, -0.5], [[0.6, -0.2], [-0.2, 0.4]])),
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"[{status}] {self.name}: value={self.value:.6g} tolerance={self.tolerance:.6g}"
        return f"{text} ({self.detail})" if self.detail else text


def mixture_prior_logpdf(theta, psi):
    """Two-component Gaussian mixture prior with opposite correlations."""
    parts = [math.log(w) + g.logpdf(theta, psi) for w, g in _MIX]
    return np.logaddexp(*parts)


def leaky_unlabeled_loglik(theta, psi, causes, lik: LikelihoodSpec):
    """Test fixture: cause-only data that also inform psi, which an ICM forbids."""
    return unlabeled_log_likelihood(causes, theta, lik) + unlabeled_log_likelihood(causes, psi, lik)


def battery_observations(cfg: ExperimentConfig, n: int, m: int) -> ObservationSet:
    tp = TrueParams(cfg.theta_star, cfg.psi_star)
    return draw_observations(stream(cfg.master_seed, "verify", n, m), tp, cfg.lik, n, m)


def moment_error(g: GridDensity, exact: Gaussian2) -> float:
    mo = g.moments()
    return max(
        abs(mo["mean_theta"] - exact.mean[0]),
        abs(mo["mean_psi"] - exact.mean[1]),
        abs(mo["var_theta"] - exact.cov[0, 0]),
        abs(mo["var_psi"] - exact.cov[1, 1]),
    )


def oracle_tolerance(spec: GridSpec) -> float:
    return min(ORACLE_TOL, 2.0 * spec.max_width**2)


def refinement(prior: Gaussian2, obs: ObservationSet, lik: LikelihoodSpec, n_sigma: float = 10.0):
    """Error of grid moments at a coarse grid and at half its cell width.

    The coarse grid is the first in 8, 16, 32, ... cells per axis whose
    moment error drops below 0.05, so that the error is resolved well above
    round-off. Returns ``(cells, coarse_error, fine_error)``.
    """
    exact = posterior(prior, obs, lik)
    base = GridSpec.around(prior, n_sigma, 8)
    n = 8
    err = moment_error(grid_posterior(prior, obs, lik, base), exact)
    while err >= 0.05 and n < 1024:
        n *= 2
        err = moment_error(grid_posterior(prior, obs, lik, GridSpec.around(prior, n_sigma, n)), exact)
    fine = moment_error(grid_posterior(prior, obs, lik, GridSpec.around(prior, n_sigma, 2 * n)), exact)
    return n, err, fine


def battery(cfg: ExperimentConfig):
    """Yield ``(rho, n, m, prior, obs, grid, exact)`` for every battery case."""
    for rho in BATTERY_RHOS:
        prior = PriorSpec(cfg.prior.mean_theta, cfg.prior.mean_psi, cfg.prior.var_theta, cfg.prior.var_psi, rho).to_gaussian()
        for n in BATTERY_N:
            for m in BATTERY_M:
                obs = battery_observations(cfg, n, m)
                grid = auto_grid_posterior(prior, obs, cfg.lik, GridSpec.around(prior))
                yield rho, n, m, prior, obs, grid, posterior(prior, obs, cfg.lik)


def slice_gap(cfg: ExperimentConfig, prior, spec: GridSpec, inject_violation: bool = False) -> float:
    obs_full = battery_observations(cfg, SLICE_N, SLICE_M)
    obs_d = ObservationSet(labeled=obs_full.labeled)
    loglik = leaky_unlabeled_loglik if inject_violation else default_unlabeled_loglik
    with_dx = grid_posterior(prior, obs_full, cfg.lik, spec, unlabeled_loglik=loglik)
    without_dx = grid_posterior(prior, obs_d, cfg.lik, spec)
    return conditional_slice_gap(with_dx, without_dx)


def run_verification(cfg: ExperimentConfig, inject_violation: bool = False) -> list[CheckResult]:
    results: list[CheckResult] = []
    oracle_err, oracle_tol, worst = 0.0, ORACLE_TOL, ""
    ratios = []
    fact_gap, fact_mi = 0.0, 0.0
    mismatches = []
    for rho, n, m, prior, obs, grid, exact in battery(cfg):
        err = moment_error(grid, exact)
        tol = oracle_tolerance(grid.spec)
        if err / tol > oracle_err / oracle_tol:
            oracle_err, oracle_tol, worst = err, tol, f"worst at rho={rho}, N={n}, M={m}"
        cells, coarse, fine = refinement(prior, obs, cfg.lik)
        ratios.append((coarse / fine if fine > 0 else math.inf, rho, n, m))
        gap = factorization_gap(grid)
        mi = grid_mutual_information(grid)
        if rho == 0.0:
            fact_gap, fact_mi = max(fact_gap, gap), max(fact_mi, mi)
        if (gap < 1e-8) != (mi < 1e-7):
            mismatches.append(f"rho={rho},N={n},M={m}")

    results.append(CheckResult("oracle_equivalence", oracle_err <= oracle_tol, oracle_err, oracle_tol, worst))
    worst_ratio = min(ratios)
    results.append(
        CheckResult(
            "refinement_convergence",
            worst_ratio[0] >= REFINEMENT_MIN_RATIO,
            worst_ratio[0],
            REFINEMENT_MIN_RATIO,
            f"smallest error reduction on halving h, at rho={worst_ratio[1]}, N={worst_ratio[2]}, M={worst_ratio[3]}",
        )
    )
    results.append(CheckResult("factorization_gap_rho0", fact_gap < FACTORIZATION_TOL, fact_gap, FACTORIZATION_TOL))
    results.append(CheckResult("mutual_information_rho0", fact_mi < MI_ZERO_TOL, fact_mi, MI_ZERO_TOL, "nats"))
    results.append(
        CheckResult("mi_factorization_covanish", not mismatches, float(len(mismatches)), 0.0, ", ".join(mismatches))
    )

    for rho in cfg.rho_list:
        prior = cfg.prior_for(rho).to_gaussian()
        g = grid_posterior(prior, ObservationSet(), cfg.lik, GridSpec.around(prior))
        mi = grid_mutual_information(g)
        expected = -0.5 * math.log(1.0 - rho * rho) + 0.0
        results.append(
            CheckResult(
                f"prior_mutual_information[rho={rho:g}]",
                abs(mi - expected) <= PRIOR_MI_TOL,
                mi,
                PRIOR_MI_TOL,
                f"analytic {expected:.6g} nats, factorization gap {factorization_gap(g):.3g}",
            )
        )

    gauss = cfg.prior_for(SLICE_RHO).to_gaussian()
    gauss_spec = GridSpec.around(gauss)
    mix_spec = GridSpec(-6.0, 6.0, -6.0, 6.0)
    for name, prior, spec in (
        ("conditional_slice_gaussian", gauss, gauss_spec),
        ("conditional_slice_mixture", mixture_prior_logpdf, mix_spec),
    ):
        gap = slice_gap(cfg, prior, spec, inject_violation)
        detail = f"N={SLICE_N}, M={SLICE_M}" + (", violating likelihood injected" if inject_violation else "")
        results.append(CheckResult(name, gap < SLICE_TOL, gap, SLICE_TOL, detail))

    control = slice_gap(cfg, gauss, gauss_spec, inject_violation=True)
    results.append(
        CheckResult("violation_detector_fires", control > DETECTOR_MIN_GAP, control, DETECTOR_MIN_GAP, "gap must exceed tolerance")
    )
    return results
