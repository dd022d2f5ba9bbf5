import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from bayescausal.conjugate import posterior
from bayescausal.grid import (
    LOG_FLOOR,
    BoundaryMassError,
    GridDensity,
    GridMismatchError,
    GridSpec,
    auto_grid_posterior,
    conditional_slice_gap,
    factorization_gap,
    grid_mutual_information,
    grid_posterior,
    normalize,
)
from bayescausal.model import Gaussian2, LikelihoodSpec, ObservationSet, PriorSpec, unlabeled_log_likelihood
from bayescausal.verify import leaky_unlabeled_loglik, mixture_prior_logpdf, refinement

LIK = LikelihoodSpec(3.0, 1.0)
P075 = PriorSpec(rho=0.75).to_gaussian()
P0 = PriorSpec(rho=0.0).to_gaussian()
OBS = ObservationSet(labeled=[(0.2, -1.5), (1.7, -2.2)], unlabeled_causes=[0.9, 1.3, -0.2, 2.1, 0.4])


def gaussian_grid(rho, n=401):
    g = PriorSpec(rho=rho).to_gaussian()
    return grid_posterior(g, ObservationSet(), LIK, GridSpec.around(g, 6.0, n))


def test_gridspec_geometry():
    s = GridSpec(-1.0, 1.0, 0.0, 4.0, 4, 8)
    assert s.h_theta == 0.5 and s.h_psi == 0.5 and s.cell_area == 0.25
    np.testing.assert_allclose(s.theta_centers(), [-0.75, -0.25, 0.25, 0.75])
    assert s.refined().n_theta == 8
    w = s.widened(2.0)
    assert (w.theta_min, w.theta_max) == (-2.0, 2.0)
    with pytest.raises(ValueError):
        GridSpec(1.0, 1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        GridSpec(0.0, 1.0, 0.0, 1.0, 1, 5)


def test_empty_observations_reproduce_prior_density():
    spec = GridSpec.around(P075)
    g = grid_posterior(P075, ObservationSet(), LIK, spec)
    t, p = spec.theta_centers(), spec.psi_centers()
    tt, pp = np.meshgrid(t, p, indexing="ij")
    exact = multivariate_normal(P075.mean, P075.cov).pdf(np.dstack([tt, pp]))
    interior = (slice(1, -1), slice(1, -1))
    dens = g.density()[interior]
    ref = exact[interior]
    mask = ref > 1e-300
    assert np.max(np.abs(dens[mask] / ref[mask] - 1)) < 1e-6


def test_single_sample_matches_conjugate():
    obs = ObservationSet(labeled=[(1.0, -2.0)])
    spec = GridSpec.around(P075)
    mo = grid_posterior(P075, obs, LIK, spec).moments()
    exact = posterior(P075, obs, LIK)
    tol = 2 * spec.max_width**2
    assert abs(mo["mean_theta"] - exact.mean[0]) < tol
    assert abs(mo["mean_psi"] - exact.mean[1]) < tol
    assert abs(mo["var_theta"] - exact.cov[0, 0]) < tol
    assert abs(mo["var_psi"] - exact.cov[1, 1]) < tol


def test_mixture_prior_normalizes():
    g = grid_posterior(mixture_prior_logpdf, OBS, LIK, GridSpec(-6, 6, -6, 6))
    assert g.normalized
    assert abs(g.total_mass() - 1) < 1e-6
    assert np.all(np.isfinite(g.log_values))


def test_boundary_mass_error_and_auto_widen():
    tight = GridSpec(-0.5, 0.5, -0.5, 0.5, 41, 41)
    with pytest.raises(BoundaryMassError):
        grid_posterior(P075, ObservationSet(), LIK, tight)
    g = auto_grid_posterior(P075, ObservationSet(), LIK, tight)
    assert g.edge_mass() <= 1e-3
    assert g.spec.theta_max > 0.5


def test_log_floor_applied():
    spec = GridSpec(-40, 40, -40, 40, 101, 101)
    g = grid_posterior(Gaussian2([0, 0], np.eye(2) * 0.01), ObservationSet(), LIK, spec)
    assert g.log_values.min() == LOG_FLOOR
    assert g.density().min() == 0.0


def test_factorization_gap_of_product_grid_is_zero():
    spec = GridSpec(-3, 3, -2, 2, 60, 50)
    a = np.exp(-0.5 * spec.theta_centers() ** 2)
    b = 1.0 + np.sin(spec.psi_centers()) ** 2
    g = normalize(np.log(np.outer(a, b)), spec)
    assert factorization_gap(g) < 1e-10
    assert grid_mutual_information(g) < 1e-8


def test_factorization_gap_rho0_posterior():
    g = grid_posterior(P0, OBS, LIK, GridSpec.around(P0))
    assert factorization_gap(g) < 1e-6
    assert grid_mutual_information(g) < 1e-8


def test_factorization_gap_correlated_matches_monte_carlo():
    # TV(p, q) = E_p[(1 - q/p)_+] with p the correlated and q the product Gaussian
    rng = np.random.default_rng(11)
    p = multivariate_normal([0, 0], [[1, 0.75], [0.75, 1]])
    q = multivariate_normal([0, 0], np.eye(2))
    x = p.rvs(size=400_000, random_state=rng)
    tv_mc = np.mean(np.clip(1 - np.exp(q.logpdf(x) - p.logpdf(x)), 0, None))
    gap = factorization_gap(gaussian_grid(0.75))
    assert gap > 0.2
    assert gap == pytest.approx(tv_mc, abs=5e-3)


@pytest.mark.parametrize("rho", [0.75, 0.3, -0.5])
def test_mutual_information_closed_form(rho):
    assert grid_mutual_information(gaussian_grid(rho)) == pytest.approx(-0.5 * math.log(1 - rho**2), abs=1e-3)


def test_mutual_information_reference_values():
    assert grid_mutual_information(gaussian_grid(0.75)) == pytest.approx(0.4133, abs=1e-3)
    assert grid_mutual_information(gaussian_grid(0.3)) == pytest.approx(0.0472, abs=1e-3)


def test_conditional_slice_gap_identity_and_invariance():
    spec = GridSpec.around(P075)
    without = grid_posterior(P075, ObservationSet(labeled=OBS.labeled), LIK, spec)
    assert conditional_slice_gap(without, without) == 0.0
    causes = np.random.default_rng(3).normal(1.0, math.sqrt(3), 50)
    with_dx = grid_posterior(P075, ObservationSet(labeled=OBS.labeled, unlabeled_causes=causes), LIK, spec)
    assert conditional_slice_gap(with_dx, without) < 1e-6
    # marginal of psi does move: the prior couples theta and psi
    assert np.abs(with_dx.marginal_psi() - without.marginal_psi()).sum() * spec.h_psi > 0.01


def test_conditional_slice_gap_detects_violation():
    spec = GridSpec.around(P075)
    causes = np.random.default_rng(3).normal(1.0, math.sqrt(3), 50)
    without = grid_posterior(P075, ObservationSet(labeled=OBS.labeled), LIK, spec)
    leaky = grid_posterior(
        P075, ObservationSet(labeled=OBS.labeled, unlabeled_causes=causes), LIK, spec, unlabeled_loglik=leaky_unlabeled_loglik
    )
    assert conditional_slice_gap(leaky, without) > 0.01


def test_conditional_slice_gap_rejects_mismatched_grids():
    a = grid_posterior(P075, ObservationSet(), LIK, GridSpec.around(P075, 6.0, 101))
    b = grid_posterior(P075, ObservationSet(), LIK, GridSpec.around(P075, 6.0, 103))
    with pytest.raises(GridMismatchError):
        conditional_slice_gap(a, b)


def test_unnormalized_density_rejected():
    g = GridDensity(GridSpec(-1, 1, -1, 1, 4, 4), np.zeros((4, 4)))
    with pytest.raises(ValueError):
        factorization_gap(g)


def test_permutation_and_split_invariance():
    spec = GridSpec.around(P075)
    a = grid_posterior(P075, OBS, LIK, spec)
    b = grid_posterior(P075, ObservationSet(labeled=OBS.labeled[::-1], unlabeled_causes=OBS.unlabeled_causes), LIK, spec)
    assert np.max(np.abs(a.log_values - b.log_values)) < 1e-10
    t = spec.theta_centers()
    whole = unlabeled_log_likelihood(OBS.unlabeled_causes, t, LIK)
    split = unlabeled_log_likelihood(OBS.unlabeled_causes[:2], t, LIK) + unlabeled_log_likelihood(OBS.unlabeled_causes[2:], t, LIK)
    assert np.max(np.abs(whole - split)) < 1e-10


def test_evaluation_is_deterministic():
    spec = GridSpec.around(P075)
    a = grid_posterior(P075, OBS, LIK, spec)
    b = grid_posterior(P075, OBS, LIK, spec)
    assert np.array_equal(a.log_values, b.log_values)


def test_refinement_reduces_error_at_least_threefold():
    n, coarse, fine = refinement(P075, OBS, LIK)
    assert coarse > 1e-9
    assert fine <= coarse / 3


def test_csv_export(tmp_path):
    spec = GridSpec(-1, 1, -1, 1, 3, 2)
    g = grid_posterior(P0, ObservationSet(), LIK, spec, check_boundary=False)
    path = g.to_csv(tmp_path / "grid.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "theta,psi,density"
    assert len(lines) == 1 + 6
    t, p, d = (float(v) for v in lines[1].split(","))
    assert t == spec.theta_centers()[0] and p == spec.psi_centers()[0]
    assert d == g.density()[0, 0]
