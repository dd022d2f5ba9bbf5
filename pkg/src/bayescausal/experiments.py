"""Seeded Monte Carlo runs for the unsupervised, supervised, trajectory and
semi-supervised experiments.

Every trial owns its random streams, keyed by (master seed, purpose, rho, N,
trial index), so a single cell or trial can be recomputed in isolation and
results do not depend on how cells are scheduled across workers.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from . import __version__
from .conjugate import (
    Gaussian1,
    chain_update,
    condition_psi_on_theta,
    log_density_1d,
    marginal_psi,
    semi_supervised_update,
    supervised_update,
)
from .model import (
    LabeledSample,
    LikelihoodSpec,
    ObservationSet,
    PriorSpec,
    ValidationError,
    sufficient_stats,
)

MODES = ("unsupervised", "supervised", "semi_supervised", "trajectory", "verify")

PURPOSES = {"params": 1, "data": 2, "trajectory": 3, "verify": 4}

DEFAULT_RHO_LIST = (0.0, 0.3, 0.6, 0.9)
DEFAULT_N_LIST = (0, 1, 2, 5, 10, 20, 50, 100)
DEFAULT_TRAJECTORY_N_LIST = (0, 1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10000)
DEFAULT_M_RATIOS = (0.1, 1.0, 10.0)

U64 = (1 << 64) - 1


@dataclass(frozen=True)
class ExperimentConfig:
    prior: PriorSpec = PriorSpec()
    lik: LikelihoodSpec = LikelihoodSpec()
    rho_list: tuple[float, ...] = DEFAULT_RHO_LIST
    n_list: tuple[int, ...] = DEFAULT_N_LIST
    m_ratio_list: tuple[float, ...] = (0.0,)
    trials: int = 10_000
    master_seed: int = 0
    mode: str = "supervised"
    theta_star: float = 1.0
    psi_star: float = -3.0
    psi_min: float = -4.0
    psi_max: float = 4.0
    psi_points: int = 401
    finite_m: int = 10**6

    def __post_init__(self):
        object.__setattr__(self, "rho_list", tuple(float(r) for r in self.rho_list))
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        object.__setattr__(self, "m_ratio_list", tuple(float(r) for r in self.m_ratio_list))
        if self.mode not in MODES:
            raise ValidationError(f"mode: must be one of {MODES}, got {self.mode!r}")
        if self.trials < 1:
            raise ValidationError("trials: must be >= 1")
        if not self.rho_list:
            raise ValidationError("rho_list: must not be empty")
        for r in self.rho_list:
            if not abs(r) < 1:
                raise ValidationError(f"rho_list: every rho must satisfy |rho| < 1, got {r}")
        if any(n < 0 for n in self.n_list):
            raise ValidationError("n_list: counts must be >= 0")
        if list(self.n_list) != sorted(self.n_list):
            raise ValidationError("n_list: must be sorted ascending")
        if any(not (r >= 0 and math.isfinite(r)) for r in self.m_ratio_list):
            raise ValidationError("m_ratio_list: ratios must be finite and >= 0")
        if self.mode == "supervised" and self.m_ratio_list != (0.0,):
            raise ValidationError("m_ratio_list: the supervised experiment uses no unlabeled data, must be [0]")
        if not 0 <= self.master_seed <= U64:
            raise ValidationError("master_seed: must be an unsigned 64-bit integer")
        if not (math.isfinite(self.theta_star) and math.isfinite(self.psi_star)):
            raise ValidationError("theta_star/psi_star: must be finite")
        if not self.psi_max > self.psi_min or self.psi_points < 2:
            raise ValidationError("psi_min/psi_max/psi_points: need psi_max > psi_min and >= 2 points")
        if self.finite_m < 0:
            raise ValidationError("finite_m: must be >= 0")

    def prior_for(self, rho: float) -> PriorSpec:
        return replace(self.prior, rho=rho)

    def as_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "mean_theta": self.prior.mean_theta,
            "mean_psi": self.prior.mean_psi,
            "var_theta": self.prior.var_theta,
            "var_psi": self.prior.var_psi,
            "var_x": self.lik.var_x,
            "var_eta": self.lik.var_eta,
            "rho_list": list(self.rho_list),
            "n_list": list(self.n_list),
            "m_ratio_list": list(self.m_ratio_list),
            "trials": self.trials,
            "master_seed": self.master_seed,
            "theta_star": self.theta_star,
            "psi_star": self.psi_star,
            "psi_min": self.psi_min,
            "psi_max": self.psi_max,
            "psi_points": self.psi_points,
            "finite_m": self.finite_m,
        }


@dataclass(frozen=True)
class TrueParams:
    theta_star: float
    psi_star: float

    def __post_init__(self):
        if not (math.isfinite(self.theta_star) and math.isfinite(self.psi_star)):
            raise ValidationError("true parameters must be finite")


@dataclass
class ExperimentReport:
    name: str
    header: tuple[str, ...]
    rows: list[tuple]
    config: ExperimentConfig
    diagnostics: dict[str, Any] = field(default_factory=dict)
    version: str = __version__

    def column(self, name: str) -> list:
        i = self.header.index(name)
        return [r[i] for r in self.rows]


def _float_key(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(x) + 0.0))[0]


def stream(master_seed: int, purpose: str, *key: float) -> np.random.Generator:
    """Independent generator for ``(master_seed, purpose, *key)``.

    Float keys are folded in by their IEEE-754 bit pattern.
    """
    parts = [PURPOSES[purpose]]
    for k in key:
        parts.append(k if isinstance(k, (int, np.integer)) else _float_key(k))
    return np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(parts)))


def m_for_ratio(ratio: float, n: int) -> int:
    """Unlabeled count for a ratio of the labeled count, rounded half up."""
    return max(0, int(math.floor(ratio * n + 0.5)))


def draw_true_params(rng: np.random.Generator, prior: PriorSpec) -> TrueParams:
    """Draw from the product of the prior marginals; the prior correlation is not used."""
    z = rng.standard_normal(2)
    return TrueParams(
        theta_star=prior.mean_theta + math.sqrt(prior.var_theta) * float(z[0]),
        psi_star=prior.mean_psi + math.sqrt(prior.var_psi) * float(z[1]),
    )


def _draw_arrays(rng, tp: TrueParams, lik: LikelihoodSpec, n: int, m: int):
    # labeled block first, then the unlabeled block, so labeled data do not depend on m
    scale = np.array([math.sqrt(lik.var_x), math.sqrt(lik.var_eta)])
    loc = np.array([tp.theta_star, tp.psi_star])
    labeled = loc + scale * rng.standard_normal((n, 2))
    unlabeled = loc + scale * rng.standard_normal((m, 2))
    x, eta = labeled[:, 0], labeled[:, 1]
    y = x + eta
    pairs = np.column_stack([x, y - x])
    # noise of the unlabeled block is drawn and discarded
    return pairs, y, unlabeled[:, 0].copy()


def draw_observations(rng: np.random.Generator, tp: TrueParams, lik: LikelihoodSpec, n: int, m: int) -> ObservationSet:
    if n < 0 or m < 0:
        raise ValidationError("n and m must be >= 0")
    pairs, y, causes = _draw_arrays(rng, tp, lik, n, m)
    labeled = tuple(LabeledSample(float(a), float(b)) for a, b in zip(pairs[:, 0], y))
    return ObservationSet(labeled=labeled, unlabeled_causes=tuple(causes.tolist()))


def _mean_stderr(values: np.ndarray) -> tuple[float, float]:
    mean = float(np.mean(values))
    if values.size < 2:
        return mean, 0.0
    return mean, float(np.std(values, ddof=1) / math.sqrt(values.size))


def _cell_values(cfg: ExperimentConfig, rho: float, n: int, ms: Sequence[int]) -> np.ndarray:
    """Per-trial log p(psi* | data) for each unlabeled count in ``ms``.

    True parameters and labeled data are shared across ``ms`` (paired design).
    """
    prior = cfg.prior_for(rho)
    g0 = prior.to_gaussian()
    max_m = max(ms)
    out = np.empty((len(ms), cfg.trials))
    for t in range(cfg.trials):
        tp = draw_true_params(stream(cfg.master_seed, "params", rho, n, t), prior)
        pairs, _, causes = _draw_arrays(stream(cfg.master_seed, "data", rho, n, t), tp, cfg.lik, n, max_m)
        stats = sufficient_stats(pairs)
        for j, m in enumerate(ms):
            mean_u = float(np.mean(causes[:m])) if m else 0.0
            post = chain_update(g0, m, mean_u, stats, cfg.lik)
            out[j, t] = log_density_1d(marginal_psi(post), tp.psi_star)
    return out


def trial_value(cfg: ExperimentConfig, rho: float, n: int, m: int, trial: int) -> float:
    """Recompute one trial's log p(psi* | data) from its seeds alone."""
    prior = cfg.prior_for(rho)
    tp = draw_true_params(stream(cfg.master_seed, "params", rho, n, trial), prior)
    obs = draw_observations(stream(cfg.master_seed, "data", rho, n, trial), tp, cfg.lik, n, m)
    stats = sufficient_stats([(s.x, s.y - s.x) for s in obs.labeled])
    mean_u = float(np.mean(obs.unlabeled_causes)) if m else 0.0
    post = chain_update(prior.to_gaussian(), m, mean_u, stats, cfg.lik)
    return log_density_1d(marginal_psi(post), tp.psi_star)


def _map_cells(fn, cells, workers: int):
    if workers <= 1 or len(cells) <= 1:
        return [fn(*c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, *zip(*cells)))


def _supervised_cell(cfg, rho, n):
    return _cell_values(cfg, rho, n, [0])[0]


def _semi_cell(cfg, rho, n):
    ms = [m_for_ratio(r, n) for r in cfg.m_ratio_list]
    return _cell_values(cfg, rho, n, ms)


def run_supervised(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    cells = [(cfg, rho, n) for rho in cfg.rho_list for n in cfg.n_list]
    results = _map_cells(_supervised_cell, cells, workers)
    rows = []
    for (_, rho, n), vals in zip(cells, results):
        mean, se = _mean_stderr(vals)
        rows.append((rho, n, 0, mean, se, cfg.trials))
    return ExperimentReport("fig2", ("rho", "n", "m", "mean_loglik", "stderr", "trials"), rows, cfg)


def run_semi_supervised(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    cells = [(cfg, rho, n) for rho in cfg.rho_list for n in cfg.n_list]
    results = _map_cells(_semi_cell, cells, workers)
    rows = []
    for (_, rho, n), vals in zip(cells, results):
        for ratio, v in zip(cfg.m_ratio_list, vals):
            mean, se = _mean_stderr(v)
            rows.append((rho, n, ratio, m_for_ratio(ratio, n), mean, se, cfg.trials))
    return ExperimentReport("fig3", ("rho", "n", "m_ratio", "m", "mean_loglik", "stderr", "trials"), rows, cfg)


def _trajectory_cell(cfg: ExperimentConfig, rho: float) -> np.ndarray:
    g0 = cfg.prior_for(rho).to_gaussian()
    tp = TrueParams(cfg.theta_star, cfg.psi_star)
    max_n = max(cfg.n_list) if cfg.n_list else 0
    means = np.zeros((len(cfg.n_list), 2))
    for t in range(cfg.trials):
        pairs, _, _ = _draw_arrays(stream(cfg.master_seed, "trajectory", rho, t), tp, cfg.lik, max_n, 0)
        for i, n in enumerate(cfg.n_list):
            means[i] += supervised_update(g0, sufficient_stats(pairs[:n]), cfg.lik).mean
    return means / cfg.trials


def run_trajectory(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    cells = [(cfg, rho) for rho in cfg.rho_list]
    results = _map_cells(_trajectory_cell, cells, workers)
    rows = []
    for (_, rho), means in zip(cells, results):
        for n, (mt, mp) in zip(cfg.n_list, means):
            rows.append((rho, n, float(mt), float(mp), cfg.trials))
    report = ExperimentReport("fig2_traj", ("rho", "n", "mean_theta", "mean_psi", "trials"), rows, cfg)
    report.diagnostics["path_length"] = {repr(rho): path_length(report, rho) for rho in cfg.rho_list}
    return report


def path_length(report: ExperimentReport, rho: float) -> float:
    pts = np.array([(r[2], r[3]) for r in report.rows if r[0] == rho])
    if len(pts) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def psi_grid(cfg: ExperimentConfig) -> np.ndarray:
    return np.linspace(cfg.psi_min, cfg.psi_max, cfg.psi_points)


def curve_tv(p: np.ndarray, q: np.ndarray, grid: np.ndarray) -> float:
    return 0.5 * float(trapezoid(np.abs(p - q), grid))


def run_unsupervised(cfg: ExperimentConfig) -> ExperimentReport:
    """Prior and limiting (M -> infinity) posterior curves of psi.

    The limit conditions the joint prior on theta*; a finite-M conjugate
    update with the cause mean at theta* is tabulated alongside.
    """
    grid = psi_grid(cfg)
    rows = []
    tvs = {}
    for rho in cfg.rho_list:
        g0 = cfg.prior_for(rho).to_gaussian()
        prior_pdf = marginal_psi(g0).pdf(grid)
        post_pdf = condition_psi_on_theta(g0, cfg.theta_star).pdf(grid)
        finite = marginal_psi(semi_supervised_update(g0, cfg.finite_m, cfg.theta_star, cfg.lik)).pdf(grid)
        tvs[repr(rho)] = curve_tv(finite, post_pdf, grid)
        for psi, a, b, c in zip(grid, prior_pdf, post_pdf, finite):
            rows.append((rho, cfg.theta_star, float(psi), float(a), float(b), float(c)))
    header = ("rho", "theta_star", "psi", "prior_density", "posterior_density", "finite_m_density")
    report = ExperimentReport("fig1", header, rows, cfg)
    report.diagnostics["finite_m"] = cfg.finite_m
    report.diagnostics["finite_m_tv"] = tvs
    return report


def limit_posterior(cfg: ExperimentConfig, rho: float) -> Gaussian1:
    return condition_psi_on_theta(cfg.prior_for(rho).to_gaussian(), cfg.theta_star)


def run(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    if cfg.mode == "unsupervised":
        return run_unsupervised(cfg)
    if cfg.mode == "supervised":
        return run_supervised(cfg, workers)
    if cfg.mode == "semi_supervised":
        return run_semi_supervised(cfg, workers)
    if cfg.mode == "trajectory":
        return run_trajectory(cfg, workers)
    raise ValidationError(f"mode {cfg.mode!r} does not produce an experiment report")
