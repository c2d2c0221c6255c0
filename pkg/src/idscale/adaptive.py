"""Per-point optimal neighbourhoods and the adaptive fixed-point estimators.

For every point the largest neighbourhood with statistically constant
density is found by a sequential Wilks likelihood-ratio test on shell
volumes; the adaptive estimators alternate that selection with a global
ID update (closed-form binomial, Bayesian posterior mean, or
generalized-ratio likelihood) until the iterate stabilizes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EstimateUnboundedError,
    InsufficientGraphDepthError,
    InvalidArgumentError,
    OptimizationFailureError,
)
from .estimators import (
    C_STAR,
    BinomialCounts,
    IdEstimate,
    IterationRecord,
    beta_posterior,
    bide_closed_form,
    fisher_information,
    fisher_interval,
    gride_mle_from_ratios,
    optimal_tau,
    twonn_estimate,
)
from .geometry import NeighborGraph, counts_within_open_balls
from .specfun import chi2_quantile_1df
from .validation import validate_model

_LOG4 = float(np.log(4.0))

K_MIN = 2  # smallest tested neighbourhood; keeps k_B* = k* - 1 >= 1

THRESHOLD_MODES = ("fixed", "bonferroni_h", "bonferroni_n", "bonferroni_nh")


@dataclass
class EstimatorConfig:
    alpha: float = 0.01
    threshold_mode: str = "fixed"
    d_thr_override: float | None = None
    k_max: int = 350
    max_iter: int = 5
    delta: float = 1e-4
    c_star: float = C_STAR
    beta_ci: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidArgumentError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise InvalidArgumentError(f"unknown threshold mode {self.threshold_mode!r}")
        if self.k_max < K_MIN:
            raise InvalidArgumentError(f"k_max must be >= {K_MIN}")
        if self.max_iter < 1 or self.delta <= 0:
            raise InvalidArgumentError("max_iter must be >= 1 and delta > 0")
        if not 0.0 < self.c_star < 1.0 or not 0.0 < self.beta_ci < 1.0:
            raise InvalidArgumentError("c_star and beta_ci must lie in (0, 1)")

    def rejection_threshold(self, n: int) -> float:
        """D_thr for a dataset of size n, honouring the Bonferroni mode."""
        if self.d_thr_override is not None:
            return float(self.d_thr_override)
        h = self.k_max - K_MIN + 1
        divisor = {"fixed": 1, "bonferroni_h": h, "bonferroni_n": n, "bonferroni_nh": n * h}[
            self.threshold_mode
        ]
        return chi2_quantile_1df(1.0 - self.alpha / divisor)


@dataclass
class AdaptiveState:
    """Per-point optimal neighbourhood and the derived ball counts/radii."""

    k_star: np.ndarray
    ka_star: np.ndarray
    t_b: np.ndarray
    t_a: np.ndarray
    k_max: int

    @property
    def kb_star(self) -> np.ndarray:
        return self.k_star - 1

    @property
    def saturation_fraction(self) -> float:
        """Fraction of points whose k* hit the cap (diagnostic only)."""
        return float(np.mean(self.k_star == self.k_max))


@dataclass
class AbideResult:
    estimate: IdEstimate
    state: AdaptiveState
    iterations_run: int
    converged: bool


def lrt_statistic(d, k, log_r_i_k, log_r_j_k):
    """Wilks statistic comparing equal vs distinct Poisson intensities at a
    point and at its (k+1)-th neighbour.

    Ball volumes enter only through d * log r (the unit-ball constant
    cancels), so the statistic is computed with log-sum-exp and is exactly
    scale invariant.
    """
    if np.any(np.asarray(d) <= 0):
        raise InvalidArgumentError("dimension must be positive")
    x1 = d * np.asarray(log_r_i_k, dtype=np.float64)
    x2 = d * np.asarray(log_r_j_k, dtype=np.float64)
    stat = -2.0 * np.asarray(k) * (x1 + x2 - 2.0 * np.logaddexp(x1, x2) + _LOG4)
    return np.maximum(stat, 0.0)


def _lrt_sweep(graph: NeighborGraph, d: float, k_max: int):
    """Statistic matrix for k = K_MIN .. k_max (columns) and every point (rows)."""
    if graph.depth < k_max + 1:
        raise InsufficientGraphDepthError(
            f"graph depth {graph.depth} < k_max + 1 = {k_max + 1}"
        )
    ks = np.arange(K_MIN, k_max + 1)
    log_r_i = np.log(graph.distances[:, ks - 1])
    # j = index of i's (k+1)-th NN; its own k-th NN distance closes the test
    j = graph.indices[:, ks]
    log_r_j = np.log(graph.distances[j, (ks - 1)[None, :]])
    return ks, lrt_statistic(d, ks[None, :], log_r_i, log_r_j)


def select_k_star_all(graph: NeighborGraph, d: float, config: EstimatorConfig) -> np.ndarray:
    """Per-point smallest k at which the constant-density test rejects,
    capped at k_max (k_max when no rejection occurs)."""
    ks, stats = _lrt_sweep(graph, d, config.k_max)
    thr = config.rejection_threshold(graph.n_points)
    reject = stats >= thr
    first = np.argmax(reject, axis=1)
    k_star = np.where(reject.any(axis=1), ks[first], config.k_max)
    return np.minimum(k_star, config.k_max).astype(np.int64)


def select_k_star(graph: NeighborGraph, i: int, d: float, config: EstimatorConfig) -> int:
    return int(select_k_star_all(graph, d, config)[i])


def _assemble_counts(graph, k_star, tau):
    rows = np.arange(graph.n_points)
    t_b = graph.distances[rows, k_star - 1]
    t_a = tau * t_b
    ka_star = counts_within_open_balls(graph, t_a)
    state = AdaptiveState(k_star=k_star, ka_star=ka_star, t_b=t_b, t_a=t_a, k_max=0)
    return state, BinomialCounts(k_a=ka_star, k_b=k_star - 1, tau=tau)


def _validation_seed(config: EstimatorConfig, step: int) -> int:
    return int(np.random.SeedSequence((config.seed, step)).generate_state(1)[0])


def _adaptive_loop(graph: NeighborGraph, config: EstimatorConfig, update) -> AbideResult:
    """Shared fixed-point skeleton: start from the two-NN estimate, then
    alternate k* selection and a global ID update until |delta d| < delta."""
    n = graph.n_points
    if n < 100:
        warnings.warn(f"adaptive estimation on only {n} points is unreliable", stacklevel=3)
    if graph.depth < config.k_max + 1:
        raise InsufficientGraphDepthError(
            f"graph depth {graph.depth} < k_max + 1 = {config.k_max + 1}"
        )

    d_current = twonn_estimate(graph).d
    trace = [IterationRecord(d=d_current, mean_k_star=2.0)]
    converged = False
    iterations = 0
    d_next = d_current
    for step in range(config.max_iter):
        tau = optimal_tau(d_current, config.c_star)
        k_star = select_k_star_all(graph, d_current, config)
        try:
            _, counts = _assemble_counts(graph, k_star, tau)
            d_next = update(graph, counts, k_star)
        except EstimateUnboundedError as err:
            err.trace = trace
            raise
        if not np.isfinite(d_next) or d_next <= 0:
            err = OptimizationFailureError(f"non-finite or non-positive iterate {d_next}")
            err.trace = trace
            raise err
        p_val = validate_model(
            counts.k_a, counts.k_b, d_next, tau, seed=_validation_seed(config, step)
        ).p_value
        trace.append(IterationRecord(d=d_next, mean_k_star=float(k_star.mean()), validation_p=p_val))
        iterations += 1
        if abs(d_current - d_next) < config.delta:
            converged = True
            break
        d_current = d_next

    d_star = d_next
    # final state recomputed with the terminal estimate
    tau_star = optimal_tau(d_star, config.c_star)
    k_star = select_k_star_all(graph, d_star, config)
    state, counts = _assemble_counts(graph, k_star, tau_star)
    state.k_max = config.k_max
    ci = fisher_interval(d_star, tau_star, counts.k_b, config.beta_ci)
    p_final = validate_model(
        counts.k_a, counts.k_b, d_star, tau_star, seed=_validation_seed(config, config.max_iter)
    ).p_value
    estimate = IdEstimate(
        d=float(d_star),
        tau=tau_star,
        ci=ci,
        mean_kb=float(counts.k_b.mean()),
        validation_p=p_final,
        fisher_info=fisher_information(d_star, tau_star, counts.k_b),
        trace=trace,
    )
    return AbideResult(estimate=estimate, state=state, iterations_run=iterations, converged=converged)


def abide(graph: NeighborGraph, config: EstimatorConfig | None = None) -> AbideResult:
    """Adaptive binomial estimator (closed-form update)."""
    config = config or EstimatorConfig()

    def update(_graph, counts, _k_star):
        return bide_closed_form(counts)

    return _adaptive_loop(graph, config, update)


def babide(
    graph: NeighborGraph,
    config: EstimatorConfig | None = None,
    alpha0: float = 1.0,
    beta0: float = 1.0,
) -> AbideResult:
    """Bayesian variant: the iteration update is the posterior mean."""
    config = config or EstimatorConfig()

    def update(_graph, counts, _k_star):
        return beta_posterior(counts, alpha0, beta0).mean

    return _adaptive_loop(graph, config, update)


def gride_update_from_k_star(graph: NeighborGraph, k_star: np.ndarray) -> float:
    """Generalized-ratio estimate with per-point orders n2 = k*, n1 = max(1, k*//2)."""
    n2 = np.asarray(k_star, dtype=np.int64)
    n1 = np.maximum(1, n2 // 2)
    rows = np.arange(graph.n_points)
    mu = graph.distances[rows, n2 - 1] / graph.distances[rows, n1 - 1]
    return gride_mle_from_ratios(mu, n1.astype(np.float64), n2.astype(np.float64))


def agride(graph: NeighborGraph, config: EstimatorConfig | None = None) -> AbideResult:
    """Adaptive generalized-ratio estimator.

    Same iteration skeleton as the binomial variant; tau only enters the
    reported counts and confidence interval, not the likelihood update.
    """
    config = config or EstimatorConfig()

    def update(graph_, _counts, k_star):
        return gride_update_from_k_star(graph_, k_star)

    return _adaptive_loop(graph, config, update)
