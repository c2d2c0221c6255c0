"""Closed-form and likelihood-based intrinsic-dimension estimators.

All estimators work on distance ratios and neighbour counts only, so they
are invariant under global rescaling of Euclidean coordinates and under
relabelling of the points.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import (
    DegenerateScaleError,
    EstimateUnboundedError,
    InsufficientGraphDepthError,
    InvalidArgumentError,
    OptimizationFailureError,
)
from .geometry import NeighborGraph, counts_within_open_balls
from .specfun import digamma, std_normal_quantile, trigamma
from .validation import validate_model

# optimal inner/outer radius ratio is c_star ** (1/d)
C_STAR = 0.2032

_D_MIN, _D_MAX = 1e-3, 1e3


@dataclass(frozen=True)
class BinomialCounts:
    """Per-point counts in two concentric open balls with radius ratio tau."""

    k_a: np.ndarray
    k_b: np.ndarray
    tau: float

    def __post_init__(self):
        k_a = np.asarray(self.k_a, dtype=np.int64)
        k_b = np.asarray(self.k_b, dtype=np.int64)
        if k_a.shape != k_b.shape:
            raise InvalidArgumentError("count arrays must have equal length")
        if np.any(k_a < 0) or np.any(k_a > k_b):
            raise InvalidArgumentError("need 0 <= k_a <= k_b per point")
        if k_b.sum() <= 0:
            raise InvalidArgumentError("sum of outer counts must be positive")
        if not 0.0 < self.tau < 1.0:
            raise InvalidArgumentError(f"tau must lie in (0, 1), got {self.tau}")
        object.__setattr__(self, "k_a", k_a)
        object.__setattr__(self, "k_b", k_b)


@dataclass
class IterationRecord:
    d: float
    mean_k_star: float | None = None
    validation_p: float | None = None


@dataclass
class IdEstimate:
    d: float
    tau: float | None = None
    ci: tuple[float, float] | None = None
    mean_kb: float | None = None
    validation_p: float | None = None
    fisher_info: float | None = None
    trace: list[IterationRecord] = field(default_factory=list)


@dataclass(frozen=True)
class PosteriorSummary:
    mean: float
    variance: float
    alpha_star: float
    beta_star: float


def optimal_tau(d: float, c_star: float = C_STAR) -> float:
    """Variance-minimizing radius ratio for the binomial estimator."""
    return c_star ** (1.0 / d)


def bide_closed_form(counts: BinomialCounts) -> float:
    """Maximum-likelihood ID from binomial ball counts: log of the count
    ratio over log tau."""
    sum_a = int(counts.k_a.sum())
    sum_b = int(counts.k_b.sum())
    if sum_a == 0:
        raise EstimateUnboundedError("no points in any inner ball; estimate diverges")
    if sum_a > sum_b:
        raise InvalidArgumentError("sum of inner counts exceeds sum of outer counts")
    return float(np.log(sum_a / sum_b) / np.log(counts.tau))


def fisher_interval(d_star, tau, kb_values, beta=0.05):
    """Normal-approximation confidence interval at level 1 - beta.

    Uses the observed Fisher information
    I(d*) = (log tau)^2 tau^d* mean(k_B) / (1 - tau^d*).
    """
    kb = np.asarray(kb_values, dtype=np.float64)
    n = kb.size
    if not 0.0 < tau < 1.0:
        raise InvalidArgumentError(f"tau must lie in (0, 1), got {tau}")
    if kb.sum() <= 0:
        raise DegenerateScaleError("sum of outer counts is zero")
    info = fisher_information(d_star, tau, kb)
    half = std_normal_quantile(1.0 - beta / 2.0) / np.sqrt(n * info)
    return (float(d_star - half), float(d_star + half))


def fisher_information(d_star, tau, kb_values) -> float:
    kb = np.asarray(kb_values, dtype=np.float64)
    td = tau ** d_star
    return float((np.log(tau) ** 2) * td * kb.mean() / (1.0 - td))


def twonn_equivalent_tau(graph: NeighborGraph, d_hat: float, c_star: float = C_STAR) -> tuple[float, BinomialCounts] | None:
    """The radius ratio at which the binomial closed form reproduces the
    two-NN estimate, together with the order-2 counts it was derived from.

    Counts are assembled at the optimal ratio for ``d_hat``; solving the
    closed form for tau then gives
    tau = exp(log(sum k_A / sum k_B) / d_hat).  Returns None when no inner
    ball is occupied.
    """
    r1 = graph.distances[:, 0]
    r2 = graph.distances[:, 1]
    tau0 = optimal_tau(d_hat, c_star)
    k_a = (r1 < tau0 * r2).astype(np.int64)
    k_b = np.ones(graph.n_points, dtype=np.int64)
    if k_a.sum() == 0:
        return None
    tau_eq = float(np.exp(np.log(k_a.sum() / k_b.sum()) / d_hat))
    if not 0.0 < tau_eq < 1.0:
        return None
    return tau_eq, BinomialCounts(k_a=k_a, k_b=k_b, tau=tau_eq)


def twonn_estimate(graph: NeighborGraph, beta: float = 0.05) -> IdEstimate:
    """Closed-form two-NN estimator: n over the summed log distance ratios."""
    if graph.depth < 2:
        raise InsufficientGraphDepthError("two-NN needs at least 2 stored neighbours")
    r1 = graph.distances[:, 0]
    r2 = graph.distances[:, 1]
    log_ratios = np.log(r2 / r1)
    # sorted reduction: bitwise identical under point relabelling
    total = np.sort(log_ratios).sum()
    if total <= 0:
        raise EstimateUnboundedError("all second/first NN ratios equal 1; estimate diverges")
    d_hat = float(graph.n_points / total)

    ci = None
    eq = twonn_equivalent_tau(graph, d_hat)
    tau = None
    if eq is not None:
        tau, counts = eq
        ci = fisher_interval(d_hat, tau, counts.k_b, beta)
    return IdEstimate(
        d=d_hat,
        tau=tau,
        ci=ci,
        mean_kb=1.0,
        trace=[IterationRecord(d=d_hat, mean_k_star=2.0)],
    )


def bide_fixed_radius(
    graph: NeighborGraph,
    t_b: float,
    tau: float,
    beta: float = 0.05,
    seed: int = 0,
    with_validation: bool = True,
) -> IdEstimate:
    """Binomial estimator at a fixed outer radius t_b (inner radius tau * t_b)."""
    if t_b <= 0:
        raise InvalidArgumentError(f"t_b must be positive, got {t_b}")
    if not 0.0 < tau < 1.0:
        raise InvalidArgumentError(f"tau must lie in (0, 1), got {tau}")
    n = graph.n_points
    radii = np.full(n, float(t_b))
    k_b = counts_within_open_balls(graph, radii)
    if k_b.sum() == 0:
        raise DegenerateScaleError(f"no neighbours within t_b={t_b} for any point")
    k_a = counts_within_open_balls(graph, tau * radii)
    counts = BinomialCounts(k_a=k_a, k_b=k_b, tau=tau)
    d_hat = bide_closed_form(counts)
    return _finish_bide(counts, d_hat, beta, seed, with_validation)


def bide_fixed_k(
    graph: NeighborGraph,
    k: int,
    tau: float,
    beta: float = 0.05,
    seed: int = 0,
    with_validation: bool = True,
) -> IdEstimate:
    """Binomial estimator with the outer ball at each point's k-th neighbour."""
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    if graph.depth < k:
        raise InsufficientGraphDepthError(f"graph depth {graph.depth} < k={k}")
    if k == 1:
        raise DegenerateScaleError("k=1 leaves every outer shell empty")
    if not 0.0 < tau < 1.0:
        raise InvalidArgumentError(f"tau must lie in (0, 1), got {tau}")
    t_b = graph.distances[:, k - 1]
    k_b = np.full(graph.n_points, k - 1, dtype=np.int64)
    k_a = counts_within_open_balls(graph, tau * t_b)
    counts = BinomialCounts(k_a=k_a, k_b=k_b, tau=tau)
    d_hat = bide_closed_form(counts)
    return _finish_bide(counts, d_hat, beta, seed, with_validation)


def _finish_bide(counts, d_hat, beta, seed, with_validation):
    ci = fisher_interval(d_hat, counts.tau, counts.k_b, beta)
    p_val = None
    if with_validation:
        report = validate_model(counts.k_a, counts.k_b, d_hat, counts.tau, seed=seed)
        p_val = report.p_value
    return IdEstimate(
        d=d_hat,
        tau=counts.tau,
        ci=ci,
        mean_kb=float(counts.k_b.mean()),
        validation_p=p_val,
        fisher_info=fisher_information(d_hat, counts.tau, counts.k_b),
        trace=[IterationRecord(d=d_hat, validation_p=p_val)],
    )


def beta_posterior(counts: BinomialCounts, alpha0: float = 1.0, beta0: float = 1.0) -> PosteriorSummary:
    """Conjugate Beta posterior for p = tau^d, mapped to the ID scale.

    Posterior mean and variance follow from the digamma/trigamma moments of
    log p for a Beta(alpha*, beta*) law.
    """
    if alpha0 <= 0 or beta0 <= 0:
        raise InvalidArgumentError("prior parameters must be positive")
    sum_a = float(counts.k_a.sum())
    sum_b = float(counts.k_b.sum())
    alpha_star = alpha0 + sum_a
    beta_star = beta0 + (sum_b - sum_a)
    log_tau = np.log(counts.tau)
    mean = (digamma(alpha_star) - digamma(alpha_star + beta_star)) / log_tau
    variance = (trigamma(alpha_star) - trigamma(alpha_star + beta_star)) / log_tau ** 2
    return PosteriorSummary(
        mean=float(mean), variance=float(variance),
        alpha_star=float(alpha_star), beta_star=float(beta_star),
    )


def gride_log_likelihood(mu, d, n1, n2):
    """Log-likelihood of distance ratios mu = r_{n2}/r_{n1} at dimension d
    (additive Beta-function constant dropped)."""
    mu = np.asarray(mu, dtype=np.float64)
    n1 = np.asarray(n1, dtype=np.float64)
    n2 = np.asarray(n2, dtype=np.float64)
    log_mu = np.log(mu)
    x = d * log_mu
    # log(mu^d - 1) without overflow
    log_pow_m1 = np.where(x > 30.0, x + np.log1p(-np.exp(-np.minimum(x, 700.0))),
                          np.log(np.expm1(np.minimum(x, 30.0))))
    terms = np.log(d) + (n2 - n1 - 1.0) * log_pow_m1 - (d * (n2 - 1.0) + 1.0) * log_mu
    return float(terms.sum())


def _gride_score(mu, d, n1, n2):
    # derivative of the log-likelihood in d; strictly decreasing in d
    log_mu = np.log(mu)
    x = d * log_mu
    dlog_pow_m1 = log_mu / (-np.expm1(-x))
    terms = 1.0 / d + (n2 - n1 - 1.0) * dlog_pow_m1 - (n2 - 1.0) * log_mu
    return float(terms.sum())


def gride_mle_from_ratios(mu, n1, n2) -> float:
    """Numerical maximizer of the generalized-ratio likelihood.

    ``n1``/``n2`` may be scalars or per-point arrays (the adaptive variant
    uses per-point orders).  The score is strictly decreasing in d, so the
    maximizer is the unique root of the score, found by bracketed
    root-finding on (1e-3, 1e3).
    """
    mu = np.asarray(mu, dtype=np.float64)
    keep = mu > 1.0
    if not np.all(keep):
        warnings.warn(f"dropping {int((~keep).sum())} unit distance ratios", stacklevel=2)
        n1 = np.broadcast_to(np.asarray(n1, dtype=np.float64), mu.shape)[keep]
        n2 = np.broadcast_to(np.asarray(n2, dtype=np.float64), mu.shape)[keep]
        mu = mu[keep]
    if mu.size == 0:
        raise InvalidArgumentError("no usable distance ratios (all equal to 1)")
    # sorted reduction: bitwise identical under point relabelling
    n1 = np.broadcast_to(np.asarray(n1, dtype=np.float64), mu.shape)
    n2 = np.broadcast_to(np.asarray(n2, dtype=np.float64), mu.shape)
    order = np.lexsort((n2, n1, mu))
    mu, n1, n2 = mu[order], n1[order], n2[order]
    lo, hi = _D_MIN, _D_MAX
    s_lo = _gride_score(mu, lo, n1, n2)
    s_hi = _gride_score(mu, hi, n1, n2)
    if s_lo < 0 or s_hi > 0:
        raise OptimizationFailureError(
            f"no interior maximum on ({lo}, {hi}): score at bounds {s_lo:.3g}, {s_hi:.3g}"
        )
    return float(brentq(lambda d: _gride_score(mu, d, n1, n2), lo, hi, xtol=1e-12, rtol=1e-14))


def gride_mle(graph: NeighborGraph, n1: int, n2: int) -> IdEstimate:
    """Generalized-ratio ID estimator from the r_{n2}/r_{n1} distance ratios."""
    if not (isinstance(n1, (int, np.integer)) and isinstance(n2, (int, np.integer))):
        raise InvalidArgumentError("n1 and n2 must be integers")
    if not n2 > n1 >= 1:
        raise InvalidArgumentError(f"need n2 > n1 >= 1, got n1={n1}, n2={n2}")
    if graph.depth < n2:
        raise InsufficientGraphDepthError(f"graph depth {graph.depth} < n2={n2}")
    mu = graph.distances[:, n2 - 1] / graph.distances[:, n1 - 1]
    d_hat = gride_mle_from_ratios(mu, float(n1), float(n2))
    return IdEstimate(d=d_hat, trace=[IterationRecord(d=d_hat)])
