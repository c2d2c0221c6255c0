"""Goodness-of-fit check of the binomial count model.

The fitted (d, tau) and the observed outer counts define a binomial
mixture for the inner counts; a large synthetic sample from that mixture
is compared to the observed inner counts with the Epps-Singleton test.
The resulting p-value is a relative measure of fit, never a hard gate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .specfun import epps_singleton

SYNTHETIC_CAP = 100_000


@dataclass(frozen=True)
class ValidationReport:
    p_value: float
    statistic: float
    synthetic_sample_size: int
    observed_size: int
    seed: int


def sample_mixture(kb_values, d: float, tau: float, m: int, seed: int) -> np.ndarray:
    """Draw m counts from the binomial mixture: resample an outer count from
    the empirical list, then draw Binomial(outer, tau^d)."""
    kb = np.asarray(kb_values, dtype=np.int64)
    if kb.size == 0:
        raise InvalidArgumentError("empty outer count list")
    if m < 1:
        raise InvalidArgumentError(f"sample size must be >= 1, got {m}")
    p = tau ** d
    if not 0.0 <= p <= 1.0:
        raise InvalidArgumentError(f"tau^d = {p} outside [0, 1]")
    rng = np.random.default_rng(seed)
    # sorted list: draws do not depend on how the counts were ordered
    outer = rng.choice(np.sort(kb), size=m, replace=True)
    return rng.binomial(outer, p)


def validate_model(ka_values, kb_values, d: float, tau: float, seed: int = 0) -> ValidationReport:
    """Epps-Singleton comparison of observed inner counts against the
    theoretical binomial mixture implied by (d, tau, outer counts)."""
    ka = np.asarray(ka_values, dtype=np.int64)
    kb = np.asarray(kb_values, dtype=np.int64)
    if ka.shape != kb.shape:
        raise InvalidArgumentError("count arrays must have equal length")
    n = ka.size
    m = min(10 * n, SYNTHETIC_CAP)
    synthetic = sample_mixture(kb, d, tau, m, seed)
    result = epps_singleton(synthetic, ka)
    return ValidationReport(
        p_value=result.p_value,
        statistic=result.statistic,
        synthetic_sample_size=m,
        observed_size=n,
        seed=seed,
    )
