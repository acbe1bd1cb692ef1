"""Shared evaluation primitives: PMAD, AIC, exact binomial test, and the
rolling-origin prediction record."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats


@dataclass
class PredictionStep:
    hour: int
    observed: float
    predicted: float
    refit_flag: bool = True
    sigma: float = float("nan")


@dataclass
class PredictionRun:
    """Record of one rolling-origin backtest (refit on prefix, predict h,
    advance by h)."""

    horizon: int
    train_fraction: float
    steps: list[PredictionStep] = field(default_factory=list)

    @property
    def pmad(self) -> float:
        obs = [s.observed for s in self.steps]
        pred = [s.predicted for s in self.steps]
        return pmad(obs, pred)

    @property
    def accuracy(self) -> float:
        return 1.0 - self.pmad

    def to_csv(self) -> str:
        lines = ["step,hour,observed,predicted,sigma,refit_flag"]
        for i, s in enumerate(self.steps):
            lines.append(
                f"{i},{s.hour},{s.observed!r},{s.predicted!r},{s.sigma!r},"
                f"{int(s.refit_flag)}"
            )
        return "\n".join(lines) + "\n"


def pmad(observed, predicted) -> float:
    """Percent mean absolute deviation: sum|obs - pred| / sum(obs).

    Accuracy is reported elsewhere as 1 - PMAD.
    """
    obs = np.asarray(observed, dtype=np.float64)
    pred = np.asarray(predicted, dtype=np.float64)
    if obs.shape != pred.shape or obs.size == 0:
        raise ValueError("observed and predicted must be equal-length, non-empty")
    total = obs.sum()
    if total <= 0:
        raise ValueError("sum of observed values must be positive")
    return float(np.abs(obs - pred).sum() / total)


def aic(log_lik: float, k: int) -> float:
    """Akaike information criterion, 2k - 2*log_lik."""
    if k < 1:
        raise ValueError("parameter count must be >= 1")
    return 2.0 * k - 2.0 * log_lik


def aic_fairly_close(aic_a: float, aic_b: float, margin: float = 10.0) -> bool:
    """Whether two AIC values are close enough to prefer the simpler model."""
    return abs(aic_a - aic_b) < margin


def binomial_exact_test(successes: int, trials: int, p0: float,
                        alternative: str = "two-sided") -> float:
    """Exact binomial p-value.

    Two-sided p-value sums the probabilities of all outcomes no more likely
    than the observed one (small-p aggregation). One-sided variants via
    ``alternative`` in {"greater", "less"}.
    """
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    if not 0 < p0 < 1:
        raise ValueError("p0 must lie in (0, 1)")
    if alternative == "greater":
        return float(stats.binom.sf(successes - 1, trials, p0))
    if alternative == "less":
        return float(stats.binom.cdf(successes, trials, p0))
    if alternative != "two-sided":
        raise ValueError(f"unknown alternative {alternative!r}")
    k = np.arange(trials + 1)
    pmf = stats.binom.pmf(k, trials, p0)
    # relative tolerance absorbs float noise when comparing pmf values
    p_obs = pmf[successes]
    p = pmf[pmf <= p_obs * (1 + 1e-12)].sum()
    return float(min(1.0, p))
