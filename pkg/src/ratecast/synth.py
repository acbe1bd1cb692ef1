"""Seeded ground-truth generators used as oracles for every estimator.

All randomness flows through numpy's PCG64 (``default_rng``), so identical
specs give bit-identical output on any platform.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ratecast.ingest import RateSeries
from ratecast.lrd import frac_diff_coeffs, innovation_sample

BURN_IN = 1000


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SimSpec:
    kind: str
    n: int
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gpd_tail", "farima", "garch", "farima_garch",
                             "hmm", "composite"):
            raise SynthError(f"unknown kind {self.kind!r}")
        if self.n < 1:
            raise SynthError("n must be >= 1")


def sim_gpd(n: int, xi: float, sigma: float, seed: int = 0,
            rng=None) -> np.ndarray:
    """Inverse-transform GPD excess samples."""
    if sigma <= 0:
        raise SynthError("sigma must be positive")
    rng = np.random.default_rng(seed) if rng is None else rng
    u = rng.uniform(size=n)
    if abs(xi) < 1e-12:
        return -sigma * np.log(u)
    return sigma * (u**-xi - 1.0) / xi


def sim_farima_garch(n: int, seed: int = 0, d: float = 0.3, mu: float = 0.0,
                     lam: float = 0.0, ar=(), ma=(), omega: float = 1.0,
                     alpha=(0.1,), beta=(0.8,), dist: str = "sstd",
                     shape: float = 6.0, skew: float = 1.0,
                     burn_in: int = BURN_IN, rng=None) -> np.ndarray:
    """Simulate the fractional ARMA + GARCH(-in-mean) process by running
    the generative recursions forward and discarding the burn-in."""
    persistence = sum(alpha) + sum(beta)
    if persistence > 1.0 + 1e-12:
        raise SynthError("explosive GARCH parameters (alpha + beta > 1)")
    if any(abs(a) >= 1 for a in ar):
        raise SynthError("explosive AR parameters")
    rng = np.random.default_rng(seed) if rng is None else rng
    total = n + burn_in
    z = innovation_sample(dist, total, shape, skew, rng)
    ar = np.asarray(ar, dtype=np.float64)
    ma = np.asarray(ma, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    sigma2 = np.empty(total)
    eps = np.empty(total)
    w = np.empty(total)
    s0 = omega / (1 - persistence) if persistence < 1 else omega / 0.05
    for t in range(total):
        s2 = omega
        for j, a in enumerate(alpha):
            s2 += a * (eps[t - 1 - j] ** 2 if t - 1 - j >= 0 else s0)
        for j, b in enumerate(beta):
            s2 += b * (sigma2[t - 1 - j] if t - 1 - j >= 0 else s0)
        if t == 0:
            s2 = s0
        sigma2[t] = s2
        eps[t] = np.sqrt(s2) * z[t]
        wv = eps[t]
        for j, p in enumerate(ar):
            if t - 1 - j >= 0:
                wv += p * w[t - 1 - j]
        for j, q in enumerate(ma):
            if t - 1 - j >= 0:
                wv += q * eps[t - 1 - j]
        w[t] = wv
    # fractional integration: u = (1-B)^{-d} w
    coeffs = frac_diff_coeffs(-d, total)
    u = np.convolve(w, coeffs)[:total]
    y = u + mu + lam * np.sqrt(sigma2)
    return y[burn_in:]


def sim_hmm(k: int, pi, A, emissions, n: int, seed: int = 0, rng=None):
    """Ancestral sampling of a Gaussian-emission HMM.

    ``emissions`` is a list of (mean, variance) per state. Returns
    (states, values).
    """
    pi = np.asarray(pi, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    if abs(pi.sum() - 1) > 1e-9 or np.any(np.abs(A.sum(axis=1) - 1) > 1e-9):
        raise SynthError("pi and rows of A must sum to 1")
    rng = np.random.default_rng(seed) if rng is None else rng
    means = np.array([m for m, _ in emissions])
    sds = np.sqrt([v for _, v in emissions])
    states = np.empty(n, dtype=np.int64)
    states[0] = rng.choice(k, p=pi)
    for t in range(1, n):
        states[t] = rng.choice(k, p=A[states[t - 1]])
    values = means[states] + sds[states] * rng.standard_normal(n)
    return states, values


def sim_composite(n: int, base: dict | None = None, tail: dict | None = None,
                  tail_quantile: float = 0.95, seed: int = 0):
    """Base long-memory series whose upper tail is replaced by GPD draws.

    ``tail`` holds xi plus either a constant scale (sigma) or a
    time-trending one (beta0, beta1 with scale exp(beta0 + beta1*log t),
    t 1-based). Output counts are rounded and clipped at zero.

    Returns (RateSeries, oracle) where the oracle records the generating
    parameters, the replacement threshold, and the true exceedance hours.
    """
    if not 0.5 < tail_quantile < 1:
        raise SynthError("tail_quantile must lie in (0.5, 1)")
    base = dict(base or {})
    tail = dict(tail or {"xi": 0.2, "sigma": 50.0})
    rng = np.random.default_rng(seed)
    y = sim_farima_garch(n, rng=rng, **base)
    threshold = float(np.quantile(y, tail_quantile))
    idx = np.flatnonzero(y > threshold)
    xi = tail.get("xi", 0.0)
    if "beta0" in tail:
        sigmas = np.exp(tail["beta0"] + tail["beta1"] * np.log(idx + 1.0))
    else:
        sigmas = np.full(idx.size, float(tail["sigma"]))
    u = rng.uniform(size=idx.size)
    if abs(xi) < 1e-12:
        draws = -sigmas * np.log(u)
    else:
        draws = sigmas * (u**-xi - 1.0) / xi
    y = y.copy()
    y[idx] = threshold + draws
    counts = np.maximum(np.rint(y), 0).astype(np.int64)
    series = RateSeries(origin=0.0, counts=counts, label=f"composite-{seed}")
    oracle = {
        "kind": "composite",
        "n": n,
        "seed": seed,
        "base": base,
        "tail": tail,
        "tail_quantile": tail_quantile,
        "threshold": threshold,
        "exceedance_hours": idx.tolist(),
    }
    return series, oracle


def simulate(spec: SimSpec):
    """Dispatch a SimSpec to its generator.

    Returns (values-or-RateSeries, oracle dict). The oracle records the
    full generating parameterization.
    """
    p = dict(spec.params)
    if spec.kind == "gpd_tail":
        out = sim_gpd(spec.n, seed=spec.seed, **p)
    elif spec.kind in ("farima", "garch", "farima_garch"):
        out = sim_farima_garch(spec.n, seed=spec.seed, **p)
    elif spec.kind == "hmm":
        _, out = sim_hmm(n=spec.n, seed=spec.seed, **p)
    else:
        series, oracle = sim_composite(spec.n, seed=spec.seed, **p)
        return series, oracle
    oracle = {"kind": spec.kind, "n": spec.n, "seed": spec.seed, "params": p}
    return out, oracle
