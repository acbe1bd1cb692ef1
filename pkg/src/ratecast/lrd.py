"""Long-memory mean models with GARCH conditional variance.

Fractional differencing, log-periodogram memory estimation, skewed
innovation densities, two-stage QMLE of the four-model family (SGARCH or
IGARCH variance, skewed-t or skewed-GED innovations), h-step forecasting,
and the rolling-origin prediction loop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln

from ratecast import kernels
from ratecast.ingest import RateSeries
from ratecast.metrics import PredictionRun, PredictionStep, aic as aic_of

TST_VARIANTS = ("M'1", "M'2", "M'3", "M'4")
_PENALTY = 1e30  # finite stand-in for an infeasible likelihood
_VARIANT_SPEC = {
    "M'1": ("sgarch", "sstd"),
    "M'2": ("sgarch", "sged"),
    "M'3": ("igarch", "sstd"),
    "M'4": ("igarch", "sged"),
}


class LrdError(ValueError):
    pass


class FitError(LrdError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


# ---------------------------------------------------------------------------
# fractional differencing

def frac_diff_coeffs(d: float, n: int) -> np.ndarray:
    """Coefficients of (1-B)^d: c_0 = 1, c_k = c_{k-1} (k-1-d)/k."""
    if n < 1:
        raise LrdError("need at least one coefficient")
    out = np.empty(n)
    out[0] = 1.0
    c = 1.0
    # literal recurrence so c_k is bit-for-bit (c_{k-1} * (k-1-d)) / k
    for k in range(1, n):
        c = c * (k - 1 - d) / k
        out[k] = c
    return out


def frac_diff(x, d: float, truncation="full") -> np.ndarray:
    """Apply (1-B)^d to a series, causally.

    ``truncation`` is "full" (all available history) or an integer lag
    count K.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise LrdError("series must be non-empty")
    if not -0.5 < d < 1.0 + 1e-12:
        raise LrdError("d must lie in (-0.5, 1]")
    n_coef = x.size if truncation == "full" else min(int(truncation) + 1, x.size)
    coeffs = frac_diff_coeffs(d, n_coef)
    return np.asarray(kernels.fracdiff_apply(x, coeffs))


@dataclass
class LrdEstimate:
    d: float
    stderr: float
    method: str = "log-periodogram"

    @property
    def hurst(self) -> float:
        return self.d + 0.5


def estimate_d(series, bandwidth: int | None = None) -> LrdEstimate:
    """Log-periodogram (GPH) regression over the lowest floor(sqrt(n))
    Fourier frequencies."""
    x = series.values if isinstance(series, RateSeries) else np.asarray(series, dtype=np.float64)
    n = x.size
    if n < 128:
        raise LrdError("need at least 128 observations")
    m = bandwidth if bandwidth is not None else int(math.floor(math.sqrt(n)))
    x = x - x.mean()
    fft = np.fft.rfft(x)
    periodogram = np.abs(fft) ** 2 / (2 * np.pi * n)
    lam = 2 * np.pi * np.arange(1, m + 1) / n
    I = periodogram[1 : m + 1]
    if np.any(I <= 0):
        raise LrdError("degenerate periodogram (constant series?)")
    X = -np.log(4 * np.sin(lam / 2) ** 2)
    Y = np.log(I)
    Xc = X - X.mean()
    sxx = np.sum(Xc**2)
    if sxx <= 0:
        raise LrdError("degenerate regression")
    slope = float(np.sum(Xc * (Y - Y.mean())) / sxx)
    resid = Y - Y.mean() - slope * Xc
    se = float(math.sqrt(np.sum(resid**2) / (m - 2) / sxx))
    return LrdEstimate(d=slope, stderr=se)


# ---------------------------------------------------------------------------
# skewed innovation densities (two-piece construction around a
# standardized symmetric base)

def _base_logpdf(dist: str, x, shape: float):
    x = np.asarray(x, dtype=np.float64)
    if dist == "sstd":
        nu = shape
        return (gammaln((nu + 1) / 2) - gammaln(nu / 2)
                - 0.5 * math.log(math.pi * (nu - 2))
                - (nu + 1) / 2 * np.log1p(x**2 / (nu - 2)))
    if dist == "sged":
        kappa = shape
        lam = math.sqrt(math.exp(gammaln(1 / kappa) - gammaln(3 / kappa)))
        return (math.log(kappa) - math.log(2 * lam) - gammaln(1 / kappa)
                - np.abs(x / lam) ** kappa)
    raise LrdError(f"unknown innovation distribution {dist!r}")


def _base_half_mean(dist: str, shape: float) -> float:
    """m1 = integral_0^inf x f(x) dx for the unit-variance symmetric base."""
    if dist == "sstd":
        nu = shape
        return (math.sqrt(nu - 2) / ((nu - 1) * math.sqrt(math.pi))
                * math.exp(gammaln((nu + 1) / 2) - gammaln(nu / 2)))
    kappa = shape
    lam = math.sqrt(math.exp(gammaln(1 / kappa) - gammaln(3 / kappa)))
    return lam * math.exp(gammaln(2 / kappa) - gammaln(1 / kappa)) / 2


def _check_innovation_params(dist: str, shape: float, skew: float):
    if dist == "sstd" and not shape > 2:
        raise LrdError("sstd shape must be > 2")
    if dist == "sged" and not shape > 0:
        raise LrdError("sged shape must be > 0")
    if not skew > 0:
        raise LrdError("skew must be > 0")


def _skew_moments(dist: str, shape: float, skew: float):
    g = skew
    m1 = _base_half_mean(dist, shape)
    mean = 2 * m1 * (g - 1 / g)
    second = (g**3 + g**-3) / (g + 1 / g)
    var = second - mean**2
    return mean, math.sqrt(var)


def innovation_logpdf(dist: str, z, shape: float, skew: float):
    """Log-density of the standardized (zero-mean, unit-variance) skewed
    innovation at z. ``dist`` is "sstd" or "sged"."""
    _check_innovation_params(dist, shape, skew)
    z = np.asarray(z, dtype=np.float64)
    mu, sd = _skew_moments(dist, shape, skew)
    y = sd * z + mu
    c = math.log(2.0 / (skew + 1.0 / skew))
    arg = np.where(y >= 0, y / skew, y * skew)
    out = math.log(sd) + c + _base_logpdf(dist, arg, shape)
    return out if out.shape else float(out)


def innovation_sample(dist: str, n: int, shape: float, skew: float, rng):
    """Seeded draws from the standardized skewed innovation."""
    _check_innovation_params(dist, shape, skew)
    if dist == "sstd":
        base = rng.standard_t(shape, size=n) * math.sqrt((shape - 2) / shape)
    else:
        kappa = shape
        lam = math.sqrt(math.exp(gammaln(1 / kappa) - gammaln(3 / kappa)))
        mag = lam * rng.gamma(1 / kappa, size=n) ** (1 / kappa)
        base = mag * rng.choice([-1.0, 1.0], size=n)
    mag = np.abs(base)
    pos = rng.uniform(size=n) < skew**2 / (1 + skew**2)
    y = np.where(pos, mag * skew, -mag / skew)
    mu, sd = _skew_moments(dist, shape, skew)
    return (y - mu) / sd


# ---------------------------------------------------------------------------
# models

@dataclass
class FarimaGarchModel:
    variant: str
    mu: float
    lam: float
    d: float
    ar: list = field(default_factory=list)
    ma: list = field(default_factory=list)
    garch_w: float = 0.0
    garch_alpha: list = field(default_factory=list)
    garch_beta: list = field(default_factory=list)
    shape: float = 6.0
    skew: float = 1.0
    sigma0_sq: float = 1.0
    log_lik: float = float("nan")
    aic: float = float("nan")
    truncation: int = 100

    def __post_init__(self):
        if self.variant not in TST_VARIANTS:
            raise LrdError(f"unknown variant {self.variant!r}")
        if self.garch_w < 0:
            raise LrdError("garch_w must be non-negative")
        persistence = sum(self.garch_alpha) + sum(self.garch_beta)
        if self.garch_type == "igarch" and abs(persistence - 1.0) > 1e-8:
            raise LrdError("IGARCH requires alpha + beta == 1")
        if self.garch_type == "sgarch" and persistence >= 1.0:
            raise LrdError("SGARCH requires alpha + beta < 1")

    @property
    def garch_type(self) -> str:
        return _VARIANT_SPEC[self.variant][0]

    @property
    def innovation(self) -> str:
        return _VARIANT_SPEC[self.variant][1]

    def free_parameters(self) -> int:
        k = 2 + len(self.ar) + len(self.ma) + 1 + len(self.garch_alpha) + 2 + 1
        if self.garch_type == "sgarch":
            k += len(self.garch_beta)
        return k

    def to_report(self) -> dict:
        return {
            "variant": self.variant,
            "d": self.d,
            "mu": self.mu,
            "lambda": self.lam,
            "ar": list(self.ar),
            "ma": list(self.ma),
            "w": self.garch_w,
            "alpha": list(self.garch_alpha),
            "beta": list(self.garch_beta),
            "shape": self.shape,
            "skew": self.skew,
            "log_lik": self.log_lik,
            "aic": self.aic,
        }


@dataclass
class Forecast:
    horizon: int
    mean_path: np.ndarray
    sigma_path: np.ndarray


def garch_filter(model, eps, sigma0_sq: float) -> np.ndarray:
    """Conditional-variance path for a residual series."""
    if sigma0_sq <= 0:
        raise LrdError("sigma0_sq must be positive")
    sigma2 = np.asarray(kernels.garch_recursion(
        np.asarray(eps, dtype=np.float64), model.garch_w,
        np.asarray(model.garch_alpha, dtype=np.float64),
        np.asarray(model.garch_beta, dtype=np.float64), sigma0_sq))
    bad = np.flatnonzero(~np.isfinite(sigma2))
    if bad.size:
        raise LrdError(f"non-finite variance at index {bad[0]}")
    return sigma2


def _filter_paths(model: FarimaGarchModel, y):
    coeffs = frac_diff_coeffs(model.d, min(model.truncation + 1, len(y)))
    return kernels.farima_garch_recursion(
        np.asarray(y, dtype=np.float64), coeffs, model.mu, model.lam,
        np.asarray(model.ar, dtype=np.float64),
        np.asarray(model.ma, dtype=np.float64),
        model.garch_w, np.asarray(model.garch_alpha, dtype=np.float64),
        np.asarray(model.garch_beta, dtype=np.float64), model.sigma0_sq)


def model_log_lik(model: FarimaGarchModel, y) -> float:
    eps, sigma2, _, _ = _filter_paths(model, y)
    eps, sigma2 = np.asarray(eps), np.asarray(sigma2)
    if not np.all(np.isfinite(sigma2)) or np.any(sigma2 <= 0):
        return -np.inf
    sd = np.sqrt(sigma2)
    ll = innovation_logpdf(model.innovation, eps / sd, model.shape, model.skew)
    return float(np.sum(ll) - np.sum(np.log(sd)))


# unconstrained parameter vector <-> model

def _vec_to_model(vec, variant, d, orders, sigma0_sq, truncation):
    p, q, pg, qg = orders
    i = 0
    mu = vec[i]; i += 1
    lam = vec[i]; i += 1
    ar = [0.99 * math.tanh(v) for v in vec[i : i + p]]; i += p
    ma = [0.99 * math.tanh(v) for v in vec[i : i + q]]; i += q
    omega = math.exp(vec[i]); i += 1
    garch_type, dist = _VARIANT_SPEC[variant]
    if garch_type == "sgarch":
        persistence = 0.999 / (1 + math.exp(-vec[i])); i += 1
    else:
        persistence = 1.0
    ratio = 1.0 / (1 + math.exp(-vec[i])); i += 1
    alpha_total = persistence * ratio
    beta_total = persistence - alpha_total
    alpha = [alpha_total / qg] * qg
    beta = [beta_total / pg] * pg
    if dist == "sstd":
        shape = 2.01 + math.exp(vec[i])
    else:
        shape = 0.3 + math.exp(vec[i])
    i += 1
    skew = math.exp(vec[i]); i += 1
    return FarimaGarchModel(
        variant=variant, mu=mu, lam=lam, d=d, ar=ar, ma=ma, garch_w=omega,
        garch_alpha=alpha, garch_beta=beta, shape=shape, skew=skew,
        sigma0_sq=sigma0_sq, truncation=truncation)


def _initial_vector(y, variant, orders):
    p, q, pg, qg = orders
    garch_type, dist = _VARIANT_SPEC[variant]
    vec = [float(np.mean(y)), 0.0]
    vec += [math.atanh(0.2)] * p + [0.0] * q
    var = max(float(np.var(y)), 1e-8)
    vec.append(math.log(0.1 * var))
    if garch_type == "sgarch":
        vec.append(math.log(0.85 / (1 - 0.85)))  # persistence 0.85
    vec.append(math.log(0.2 / 0.8))  # alpha share 0.2
    vec.append(math.log(6.0 - 2.01) if dist == "sstd" else math.log(1.5 - 0.3))
    vec.append(0.0)  # skew 1
    return np.array(vec)


def fit(series, variant: str = "M'1", orders=(1, 1, 1, 1), seed: int = 0,
        d: float | None = None, truncation: int = 100, restarts: int = 2,
        maxiter: int = 4000, init_vector=None) -> FarimaGarchModel:
    """Two-stage QMLE: memory order d from the log-periodogram, then joint
    simplex maximization of the innovation likelihood."""
    y = series.values if isinstance(series, RateSeries) else np.asarray(series, dtype=np.float64)
    if y.size < 200:
        raise LrdError("need at least 200 observations")
    if d is None:
        d = float(np.clip(estimate_d(y).d, 0.01, 0.49))
    w0 = frac_diff(y - y.mean(), d, truncation=truncation)
    sigma0_sq = max(float(np.var(w0)), 1e-8)

    def neg_ll(vec):
        try:
            model = _vec_to_model(vec, variant, d, orders, sigma0_sq, truncation)
        except (LrdError, OverflowError):
            return _PENALTY
        ll = model_log_lik(model, y)
        # finite penalty instead of inf keeps the simplex well-defined
        return _PENALTY if not np.isfinite(ll) else -ll

    v0 = _initial_vector(y, variant, orders) if init_vector is None else np.asarray(init_vector)
    rng = np.random.default_rng(seed)
    best_vec, best_nll = None, np.inf
    for i in range(max(1, restarts)):
        start = v0 if i == 0 else v0 + rng.normal(scale=0.2, size=v0.shape)
        res = minimize(neg_ll, start, method="Nelder-Mead",
                       options={"xatol": 1e-6, "fatol": 1e-6,
                                "maxiter": maxiter, "maxfev": maxiter})
        if res.fun < best_nll:
            best_nll, best_vec = res.fun, res.x
    if best_vec is None or best_nll >= _PENALTY:
        raise FitError("FARIMA+GARCH fit did not converge", best=best_vec)
    model = _vec_to_model(best_vec, variant, d, orders, sigma0_sq, truncation)
    model.log_lik = -best_nll
    model.aic = aic_of(model.log_lik, model.free_parameters())
    model._fit_vector = best_vec  # warm-start handle for rolling refits
    return model


def forecast(model: FarimaGarchModel, history, h: int) -> Forecast:
    """h-step-ahead mean and conditional-sd paths.

    Future innovations enter at conditional expectation zero; squared
    innovations in the variance recursion are replaced by their forecasts.
    """
    if h < 1:
        raise LrdError("h must be >= 1")
    y = history.values if isinstance(history, RateSeries) else np.asarray(history, dtype=np.float64)
    eps, sigma2, u, w = (np.asarray(a) for a in _filter_paths(model, y))
    n = y.size
    coeffs = frac_diff_coeffs(model.d, min(model.truncation + 1, n + h))
    eps_ext = np.concatenate([eps, np.zeros(h)])
    w_ext = np.concatenate([w, np.zeros(h)])
    u_ext = np.concatenate([u, np.zeros(h)])
    s2_ext = np.concatenate([sigma2, np.zeros(h)])
    e2_ext = np.concatenate([eps**2, np.zeros(h)])
    mean_path = np.empty(h)
    sigma_path = np.empty(h)
    alpha = np.asarray(model.garch_alpha)
    beta = np.asarray(model.garch_beta)
    for j in range(h):
        t = n + j
        s2 = model.garch_w
        for i, a in enumerate(alpha):
            s2 += a * e2_ext[t - 1 - i]
        for i, b in enumerate(beta):
            s2 += b * s2_ext[t - 1 - i]
        s2_ext[t] = s2
        e2_ext[t] = s2  # E[eps^2] = sigma^2 for future steps
        wf = 0.0
        for i, p in enumerate(model.ar):
            wf += p * w_ext[t - 1 - i]
        for i, ps in enumerate(model.ma):
            wf += ps * eps_ext[t - 1 - i]
        w_ext[t] = wf
        # invert the fractional difference: u_t = w_t - sum_{k>=1} c_k u_{t-k}
        kmax = min(t, coeffs.size - 1)
        uf = wf - np.dot(coeffs[1 : kmax + 1], u_ext[t - kmax : t][::-1])
        u_ext[t] = uf
        sigma_path[j] = math.sqrt(s2)
        mean_path[j] = uf + model.mu + model.lam * sigma_path[j]
    return Forecast(horizon=h, mean_path=mean_path, sigma_path=sigma_path)


def predict_rolling(series, family=TST_VARIANTS, ell: float = 0.9, h: int = 1,
                    seed: int = 0, orders=(1, 1, 1, 1), truncation: int = 100,
                    refit_maxiter: int = 800):
    """Rolling-origin backtest of each family member; returns the variant
    with the smallest PMAD plus all per-variant runs.

    A refit failure at a step carries the previous model forward and clears
    the step's refit flag.
    """
    y = series.values if isinstance(series, RateSeries) else np.asarray(series, dtype=np.float64)
    n = y.size
    if not 0 < ell < 1:
        raise LrdError("ell must be in (0, 1)")
    start = int(n * ell)
    if start + h > n:
        raise LrdError("no full forecast window")
    runs = {}
    for variant in family:
        run = PredictionRun(horizon=h, train_fraction=ell)
        m = start
        model = None
        warm = None
        while m + h <= n:
            refit_ok = True
            try:
                model = fit(y[:m], variant, orders=orders, seed=seed,
                            truncation=truncation,
                            init_vector=warm,
                            restarts=1 if warm is not None else 2,
                            maxiter=refit_maxiter if warm is not None else 4000)
                warm = model._fit_vector
            except (LrdError, FitError):
                refit_ok = False
                if model is None:
                    raise
            fc = forecast(model, y[:m], h)
            for j in range(h):
                run.steps.append(PredictionStep(
                    hour=m + j, observed=float(y[m + j]),
                    predicted=float(fc.mean_path[j]),
                    sigma=float(fc.sigma_path[j]), refit_flag=refit_ok))
            m += h
        runs[variant] = run
    best = min(runs, key=lambda v: runs[v].pmad)
    return best, runs
