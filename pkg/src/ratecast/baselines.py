"""Comparison predictors: Gaussian-emission HMM and symbolic-dynamics
models over quantile-binned symbols."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ratecast import kernels
from ratecast.ingest import RateSeries
from ratecast.metrics import PredictionRun, PredictionStep, pmad

K_GRID = tuple(range(2, 11))
SYMBOL_QUANTILES = (0.80, 0.85, 0.90, 0.95)


class BaselineError(ValueError):
    pass


@dataclass
class GaussianHmm:
    k: int
    pi: np.ndarray
    A: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_lik: float = float("nan")
    collapsed: bool = False

    def __post_init__(self):
        self.pi = np.asarray(self.pi, dtype=np.float64)
        self.A = np.asarray(self.A, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        if abs(self.pi.sum() - 1) > 1e-9 or np.any(np.abs(self.A.sum(axis=1) - 1) > 1e-9):
            raise BaselineError("pi and rows of A must sum to 1")
        if np.any(self.variances <= 0):
            raise BaselineError("variances must be positive")


def _emission_matrix(values, means, variances):
    v = values[:, None]
    return np.exp(-0.5 * (v - means) ** 2 / variances) / np.sqrt(2 * np.pi * variances)


def _kmeans_init(values, k, rng, iters=10):
    # seeded k-means-style init: quantile-spread centers, few Lloyd steps
    qs = (np.arange(k) + 0.5) / k
    centers = np.quantile(values, qs)
    centers = centers + rng.normal(scale=1e-3 * (values.std() + 1e-12), size=k)
    for _ in range(iters):
        assign = np.argmin(np.abs(values[:, None] - centers), axis=1)
        for j in range(k):
            sel = values[assign == j]
            if sel.size:
                centers[j] = sel.mean()
    return np.sort(centers), assign


def hmm_fit(values, k: int, seed: int = 0, max_iter: int = 200,
            tol: float = 1e-6, init: GaussianHmm | None = None) -> GaussianHmm:
    """Baum-Welch with a seeded k-means-style initialization.

    Empty-responsibility states get a variance floor and the model is
    flagged as collapsed.
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    if not 1 <= k <= 10:
        raise BaselineError("k must be in [1, 10]")
    if k > 1 and n <= 10 * k:
        raise BaselineError("series too short for this many states")
    if k == 1:
        var = max(float(values.var()), 1e-12)
        return GaussianHmm(k=1, pi=np.ones(1), A=np.ones((1, 1)),
                           means=np.array([values.mean()]),
                           variances=np.array([var]), log_lik=float("nan"))
    rng = np.random.default_rng(seed)
    var_floor = 1e-8 * max(float(values.var()), 1e-12)
    if init is not None:
        pi, A = init.pi.copy(), init.A.copy()
        means, variances = init.means.copy(), init.variances.copy()
    else:
        means, assign = _kmeans_init(values, k, rng)
        variances = np.empty(k)
        for j in range(k):
            sel = values[assign == j]
            variances[j] = sel.var() if sel.size > 1 else values.var()
        variances = np.maximum(variances, max(var_floor, 1e-12))
        pi = np.full(k, 1.0 / k)
        A = np.full((k, k), 0.1 / max(k - 1, 1))
        np.fill_diagonal(A, 0.9)
        A /= A.sum(axis=1, keepdims=True)
    prev_ll = -np.inf
    collapsed = False
    ll = prev_ll
    for _ in range(max_iter):
        B = _emission_matrix(values, means, variances)
        alpha, c, ll = kernels.hmm_forward(B, pi, A)
        beta = np.asarray(kernels.hmm_backward(B, A, c))
        alpha = np.asarray(alpha)
        gamma = alpha * beta
        gamma /= np.maximum(gamma.sum(axis=1, keepdims=True), 1e-300)
        # transition expectations
        xi_num = np.einsum("ti,ij,tj->ij", alpha[:-1], A,
                           (np.asarray(B)[1:] * beta[1:]) / np.asarray(c)[1:, None])
        pi = gamma[0] / gamma[0].sum()
        A = xi_num / np.maximum(xi_num.sum(axis=1, keepdims=True), 1e-300)
        # a state with no expected transitions leaves an all-zero row;
        # reset it to uniform so the model stays a proper Markov chain
        dead = A.sum(axis=1) < 0.5
        if dead.any():
            collapsed = True
            A[dead] = 1.0 / k
        if not np.isfinite(pi).all() or pi.sum() < 0.5:
            collapsed = True
            pi = np.full(k, 1.0 / k)
        weights = gamma.sum(axis=0)
        empty = weights < 1e-10
        if empty.any():
            collapsed = True
            weights = np.maximum(weights, 1e-10)
        means = (gamma * values[:, None]).sum(axis=0) / weights
        variances = (gamma * (values[:, None] - means) ** 2).sum(axis=0) / weights
        variances = np.maximum(variances, var_floor)
        if ll - prev_ll < tol and np.isfinite(prev_ll):
            prev_ll = ll
            break
        prev_ll = ll
    return GaussianHmm(k=k, pi=pi, A=A, means=means, variances=variances,
                       log_lik=float(prev_ll), collapsed=collapsed)


def hmm_filter(model: GaussianHmm, history) -> np.ndarray:
    """Filtered state distribution after the last observation."""
    values = np.asarray(history, dtype=np.float64)
    if values.size == 0:
        raise BaselineError("history must be non-empty")
    B = _emission_matrix(values, model.means, model.variances)
    alpha, _, _ = kernels.hmm_forward(B, model.pi, model.A)
    return np.asarray(alpha)[-1]


def hmm_forecast(model: GaussianHmm, history, h: int) -> np.ndarray:
    """Propagate the filtered state distribution and take the emission-mean
    expectation at each step."""
    state = hmm_filter(model, history)
    out = np.empty(h)
    for j in range(h):
        state = state @ model.A
        out[j] = state @ model.means
    return out


def hmm_predict_rolling(series, ell: float = 0.9, h: int = 1, seed: int = 0,
                        k_grid=K_GRID, max_iter: int = 100,
                        refit_max_iter: int = 25):
    """Rolling-origin HMM backtest over the state-count grid; smallest
    PMAD wins. Returns (best_k, runs-by-k)."""
    y = series.values if isinstance(series, RateSeries) else np.asarray(series, dtype=np.float64)
    n = y.size
    start = int(n * ell)
    if not 0 < ell < 1 or start + h > n:
        raise BaselineError("invalid ell/h for this series")
    runs = {}
    for k in k_grid:
        run = PredictionRun(horizon=h, train_fraction=ell)
        m = start
        model = None
        while m + h <= n:
            refit_ok = True
            try:
                model = hmm_fit(y[:m], k, seed=seed,
                                max_iter=refit_max_iter if model is not None else max_iter,
                                init=model)
            except BaselineError:
                refit_ok = False
                if model is None:
                    raise
            pred = hmm_forecast(model, y[:m], h)
            for j in range(h):
                run.steps.append(PredictionStep(
                    hour=m + j, observed=float(y[m + j]),
                    predicted=float(pred[j]), refit_flag=refit_ok))
            m += h
        runs[k] = run
    best = min(runs, key=lambda k: runs[k].pmad)
    return best, runs


# ---------------------------------------------------------------------------
# symbolic dynamics

@dataclass
class SymbolSeries:
    symbols: np.ndarray
    breakpoints: np.ndarray
    interval_stats: dict = field(default_factory=dict)

    def map_back(self, symbol: int, mapping: str) -> float:
        stats = self.interval_stats[int(symbol)]
        return stats[{"min": 0, "mean": 1, "max": 2}[mapping]]


def symbolize(values, training_values) -> SymbolSeries:
    """Quantile-bin values into symbols 1-5 using breakpoints computed from
    the training values only (type-7 quantiles; ties map to the lower
    interval)."""
    values = np.asarray(values, dtype=np.float64)
    training = np.asarray(training_values, dtype=np.float64)
    if training.size == 0:
        raise BaselineError("training_values must be non-empty")
    breakpoints = np.quantile(training, SYMBOL_QUANTILES)
    symbols = np.searchsorted(breakpoints, values, side="left") + 1
    train_sym = np.searchsorted(breakpoints, training, side="left") + 1
    stats = {}
    for s in range(1, 6):
        sel = training[train_sym == s]
        if sel.size:
            stats[s] = (float(sel.min()), float(sel.mean()), float(sel.max()))
    # empty intervals inherit the nearest populated interval's stats
    for s in range(1, 6):
        if s not in stats:
            near = min(stats, key=lambda t: abs(t - s))
            stats[s] = stats[near]
    return SymbolSeries(symbols=symbols.astype(np.int64),
                        breakpoints=breakpoints, interval_stats=stats)


@dataclass
class MarkovPredictor:
    """First-order max-conditional-probability symbol predictor."""

    counts: np.ndarray
    n_symbols: int = 5
    fallback_used: bool = False

    @classmethod
    def fit(cls, symbols, n_symbols: int = 5):
        counts = np.zeros((n_symbols, n_symbols))
        s = np.asarray(symbols) - 1
        for a, b in zip(s[:-1], s[1:]):
            counts[a, b] += 1
        return cls(counts=counts, n_symbols=n_symbols)

    def predict(self, last_symbol: int) -> int:
        row = self.counts[last_symbol - 1]
        if row.sum() == 0:
            self.fallback_used = True
            row = np.ones(self.n_symbols)  # unseen symbol: uniform fallback
        return int(np.argmax(row)) + 1


def discrete_hmm_fit(symbols, k: int, seed: int = 0, max_iter: int = 100,
                     tol: float = 1e-6, n_symbols: int = 5, init=None):
    """Baum-Welch for categorical emissions over the symbol alphabet.

    Returns (pi, A, E) with E the (k, n_symbols) emission matrix.
    """
    s = np.asarray(symbols, dtype=np.int64) - 1
    n = s.size
    rng = np.random.default_rng(seed)
    if init is not None:
        pi, A, E = (a.copy() for a in init)
    else:
        pi = np.full(k, 1.0 / k)
        A = np.full((k, k), 0.1 / max(k - 1, 1))
        np.fill_diagonal(A, 0.9)
        A /= A.sum(axis=1, keepdims=True)
        E = rng.uniform(0.5, 1.5, size=(k, n_symbols))
        E /= E.sum(axis=1, keepdims=True)
    prev_ll = -np.inf
    for _ in range(max_iter):
        B = E[:, s].T  # (n, k)
        alpha, c, ll = kernels.hmm_forward(B, pi, A)
        beta = np.asarray(kernels.hmm_backward(B, A, c))
        alpha = np.asarray(alpha)
        gamma = alpha * beta
        gamma /= np.maximum(gamma.sum(axis=1, keepdims=True), 1e-300)
        xi_num = np.einsum("ti,ij,tj->ij", alpha[:-1], A,
                           (B[1:] * beta[1:]) / np.asarray(c)[1:, None])
        pi = gamma[0] / gamma[0].sum()
        A = xi_num / np.maximum(xi_num.sum(axis=1, keepdims=True), 1e-300)
        E = np.zeros((k, n_symbols))
        for sym in range(n_symbols):
            E[:, sym] = gamma[s == sym].sum(axis=0)
        E = np.maximum(E, 1e-10)
        E /= E.sum(axis=1, keepdims=True)
        if ll - prev_ll < tol and np.isfinite(prev_ll):
            prev_ll = ll
            break
        prev_ll = ll
    return pi, A, E


def discrete_hmm_predict(hmm, symbols) -> int:
    """Most probable next symbol given the filtered state distribution."""
    pi, A, E = hmm
    s = np.asarray(symbols, dtype=np.int64) - 1
    B = E[:, s].T
    alpha, _, _ = kernels.hmm_forward(B, pi, A)
    state = np.asarray(alpha)[-1] @ A
    return int(np.argmax(state @ E)) + 1


def sd_predict_rolling(series, ell: float = 0.9, h: int = 1, seed: int = 0,
                       k_grid=K_GRID, max_iter: int = 50,
                       refit_max_iter: int = 10):
    """Rolling symbolic-dynamics backtest.

    Fits (a) discrete-emission HMMs over the state grid and (b) the
    first-order max-conditional-probability Markov predictor, maps
    predicted symbols back through min/mean/max interval statistics, and
    reports PMAD for every (model, mapping) cell. The best HMM state count
    is chosen by mean-mapping PMAD.

    Returns {"hmm": {...}, "markov": {...}} where each inner dict maps
    mapping name to (pmad, PredictionRun) and carries the winning k under
    "k" for the HMM family.
    """
    if h != 1:
        raise BaselineError("symbolic prediction is defined for h=1")
    y = series.values if isinstance(series, RateSeries) else np.asarray(series, dtype=np.float64)
    n = y.size
    start = int(n * ell)
    if not 0 < ell < 1 or start + h > n:
        raise BaselineError("invalid ell/h for this series")

    mappings = ("min", "mean", "max")
    hmm_preds = {k: [] for k in k_grid}   # predicted symbols per step
    markov_preds = []
    step_info = []                        # (hour, observed, SymbolSeries)
    hmm_models = {k: None for k in k_grid}
    for m in range(start, n):
        train = y[:m]
        sym = symbolize(train, train)
        symbols = sym.symbols
        for k in k_grid:
            model = discrete_hmm_fit(
                symbols, k, seed=seed,
                max_iter=refit_max_iter if hmm_models[k] is not None else max_iter,
                init=hmm_models[k])
            hmm_models[k] = model
            hmm_preds[k].append(discrete_hmm_predict(model, symbols))
        markov = MarkovPredictor.fit(symbols)
        markov_preds.append(markov.predict(int(symbols[-1])))
        step_info.append((m, float(y[m]), sym))

    observed = [obs for _, obs, _ in step_info]

    def run_for(pred_symbols, mapping):
        run = PredictionRun(horizon=1, train_fraction=ell)
        for (hour, obs, sym), ps in zip(step_info, pred_symbols):
            run.steps.append(PredictionStep(
                hour=hour, observed=obs, predicted=sym.map_back(ps, mapping)))
        return run

    best_k = min(k_grid, key=lambda k: pmad(
        observed, [si[2].map_back(p, "mean")
                   for si, p in zip(step_info, hmm_preds[k])]))
    out = {"hmm": {"k": best_k}, "markov": {}}
    for mapping in mappings:
        run = run_for(hmm_preds[best_k], mapping)
        out["hmm"][mapping] = (run.pmad, run)
        run = run_for(markov_preds, mapping)
        out["markov"][mapping] = (run.pmad, run)
    return out
