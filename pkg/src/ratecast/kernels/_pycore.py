"""Pure-numpy fallback implementations of the hot inner loops.

Signatures mirror ``_fastcore`` exactly; ``ratecast.kernels`` picks one of
the two at import time.
"""
import numpy as np


def fracdiff_apply(x, coeffs):
    """Causal truncated convolution y[t] = sum_k coeffs[k] * x[t-k]."""
    x = np.asarray(x, dtype=np.float64)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    return np.convolve(x, coeffs)[: x.shape[0]]


def garch_recursion(eps, omega, alpha, beta, sigma0_sq):
    """Conditional-variance recursion.

    sigma2[0] = sigma0_sq; lags reaching before the start of the sample are
    backfilled with sigma0_sq (both for eps^2 and sigma^2).
    """
    eps = np.asarray(eps, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    n = eps.shape[0]
    sigma2 = np.empty(n)
    sigma2[0] = sigma0_sq
    for t in range(1, n):
        s = omega
        for j in range(alpha.shape[0]):
            e2 = eps[t - 1 - j] ** 2 if t - 1 - j >= 0 else sigma0_sq
            s += alpha[j] * e2
        for j in range(beta.shape[0]):
            s2 = sigma2[t - 1 - j] if t - 1 - j >= 0 else sigma0_sq
            s += beta[j] * s2
        sigma2[t] = s
    return sigma2


def farima_garch_recursion(y, coeffs, mu, lam, phi, psi, omega, alpha, beta,
                           sigma0_sq):
    """Joint mean/variance filter of the fractional ARMA + GARCH model.

    Per step: sigma2 from the GARCH recursion on past eps, mean level
    mu + lam*sigma, fractional differencing of the demeaned series
    (truncated to len(coeffs) lags), then the ARMA recursion yields eps.
    Returns (eps, sigma2, u, w) where u is the demeaned series and w its
    fractional difference.
    """
    y = np.asarray(y, dtype=np.float64)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    n = y.shape[0]
    K = coeffs.shape[0]
    eps = np.zeros(n)
    sigma2 = np.empty(n)
    u = np.empty(n)
    w = np.empty(n)
    for t in range(n):
        if t == 0:
            s = sigma0_sq
        else:
            s = omega
            for j in range(alpha.shape[0]):
                e2 = eps[t - 1 - j] ** 2 if t - 1 - j >= 0 else sigma0_sq
                s += alpha[j] * e2
            for j in range(beta.shape[0]):
                s2 = sigma2[t - 1 - j] if t - 1 - j >= 0 else sigma0_sq
                s += beta[j] * s2
        sigma2[t] = s
        u[t] = y[t] - mu - lam * np.sqrt(s)
        kmax = min(t, K - 1)
        w[t] = np.dot(coeffs[: kmax + 1], u[t - kmax : t + 1][::-1])
        e = w[t]
        for j in range(phi.shape[0]):
            if t - 1 - j >= 0:
                e -= phi[j] * w[t - 1 - j]
        for j in range(psi.shape[0]):
            if t - 1 - j >= 0:
                e -= psi[j] * eps[t - 1 - j]
        eps[t] = e
    return eps, sigma2, u, w


def hmm_forward(B, pi, A):
    """Scaled forward pass. B is the (n, k) state-likelihood matrix.

    Returns (alpha, c, loglik) with alpha[t] normalized to sum 1 and c[t]
    the normalizers, loglik = sum(log c).
    """
    B = np.asarray(B, dtype=np.float64)
    n, k = B.shape
    alpha = np.empty((n, k))
    c = np.empty(n)
    a = pi * B[0]
    c[0] = a.sum()
    if c[0] <= 0:
        c[0] = np.finfo(float).tiny
    alpha[0] = a / c[0]
    for t in range(1, n):
        a = (alpha[t - 1] @ A) * B[t]
        c[t] = a.sum()
        if c[t] <= 0:
            c[t] = np.finfo(float).tiny
        alpha[t] = a / c[t]
    return alpha, c, float(np.log(c).sum())


def hmm_backward(B, A, c):
    """Scaled backward pass matching hmm_forward's normalizers."""
    B = np.asarray(B, dtype=np.float64)
    n, k = B.shape
    beta = np.empty((n, k))
    beta[n - 1] = 1.0
    for t in range(n - 2, -1, -1):
        beta[t] = (A @ (B[t + 1] * beta[t + 1])) / c[t + 1]
    return beta
