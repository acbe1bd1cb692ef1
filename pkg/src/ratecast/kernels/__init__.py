"""Hot-loop kernels: compiled Cython core with a pure-numpy fallback.

``BACKEND`` reports which implementation was selected at import time.
``benchmarks/bench_kernels.py`` compares the two.
"""

try:
    from ratecast.kernels import _fastcore as _impl

    BACKEND = "cython"
except ImportError:  # pragma: no cover - depends on build environment
    from ratecast.kernels import _pycore as _impl

    BACKEND = "python"

fracdiff_apply = _impl.fracdiff_apply
garch_recursion = _impl.garch_recursion
farima_garch_recursion = _impl.farima_garch_recursion
hmm_forward = _impl.hmm_forward
hmm_backward = _impl.hmm_backward

__all__ = [
    "BACKEND",
    "fracdiff_apply",
    "garch_recursion",
    "farima_garch_recursion",
    "hmm_forward",
    "hmm_backward",
]
