"""Backend selection for the hot likelihood kernels.

The compiled extension is used when it imports; setting
``PREFATTACH_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from prefattach import _fallback

fallback = _fallback
compiled = None
if not os.environ.get("PREFATTACH_PURE_PYTHON"):
    try:
        from prefattach import _kernels as compiled
    except ImportError:
        compiled = None

backend = compiled if compiled is not None else fallback
BACKEND = "cython" if compiled is not None else "numpy"


def log_b(stats, params, impl=None):
    """Log normalised-weight product for ``stats`` under ``params``."""
    impl = impl or backend
    return impl.log_b(stats.degrees, stats.c_ptr, stats.c_idx, stats.c_cnt,
                      stats.w, stats.A, params.r == 1, params.alpha,
                      params.beta or 0.0, params.gamma or 0.0, params.delta)


def log_b_raw(stats, piecewise, alpha, beta, gamma, delta, impl=None):
    """As :func:`log_b` without building a ``PreferenceParams``."""
    impl = impl or backend
    return impl.log_b(stats.degrees, stats.c_ptr, stats.c_idx, stats.c_cnt,
                      stats.w, stats.A, piecewise, alpha, beta, gamma, delta)
