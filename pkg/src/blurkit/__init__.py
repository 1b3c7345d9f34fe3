"""blurkit: Fourier-domain blur modeling, kernel estimation and
reversible multi-scale deblurring, sized for CPU experimentation."""

import os

# The work units here are small; BLAS thread pools spin more than they
# help, and a fixed thread count keeps runs bit-reproducible. Env vars
# cover the not-yet-imported case, threadpoolctl the already-imported
# one; both yield to an explicit user configuration.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

if os.environ.get("OPENBLAS_NUM_THREADS") == "1":
    try:
        from threadpoolctl import threadpool_limits as _threadpool_limits

        _threadpool_limits(limits=1)
    except ImportError:  # pragma: no cover - optional accelerator hint
        pass

__version__ = "0.1.0"
