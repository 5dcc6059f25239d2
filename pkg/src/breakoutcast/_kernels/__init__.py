"""Split-search kernel with a compiled core and a pure-numpy fallback.

The tree learners spend almost all of their time scanning candidate
splits, so that scan lives behind a single function, ``best_split``,
with two interchangeable implementations:

* ``_split_cy`` - Cython, built at install time when a compiler is
  available; releases the GIL during the scan so forest construction
  scales across threads.
* ``_split_np`` - vectorized numpy, always available.

Both produce bit-identical results (same stable sort, same summation
order, same tie-breaking), so model output does not depend on which one
is active.  Selection happens once at import; set
``BREAKOUTCAST_KERNEL=numpy`` or ``=cython`` to force a backend.
``benchmarks/bench_kernels.py`` times the two against each other.
"""

import os

from breakoutcast._kernels import _split_np

_forced = os.environ.get("BREAKOUTCAST_KERNEL", "").strip().lower()

if _forced == "numpy":
    _impl = _split_np
elif _forced == "cython":
    from breakoutcast._kernels import _split_cy as _impl
else:
    try:
        from breakoutcast._kernels import _split_cy as _impl
    except ImportError:
        _impl = _split_np

best_split = _impl.best_split


def active_backend():
    """Name of the kernel backend selected at import ('cython' or 'numpy')."""
    return _impl.BACKEND


def available_backends():
    """Names of the backends importable in this installation."""
    names = ["numpy"]
    try:
        from breakoutcast._kernels import _split_cy  # noqa: F401

        names.insert(0, "cython")
    except ImportError:
        pass
    return names
