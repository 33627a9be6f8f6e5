"""Numeric kernels with a compiled fast path and a NumPy fallback.

The joint-table marginalization sits in the inner loop of every exact
backend query, so it is worth compiling.  Importing this package always
succeeds: the Cython extension is used when importable and the NumPy
reference implementation otherwise.  Set ``BEAMFILL_PURE_PYTHON=1`` to
force the fallback (the parity tests and the benchmark rely on both
implementations being importable side by side as ``_core`` and ``_ref``).
"""

import os

from beamfill.kernels import _ref

if os.environ.get("BEAMFILL_PURE_PYTHON") == "1":
    _impl = _ref
    IMPLEMENTATION = "python"
else:
    try:
        from beamfill.kernels import _core as _impl  # type: ignore[no-redef]

        IMPLEMENTATION = "compiled"
    except ImportError:
        _impl = _ref
        IMPLEMENTATION = "python"

logsumexp = _impl.logsumexp
marginal_logcond = _impl.marginal_logcond

__all__ = ["IMPLEMENTATION", "logsumexp", "marginal_logcond"]
