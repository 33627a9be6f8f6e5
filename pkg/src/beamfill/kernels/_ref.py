"""NumPy reference implementations of the numeric kernels.

Semantics here are the ground truth; the compiled extension in
``_core.pyx`` must match these functions bit-for-bit up to float
round-off (see tests/test_kernels.py).
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp as _lse


def logsumexp(values) -> float:
    """log(sum(exp(values))) over a 1-D vector, computed stably."""
    return float(_lse(np.asarray(values, dtype=np.float64)))


def marginal_logcond(table, obs, query: int, alphabet: int) -> np.ndarray:
    """Normalized log-conditional at one position of a dense log-joint.

    Args:
        table: flat, row-major array of ``alphabet**n`` log-probabilities.
        obs: length-n integer vector; a value in ``[0, alphabet)`` marks an
            observed position, any negative value a free (marginalized)
            one.  The entry at ``query`` is ignored: the conditional never
            depends on what currently occupies the queried slot.
        query: position whose conditional is requested.
        alphabet: axis length of the joint.

    Returns:
        Length-``alphabet`` vector ``c`` with ``logsumexp(c) == 0`` where
        ``c[v] = log p(x_query = v | observed positions)``.
    """
    obs = np.asarray(obs)
    n = obs.shape[0]
    t = np.asarray(table, dtype=np.float64).reshape((alphabet,) * n)

    index: list[object] = []
    free_axes: list[int] = []
    for p in range(n):
        if p == query or obs[p] < 0:
            free_axes.append(p)
            index.append(slice(None))
        else:
            index.append(int(obs[p]))
    sub = t[tuple(index)]
    sub = np.moveaxis(sub, free_axes.index(query), 0).reshape(alphabet, -1)
    per_value = _lse(sub, axis=1)
    return per_value - _lse(per_value)
