"""numpy fallback for the equilibrium kernels.

Joint pure strategies are indexed in mixed radix: digit i is the action
chosen at information set i, with `strides[i]` the place value of that digit.
"""

from __future__ import annotations

import numpy as np

BACKEND = "numpy"


def profile_digits(radices: np.ndarray) -> np.ndarray:
    """(n_profiles, n_infosets) matrix of action indices."""
    radices = np.asarray(radices, dtype=np.int64)
    n = int(np.prod(radices)) if len(radices) else 1
    idx = np.arange(n, dtype=np.int64)
    strides = np.ones(len(radices), dtype=np.int64)
    for i in range(len(radices) - 2, -1, -1):
        strides[i] = strides[i + 1] * radices[i + 1]
    return (idx[:, None] // strides[None, :]) % np.maximum(radices, 1)[None, :]


def reach_terminals(
    child_start: np.ndarray,
    children: np.ndarray,
    node_infoset: np.ndarray,
    radices: np.ndarray,
    start: int,
) -> np.ndarray:
    """Terminal node reached from `start` under every joint profile.

    node_infoset[n] is -1 for terminals. Walks all profiles in lock step.
    """
    digits = profile_digits(radices)
    n = digits.shape[0]
    cur = np.full(n, start, dtype=np.int64)
    rows = np.arange(n)
    while True:
        iset = node_infoset[cur]
        live = iset >= 0
        if not live.any():
            return cur
        r = rows[live]
        a = digits[r, iset[live]]
        cur[live] = children[child_start[cur[live]] + a]


def best_response_mask(values: np.ndarray, radices: np.ndarray, axes: np.ndarray) -> np.ndarray:
    """True where values[profile] equals the max over all profiles that differ
    only on the given infoset axes."""
    shape = tuple(int(r) for r in radices) or (1,)
    v = values.reshape(shape)
    ax = tuple(int(a) for a in axes)
    if not ax:
        return np.ones(values.shape[0], dtype=bool)
    best = v.max(axis=ax, keepdims=True)
    return (v >= best).reshape(-1)
