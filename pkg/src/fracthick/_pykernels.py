"""Pure numpy versions of the compiled kernels (same signatures)."""

from __future__ import annotations

import numpy as np

_CHUNK = 1 << 22  # complex entries per block of the phase matrix


def coherent_sum(nodes: np.ndarray, amp: np.ndarray, xs: np.ndarray, inv_h: float) -> np.ndarray:
    """``out[i] = sum_j amp[j] * exp(1j * xs[i] * nodes[j] * inv_h)``."""
    nodes = np.ascontiguousarray(nodes, dtype=np.float64)
    amp = np.ascontiguousarray(amp, dtype=np.complex128)
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    out = np.empty(xs.shape[0], dtype=np.complex128)
    rows = max(1, _CHUNK // max(1, nodes.shape[0]))
    for start in range(0, xs.shape[0], rows):
        blk = xs[start:start + rows]
        phase = np.outer(blk * inv_h, nodes)
        out[start:start + rows] = np.exp(1j * phase) @ amp
    return out


def grid_min_mass(lo: np.ndarray, hi: np.ndarray, L: float, x0: float, step: float,
                  count: int) -> tuple[float, int]:
    """Minimum of ``2L - |K ∩ [x - L, x + L]|`` over ``x = x0 + k * step``."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    best = np.inf
    best_k = 0
    rows = max(1, _CHUNK // max(1, lo.shape[0]))
    for start in range(0, count, rows):
        ks = np.arange(start, min(count, start + rows))
        x = x0 + ks * step
        a = (x - L)[:, None]
        b = (x + L)[:, None]
        covered = np.clip(np.minimum(hi[None, :], b) - np.maximum(lo[None, :], a), 0.0, None).sum(axis=1)
        mass = 2.0 * L - covered
        i = int(np.argmin(mass))
        if mass[i] < best:
            best = float(mass[i])
            best_k = int(ks[i])
    return best, best_k
