"""Backend selection for the hot loops.

The compiled extension is used when it was built; setting
``FRACTHICK_PURE_PYTHON=1`` forces the numpy fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels

if os.environ.get("FRACTHICK_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"



def _f64(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def coherent_sum(nodes, amp, xs, inv_h: float) -> np.ndarray:
    """``out[i] = sum_j amp[j] * exp(1j * xs[i] * nodes[j] * inv_h)``."""
    return _impl.coherent_sum(_f64(nodes), np.ascontiguousarray(amp, dtype=np.complex128),
                              _f64(xs), float(inv_h))


def grid_min_mass(lo, hi, L: float, x0: float, step: float, count: int) -> tuple[float, int]:
    """Minimum of ``2L - |K ∩ [x - L, x + L]|`` over ``x = x0 + k * step``."""
    return _impl.grid_min_mass(_f64(lo), _f64(hi), float(L), float(x0), float(step), int(count))


__all__ = ["BACKEND", "coherent_sum", "grid_min_mass"]
