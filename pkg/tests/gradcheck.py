"""Central finite differences, kept apart from the analytic code paths."""

import numpy as np

STEP = 1e-5


def numeric_grad(f, arr: np.ndarray, step: float = STEP) -> np.ndarray:
    """d f() / d arr, perturbing ``arr`` in place one entry at a time."""
    out = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + step
        up = f()
        arr[i] = old - step
        down = f()
        arr[i] = old
        out[i] = (up - down) / (2 * step)
    return out


def rel_error(analytic, numeric) -> float:
    """Largest entry error relative to the array's largest magnitude."""
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0), 1e-8)
    return float(np.abs(a - n).max(initial=0.0) / scale)
