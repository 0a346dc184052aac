"""Direct per-index re-evaluation of the six features with plain Python floats."""

import math


def _ok(x):
    return x is not None and math.isfinite(x)


def feature_row(closes, volumes, i):
    """The six features at ``i`` or ``None`` when any input is missing or undefined."""
    if i < 20:
        return None
    if any(c is None for c in closes[i - 20:i + 1]) or volumes[i] is None or volumes[i - 1] is None:
        return None
    C = closes
    r = C[i] / C[i - 1] - 1.0
    r1 = C[i - 1] / C[i - 2] - 1.0
    r2 = C[i - 2] / C[i - 3] - 1.0
    m = r - r1
    m1 = r1 - r2
    a = m - m1
    wpm = C[i] / C[i - 5] - 1.0
    mpm = C[i] / C[i - 20] - 1.0
    if volumes[i - 1] == 0:
        return None
    vv = volumes[i] / volumes[i - 1] - 1.0
    row = (r, m, a, wpm, mpm, vv)
    return row if all(_ok(x) for x in row) else None


def momentum_label(closes, i):
    """m_i = r_i - r_{i-1}, or None."""
    if i < 2 or any(c is None for c in closes[i - 2:i + 1]):
        return None
    return (closes[i] / closes[i - 1] - 1.0) - (closes[i - 1] / closes[i - 2] - 1.0)
