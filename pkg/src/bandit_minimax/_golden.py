from __future__ import annotations

from math import sqrt
from typing import Callable

INV_PHI = (sqrt(5) - 1) / 2


def golden_section_max(
    f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-4, max_iter: int = 200
) -> tuple[float, float]:
    """Maximise a unimodal f on [lo, hi]; returns (argmax, max).

    The endpoints are scored too so a monotone f returns its boundary value.
    """
    if hi < lo:
        lo, hi = hi, lo
    x1 = hi - INV_PHI * (hi - lo)
    x2 = lo + INV_PHI * (hi - lo)
    f1, f2 = f(x1), f(x2)
    a, b = lo, hi
    it = 0
    while b - a > tol and it < max_iter:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + INV_PHI * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - INV_PHI * (b - a)
            f1 = f(x1)
        it += 1
    best = (x1, f1) if f1 >= f2 else (x2, f2)
    for edge in (lo, hi):
        fe = f(edge)
        if fe > best[1]:
            best = (edge, fe)
    return best
