"""Exponentially scaled generalized exponential integrals e^x E_t(x)."""

import math

EULER_GAMMA = 0.57721566490153286061

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000


def _scaled_e1_series(x: float) -> float:
    # E1(x) = -gamma - ln x - sum_{k>=1} (-x)^k / (k k!), fine for 0 < x <= 1
    total = 0.0
    term = 1.0
    for k in range(1, _MAX_ITER):
        term *= -x / k
        contrib = term / k
        total += contrib
        if abs(contrib) < _EPS * abs(total):
            break
    return math.exp(x) * (-EULER_GAMMA - math.log(x) - total)


def _scaled_en_cfrac(t: int, x: float) -> float:
    # modified Lentz on the continued fraction of e^x E_t(x); valid for x > 1
    b = x + t
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (t - 1 + i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"continued fraction for E_{t}({x}) did not converge")


def exp_scaled_En(t: int, x: float) -> float:
    """Return e^x * E_t(x) for integer t >= 1 and x > 0.

    Only the scaled product is ever formed, so arguments up to ~1e300 are
    safe. Uses the series for E_1 plus the upward recurrence
    e^x E_{t+1} = (1 - x e^x E_t) / t when x <= 1 (where the recurrence
    damps errors), and the Lentz continued fraction for every t when x > 1.
    """
    if t < 1 or int(t) != t:
        raise ValueError("order t must be a positive integer")
    if not x > 0:
        raise ValueError("x must be positive")
    t = int(t)
    if math.isinf(x):
        return 0.0
    if x > 1.0:
        return _scaled_en_cfrac(t, x)
    val = _scaled_e1_series(x)
    for n in range(1, t):
        val = (1.0 - x * val) / n
    return val


def exp_scaled_En_partial_sum(order: int, x: float) -> float:
    """Sum of e^x E_t(x) for t = 1..order."""
    if x > 1.0:
        return sum(_scaled_en_cfrac(t, x) for t in range(1, order + 1))
    val = _scaled_e1_series(x)
    total = val
    for n in range(1, order):
        val = (1.0 - x * val) / n
        total += val
    return total
