"""Slow, independent reference implementations used as test oracles.

Everything here works on Python scalars (``fractions.Fraction`` where the
arithmetic allows it) and shares no code with the package.
"""

from fractions import Fraction
import math


def exact(x):
    return Fraction(float(x))


def moving_average_residual(f, M):
    """Residual f(n) minus the centered M-point mean, interior samples only."""
    half = (M - 1) // 2
    fr = [exact(v) for v in f]
    out = []
    for n in range(half, len(fr) - half):
        window = sum(fr[n - m] for m in range(-half, half + 1))
        out.append(fr[n] - window / M)
    return out


def normalized_inner_product(x, y):
    """Uncentered correlation; the square root is the only inexact step."""
    xs = [exact(v) for v in x]
    ys = [exact(v) for v in y]
    num = sum(a * b for a, b in zip(xs, ys))
    den2 = sum(a * a for a in xs) * sum(b * b for b in ys)
    return float(num) / math.sqrt(float(den2)) if den2 else math.nan


def two_point_line(rho_12, d_12, rho_23, d_23, rho_13):
    r12, r23, r13 = exact(rho_12), exact(rho_23), exact(rho_13)
    a, b = exact(d_12), exact(d_23)
    return a + (a - b) / (r12 - r23) * (r13 - r12)


def hit_rate_and_area(flags_and_fractions):
    """``[(hit, area_fraction), ...]`` to (hit rate, mean of hit * area)."""
    n = len(flags_and_fractions)
    hits = sum(1 for h, _ in flags_and_fractions if h)
    area = sum((exact(a) if h else Fraction(0)) for h, a in flags_and_fractions)
    return Fraction(hits, n), area / n


def nearer_mask(xs, ys, p, q):
    """Per-cell flag: center strictly nearer ``q`` than ``p`` (row index = y)."""
    return [[(x - p[0]) ** 2 + (y - p[1]) ** 2 > (x - q[0]) ** 2 + (y - q[1]) ** 2 for x in xs] for y in ys]


def spearman(a, b):
    """Spearman rank correlation without ties handling (inputs are distinct)."""
    def ranks(v):
        order = sorted(range(len(v)), key=lambda i: v[i])
        r = [0] * len(v)
        for rank, i in enumerate(order):
            r[i] = rank
        return r

    ra, rb = ranks(a), ranks(b)
    n = len(a)
    d2 = sum((x - y) ** 2 for x, y in zip(ra, rb))
    return 1 - 6 * d2 / (n * (n * n - 1))
