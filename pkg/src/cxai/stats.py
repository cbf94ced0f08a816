"""One-way ANOVA and paired t-test with p-values from the regularized incomplete beta."""

import math
from dataclasses import dataclass

from .errors import ConvergenceError, ZeroVarianceError

MAX_ITERATIONS = 1000
TOLERANCE = 1e-12
_TINY = 1e-300


@dataclass(frozen=True)
class StatTestResult:
    statistic: float
    df: tuple
    p_value: float
    test_kind: str  # "anova_oneway" | "t_paired"


def _beta_continued_fraction(x, a, b):
    # modified Lentz evaluation of the incomplete-beta continued fraction
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, MAX_ITERATIONS + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < TOLERANCE:
            return h
    raise ConvergenceError(f"incomplete beta continued fraction did not converge in {MAX_ITERATIONS} iterations "
                           f"(x={x}, a={a}, b={b})")


def reg_inc_beta(x, a, b):
    """Regularized incomplete beta function I_x(a, b)."""
    if not (a > 0 and b > 0):
        raise ValueError(f"a and b must be positive, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    # the continued fraction converges fast for x < (a + 1) / (a + b + 2)
    if x < (a + 1.0) / (a + b + 2.0):
        return min(1.0, front * _beta_continued_fraction(x, a, b) / a)
    return max(0.0, 1.0 - front * _beta_continued_fraction(1.0 - x, b, a) / b)


def _check_df(*dfs):
    for df in dfs:
        if not df > 0:
            raise ValueError(f"degrees of freedom must be positive, got {df}")


def t_sf(t, df):
    """Upper tail P(T > t)."""
    _check_df(df)
    tail = 0.5 * reg_inc_beta(df / (df + t * t), df / 2.0, 0.5)
    return tail if t >= 0 else 1.0 - tail


def t_cdf(t, df):
    _check_df(df)
    if t == 0:
        return 0.5
    tail = 0.5 * reg_inc_beta(df / (df + t * t), df / 2.0, 0.5)
    return 1.0 - tail if t > 0 else tail


def f_cdf(f, d1, d2):
    _check_df(d1, d2)
    if f <= 0:
        return 0.0
    return reg_inc_beta(d1 * f / (d1 * f + d2), d1 / 2.0, d2 / 2.0)


def f_sf(f, d1, d2):
    """Upper tail P(F > f), evaluated directly to keep precision for large f."""
    _check_df(d1, d2)
    if f <= 0:
        return 1.0
    return reg_inc_beta(d2 / (d2 + d1 * f), d2 / 2.0, d1 / 2.0)


def _mean(xs):
    return math.fsum(xs) / len(xs)


def anova_oneway(groups):
    """One-way ANOVA F test across ``groups`` (sequences of numbers)."""
    groups = [[float(v) for v in g] for g in groups]
    k = len(groups)
    if k < 2 or any(len(g) < 2 for g in groups):
        raise ValueError("anova needs at least two groups of at least two values each")
    n = sum(len(g) for g in groups)
    grand = _mean([v for g in groups for v in g])
    means = [_mean(g) for g in groups]
    ssb = math.fsum(len(g) * (m - grand) ** 2 for g, m in zip(groups, means))
    ssw = math.fsum((v - m) ** 2 for g, m in zip(groups, means) for v in g)
    df_between, df_within = k - 1, n - k
    if ssw == 0.0:
        raise ZeroVarianceError("all groups have zero within-group variance; F is undefined")
    f = (ssb / df_between) / (ssw / df_within)
    return StatTestResult(f, (float(df_between), float(df_within)), f_sf(f, df_between, df_within), "anova_oneway")


def t_paired(a, b):
    """Two-sided paired t-test on ``a - b``."""
    if len(a) != len(b):
        raise ValueError(f"paired samples differ in length: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 2:
        raise ValueError("paired t-test needs at least two pairs")
    d = [float(x) - float(y) for x, y in zip(a, b)]
    md = _mean(d)
    var = math.fsum((v - md) ** 2 for v in d) / (n - 1)
    if var == 0.0:
        raise ZeroVarianceError("paired differences have zero variance")
    t = md / math.sqrt(var / n)
    df = n - 1
    p = min(1.0, 2.0 * t_sf(abs(t), df))
    return StatTestResult(t, (float(df),), p, "t_paired")
