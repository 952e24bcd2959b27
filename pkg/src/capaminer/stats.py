"""Contingency-table and two-sample statistics with self-contained special
functions.

The chi-squared upper tail goes through the regularized lower incomplete
gamma function (power series for x < a+1, Lentz continued fraction
otherwise); the Student-t tail goes through the regularized incomplete beta
function.  Both target absolute error well below 1e-10.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyTable

_MAX_ITER = 500
_TINY = 1e-300
_EPS = 1e-16


def _gamma_series(a: float, x: float) -> float:
    """P(a, x) by power series; converges fast for x < a + 1."""
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))

def _gamma_cont_fraction(a: float, x: float) -> float:
    """Q(a, x) by modified Lentz continued fraction; for x >= a + 1."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 0.0
    if x < a + 1.0:
        return min(1.0, _gamma_series(a, x))
    return max(0.0, 1.0 - _gamma_cont_fraction(a, x))


def gammainc_upper(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gamma_series(a, x))
    return min(1.0, _gamma_cont_fraction(a, x))


def _beta_cont_fraction(a: float, b: float, x: float) -> float:
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
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
        if abs(delta - 1.0) < _EPS:
            break
    return h


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    front = math.exp(
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return min(1.0, front * _beta_cont_fraction(a, b, x) / a)
    return max(0.0, 1.0 - front * _beta_cont_fraction(b, a, 1.0 - x) / b)


def chi2_sf(x: float, dof: float) -> float:
    """Upper-tail probability of the chi-squared distribution."""
    return gammainc_upper(dof / 2.0, x / 2.0)


def student_t_sf_two_tailed(t: float, dof: float) -> float:
    """Two-tailed p-value of the Student-t distribution."""
    if dof <= 0:
        raise ValueError("dof must be positive")
    x = dof / (dof + t * t)
    return betainc(dof / 2.0, 0.5, x)


@dataclass(frozen=True)
class Chi2Result:
    statistic: float
    dof: int
    p_value: float
    dropped_rows: tuple
    dropped_cols: tuple
    low_expected_cells: int


def chi2_independence(counts) -> Chi2Result:
    """Pearson chi-squared test of independence on a count matrix.

    All-zero rows and columns are dropped first (recorded in the result).
    Expected counts below 5 are counted but do not block the test.
    """
    obs = np.asarray(counts, dtype=float)
    if obs.ndim != 2 or obs.size == 0 or obs.sum() <= 0:
        raise EmptyTable("contingency table has no counts")
    if np.any(obs < 0):
        raise ValueError("counts must be non-negative")
    row_keep = obs.sum(axis=1) > 0
    col_keep = obs.sum(axis=0) > 0
    dropped_rows = tuple(np.flatnonzero(~row_keep).tolist())
    dropped_cols = tuple(np.flatnonzero(~col_keep).tolist())
    obs = obs[row_keep][:, col_keep]
    if obs.shape[0] < 2 or obs.shape[1] < 2:
        raise EmptyTable("need at least a 2x2 table after dropping zeros")
    total = obs.sum()
    expected = np.outer(obs.sum(axis=1), obs.sum(axis=0)) / total
    stat = float(((obs - expected) ** 2 / expected).sum())
    dof = (obs.shape[0] - 1) * (obs.shape[1] - 1)
    return Chi2Result(
        statistic=stat,
        dof=dof,
        p_value=chi2_sf(stat, dof),
        dropped_rows=dropped_rows,
        dropped_cols=dropped_cols,
        low_expected_cells=int((expected < 5).sum()),
    )


@dataclass(frozen=True)
class TTestResult:
    t_stat: float
    dof: float
    p_value: float
    mean_a: float
    mean_b: float
    degenerate: bool = False


def two_sample_t_test(a, b, variant: str = "welch") -> TTestResult:
    """Two-sample t-test, Welch (default) or pooled-variance.

    Constant samples are degenerate: equal means give t=0, p=1; unequal
    means give p=0 with the degenerate flag set.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("need at least two points per sample")
    if variant not in ("welch", "pooled"):
        raise ValueError(f"unknown variant {variant!r}")
    na, nb = len(a), len(b)
    ma, mb = float(a.mean()), float(b.mean())
    va = float(a.var(ddof=1))
    vb = float(b.var(ddof=1))
    if va == 0.0 and vb == 0.0:
        if ma == mb:
            return TTestResult(0.0, float(na + nb - 2), 1.0, ma, mb, True)
        t = math.inf if ma > mb else -math.inf
        return TTestResult(t, float(na + nb - 2), 0.0, ma, mb, True)
    if variant == "welch":
        se2 = va / na + vb / nb
        dof = se2 ** 2 / (
            (va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1)
        )
    else:
        sp2 = ((na - 1) * va + (nb - 1) * vb) / (na + nb - 2)
        se2 = sp2 * (1.0 / na + 1.0 / nb)
        dof = float(na + nb - 2)
    t = (ma - mb) / math.sqrt(se2)
    return TTestResult(t, float(dof), student_t_sf_two_tailed(t, dof), ma, mb)
