"""Shared statistical kernels.

Correlation and agreement metrics (PCC, CCC, UAR), the Fisher z transform,
small-effect thresholds, Bonferroni correction, and an ordinary least
squares solver. Everything here is a pure function over numpy arrays and is
exercised against brute-force oracles in the test suite.

Degenerate inputs (zero variance) do not raise: the affected statistic is
returned as ``nan`` and callers decide their own skipping policy.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import IllConditionedWarning, OutOfDomain, SingleClassReference


@dataclass(frozen=True)
class CorrelationResult:
    """Pearson correlation with its two-sided p-value.

    ``r`` is ``nan`` when either input had zero variance; ``defined`` tells
    callers whether the value is usable.
    """

    r: float
    n: int
    p_two_sided: float

    @property
    def defined(self) -> bool:
        return not np.isnan(self.r)


@dataclass(frozen=True)
class EffectThresholdConfig:
    """Small-effect configuration: Cohen's d floor and significance level."""

    d_min: float = 0.2
    alpha: float = 0.05

    def __post_init__(self):
        if self.d_min <= 0:
            raise ValueError("d_min must be > 0")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")


def pcc(x, y) -> CorrelationResult:
    """Pearson correlation coefficient with exact two-sided p-value.

    The p-value comes from the t statistic ``r * sqrt(n-2) / sqrt(1-r^2)``
    with ``n-2`` degrees of freedom, evaluated through the regularized
    incomplete beta function. Zero-variance input yields ``r = nan`` and
    ``p = nan`` (no exception).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pcc expects two equal-length 1-d vectors")
    n = x.size
    if n < 2:
        raise ValueError("pcc requires at least 2 samples")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return CorrelationResult(r=float("nan"), n=n, p_two_sided=float("nan"))
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    r = float(np.clip(r, -1.0, 1.0))
    if n == 2:
        # r is +-1 by construction; the t test has 0 dof
        return CorrelationResult(r=r, n=n, p_two_sided=1.0)
    if abs(r) == 1.0:
        p = 0.0
    else:
        dof = n - 2
        t2 = dof * r * r / (1.0 - r * r)
        p = float(special.betainc(dof / 2.0, 0.5, dof / (dof + t2)))
    return CorrelationResult(r=r, n=n, p_two_sided=p)


def ccc(x, y) -> float:
    """Lin's concordance correlation coefficient.

    ``2*cov(x,y) / (var(x) + var(y) + (mean(x)-mean(y))^2)`` with population
    (1/N) moments. Penalizes both decorrelation and mean/scale shift.
    Returns ``nan`` only in the fully degenerate case (both variances zero
    and equal means); two distinct constants give 0.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("ccc expects two equal-length 1-d vectors")
    if x.size < 2:
        raise ValueError("ccc requires at least 2 samples")
    mx, my = x.mean(), y.mean()
    vx = float(np.mean((x - mx) ** 2))
    vy = float(np.mean((y - my) ** 2))
    cov = float(np.mean((x - mx) * (y - my)))
    denom = vx + vy + (mx - my) ** 2
    if denom == 0.0:
        return float("nan")
    return 2.0 * cov / denom


def fisher_z(r: float) -> float:
    """Fisher z transform, ``atanh(r)``. Requires ``|r| < 1``."""
    if abs(r) >= 1.0:
        raise OutOfDomain(f"fisher_z requires |r| < 1, got {r}")
    return float(np.arctanh(r))


def fisher_z_inv(z: float) -> float:
    """Inverse Fisher z transform, ``tanh(z)``."""
    return float(np.tanh(z))


def uar_binary(pred, ref) -> float:
    """Unweighted average recall of a binary prediction against a reference.

    Mean of the recall on the positive class and the recall on the negative
    class. Raises :class:`SingleClassReference` when the reference does not
    contain both classes.
    """
    pred = np.asarray(pred, dtype=bool)
    ref = np.asarray(ref, dtype=bool)
    if pred.shape != ref.shape or pred.ndim != 1:
        raise ValueError("uar_binary expects two equal-length 1-d vectors")
    n_pos = int(ref.sum())
    n_neg = ref.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassReference("reference contains a single class")
    recall_pos = float(np.sum(pred & ref)) / n_pos
    recall_neg = float(np.sum(~pred & ~ref)) / n_neg
    return 0.5 * (recall_pos + recall_neg)


def uar_chance_threshold(n: int, alpha: float = 0.05) -> float:
    """Chance-level UAR threshold from a two-tailed z test.

    Normal approximation to the null (coin-flip) UAR over ``n`` items:
    ``0.5 + z_{1-alpha/2} * sqrt(0.25 / n)``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    z = float(special.ndtri(1.0 - alpha / 2.0))
    return 0.5 + z * np.sqrt(0.25 / n)


def frequency_effect_threshold(freqs, cfg: EffectThresholdConfig | None = None,
                               rule=None) -> float:
    """Frequency above which a label count is a small effect or better.

    Default rule: ``mean(freqs) + d_min * sd_sample(freqs)``. The rule is
    injectable (``rule(freqs, cfg) -> float``) so an alternative derivation
    can replace it without touching callers.
    """
    cfg = cfg or EffectThresholdConfig()
    freqs = np.asarray(freqs, dtype=float)
    if freqs.size < 2:
        raise ValueError("need at least 2 label frequencies")
    if rule is not None:
        return float(rule(freqs, cfg))
    return float(freqs.mean() + cfg.d_min * freqs.std(ddof=1))


def bonferroni(p, alpha: float = 0.05):
    """Bonferroni significance mask: ``p_i < alpha / m`` with ``m = len(p)``.

    NaN p-values are never significant.
    """
    p = np.asarray(p, dtype=float)
    finite = np.isfinite(p)
    if np.any((p[finite] < 0) | (p[finite] > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    mask = np.zeros(p.shape, dtype=bool)
    mask[finite] = p[finite] < alpha / p.size
    return mask


@dataclass
class OlsFit:
    """Least-squares solution ``y ~ X @ coef (+ intercept)``.

    ``ill_conditioned`` is set when the normal equations were rank deficient
    and the ridge fallback (lambda = 1e-8) produced the returned solution.
    """

    coef: np.ndarray
    intercept: float | None
    ill_conditioned: bool

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = X @ self.coef
        if self.intercept is not None:
            out = out + self.intercept
        return out


def ols_fit(X, y, fit_intercept: bool = True) -> OlsFit:
    """Ordinary least squares via the normal equations.

    Minimizes ``||X w - y||^2``. On rank deficiency the system is re-solved
    with a ridge term (lambda = 1e-8 on the diagonal); the result is still
    returned and an :class:`IllConditionedWarning` is emitted.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.size:
        raise ValueError("X and y row counts differ")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ValueError("ols_fit requires finite inputs")
    A = np.hstack([X, np.ones((X.shape[0], 1))]) if fit_intercept else X
    n, p = A.shape
    if n < p:
        raise ValueError(f"need at least {p} rows after intercept augmentation, got {n}")
    gram = A.T @ A
    rhs = A.T @ y
    ill = bool(np.linalg.matrix_rank(gram) < p)
    if ill:
        warnings.warn("rank-deficient design; ridge fallback engaged",
                      IllConditionedWarning, stacklevel=2)
        gram = gram + 1e-8 * np.eye(p)
    w = np.linalg.solve(gram, rhs)
    if fit_intercept:
        return OlsFit(coef=w[:-1], intercept=float(w[-1]), ill_conditioned=ill)
    return OlsFit(coef=w, intercept=None, ill_conditioned=ill)
