"""Posterior of prevalence when the assay has known sensitivity and specificity.

Misclassification turns each binomial likelihood into a binomial in the
apparent positive rate.  Expanding both likelihoods and the pooled
``pi_q = 1 - (1-p)^q`` factor binomially leaves a signed sum of beta kernels
with parameters ``(i + j + alpha, m - i - j + beta + q(n - k - l + r))``, which
is normalized into the same :class:`~poolprev.posterior.PosteriorMixture` used
for perfect tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import TermLimitError, ValidationError
from .numerics import PrecisionContext, as_fraction, binomial_coefficient
from .posterior import (
    Design,
    Observation,
    PosteriorMixture,
    PriorBeta,
    build_posterior,
    pool_positive_prob,
)

DEFAULT_TERM_CAP = 10**7


@dataclass(frozen=True)
class TestAccuracy:
    """Known sensitivity ``se`` and specificity ``sp``, shared by pools.

    Values are held as exact fractions (floats through their decimal repr).
    """

    __test__ = False  # not a pytest class

    se: Fraction = Fraction(1)
    sp: Fraction = Fraction(1)

    def __post_init__(self):
        for name in ("se", "sp"):
            v = getattr(self, name)
            try:
                f = as_fraction(v)
            except (ValueError, TypeError, ZeroDivisionError) as exc:
                raise ValidationError(f"{name}: {exc}") from None
            if not 0 < f <= 1:
                raise ValidationError(f"{name} must lie in (0, 1], got {v!r}")
            object.__setattr__(self, name, f)
        if self.se + self.sp <= 1:
            raise ValidationError(
                f"se + sp must exceed 1 for an informative test, got {self.se + self.sp}"
            )

    @property
    def perfect(self) -> bool:
        return self.se == 1 and self.sp == 1


def _check(p, count, positives, what):
    if isinstance(p, bool) or not 0 <= p <= 1:
        raise ValidationError(f"p must lie in [0, 1], got {p!r}")
    if positives > count:
        raise ValidationError(f"{positives} positives exceed {count} {what}")


def _coerce(p, acc: TestAccuracy):
    # keep exact inputs exact, floats in floats
    if isinstance(p, float):
        return float(acc.se), float(acc.sp)
    return acc.se, acc.sp


def likelihood_individual(p, m: int, y: int, acc: TestAccuracy):
    """P(Y = y | p) with each test positive at rate ``se p + (1-sp)(1-p)``."""
    _check(p, m, y, "individual tests")
    se, sp = _coerce(p, acc)
    pos = se * p + (1 - sp) * (1 - p)
    neg = (1 - se) * p + sp * (1 - p)
    return binomial_coefficient(m, y) * pos**y * neg ** (m - y)


def likelihood_pooled(p, n: int, z: int, q: int, acc: TestAccuracy):
    """P(Z = z | p) for ``n`` pools of ``q``, each pool misread like a sample."""
    _check(p, n, z, "pooled tests")
    se, sp = _coerce(p, acc)
    pi = pool_positive_prob(p, q)
    pos = se * pi + (1 - sp) * (1 - pi)
    neg = (1 - se) * pi + sp * (1 - pi)
    return binomial_coefficient(n, z) * pos**z * neg ** (n - z)


def g_coefficient(i, j, k, l, design: Design, obs: Observation, acc: TestAccuracy) -> Fraction:
    """Coefficient of ``p^(i+j) (1-p)^(m-i-j) pi^(k+l) (1-pi)^(n-k-l)``.

    ``i`` of the ``y`` individual positives and ``k`` of the ``z`` pooled
    positives are true positives; ``j`` of the ``m - y`` individual negatives
    and ``l`` of the ``n - z`` pooled negatives are false negatives.
    """
    y, z, m, n = obs.y, obs.z, design.m, design.n
    for name, v, hi in (("i", i, y), ("j", j, m - y), ("k", k, z), ("l", l, n - z)):
        if isinstance(v, bool) or not isinstance(v, int) or not 0 <= v <= hi:
            raise ValidationError(f"index {name}={v!r} outside [0, {hi}]")
    se, sp = acc.se, acc.sp
    return (
        binomial_coefficient(y, i)
        * binomial_coefficient(m - y, j)
        * binomial_coefficient(z, k)
        * binomial_coefficient(n - z, l)
        * se ** (i + k)
        * (1 - se) ** (j + l)
        * sp ** (m - y - j + n - z - l)
        * (1 - sp) ** (y - i + z - k)
    )


def raw_term_count(design: Design, obs: Observation) -> int:
    """Number of (i, j, k, l, r) terms in the unmerged expansion."""
    y, z, m, n = obs.y, obs.z, design.m, design.n
    # sum over k <= z, l <= n-z of (k + l + 1)
    nz = n - z
    pooled = (z + 1) * (nz + 1) + (nz + 1) * z * (z + 1) // 2 + (z + 1) * nz * (nz + 1) // 2
    return (y + 1) * (m - y + 1) * pooled


def raw_terms(prior: PriorBeta, design: Design, obs: Observation, acc: TestAccuracy):
    """Yield every ``(a, b, coefficient)`` of the unmerged quintuple expansion.

    Only practical for small designs; :func:`build_posterior_imperfect` folds
    the same sum without visiting each term.
    """
    y, z, m, n, q = obs.y, obs.z, design.m, design.n, design.q
    for i in range(y + 1):
        for j in range(m - y + 1):
            for k in range(z + 1):
                for l in range(n - z + 1):
                    g = g_coefficient(i, j, k, l, design, obs, acc)
                    for r in range(k + l + 1):
                        yield (
                            i + j + prior.alpha,
                            m - i - j + prior.beta + n * q - k * q - l * q + r * q,
                            g * binomial_coefficient(k + l, r) * (-1) ** r,
                        )


def _folded_coefficients(design: Design, obs: Observation, acc: TestAccuracy):
    """Coefficients keyed by ``s = i + j`` and ``u = n - k - l + r``.

    ``g`` factors into an individual part depending on (i, j) and a pooled part
    depending on (k, l), so the expansion folds to an outer product.
    """
    y, z, m, n = obs.y, obs.z, design.m, design.n
    se, sp = acc.se, acc.sp

    indiv = [Fraction(0)] * (m + 1)
    for i in range(y + 1):
        for j in range(m - y + 1):
            indiv[i + j] += (
                binomial_coefficient(y, i)
                * binomial_coefficient(m - y, j)
                * se**i
                * (1 - se) ** j
                * sp ** (m - y - j)
                * (1 - sp) ** (y - i)
            )

    pooled = [Fraction(0)] * (n + 1)
    for k in range(z + 1):
        for l in range(n - z + 1):
            pooled[k + l] += (
                binomial_coefficient(z, k)
                * binomial_coefficient(n - z, l)
                * se**k
                * (1 - se) ** l
                * sp ** (n - z - l)
                * (1 - sp) ** (z - k)
            )

    # pi^t (1-pi)^(n-t) = sum_r C(t, r) (-1)^r (1-p)^(q(n - t + r))
    by_u = [Fraction(0)] * (n + 1)
    for t, c in enumerate(pooled):
        if c == 0:
            continue
        for r in range(t + 1):
            by_u[n - t + r] += c * binomial_coefficient(t, r) * (-1) ** r
    return indiv, by_u


def build_posterior_imperfect(
    prior: PriorBeta,
    design: Design,
    obs: Observation,
    acc: TestAccuracy,
    ctx: PrecisionContext | None = None,
    term_cap: int = DEFAULT_TERM_CAP,
) -> PosteriorMixture:
    """Exact posterior with known sensitivity and specificity.

    Coinciding kernels are merged with exact coefficient arithmetic before the
    mixture is normalized.  Raises TermLimitError when the raw expansion
    would exceed ``term_cap`` terms.
    """
    obs.check(design)
    count = raw_term_count(design, obs)
    if count > term_cap:
        raise TermLimitError(
            f"expansion has {count} raw terms (cap {term_cap}); "
            "reduce the number of tests or raise the cap"
        )
    m, q = design.m, design.q
    indiv, by_u = _folded_coefficients(design, obs, acc)
    terms = (
        (s + prior.alpha, m - s + prior.beta + q * u, ci * cu)
        for s, ci in enumerate(indiv)
        if ci != 0
        for u, cu in enumerate(by_u)
        if cu != 0
    )
    return PosteriorMixture.from_terms(terms, ctx)


def build(
    prior: PriorBeta,
    design: Design,
    obs: Observation,
    acc: TestAccuracy | None = None,
    ctx: PrecisionContext | None = None,
    term_cap: int = DEFAULT_TERM_CAP,
) -> PosteriorMixture:
    """Perfect-test builder when ``acc`` is absent or perfect, else imperfect."""
    if acc is None or acc.perfect:
        return build_posterior(prior, design, obs, ctx)
    return build_posterior_imperfect(prior, design, obs, acc, ctx, term_cap)
