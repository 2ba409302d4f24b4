"""Exact posterior of prevalence from individual and pooled test counts.

With a Beta(alpha, beta) prior, ``y`` positives among ``m`` individual tests and
``z`` positives among ``n`` pools of ``q`` samples (perfect assay), the
posterior density is proportional to

    p^(gamma-1) (1-p)^(delta-1) * (1 - (1-p)^q)^z,

with ``gamma = y + alpha`` and ``delta = m - y + beta + q(n - z)``.  Expanding
the last factor binomially gives a signed sum of ``1 + z`` beta kernels, which
is what :class:`PosteriorMixture` stores.  Every evaluation (density, CDF,
moments, quantiles) is a weighted sum over those kernels.

Moments use the usual convention: ``raw_moment(post, k)`` is ``E[P**k]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, NamedTuple, Union

from .errors import InfeasibleFitError, PrecisionError, ValidationError
from .numerics import (
    DEFAULT_CONTEXT,
    PrecisionContext,
    as_fraction,
    beta_function,
    binomial_coefficient,
    incomplete_beta,
    is_integral,
    is_rational,
    to_mpf,
)

ExactNumber = Union[int, Fraction]

# bisection stopping rule for quantiles
CDF_TOL = 1e-15
ABSCISSA_TOL = 1e-12
MAX_BISECTIONS = 400

_GUARD = 10


# --- data types ---------------------------------------------------------------


def _nonneg_int(name, v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValidationError(f"{name} must be an integer, got {v!r}")
    if v < 0:
        raise ValidationError(f"{name} must be nonnegative, got {v}")


def _exact_param(name, v) -> ExactNumber:
    if isinstance(v, bool):
        raise ValidationError(f"{name} must be a number")
    try:
        f = as_fraction(v)
    except (ValueError, ZeroDivisionError, TypeError) as exc:
        raise ValidationError(f"{name}: {exc}") from None
    if f <= 0:
        raise ValidationError(f"{name} must be positive, got {v!r}")
    return int(f) if f.denominator == 1 else f


@dataclass(frozen=True)
class PriorBeta:
    """Beta(alpha, beta) prior on prevalence.

    Parameters are stored exactly; floats are read through their decimal repr.
    """

    alpha: ExactNumber = 1
    beta: ExactNumber = 1

    def __post_init__(self):
        object.__setattr__(self, "alpha", _exact_param("alpha", self.alpha))
        object.__setattr__(self, "beta", _exact_param("beta", self.beta))

    @property
    def is_integral(self) -> bool:
        return isinstance(self.alpha, int) and isinstance(self.beta, int)


@dataclass(frozen=True)
class Design:
    """``m`` individual tests and ``n`` pooled tests of ``q`` samples each."""

    m: int
    n: int
    q: int = 1

    def __post_init__(self):
        _nonneg_int("m", self.m)
        _nonneg_int("n", self.n)
        _nonneg_int("q", self.q)
        if self.q < 1:
            raise ValidationError(f"q must be at least 1, got {self.q}")


@dataclass(frozen=True)
class Observation:
    """``y`` positive individual tests and ``z`` positive pooled tests."""

    y: int
    z: int

    def __post_init__(self):
        _nonneg_int("y", self.y)
        _nonneg_int("z", self.z)

    def check(self, design: Design) -> None:
        if self.y > design.m:
            raise ValidationError(f"y={self.y} exceeds m={design.m}")
        if self.z > design.n:
            raise ValidationError(f"z={self.z} exceeds n={design.n}")


class Component(NamedTuple):
    """Kernel ``weight * p^(a-1) (1-p)^(b-1)`` of a mixture."""

    a: ExactNumber
    b: ExactNumber
    weight: ExactNumber


def _log10_ratio(num: Fraction, den: Fraction) -> float:
    r = Fraction(num) / Fraction(den)
    return math.log10(r.numerator) - math.log10(r.denominator)


@dataclass(frozen=True, eq=False)
class PosteriorMixture:
    """Normalized signed sum of beta kernels.

    The density is ``sum(w * p**(a-1) * (1-p)**(b-1)) / normalizer`` where the
    normalizer is ``sum(w * B(a, b))``.  Weights may be negative.  Components
    are canonical: one entry per distinct ``(a, b)``, sorted, zero weights
    dropped.

    When every ``a`` and ``b`` is an integer the normalizer is an exact
    ``Fraction`` (``exact`` is true); otherwise it is an mpf.  Real-valued
    evaluations are carried out at ``ctx.digits + guard_digits`` digits, where
    the guard covers the worst-case cancellation between signed kernels.
    """

    components: tuple
    normalizer: object
    ctx: PrecisionContext = DEFAULT_CONTEXT
    guard_digits: int = _GUARD
    gamma: ExactNumber | None = None
    delta: ExactNumber | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    @property
    def exact(self) -> bool:
        return isinstance(self.normalizer, (int, Fraction))

    @property
    def n_components(self) -> int:
        return len(self.components)

    @classmethod
    def from_terms(
        cls,
        terms: Iterable,
        ctx: PrecisionContext | None = None,
        gamma=None,
        delta=None,
    ) -> "PosteriorMixture":
        """Canonicalize ``(a, b, weight)`` terms and normalize them."""
        ctx = ctx or DEFAULT_CONTEXT
        merged: dict = {}
        for a, b, w in terms:
            a = _exact_param("a", a)
            b = _exact_param("b", b)
            w = as_fraction(w)
            merged[(a, b)] = merged.get((a, b), 0) + w
        comps = tuple(
            Component(a, b, int(w) if w.denominator == 1 else w)
            for (a, b), w in sorted(merged.items())
            if w != 0
        )
        if not comps:
            raise PrecisionError("mixture has no nonzero components")

        if all(isinstance(c.a, int) and isinstance(c.b, int) for c in comps):
            norm = Fraction(0)
            abs_mass = Fraction(0)
            for c in comps:
                bf = beta_function(c.a, c.b)
                norm += c.weight * bf
                abs_mass += abs(c.weight) * bf
            if norm <= 0:
                raise PrecisionError(f"nonpositive normalizer {norm}")
            loss = _log10_ratio(abs_mass, norm)
            guard = max(0, math.ceil(loss)) + _GUARD
            if norm.denominator == 1:
                norm = int(norm)
            return cls(comps, norm, ctx, guard, gamma, delta)

        # weights are exact, so cancellation is cured by carrying more digits:
        # estimate the loss, then redo the sum with that many guard digits
        norm, loss = _real_normalizer(comps, ctx, _GUARD)
        if norm is None:
            norm, loss = _real_normalizer(comps, ctx, ctx.digits + _GUARD)
            if norm is None:
                raise PrecisionError(
                    f"normalizer is not positive at {2 * ctx.digits + _GUARD} digits; "
                    "increase the precision"
                )
        guard = max(0, math.ceil(loss)) + _GUARD
        if guard > _GUARD:
            norm, loss = _real_normalizer(comps, ctx, guard)
            if norm is None:
                raise PrecisionError("normalizer is not positive; increase the precision")
        mp = ctx.mp(guard)
        return cls(comps, +mp.mpf(norm), ctx, guard, gamma, delta)

    def working_mp(self):
        """mpmath context used for real-valued evaluations of this mixture."""
        return self.ctx.mp(self.guard_digits)


def _real_normalizer(comps, ctx, extra):
    mp = ctx.mp(extra)
    norm = mp.zero
    abs_mass = mp.zero
    for c in comps:
        bf = mp.beta(to_mpf(c.a, mp), to_mpf(c.b, mp))
        w = to_mpf(c.weight, mp)
        norm += w * bf
        abs_mass += abs(w) * bf
    if norm <= 0:
        return None, math.inf
    return norm, float(mp.log10(abs_mass / norm))


# --- construction ------------------------------------------------------------------


def pool_positive_prob(p, q: int):
    """Probability that a pool of ``q`` i.i.d. samples holds a positive: 1-(1-p)^q."""
    _check_p(p)
    if isinstance(q, bool) or not isinstance(q, int) or q < 1:
        raise ValidationError(f"q must be a positive integer, got {q!r}")
    return 1 - (1 - p) ** q


def build_posterior(
    prior: PriorBeta,
    design: Design,
    obs: Observation,
    ctx: PrecisionContext | None = None,
) -> PosteriorMixture:
    """Exact posterior for perfect individual and pooled tests."""
    obs.check(design)
    y, z, m, n, q = obs.y, obs.z, design.m, design.n, design.q
    gamma = y + prior.alpha
    delta = m - y + prior.beta + q * (n - z)
    terms = (
        (gamma, delta + q * i, (-1) ** i * binomial_coefficient(z, i))
        for i in range(z + 1)
    )
    return PosteriorMixture.from_terms(terms, ctx, gamma=gamma, delta=delta)


def beta_distribution(a, b, ctx: PrecisionContext | None = None) -> PosteriorMixture:
    """Single-kernel mixture equal to Beta(a, b)."""
    return PosteriorMixture.from_terms([(a, b, 1)], ctx)


# --- evaluation --------------------------------------------------------------------


def _check_p(p):
    if isinstance(p, bool):
        raise ValidationError("p must be a number")
    try:
        ok = 0 <= p <= 1
    except TypeError:
        raise ValidationError(f"p must be a number, got {p!r}") from None
    if not ok:
        raise ValidationError(f"p must lie in [0, 1], got {p!r}")


def _use_exact(post: PosteriorMixture, p) -> bool:
    return post.exact and is_rational(p)


def pdf(post: PosteriorMixture, p):
    """Posterior density at ``p``.

    Exact ``Fraction`` for an exact mixture at a rational ``p``; mpf otherwise.
    """
    _check_p(p)
    if _use_exact(post, p):
        x = Fraction(p)
        total = Fraction(0)
        for c in post.components:
            total += c.weight * x ** (c.a - 1) * (1 - x) ** (c.b - 1)
        return total / post.normalizer
    mp = post.working_mp()
    x = to_mpf(p, mp)
    xc = 1 - x
    total = mp.zero
    for a, b, w in _mp_components(post, mp):
        total += w * x ** (a - 1) * xc ** (b - 1)
    return total / to_mpf(post.normalizer, mp)


def _mp_components(post, mp):
    key = ("components", mp.dps)
    comps = post._cache.get(key)
    if comps is None:
        comps = [(to_mpf(c.a, mp), to_mpf(c.b, mp), to_mpf(c.weight, mp)) for c in post.components]
        post._cache[key] = comps
    return comps


def _chains(post):
    """Group kernels by ``a`` into runs whose ``b`` values differ by integers."""
    chains = post._cache.get("chains")
    if chains is None:
        by_a: dict = {}
        for c in post.components:
            by_a.setdefault(c.a, []).append((c.b, c.weight))
        chains = []
        for a, entries in sorted(by_a.items()):
            entries.sort()
            run = [entries[0]]
            for b, w in entries[1:]:
                if is_integral(b - run[0][0]):
                    run.append((b, w))
                else:
                    chains.append((a, run))
                    run = [(b, w)]
            chains.append((a, run))
        post._cache["chains"] = chains
    return chains


def _mp_start(x, a, b, mp):
    """Unregularized B_x(a, b) at context ``mp``."""
    if isinstance(a, int) and isinstance(b, int):
        # shorter of the two binomial tails; absolute error stays O(eps * B(a, b))
        bf = to_mpf(beta_function(a, b), mp)
        N = a + b - 1
        if x == 0:
            return mp.zero
        if x == 1:
            return bf
        xc = 1 - x
        if a <= b:
            # 1 - sum_{j<a} C(N,j) x^j (1-x)^(N-j)
            term = xc**N
            acc = term
            ratio = x / xc
            for j in range(a - 1):
                term = term * (N - j) / (j + 1) * ratio
                acc += term
            return bf * (1 - acc)
        term = x**N
        acc = term
        ratio = xc / x
        for j in range(b - 1):
            # j-th term counted down from the top: C(N, N-j-1) x^(N-j-1) (1-x)^(j+1)
            term = term * (N - j) / (j + 1) * ratio
            acc += term
        return bf * acc
    return mp.betainc(to_mpf(a, mp), to_mpf(b, mp), 0, x)


def _unnormalized_cdf_exact(post, x: Fraction) -> Fraction:
    total = Fraction(0)
    xc = 1 - x
    for a, run in _chains(post):
        b_cur = run[0][0]
        bx = incomplete_beta(x, a, b_cur)
        lead = x**a * xc**b_cur
        for b, w in run:
            while b_cur < b:
                bx = (b_cur * bx + lead) / (a + b_cur)
                lead *= xc
                b_cur += 1
            total += w * bx
    return total


def _unnormalized_cdf_mp(post, x, mp):
    total = mp.zero
    if x == 0:
        return total
    xc = 1 - x
    for a, run in _chains(post):
        b_cur = run[0][0]
        bx = _mp_start(x, a, b_cur, mp)
        am = to_mpf(a, mp)
        bm = to_mpf(b_cur, mp)
        lead = x**am * xc**bm
        for b, w in run:
            while b_cur < b:
                bx = (bm * bx + lead) / (am + bm)
                lead *= xc
                b_cur += 1
                bm += 1
            total += to_mpf(w, mp) * bx
    return total


def cdf(post: PosteriorMixture, p):
    """Posterior CDF at ``p``: the weighted sum of the kernels' incomplete betas.

    Within each group of kernels sharing ``a`` the incomplete beta is stepped
    upward in ``b`` with ``B_x(a, b+1) = (b B_x(a, b) + x^a (1-x)^b) / (a + b)``,
    which only adds nonnegative terms.
    """
    _check_p(p)
    if _use_exact(post, p):
        x = Fraction(p)
        if x == 0:
            return Fraction(0)
        return _unnormalized_cdf_exact(post, x) / post.normalizer
    mp = post.working_mp()
    return _unnormalized_cdf_mp(post, to_mpf(p, mp), mp) / to_mpf(post.normalizer, mp)


def quantile(post: PosteriorMixture, u) -> float:
    """Smallest-bracket bisection inverse of :func:`cdf`.

    Stops once ``|cdf(p) - u| <= 1e-15`` and the bracket is narrower than
    ``2e-12``, so the returned abscissa is within 1e-12 of the true quantile.
    """
    if isinstance(u, bool):
        raise ValidationError("u must be a number")
    try:
        ok = 0 < u < 1
    except TypeError:
        raise ValidationError(f"u must be a number, got {u!r}") from None
    if not ok:
        raise ValidationError(f"u must lie in (0, 1), got {u!r}")
    mp = post.working_mp()
    target = to_mpf(u, mp)
    norm = to_mpf(post.normalizer, mp)
    lo, hi = mp.zero, mp.one
    f_lo, f_hi = mp.zero, mp.one
    for _ in range(MAX_BISECTIONS):
        mid = (lo + hi) / 2
        f_mid = _unnormalized_cdf_mp(post, mid, mp) / norm
        err = f_mid - target
        if abs(err) <= CDF_TOL and hi - lo <= 2 * ABSCISSA_TOL:
            break
        if err < 0:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    else:
        return float(mid)
    # final linear interpolation inside the converged bracket
    if err < 0:
        lo, f_lo = mid, f_mid
    else:
        hi, f_hi = mid, f_mid
    if f_hi > f_lo:
        mid = lo + (target - f_lo) * (hi - lo) / (f_hi - f_lo)
        mid = min(max(mid, lo), hi)
    return float(mid)


def credible_interval(post: PosteriorMixture, level=0.95) -> tuple[float, float]:
    """Equal-tailed interval ``(F^-1((1-level)/2), F^-1((1+level)/2))``.

    This is the interval the simulation study calls a 95% confidence interval.
    """
    if isinstance(level, bool) or not 0 < level < 1:
        raise ValidationError(f"level must lie in (0, 1), got {level!r}")
    tail = (1 - level) / 2
    low = quantile(post, tail)
    high = quantile(post, 1 - tail)
    if not low < high:
        raise PrecisionError(f"degenerate interval ({low}, {high})")
    return low, high


def raw_moment(post: PosteriorMixture, k: int):
    """``E[P**k]`` for ``k >= 1``.

    Each kernel contributes ``w B(a, b) prod_{j<k} (a+j)/(a+b+j)``.  The index
    is the conventional one, so ``k=1`` is the mean.
    """
    if isinstance(k, bool) or not isinstance(k, int) or k < 1:
        raise ValidationError(f"k must be a positive integer, got {k!r}")
    if post.exact:
        total = Fraction(0)
        for c in post.components:
            ratio = Fraction(1)
            for j in range(k):
                ratio *= Fraction(c.a + j, c.a + c.b + j)
            total += c.weight * beta_function(c.a, c.b) * ratio
        return total / post.normalizer
    mp = post.working_mp()
    total = mp.zero
    for a, b, w in _mp_components(post, mp):
        ratio = mp.one
        for j in range(k):
            ratio *= (a + j) / (a + b + j)
        total += w * mp.beta(a, b) * ratio
    return total / to_mpf(post.normalizer, mp)


def mean(post: PosteriorMixture):
    return raw_moment(post, 1)


def variance(post: PosteriorMixture):
    mu = raw_moment(post, 1)
    return raw_moment(post, 2) - mu * mu


def fit_beta_mom(post: PosteriorMixture):
    """Beta(a, b) with the posterior's mean and variance.

    Raises InfeasibleFitError when ``variance >= mean (1 - mean)`` (or the
    variance is not positive), since no beta has such moments.
    """
    mu = mean(post)
    v = variance(post)
    if v <= 0 or v >= mu * (1 - mu):
        raise InfeasibleFitError(f"no beta with mean {float(mu)} and variance {float(v)}")
    scale = mu * (1 - mu) / v - 1
    return mu * scale, (1 - mu) * scale
