"""Exact and configurable-precision arithmetic for the posterior machinery.

Two arithmetic paths exist.  When every parameter is an integer the beta
function and the regularized incomplete beta function are evaluated exactly
with :class:`fractions.Fraction`; otherwise they are evaluated with mpmath at
the number of significant digits carried by a :class:`PrecisionContext`.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Union

import mpmath

from .errors import ValidationError

DEFAULT_DIGITS = 200
MIN_DIGITS = 50

Number = Union[int, Fraction, float, "mpmath.mpf"]


@dataclass(frozen=True)
class PrecisionContext:
    """Number of significant decimal digits used on the real path.

    Each context owns private mpmath contexts, so changing precision here never
    touches the global ``mpmath.mp`` state.
    """

    digits: int = DEFAULT_DIGITS
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)
    _lock: threading.Lock = field(
        default_factory=threading.Lock, init=False, repr=False, compare=False
    )

    def __post_init__(self):
        if isinstance(self.digits, bool) or not isinstance(self.digits, int):
            raise ValidationError(f"digits must be an integer, got {self.digits!r}")
        if self.digits < MIN_DIGITS:
            raise ValidationError(f"digits must be >= {MIN_DIGITS}, got {self.digits}")

    def mp(self, extra: int = 0) -> mpmath.ctx_mp.MPContext:
        """Return an mpmath context working at ``digits + extra`` digits."""
        dps = self.digits + max(0, int(extra))
        with self._lock:
            ctx = self._cache.get(dps)
            if ctx is None:
                ctx = mpmath.MPContext()
                ctx.dps = dps
                self._cache[dps] = ctx
        return ctx


DEFAULT_CONTEXT = PrecisionContext()


# --- exact helpers ---------------------------------------------------------


class _FactorialTable:
    """Grow-only table of n! shared by all exact beta evaluations."""

    def __init__(self):
        self._values = [1]
        self._lock = threading.Lock()

    def __call__(self, n: int) -> int:
        values = self._values
        if n < len(values):
            return values[n]
        with self._lock:
            values = self._values
            acc = values[-1]
            for k in range(len(values), n + 1):
                acc *= k
                values.append(acc)
            return values[n]

    def prepopulate(self, n: int) -> None:
        self(n)


factorial = _FactorialTable()


def is_integral(x) -> bool:
    """True when ``x`` is an exact or floating value with no fractional part."""
    if isinstance(x, bool):
        return False
    if isinstance(x, int):
        return True
    if isinstance(x, Fraction):
        return x.denominator == 1
    if isinstance(x, float):
        return x.is_integer()
    if is_mpf(x):
        return x == int(x)
    return False


def is_mpf(x) -> bool:
    """True for an mpf from any mpmath context (each context has its own class)."""
    return hasattr(x, "_mpf_")


def is_rational(x) -> bool:
    return isinstance(x, Rational) and not isinstance(x, bool)


def as_fraction(x) -> Fraction:
    """Convert ``x`` to an exact Fraction.

    Floats are read through their shortest decimal repr, so ``0.9`` becomes
    ``9/10`` rather than the nearest binary double.
    """
    if isinstance(x, bool):
        raise ValidationError(f"expected a number, got {x!r}")
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValidationError(f"expected a finite number, got {x!r}")
        return Fraction(repr(x))
    if isinstance(x, str):
        return Fraction(x)
    if is_mpf(x):
        sign, man, exp, _ = x._mpf_
        if not man and exp:
            raise ValidationError(f"expected a finite number, got {x!r}")
        value = Fraction(int(man)) * Fraction(2) ** exp
        return -value if sign else value
    raise ValidationError(f"cannot convert {x!r} to an exact rational")


def to_mpf(x, mp):
    """Convert an int, Fraction, float or mpf to an mpf of context ``mp``."""
    if isinstance(x, Fraction):
        return mp.mpf(x.numerator) / x.denominator
    return mp.mpf(x)


# --- public special functions ---------------------------------------------


def binomial_coefficient(n: int, k: int) -> int:
    """Exact C(n, k) for nonnegative integers with k <= n."""
    if isinstance(n, bool) or isinstance(k, bool) or not (
        isinstance(n, int) and isinstance(k, int)
    ):
        raise ValidationError("binomial_coefficient needs integer arguments")
    if n < 0 or k < 0:
        raise ValidationError(f"C({n}, {k}): arguments must be nonnegative")
    if k > n:
        raise ValidationError(f"C({n}, {k}): k exceeds n")
    return math.comb(n, k)


def _check_positive(name, v):
    if isinstance(v, bool):
        raise ValidationError(f"{name} must be a number")
    try:
        positive = v > 0
    except TypeError:
        raise ValidationError(f"{name} must be a number, got {v!r}") from None
    if not positive:
        raise ValidationError(f"{name} must be positive, got {v!r}")


def beta_function(a, b, ctx: PrecisionContext | None = None):
    """B(a, b).

    Exact ``Fraction`` (a-1)!(b-1)!/(a+b-1)! when both arguments are positive
    integers, an mpf at ``ctx`` precision otherwise.
    """
    _check_positive("a", a)
    _check_positive("b", b)
    if is_integral(a) and is_integral(b):
        a, b = int(a), int(b)
        return Fraction(factorial(a - 1) * factorial(b - 1), factorial(a + b - 1))
    mp = (ctx or DEFAULT_CONTEXT).mp()
    return mp.beta(to_mpf(a, mp), to_mpf(b, mp))


def _check_probability(p):
    if isinstance(p, bool):
        raise ValidationError("p must be a number")
    try:
        ok = 0 <= p <= 1
    except TypeError:
        raise ValidationError(f"p must be a number, got {p!r}") from None
    if not ok:
        raise ValidationError(f"p must lie in [0, 1], got {p!r}")


def _binomial_tail_exact(p: Fraction, a: int, b: int) -> Fraction:
    # sum_{j=a}^{N} C(N,j) k^j (d-k)^(N-j) / d^N with p = k/d, N = a+b-1
    N = a + b - 1
    k, d = p.numerator, p.denominator
    rest = d - k
    total = 0
    for j in range(a, N + 1):
        total += math.comb(N, j) * k**j * rest ** (N - j)
    return Fraction(total, d**N)


def _binomial_tail_mpf(x, a: int, b: int, mp):
    N = a + b - 1
    if x == 0:
        return mp.zero
    if x == 1:
        return mp.one
    one_minus = 1 - x
    ratio = x / one_minus
    term = mp.binomial(N, a) * x**a * one_minus ** (N - a)
    total = term
    for j in range(a, N):
        term = term * (N - j) / (j + 1) * ratio
        total += term
    return total


def regularized_incomplete_beta(p, a, b, ctx: PrecisionContext | None = None):
    """I_p(a, b), the Beta(a, b) CDF at ``p``.

    For integer ``a`` and ``b`` this is the binomial tail
    ``sum_{j=a}^{a+b-1} C(a+b-1, j) p^j (1-p)^(a+b-1-j)``, which is exact
    when ``p`` is rational.  A float ``p`` or non-integer parameters are
    handled at ``ctx`` precision.
    """
    _check_probability(p)
    _check_positive("a", a)
    _check_positive("b", b)
    if is_integral(a) and is_integral(b):
        a, b = int(a), int(b)
        if is_rational(p):
            return _binomial_tail_exact(Fraction(p), a, b)
        mp = (ctx or DEFAULT_CONTEXT).mp()
        return _binomial_tail_mpf(to_mpf(p, mp), a, b, mp)
    mp = (ctx or DEFAULT_CONTEXT).mp()
    return mp.betainc(to_mpf(a, mp), to_mpf(b, mp), 0, to_mpf(p, mp), regularized=True)


def incomplete_beta(p, a, b, mp=None, ctx: PrecisionContext | None = None):
    """Unregularized B_p(a, b) = B(a, b) * I_p(a, b).

    ``mp`` selects an explicit mpmath context; without one the result is exact
    whenever :func:`regularized_incomplete_beta` would be.
    """
    if mp is None:
        return beta_function(a, b, ctx) * regularized_incomplete_beta(p, a, b, ctx)
    x = to_mpf(p, mp)
    if is_integral(a) and is_integral(b):
        a, b = int(a), int(b)
        return to_mpf(beta_function(a, b), mp) * _binomial_tail_mpf(x, a, b, mp)
    return mp.betainc(to_mpf(a, mp), to_mpf(b, mp), 0, x)
