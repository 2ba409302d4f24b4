import math

import numpy as np
import pytest
from scipy import integrate

# ---------------------------------------------------------------------------
# Quadrature oracles.  They integrate the likelihood-times-prior in its
# product form and never touch the mixture expansion under test.
# ---------------------------------------------------------------------------


def pool_prob(p, q):
    # 1 - (1-p)^q without cancellation for small p
    if p >= 1:
        return 1.0
    return -math.expm1(q * math.log1p(-p))


def perfect_integrand(p, m, y, n, z, q, alpha, beta):
    """Unnormalized posterior for perfect tests, combined-powers form."""
    pi = pool_prob(p, q)
    return (
        p ** (y + alpha - 1)
        * (1 - p) ** (m - y + beta - 1)
        * pi**z
        * (1 - pi) ** (n - z)
    )


def imperfect_integrand(p, m, y, n, z, q, alpha, beta, se, sp):
    """Misclassified individual and pooled likelihoods times the beta kernel."""
    pi = pool_prob(p, q)
    ind_pos = se * p + (1 - sp) * (1 - p)
    pool_pos = se * pi + (1 - sp) * (1 - pi)
    return (
        ind_pos**y
        * (1 - ind_pos) ** (m - y)
        * pool_pos**z
        * (1 - pool_pos) ** (n - z)
        * p ** (alpha - 1)
        * (1 - p) ** (beta - 1)
    )


class QuadOracle:
    """Normalized density, CDF and mean by adaptive quadrature."""

    def __init__(self, integrand):
        self.f = integrand
        self.norm = self._quad(0.0, 1.0)

    def _quad(self, lo, hi, weight=None):
        g = self.f if weight is None else (lambda p: weight(p) * self.f(p))
        # split at the midpoint so narrow peaks are not missed
        val, _ = integrate.quad(g, lo, hi, epsabs=0, epsrel=1e-13, limit=500,
                                points=[lo + (hi - lo) * t for t in (0.1, 0.5, 0.9)])
        return val

    def pdf(self, p):
        return self.f(p) / self.norm

    def cdf(self, x):
        if x <= 0:
            return 0.0
        return self._quad(0.0, x) / self.norm

    def mean(self):
        return self._quad(0.0, 1.0, weight=lambda p: p) / self.norm


@pytest.fixture
def quad_oracle():
    return QuadOracle


def random_perfect_cases(count, seed, max_m=10, max_n=10, max_q=4, priors=(1, 2)):
    rng = np.random.default_rng(seed)
    cases = []
    for _ in range(count):
        m = int(rng.integers(0, max_m + 1))
        n = int(rng.integers(0, max_n + 1))
        cases.append(dict(
            m=m, y=int(rng.integers(0, m + 1)),
            n=n, z=int(rng.integers(0, n + 1)),
            q=int(rng.integers(1, max_q + 1)),
            alpha=int(rng.choice(priors)), beta=int(rng.choice(priors)),
        ))
    return cases


def random_imperfect_cases(count, seed, max_tests=10, max_q=4, accuracies=(0.8, 0.9, 0.95)):
    rng = np.random.default_rng(seed)
    cases = []
    for _ in range(count):
        total = int(rng.integers(1, max_tests + 1))
        m = int(rng.integers(0, total + 1))
        n = total - m
        cases.append(dict(
            m=m, y=int(rng.integers(0, m + 1)),
            n=n, z=int(rng.integers(0, n + 1)),
            q=int(rng.integers(1, max_q + 1)),
            alpha=int(rng.choice((1, 2))), beta=int(rng.choice((1, 2))),
            se=float(rng.choice(accuracies)), sp=float(rng.choice(accuracies)),
        ))
    return cases


# ---------------------------------------------------------------------------
# Acceptance reporting: one pass/fail line per criterion in the summary.
# ---------------------------------------------------------------------------

_ACCEPTANCE: dict = {}


@pytest.fixture
def acceptance_report():
    def record(number, title, passed, detail=""):
        _ACCEPTANCE[number] = (title, passed, detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, passed, detail = _ACCEPTANCE[number]
        status = "PASS" if passed else "FAIL"
        line = f"[{status}] {number}. {title}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)
