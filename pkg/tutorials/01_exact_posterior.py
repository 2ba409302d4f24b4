"""One individual test (negative) and one pool of three (positive)."""
from fractions import Fraction

import numpy as np

from poolprev import (
    Design, Observation, PriorBeta, beta_distribution, build_posterior, cdf,
    credible_interval, fit_beta_mom, mean, pdf, raw_moment, variance,
)

post = build_posterior(PriorBeta(1, 1), Design(m=1, n=1, q=3), Observation(y=0, z=1))

# The posterior is a signed sum of beta kernels
for c in post.components:
    print(f"  weight {c.weight:+} on Beta({c.a}, {c.b})")
print("normalizer:", post.normalizer)

# With integer parameters everything stays rational
print("E[P], E[P^2], E[P^3]:", [raw_moment(post, k) for k in (1, 2, 3)])
print("variance:", variance(post))
print("cdf(1/2):", cdf(post, Fraction(1, 2)))

# Floats go through the high precision path
for p in np.linspace(0, 1, 6):
    print(f"  p={p:.1f}  pdf={float(pdf(post, p)):.6f}  cdf={float(cdf(post, p)):.6f}")

low, high = credible_interval(post, 0.95)
print(f"95% interval: ({low:.6f}, {high:.6f})")

# A beta with the same mean and variance is close but not identical
a, b = fit_beta_mom(post)
fitted = beta_distribution(a, b)
print("moment-matched beta:", a, b)
print("third moments:", float(raw_moment(post, 3)), float(raw_moment(fitted, 3)))
print("means agree:", float(mean(fitted)) == float(mean(post)))
