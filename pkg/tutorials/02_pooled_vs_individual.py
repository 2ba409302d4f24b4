"""Same number of tests spent individually or in pools of six."""
from poolprev import Design, Observation, PriorBeta, build_posterior, credible_interval

prior = PriorBeta()

# 200 tests at a prevalence near 5%: 10 positive individuals, or about
# 200 * (1 - 0.95**6) = 53 positive pools
individual = build_posterior(prior, Design(m=200, n=0, q=1), Observation(10, 0))
pooled = build_posterior(prior, Design(m=0, n=200, q=6), Observation(0, 53))

for name, post in (("individual", individual), ("pools of 6", pooled)):
    low, high = credible_interval(post)
    print(f"{name:>11}: ({low:.4f}, {high:.4f})  width {high - low:.4f}")

# At high prevalence nearly every pool is positive and pooling stops paying off
individual = build_posterior(prior, Design(200, 0, 1), Observation(100, 0))
pooled = build_posterior(prior, Design(0, 200, 6), Observation(0, 197))
for name, post in (("individual", individual), ("pools of 6", pooled)):
    low, high = credible_interval(post)
    print(f"{name:>11}: ({low:.4f}, {high:.4f})  width {high - low:.4f}")
