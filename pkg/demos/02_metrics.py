"""
How the trajectory scores behave
================================

Navigation error and success only look at where a walk ends. nDTW looks
at the whole shape. This script nudges a reference path in a few ways and
prints the scores, then checks how well each score tracks a noisy rating.
"""

# %%
import numpy as np

from navjudge.geo import GeoPoint
from navjudge.metrics import correlate, ndtw
from navjudge.synthetic import offset_point

origin = GeoPoint(40.75, -73.99)
reference = [offset_point(origin, 0.0, 40.0 * k) for k in range(8)]  # 280 m due east

# %%
# Sliding the whole path sideways costs nDTW smoothly. A walk that ends in
# the right place by a detour still loses fidelity.
for shift in (0, 5, 15, 30, 60):
    walked = [offset_point(p, shift, 0.0) for p in reference]
    print(f"shifted {shift:>2} m north: nDTW = {ndtw(walked, reference):.3f}")

detour = reference[:3] + [offset_point(p, 80.0, 0.0) for p in reference[3:6]] + reference[6:]
print(f"block-long detour that rejoins: nDTW = {ndtw(detour, reference):.3f}")
print(f"stopping halfway: nDTW = {ndtw(reference[:4], reference):.3f}")

# %%
# Correlation with ratings. Here the "rating" is nDTW plus noise, so the
# relationship is planted; Pearson and Spearman should both pick it up and
# the permutation p-value should agree with the t-test.
rng = np.random.default_rng(3)
scores, ratings = [], []
for _ in range(100):
    shift = rng.uniform(0, 80)
    walked = [offset_point(p, shift, rng.normal(0, 5)) for p in reference]
    s = ndtw(walked, reference)
    scores.append(s)
    ratings.append(1 + 4 * s + rng.normal(0, 0.8))

t = correlate(scores, ratings)
perm = correlate(scores, ratings, method="permutation", permutations=5000, seed=0)
print(f"Pearson r = {t.pearson_r:.3f} (t-test p = {t.pearson_p:.2g}, permutation p = {perm.pearson_p:.2g})")
print(f"Spearman rho = {t.spearman_rho:.3f}")
