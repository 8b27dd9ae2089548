"""Show how LDS weights lift rare target values.

Run: python demos/lds_weights.py
"""

import numpy as np

from cellqos.evaluation import TargetBins
from cellqos.weighting import lds_weights

rng = np.random.default_rng(0)
# most cells are good; poor cells are rare
targets = np.clip(rng.beta(6, 1.5, 5000), 0, 1)
w = lds_weights(targets)
bins = TargetBins()
idx = bins.assign(targets)
print(f"{'bin':<12}{'cells':>7}{'mean weight':>14}{'weight share':>14}")
for j, label in enumerate(bins.labels()):
    m = idx == j
    print(f"{label:<12}{m.sum():>7}{w[m].mean():>14.2f}{w[m].sum() / w.sum():>14.1%}")
print("mean weight:", round(float(w.mean()), 12))
