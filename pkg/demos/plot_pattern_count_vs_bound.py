"""
Bound quality versus number of sparsity patterns
================================================

The lower bound a subdomain certifies degrades with the number of support
patterns it still contains.  We draw random subdomains of one "on" property
of a trained decoder and rank-correlate the log pattern count with the
certified margin.
"""
import sys

import numpy as np
from scipy.stats import spearmanr

from sparseproof import Subdomain, load_model, pattern_count
from sparseproof.bounds import BoundComputer
from sparseproof.domain import is_feasible

decoder = load_model(sys.argv[1])   # e.g. a model written by `sparseproof train`
spec = decoder.domain
bc = BoundComputer(decoder)
rng = np.random.default_rng(0)
i = 0
row = np.eye(spec.n)[i]

counts, margins = [], []
while len(counts) < 2000:
    others = [c for c in range(spec.n) if c != i]
    on = {i} | set(rng.choice(others, size=int(rng.integers(0, spec.l)), replace=False).tolist())
    sub = Subdomain(j=int(rng.integers(0, spec.n + 1)), on=on)
    if not is_feasible(spec, sub):
        continue
    pre = bc.crown_bounds(sub, include_output=False)
    margins.append(bc.backward_bounds(sub, bc.depth + 1, pre, rows=row).lb[0])
    counts.append(pattern_count(spec, sub))

rho = spearmanr(np.log(counts), margins)[0]
print(f"Spearman rho(log pattern count, certified margin) = {rho:.3f}")
for c in sorted(set(counts))[::6]:
    sel = [m for k, m in zip(counts, margins) if k == c]
    print(f"{c:6d} patterns: median margin {np.median(sel):+.3f}")
