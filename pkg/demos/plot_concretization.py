"""
Minimizing a linear function over sparse signals
================================================

The verifier rests on one primitive: the exact minimum of ``c @ x + c0``
over signals with exactly ``l`` nonzeros, each in ``[eps, 1]``.  Every
coordinate contributes ``eps * max(c_i, 0) + min(c_i, 0)`` if it is switched
on, so the minimum picks the ``l`` smallest contributions.  Here we compare it
with brute-force enumeration of all supports.
"""
import numpy as np

from sparseproof import AffineObjective, SparseDomainSpec, Subdomain, concretize_min, pattern_count
from sparseproof.oracles import brute_force_min

spec = SparseDomainSpec(n=8, l=3, eps=0.5)
rng = np.random.default_rng(0)
obj = AffineObjective(rng.standard_normal(8), 0.1)

# the whole domain
print("root       ", concretize_min(spec, Subdomain(), obj), brute_force_min(spec, Subdomain(), obj))

# coordinates 0..3 decided, with 1 switched on: only 4..7 remain free
sub = Subdomain(j=4, on={1})
print("D(4, {1})  ", concretize_min(spec, sub, obj), brute_force_min(spec, sub, obj))
print("patterns   ", pattern_count(spec, Subdomain()), "->", pattern_count(spec, sub))

# fixing all l active coordinates turns the problem into a box
sub = Subdomain(on={1, 4, 6}).with_boxes({4: (0.5, 0.6)})
print("fixed      ", concretize_min(spec, sub, obj), brute_force_min(spec, sub, obj))
