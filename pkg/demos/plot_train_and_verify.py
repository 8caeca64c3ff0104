"""
Train a decoder and prove it correct
====================================

A ten-dimensional signal with two nonzeros is measured by seven learned
linear measurements.  We train the decoder against a PGD adversary, then ask
the branch-and-bound verifier to prove all 20 support properties:
"if x_i != 0 the i-th logit is positive" and "if x_i = 0 it is negative".
Takes about a minute on a laptop.
"""
from pathlib import Path

import numpy as np

from sparseproof import verify_network
from sparseproof.config import load_config
from sparseproof.training import fuzz, train

cfg = load_config(Path(__file__).parent.parent / "configs" / "desk_n10.json")
result = train(cfg.initial_decoder(), cfg.training)
decoder = result.decoder
for rec in result.history[-3:]:
    print(rec)

# empirical check first: nothing is proved by this, but it is cheap
bad = fuzz(decoder, 100_000, np.random.default_rng(1))
print("misdecoded among 100k random signals:", len(bad))

outcomes = verify_network(decoder)
for o in outcomes:
    print(f"{o.prop.kind:>3} {o.prop.coordinate}: {o.status:>14}  {o.stats['subdomains']:5d} subdomains")
