"""
What a failed proof looks like
==============================

Flip the sign of one output row of a verified decoder.  The verifier now
returns a concrete signal on which the decoder is wrong, and the witness is
re-checked by plain evaluation and by corner enumeration.
"""
import sys

from sparseproof import PropertySpec, check_counterexample, load_model, verify_property
from sparseproof.oracles import exhaustive_verify

decoder = load_model(sys.argv[1]).copy()
w, b = decoder.params.output
w[0] *= -1
b[0] *= -1

prop = PropertySpec(0, "on")
out = verify_property(decoder, prop)
print(out.status, "after", out.stats["subdomains"], "subdomains")
print("witness", out.counterexample.round(3))
print("logit", decoder.logits(out.counterexample)[0])
print("re-check:", check_counterexample(decoder, prop, out.counterexample))
print("corner enumeration passes:", exhaustive_verify(decoder, prop)[0])
