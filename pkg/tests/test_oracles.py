import itertools
import math

import numpy as np
import pytest

from sparseproof.bnb import PropertySpec
from sparseproof.domain import AffineObjective, SparseDomainSpec, Subdomain, sample_in_subdomain
from sparseproof.model import SensingSpec, gaussian_sensing, measure
from sparseproof.oracles import (CombinatorialLimitError, InconsistentMeasurement, brute_force_min,
                                 exact_decode, exhaustive_verify, supports)

from conftest import constant_decoder


def test_supports_lexicographic_and_complete():
    spec = SparseDomainSpec(5, 2, 0.5)
    s = list(supports(spec))
    assert s == sorted(s) and len(s) == len(set(s)) == 10


def test_brute_force_trivial_cases():
    spec = SparseDomainSpec(4, 2, 0.5)
    assert brute_force_min(spec, Subdomain(), AffineObjective(np.zeros(4), 2.5)) == 2.5
    sub = Subdomain(on={0, 3}).with_boxes({0: (0.6, 0.9), 3: (0.5, 0.7)})
    assert brute_force_min(spec, sub, AffineObjective([1.0, 5.0, 5.0, -2.0])) == pytest.approx(0.6 - 1.4)


def test_brute_force_limit():
    with pytest.raises(CombinatorialLimitError):
        brute_force_min(SparseDomainSpec(60, 10, 0.5), Subdomain(), AffineObjective(np.zeros(60)))


def test_exact_decode_recovers_support():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(5, 9))
        l = int(rng.integers(1, 3))
        spec = SparseDomainSpec(n, l, 0.5)
        s = gaussian_sensing(n, min(2 * l + 1, n - 1), rng)
        x = sample_in_subdomain(spec, Subdomain(), rng)
        res = exact_decode(s, spec, measure(s, x))
        assert res.unique and res.support == frozenset(np.flatnonzero(x).tolist())


def test_exact_decode_ambiguous_and_inconsistent():
    spec = SparseDomainSpec(4, 1, 0.5)
    res = exact_decode(np.zeros((0, 4)), spec, np.zeros(0))
    assert len(res.candidates) == 4 and not res.unique
    with pytest.raises(ValueError):
        res.support
    with pytest.raises(InconsistentMeasurement):
        exact_decode(np.eye(4)[:2], spec, np.array([5.0, 5.0]))


def test_exhaustive_counts_corners():
    # grid 1 means 2^l corners per support; a decoder counting its calls checks it
    dec = constant_decoder(n=5, l=2, value=1.0)
    calls = []
    orig = dec.logits
    dec.logits = lambda X: calls.append(len(X)) or orig(X)
    ok, _ = exhaustive_verify(dec, PropertySpec(0, "on"))
    assert ok
    assert len(calls) == math.comb(4, 1) and all(c == 4 for c in calls)


def test_exhaustive_finds_violation_at_corner():
    dec = constant_decoder(n=5, l=2, value=1.0)
    ok, x = exhaustive_verify(dec, PropertySpec(1, "off"))
    assert not ok and x[1] == 0 and set(x[x != 0]) <= {0.5, 1.0}


def test_exhaustive_grid_includes_endpoints():
    spec = SparseDomainSpec(3, 1, 0.5)
    # logit 0 = x0 - 0.99 is negative everywhere but at x0 = 1
    from sparseproof.model import Decoder, DecoderParams
    wo = np.zeros((3, 1))
    wo[0, 0] = -1.0
    dec = Decoder(spec, SensingSpec([[1.0, 0.0, 0.0]]),
                  DecoderParams([1.0], [], (-wo, np.array([-0.99, 0.0, 0.0]))))
    for g in (1, 3, 7):
        ok, x = exhaustive_verify(dec, PropertySpec(0, "on"), grid_per_box=g)
        assert not ok and x[0] == 0.5
    with pytest.raises(ValueError):
        exhaustive_verify(dec, PropertySpec(0, "on"), grid_per_box=0)
