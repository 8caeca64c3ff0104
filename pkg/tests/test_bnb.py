import io
import json
from fractions import Fraction

import numpy as np
import pytest

from sparseproof.bnb import (COUNTEREXAMPLE, PROVED, TIMEOUT, Budget, PropertySpec, all_properties,
                             check_counterexample, root_domain, verdict, verify_network,
                             verify_property)
from sparseproof.domain import SparseDomainSpec, Subdomain, contains
from sparseproof.model import Decoder, DecoderParams, SensingSpec
from sparseproof.oracles import exhaustive_verify

from conftest import constant_decoder


def test_root_domains():
    spec = SparseDomainSpec(5, 2, 0.5)
    assert root_domain(spec, PropertySpec(3, "on")) == Subdomain(on={3})
    assert root_domain(spec, PropertySpec(3, "off")) == Subdomain(off={3})
    with pytest.raises(ValueError):
        PropertySpec(0, "maybe")


def test_all_properties_order():
    props = all_properties(3)
    assert [(p.coordinate, p.kind) for p in props] == [(0, "on"), (1, "on"), (2, "on"),
                                                      (0, "off"), (1, "off"), (2, "off")]


class TestCheckCounterexample:
    def test_zero_logit_violates_on_property(self):
        dec = constant_decoder(value=0.0)
        assert check_counterexample(dec, PropertySpec(0, "on"), [1, 1, 0, 0, 0])
        assert check_counterexample(dec, PropertySpec(2, "off"), [1, 1, 0, 0, 0])

    def test_premise_must_hold(self):
        dec = constant_decoder(value=-1.0)
        assert not check_counterexample(dec, PropertySpec(2, "on"), [1, 1, 0, 0, 0])
        assert not check_counterexample(dec, PropertySpec(0, "on"), [1, 1, 1, 0, 0])
        assert not check_counterexample(dec, PropertySpec(0, "on"), [1, 0.2, 0, 0, 0])
        assert check_counterexample(dec, PropertySpec(0, "on"), [1, 0.6, 0, 0, 0])


class TestConstantNetworks:
    def test_positive_constant(self):
        dec = constant_decoder(value=1.0)
        on = verify_property(dec, PropertySpec(0, "on"))
        off = verify_property(dec, PropertySpec(0, "off"))
        assert on.status == PROVED and on.stats["subdomains"] == 1
        assert off.status == COUNTEREXAMPLE
        assert check_counterexample(dec, off.prop, off.counterexample)
        assert off.counterexample[0] == 0

    def test_negative_constant(self):
        dec = constant_decoder(value=-1.0)
        assert verify_property(dec, PropertySpec(4, "on")).status == COUNTEREXAMPLE
        assert verify_property(dec, PropertySpec(4, "off")).status == PROVED


def test_off_property_vacuous_when_everything_is_on():
    spec = SparseDomainSpec(3, 3, 0.5)
    dec = Decoder(spec, SensingSpec(np.eye(3)[:1]),
                  DecoderParams([1.0], [], (np.zeros((3, 1)), -np.ones(3))))
    out = verify_property(dec, PropertySpec(1, "off"))
    assert out.status == PROVED and out.stats["subdomains"] == 0 and out.stats["coverage"] == "1"


def test_proves_simple_correct_network(trained_n10):
    for prop in (PropertySpec(0, "on"), PropertySpec(7, "off")):
        out = verify_property(trained_n10, prop)
        assert out.status == PROVED
        assert Fraction(out.stats["coverage"]) == 1
        assert exhaustive_verify(trained_n10, prop, grid_per_box=3)[0]


def test_corrupted_network_counterexample(trained_n10):
    broken = trained_n10.copy()
    w, b = broken.params.output
    w[4] *= -1
    b[4] *= -1
    out = verify_property(broken, PropertySpec(4, "on"))
    assert out.status == COUNTEREXAMPLE
    assert contains(broken.domain, out.counterexample)
    assert check_counterexample(broken, out.prop, out.counterexample)
    assert not exhaustive_verify(broken, out.prop)[0]


def test_timeout_on_hard_but_true_property(trained_n10):
    out = verify_property(trained_n10, PropertySpec(0, "off"), Budget(max_subdomains=1))
    assert out.status == TIMEOUT
    assert Fraction(out.stats["coverage"]) < 1


def test_deterministic_statistics(trained_n10):
    props = [PropertySpec(1, "on"), PropertySpec(2, "off")]
    a = verify_network(trained_n10, seed=5, properties=props)
    b = verify_network(trained_n10, seed=5, properties=props)
    strip = lambda o: {k: v for k, v in o.stats.items() if k != "wall_time"}
    assert [strip(o) for o in a] == [strip(o) for o in b]


def test_proof_log_records(trained_n10):
    buf = io.StringIO()
    out = verify_property(trained_n10, PropertySpec(3, "off"), proof_log=buf)
    recs = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert sum(r["action"] != "pruned" for r in recs) == out.stats["subdomains"]
    assert recs[0]["parent"] is None and recs[0]["sub"]["off"] == [3]
    assert {r["action"] for r in recs} <= {"split", "proved", "pruned"}


def test_binary_network_needs_sign_branches():
    # logit 0 = s - 2 x1 + 0.4 with s = sign(x1 - 0.75); negative on every
    # signal with x0 = 0, but only once the sign neuron is tied to x1
    spec = SparseDomainSpec(3, 1, 0.5)
    sensing = SensingSpec([[0.0, 1.0, 0.0]], a2=[[0.0, 1.0, 0.0]], tau=[0.75])
    wo = np.zeros((3, 2))
    wo[0] = [-2.0, 1.0]
    b = np.array([0.4, 0.0, 0.0])
    dec = Decoder(spec, sensing, DecoderParams([1.0], [], (wo, b)))
    assert exhaustive_verify(dec, PropertySpec(0, "off"), grid_per_box=40)[0]
    buf = io.StringIO()
    out = verify_property(dec, PropertySpec(0, "off"), proof_log=buf)
    assert out.status == PROVED and Fraction(out.stats["coverage"]) == 1
    hows = [json.loads(line).get("how") for line in buf.getvalue().splitlines()]
    assert hows[0] == "sign"
    # the "on" property fails: with support {0} the logit is -0.6
    on = verify_property(dec, PropertySpec(0, "on"))
    assert on.status == COUNTEREXAMPLE and check_counterexample(dec, on.prop, on.counterexample)


def test_verdict():
    class O:
        def __init__(self, s):
            self.status = s
    assert verdict([O(PROVED), O(PROVED)]) == "verified"
    assert verdict([O(PROVED), O(TIMEOUT)]) == "incomplete"
    assert verdict([O(TIMEOUT), O(COUNTEREXAMPLE)]) == "not-verified"
