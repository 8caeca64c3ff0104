import numpy as np
import pytest

from sparseproof.domain import SparseDomainSpec, Subdomain, is_feasible
from sparseproof.model import Decoder, DecoderParams, SensingSpec, gaussian_sensing, init_params
from sparseproof.training import PGDConfig, TrainConfig, train


def random_subdomain(rng, spec, allow_boxes=True, allow_off=True):
    """A random feasible subdomain of ``spec`` (rejection sampled)."""
    while True:
        j = int(rng.integers(0, spec.n + 1))
        k_on = int(rng.integers(0, spec.l + 1))
        on = set(rng.choice(spec.n, size=k_on, replace=False).tolist())
        off = set()
        if allow_off:
            rest = [i for i in range(spec.n) if i not in on]
            k_off = int(rng.integers(0, len(rest) + 1)) if rest else 0
            off = set(rng.choice(rest, size=min(k_off, 2), replace=False).tolist()) if rest else set()
        sub = Subdomain(j=j, on=on, off=off)
        if allow_boxes and len(on) == spec.l and rng.random() < 0.7:
            boxes = {}
            for i in on:
                a, b = np.sort(rng.uniform(spec.eps, 1.0, size=2))
                boxes[i] = (float(a), float(b))
            sub = sub.with_boxes(boxes)
        if is_feasible(spec, sub):
            return sub


def random_decoder(rng, n, m, l=2, eps=0.5, width=8, depth=2, m2=0, bias=0.5):
    spec = SparseDomainSpec(n, l, eps)
    sensing = gaussian_sensing(n, m, rng, m2=m2, tau=rng.uniform(-0.3, 0.3, size=m2) if m2 else 0.0)
    params = init_params(n, m + m2, rng, depth=depth, width=width)
    for w, b in params.hidden:
        b[:] = bias * rng.standard_normal(b.shape)
    params.output[1][:] = bias * rng.standard_normal(n)
    return Decoder(spec, sensing, params)


def constant_decoder(n=5, l=2, value=1.0, m=2):
    spec = SparseDomainSpec(n, l, 0.5)
    sensing = SensingSpec(np.eye(n)[:m])
    params = DecoderParams([1.0], [], (np.zeros((n, m)), np.full(n, value)))
    return Decoder(spec, sensing, params)


@pytest.fixture(scope="session")
def trained_n10():
    """A small decoder trained to be correct on n=10, m=7, l=2, eps=0.5."""
    rng = np.random.default_rng(0)
    spec = SparseDomainSpec(10, 2, 0.5)
    dec = Decoder(spec, gaussian_sensing(10, 7, rng, learn=True), init_params(10, 7, rng, width=32))
    cfg = TrainConfig(steps=4000, batch_size=64, lr=3e-3, lr_schedule="cosine", reg_weight=1e-3,
                      learn_sensing=True, pgd=PGDConfig(iterations=10, restarts=1), seed=0)
    return train(dec, cfg).decoder


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
