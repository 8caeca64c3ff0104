"""Complete branch-and-bound proof search for per-coordinate support properties.

For coordinate ``i`` two properties are checked:

* ``on``:  every signal with ``x_i != 0`` gets ``z_i > 0``,
* ``off``: every signal with ``x_i == 0`` gets ``z_i < 0``.

Both reduce to showing ``sense * z_i > 0`` on a root subdomain, with
``sense = +1`` for ``on`` and ``-1`` for ``off``.
"""
from __future__ import annotations

import heapq
import itertools
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .bounds import BoundComputer, PreactivationBounds
from .domain import (InfeasibleSubdomain, Subdomain, contains, is_feasible, pattern_count,
                     sample_in_subdomain, split, split_fixed_pattern)
from .model import Decoder, from_dict, measure, sign, to_dict

log = logging.getLogger(__name__)

PROVED = "proved"
COUNTEREXAMPLE = "counterexample"
TIMEOUT = "timeout"


@dataclass(frozen=True)
class PropertySpec:
    coordinate: int
    kind: str   # "on" or "off"

    def __post_init__(self):
        if self.kind not in ("on", "off"):
            raise ValueError(f"kind must be 'on' or 'off', got {self.kind!r}")

    @property
    def sense(self) -> float:
        return 1.0 if self.kind == "on" else -1.0


@dataclass
class Budget:
    time_s: float = 3600.0
    max_subdomains: int = 10_000_000


@dataclass
class VerificationOutcome:
    prop: PropertySpec
    status: str
    counterexample: np.ndarray | None = None
    stats: dict = field(default_factory=dict)

    @property
    def proved(self) -> bool:
        return self.status == PROVED


def root_domain(spec, prop: PropertySpec) -> Subdomain:
    if prop.kind == "on":
        return Subdomain(j=0, on={prop.coordinate})
    return Subdomain(j=0, off={prop.coordinate})


def _violates(z_i: float, prop: PropertySpec) -> bool:
    return z_i <= 0 if prop.kind == "on" else z_i >= 0


def check_counterexample(decoder: Decoder, prop: PropertySpec, x) -> bool:
    """True iff ``x`` is in the property's premise and its logit has the wrong sign."""
    x = np.asarray(x, dtype=float)
    if x.shape != (decoder.domain.n,) or not contains(decoder.domain, x):
        return False
    active = x[prop.coordinate] != 0
    if active != (prop.kind == "on"):
        return False
    return _violates(float(decoder.logits(x)[prop.coordinate]), prop)


def _satisfies_signs(decoder: Decoder, sub: Subdomain, x) -> bool:
    if not sub.signs:
        return True
    s = decoder.sensing
    vals = sign(s.a2 @ x - s.tau)
    return all(vals[j] == v for j, v in sub.signs)


def _sample(decoder: Decoder, sub: Subdomain, rng, tries: int = 20):
    """A point of ``sub``; sign decisions are met by rejection when possible."""
    x = sample_in_subdomain(decoder.domain, sub, rng)
    for _ in range(tries - 1):
        if _satisfies_signs(decoder, sub, x):
            break
        x = sample_in_subdomain(decoder.domain, sub, rng)
    return x


class _PropertySearch:
    def __init__(self, decoder: Decoder, prop: PropertySpec, budget: Budget, rng,
                 samples_per_domain: int = 1, beta_steps: int = 20, proof_log=None):
        self.decoder = decoder
        self.spec = decoder.domain
        self.prop = prop
        self.budget = budget
        self.rng = rng
        self.samples = samples_per_domain
        self.beta_steps = beta_steps
        self.bc = BoundComputer(decoder)
        self.row = np.zeros(self.spec.n)
        self.row[prop.coordinate] = prop.sense
        self.proof_log = proof_log
        self.ids = itertools.count()

    def bound(self, sub: Subdomain, parent: PreactivationBounds | None):
        """Certified lower bound of ``sense * z_i`` on ``sub`` and the layer bounds."""
        pre = self.bc.crown_bounds(sub, parent, include_output=False)
        t = self.bc.depth + 1
        if sub.signs:
            _, lb = self.bc.optimize_beta(sub, t, pre, self.row, steps=self.beta_steps)
        else:
            lb = float(self.bc.backward_bounds(sub, t, pre, rows=self.row).lb[0])
        return lb, pre

    def branch(self, sub: Subdomain, pre: PreactivationBounds) -> tuple[str, list]:
        if self.decoder.sensing.m2:
            lo, hi = pre.sign_pre
            decided = {j for j, _ in sub.signs}
            open_ = [j for j in range(len(lo)) if j not in decided and lo[j] < 0 <= hi[j]]
            if open_:
                j = max(open_, key=lambda k: hi[k] - lo[k])
                return "sign", [sub.with_sign(j, 1), sub.with_sign(j, -1)]
        if len(sub.on) < self.spec.l:
            kids = split(self.spec, sub)
            return "support", kids
        return "box", list(split_fixed_pattern(self.spec, sub))

    def _log(self, rec):
        if self.proof_log is not None:
            rec["property"] = [self.prop.coordinate, self.prop.kind]
            self.proof_log.write(json.dumps(rec) + "\n")

    def run(self) -> VerificationOutcome:
        start = time.perf_counter()
        stats = {"subdomains": 0, "bound_calls": 0, "max_queue": 0, "pruned": 0, "splits": 0}
        root = root_domain(self.spec, self.prop)
        coverage = Fraction(0)

        def done(status, x=None):
            stats["coverage"] = str(coverage)
            stats["wall_time"] = time.perf_counter() - start
            return VerificationOutcome(self.prop, status, x, stats)

        if not is_feasible(self.spec, root):
            coverage = Fraction(1)
            return done(PROVED)

        queue = []
        counter = itertools.count()

        def push(sub, parent_pre, weight, parent_id):
            nonlocal coverage
            node = next(self.ids)
            stats["bound_calls"] += 1
            try:
                lb, pre = self.bound(sub, parent_pre)
            except InfeasibleSubdomain:
                stats["pruned"] += 1
                coverage += weight
                self._log({"id": node, "parent": parent_id, "sub": sub.to_record(), "action": "pruned"})
                return
            heapq.heappush(queue, (lb, next(counter), node, parent_id, sub, pre, weight))
            stats["max_queue"] = max(stats["max_queue"], len(queue))

        push(root, None, Fraction(1), None)
        while queue:
            if time.perf_counter() - start > self.budget.time_s or stats["subdomains"] >= self.budget.max_subdomains:
                return done(TIMEOUT)
            lb, _, node, parent_id, sub, pre, weight = heapq.heappop(queue)
            stats["subdomains"] += 1
            rec = {"id": node, "parent": parent_id, "sub": sub.to_record(), "lb": lb}

            for _ in range(self.samples):
                x = _sample(self.decoder, sub, self.rng)
                if check_counterexample(self.decoder, self.prop, x):
                    self._log({**rec, "action": "counterexample", "x": x.tolist()})
                    return done(COUNTEREXAMPLE, x)

            if lb >= 0:
                coverage += weight
                self._log({**rec, "action": "proved"})
                continue

            how, kids = self.branch(sub, pre)
            stats["splits"] += 1
            self._log({**rec, "action": "split", "how": how})
            if how == "support":
                total = pattern_count(self.spec, sub)
                weights = [weight * Fraction(pattern_count(self.spec, k), total) for k in kids]
            else:
                weights = [weight / 2] * len(kids)
            for kid, w in zip(kids, weights):
                push(kid, pre, w, node)
        return done(PROVED)


def verify_property(decoder: Decoder, prop: PropertySpec, budget: Budget | None = None,
                    seed: int = 0, rng=None, proof_log=None, samples_per_domain: int = 1,
                    beta_steps: int = 20) -> VerificationOutcome:
    """Prove ``prop`` or return a checked counterexample (or time out)."""
    if rng is None:
        rng = np.random.default_rng([seed, prop.coordinate, 0 if prop.kind == "on" else 1])
    search = _PropertySearch(decoder, prop, budget or Budget(), rng, samples_per_domain,
                             beta_steps, proof_log)
    out = search.run()
    if out.status == COUNTEREXAMPLE and not check_counterexample(decoder, prop, out.counterexample):
        raise AssertionError("reported counterexample failed re-validation")
    return out


def all_properties(n: int) -> list[PropertySpec]:
    return [PropertySpec(i, kind) for kind in ("on", "off") for i in range(n)]


def _verify_one(args):
    doc, prop, budget, seed = args
    return verify_property(from_dict(doc), prop, budget, seed=seed)


def verify_network(decoder: Decoder, budget: Budget | None = None, workers: int = 1, seed: int = 0,
                   properties=None, proof_log=None) -> list[VerificationOutcome]:
    """Run every property; each has its own seeded generator, so results do not
    depend on the worker count."""
    props = list(properties) if properties is not None else all_properties(decoder.domain.n)
    budget = budget or Budget()
    if workers <= 1 or proof_log is not None:
        results = []
        for prop in props:
            out = verify_property(decoder, prop, budget, seed=seed, proof_log=proof_log)
            log.info("%s %d: %s (%d subdomains)", prop.kind, prop.coordinate, out.status,
                     out.stats["subdomains"])
            results.append(out)
        return results
    doc = to_dict(decoder)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_verify_one, [(doc, p, budget, seed) for p in props]))


def verdict(outcomes) -> str:
    if any(o.status == COUNTEREXAMPLE for o in outcomes):
        return "not-verified"
    if all(o.status == PROVED for o in outcomes):
        return "verified"
    return "incomplete"


def measure_witness(decoder: Decoder, x) -> dict:
    """Counterexample record for serialization."""
    x = np.asarray(x, dtype=float)
    return {"x": x.tolist(), "y": measure(decoder.sensing, x).tolist(),
            "logits": decoder.logits(x).tolist()}
