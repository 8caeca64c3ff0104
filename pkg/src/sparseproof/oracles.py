"""Brute-force oracles for tiny problems.

These enumerate sparsity patterns explicitly and share no code path with the
concretizer or the bound propagation, so they can be used to check them.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .domain import AffineObjective, SparseDomainSpec, Subdomain, is_feasible

ENUMERATION_LIMIT = 10**6
EXHAUSTIVE_LIMIT = 10**7


class CombinatorialLimitError(ValueError):
    pass


class InconsistentMeasurement(ValueError):
    """No support reproduces the measurements."""


def supports(spec: SparseDomainSpec):
    """Every support of size ``l``, in lexicographic order."""
    return itertools.combinations(range(spec.n), spec.l)


def _compatible(spec: SparseDomainSpec, sub: Subdomain, supp) -> bool:
    s = set(supp)
    if not sub.on <= s or s & sub.off:
        return False
    return all(i in sub.on for i in s if i < sub.j)


def brute_force_min(spec: SparseDomainSpec, sub: Subdomain, obj: AffineObjective) -> float:
    """Minimum of an affine objective by enumerating compatible supports.

    The objective is separable, so on a fixed support each active coordinate
    independently sits at one endpoint of its box.
    """
    if math.comb(spec.n, spec.l) > ENUMERATION_LIMIT:
        raise CombinatorialLimitError(f"C({spec.n}, {spec.l}) supports is too many to enumerate")
    best = math.inf
    for supp in supports(spec):
        if not _compatible(spec, sub, supp):
            continue
        total = obj.c0
        for i in supp:
            lo, hi = sub.box(i, spec.eps)
            total += min(lo * obj.c[i], hi * obj.c[i])
        best = min(best, total)
    if best == math.inf and is_feasible(spec, sub):
        raise AssertionError("feasible subdomain without a compatible support")
    return best


def brute_force_max(spec: SparseDomainSpec, sub: Subdomain, obj: AffineObjective) -> float:
    return -brute_force_min(spec, sub, -obj)


@dataclass
class ExactDecodeResult:
    candidates: list   # accepting supports, each a frozenset

    @property
    def unique(self) -> bool:
        return len(self.candidates) == 1

    @property
    def support(self) -> frozenset:
        if not self.unique:
            raise ValueError(f"ambiguous measurements: {len(self.candidates)} supports fit")
        return self.candidates[0]


def _solve_normal(a, y):
    """Least squares through the normal equations; LU with partial pivoting."""
    import scipy.linalg
    lu, piv = scipy.linalg.lu_factor(a.T @ a)
    return scipy.linalg.lu_solve((lu, piv), a.T @ y)


def exact_decode(a1, spec: SparseDomainSpec, y, tol: float = 1e-8) -> ExactDecodeResult:
    """Supports that reproduce linear measurements ``y`` with values in ``[eps, 1]``."""
    from scipy.optimize import lsq_linear

    a1 = np.asarray(getattr(a1, "a1", a1), dtype=float).reshape(-1, spec.n)
    y = np.asarray(y, dtype=float)[:a1.shape[0]]
    if math.comb(spec.n, spec.l) > ENUMERATION_LIMIT:
        raise CombinatorialLimitError("too many supports")
    found = []
    for supp in supports(spec):
        a = a1[:, supp]
        if a.shape[0] and np.linalg.matrix_rank(a) == spec.l:
            xs = _solve_normal(a, y)
            in_box = np.all((xs >= spec.eps - tol) & (xs <= 1.0 + tol))
        else:
            # underdetermined: look for any solution inside the box
            xs = lsq_linear(a, y, bounds=(spec.eps, 1.0)).x if a.shape[0] else np.full(spec.l, spec.eps)
            in_box = True
        resid = float(np.max(np.abs(a @ xs - y))) if a.shape[0] else 0.0
        if in_box and resid <= tol:
            found.append(frozenset(supp))
    if not found:
        raise InconsistentMeasurement("no support is consistent with the measurements")
    return ExactDecodeResult(found)


def exhaustive_verify(decoder, prop, grid_per_box: int = 1):
    """Check a property on every compatible support times a value grid.

    ``grid_per_box = g`` uses ``g + 1`` evenly spaced values from ``eps`` to
    1 per active coordinate, so ``g = 1`` checks exactly the corners.  Passing
    is necessary for the property to hold, not sufficient.

    Returns ``(passed, witness)``.
    """
    spec = decoder.domain
    if grid_per_box < 1:
        raise ValueError("grid_per_box must be >= 1")
    values = np.linspace(spec.eps, 1.0, grid_per_box + 1)
    if math.comb(spec.n, spec.l) * len(values) ** spec.l > EXHAUSTIVE_LIMIT:
        raise CombinatorialLimitError("support x grid enumeration is too large")
    i = prop.coordinate
    grid = np.array(list(itertools.product(values, repeat=spec.l)))
    for supp in supports(spec):
        if (i in supp) != (prop.kind == "on"):
            continue
        X = np.zeros((len(grid), spec.n))
        X[:, list(supp)] = grid
        z = decoder.logits(X)[:, i]
        bad = z <= 0 if prop.kind == "on" else z >= 0
        if bad.any():
            return False, X[int(np.argmax(bad))]
    return True, None
