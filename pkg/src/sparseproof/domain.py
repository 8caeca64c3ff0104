"""Sparse signal sets, branch-and-bound subdomains and exact linear concretization.

A signal belongs to the domain when exactly ``l`` of its ``n`` coordinates lie
in ``[eps, 1]`` and every other coordinate is exactly zero.  Coordinates are
0-based throughout the package.

A :class:`Subdomain` narrows that set.  With decision frontier ``j``:

* coordinates in ``on`` are forced active, inside their box (``[eps, 1]``
  unless a box is attached),
* coordinates ``< j`` that are not in ``on`` are forced to zero,
* coordinates in ``off`` are forced to zero wherever they sit,
* every other coordinate is *free*: either zero or in ``[eps, 1]``.

The concretizer minimizes an affine function over such a region exactly, by
paying the mandatory contribution of the ``on`` coordinates and then picking
the cheapest free coordinates to complete the support.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

__all__ = [
    "DimensionError",
    "InfeasibleSubdomain",
    "SparseDomainSpec",
    "Subdomain",
    "AffineObjective",
    "contains",
    "support",
    "is_feasible",
    "free_coordinates",
    "coordinate_bounds",
    "concretize_min",
    "concretize_max",
    "concretize_rows",
    "concretize_argmin",
    "project",
    "project_batch",
    "sample_corner",
    "sample_corners",
    "sample_in_subdomain",
    "split",
    "split_fixed_pattern",
    "pattern_count",
]


class DimensionError(ValueError):
    """Raised when a vector does not have the signal dimension."""


class InfeasibleSubdomain(ValueError):
    """Raised when a subdomain contains no signal of the domain."""


@dataclass(frozen=True)
class SparseDomainSpec:
    n: int
    l: int
    eps: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if not 1 <= self.l <= self.n:
            raise ValueError(f"need 1 <= l <= n, got l={self.l}, n={self.n}")
        if not 0.0 < self.eps <= 1.0:
            raise ValueError(f"eps must lie in (0, 1], got {self.eps}")

    @property
    def upper(self) -> float:
        return 1.0


@dataclass(frozen=True)
class Subdomain:
    j: int = 0
    on: frozenset = frozenset()
    off: frozenset = frozenset()
    # (coordinate, lo, hi) triples, sorted by coordinate; only once |on| == l
    boxes: tuple = ()
    # (sign neuron index, +1 / -1) pairs, sorted by index
    signs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "on", frozenset(int(i) for i in self.on))
        object.__setattr__(self, "off", frozenset(int(i) for i in self.off))
        if self.on & self.off:
            raise ValueError(f"coordinates both on and off: {sorted(self.on & self.off)}")

    @classmethod
    def root(cls) -> "Subdomain":
        return cls()

    def box(self, i: int, eps: float) -> tuple[float, float]:
        for k, lo, hi in self.boxes:
            if k == i:
                return lo, hi
        return eps, 1.0

    def box_dict(self) -> dict[int, tuple[float, float]]:
        return {k: (lo, hi) for k, lo, hi in self.boxes}

    def sign_dict(self) -> dict[int, int]:
        return dict(self.signs)

    def with_boxes(self, boxes: Mapping[int, tuple[float, float]]) -> "Subdomain":
        return replace(self, boxes=tuple(sorted((int(k), float(lo), float(hi))
                                                for k, (lo, hi) in boxes.items())))

    def with_sign(self, index: int, sign: int) -> "Subdomain":
        if sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {sign}")
        signs = dict(self.signs)
        signs[int(index)] = int(sign)
        return replace(self, signs=tuple(sorted(signs.items())))

    def to_record(self) -> dict:
        return {
            "j": self.j,
            "on": sorted(self.on),
            "off": sorted(self.off),
            "boxes": [list(b) for b in self.boxes],
            "signs": [list(s) for s in self.signs],
        }


@dataclass(frozen=True, eq=False)
class AffineObjective:
    c: np.ndarray
    c0: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 1:
            raise ValueError("objective coefficients must be a vector")
        if not (np.all(np.isfinite(c)) and math.isfinite(self.c0)):
            raise ValueError("objective must have finite entries")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "c0", float(self.c0))

    def __neg__(self) -> "AffineObjective":
        return AffineObjective(-self.c, -self.c0)

    def __call__(self, x) -> float:
        return float(self.c @ np.asarray(x, dtype=float) + self.c0)


def _check_dim(spec: SparseDomainSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.n:
        raise DimensionError(f"expected length {spec.n}, got {x.shape[-1]}")
    return x


def contains(spec: SparseDomainSpec, x) -> bool:
    x = _check_dim(spec, x)
    nz = x != 0
    if int(nz.sum()) != spec.l:
        return False
    vals = x[nz]
    return bool(np.all((vals >= spec.eps) & (vals <= 1.0)))


def support(x) -> frozenset:
    return frozenset(int(i) for i in np.flatnonzero(np.asarray(x) != 0))


def free_coordinates(spec: SparseDomainSpec, sub: Subdomain) -> list[int]:
    return [i for i in range(sub.j, spec.n) if i not in sub.on and i not in sub.off]


def _budget(spec: SparseDomainSpec, sub: Subdomain) -> int:
    return spec.l - len(sub.on)


def is_feasible(spec: SparseDomainSpec, sub: Subdomain) -> bool:
    if any(not 0 <= i < spec.n for i in sub.on | sub.off):
        return False
    budget = _budget(spec, sub)
    if budget < 0 or budget > len(free_coordinates(spec, sub)):
        return False
    for _, lo, hi in sub.boxes:
        if lo > hi or lo < spec.eps or hi > 1.0:
            return False
    return True


def _require_feasible(spec: SparseDomainSpec, sub: Subdomain):
    if not is_feasible(spec, sub):
        raise InfeasibleSubdomain(f"empty subdomain {sub.to_record()} for {spec}")


def _on_arrays(spec: SparseDomainSpec, sub: Subdomain):
    on = np.array(sorted(sub.on), dtype=int)
    boxes = sub.box_dict()
    lo = np.array([boxes.get(i, (spec.eps, 1.0))[0] for i in on], dtype=float)
    hi = np.array([boxes.get(i, (spec.eps, 1.0))[1] for i in on], dtype=float)
    return on, lo, hi


def coordinate_bounds(spec: SparseDomainSpec, sub: Subdomain) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate interval hull of the subdomain."""
    _require_feasible(spec, sub)
    lo = np.zeros(spec.n)
    hi = np.zeros(spec.n)
    on, on_lo, on_hi = _on_arrays(spec, sub)
    lo[on] = on_lo
    hi[on] = on_hi
    if _budget(spec, sub) > 0:
        hi[free_coordinates(spec, sub)] = 1.0
    return lo, hi


def _compensated_sum(terms: np.ndarray) -> np.ndarray:
    """Neumaier summation along the last axis, vectorized over leading axes."""
    total = np.zeros(terms.shape[:-1])
    comp = np.zeros(terms.shape[:-1])
    for k in range(terms.shape[-1]):
        col = terms[..., k]
        t = total + col
        comp += np.where(np.abs(total) >= np.abs(col), (total - t) + col, (col - t) + total)
        total = t
    return total + comp


def concretize_rows(spec: SparseDomainSpec, sub: Subdomain, coeffs, offsets=None) -> np.ndarray:
    """Exact minimum of each row ``coeffs[k] @ x + offsets[k]`` over the subdomain."""
    _require_feasible(spec, sub)
    C = np.atleast_2d(np.asarray(coeffs, dtype=float))
    if C.shape[1] != spec.n:
        raise DimensionError(f"expected {spec.n} columns, got {C.shape[1]}")
    rows = C.shape[0]
    offsets = np.zeros(rows) if offsets is None else np.broadcast_to(
        np.asarray(offsets, dtype=float), (rows,))

    on, lo, hi = _on_arrays(spec, sub)
    c_on = C[:, on]
    mandatory = np.maximum(c_on, 0.0) * lo + np.minimum(c_on, 0.0) * hi

    budget = _budget(spec, sub)
    free = free_coordinates(spec, sub)
    if budget == 0:
        chosen = np.zeros((rows, 0))
    else:
        c_free = C[:, free]
        alpha = spec.eps * np.maximum(c_free, 0.0) + np.minimum(c_free, 0.0)
        if budget == len(free):
            chosen = alpha
        else:
            chosen = np.partition(alpha, budget - 1, axis=1)[:, :budget]

    terms = np.concatenate([offsets[:, None], mandatory, chosen], axis=1)
    return _compensated_sum(terms)


def concretize_argmin(spec: SparseDomainSpec, sub: Subdomain, c) -> np.ndarray:
    """A minimizer of ``c @ x`` over the subdomain (ties to the lowest index)."""
    _require_feasible(spec, sub)
    c = _check_dim(spec, c)
    x = np.zeros(spec.n)
    on, lo, hi = _on_arrays(spec, sub)
    x[on] = np.where(c[on] > 0, lo, hi)
    budget = _budget(spec, sub)
    if budget:
        free = np.array(free_coordinates(spec, sub), dtype=int)
        alpha = spec.eps * np.maximum(c[free], 0.0) + np.minimum(c[free], 0.0)
        picked = free[np.argsort(alpha, kind="stable")[:budget]]
        x[picked] = np.where(c[picked] > 0, spec.eps, 1.0)
    return x


def concretize_min(spec: SparseDomainSpec, sub: Subdomain, obj: AffineObjective) -> float:
    _check_dim(spec, obj.c)
    return float(concretize_rows(spec, sub, obj.c[None, :], [obj.c0])[0])


def concretize_max(spec: SparseDomainSpec, sub: Subdomain, obj: AffineObjective) -> float:
    return -concretize_min(spec, sub, -obj)


def project_batch(spec: SparseDomainSpec, X) -> np.ndarray:
    X = np.atleast_2d(_check_dim(spec, X))
    clipped = np.clip(X, spec.eps, 1.0)
    keep = np.argsort(-clipped, axis=1, kind="stable")[:, :spec.l]
    out = np.zeros_like(clipped)
    rows = np.arange(X.shape[0])[:, None]
    out[rows, keep] = clipped[rows, keep]
    return out


def project(spec: SparseDomainSpec, x_raw) -> np.ndarray:
    """Clip to ``[eps, 1]`` then keep the ``l`` largest entries."""
    x_raw = _check_dim(spec, x_raw)
    if x_raw.ndim != 1:
        raise DimensionError("project expects a single vector; use project_batch")
    return project_batch(spec, x_raw)[0]


def sample_corners(spec: SparseDomainSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    keys = rng.random((size, spec.n))
    idx = np.argsort(keys, axis=1)[:, :spec.l]
    vals = np.where(rng.random((size, spec.l)) < 0.5, spec.eps, 1.0)
    X = np.zeros((size, spec.n))
    X[np.arange(size)[:, None], idx] = vals
    return X


def sample_corner(spec: SparseDomainSpec, rng: np.random.Generator) -> np.ndarray:
    return sample_corners(spec, rng, 1)[0]


def sample_in_subdomain(spec: SparseDomainSpec, sub: Subdomain, rng: np.random.Generator) -> np.ndarray:
    _require_feasible(spec, sub)
    x = np.zeros(spec.n)
    on, lo, hi = _on_arrays(spec, sub)
    x[on] = rng.uniform(lo, hi)
    budget = _budget(spec, sub)
    if budget:
        free = np.array(free_coordinates(spec, sub), dtype=int)
        picked = rng.choice(free, size=budget, replace=False)
        x[picked] = rng.uniform(spec.eps, 1.0, size=budget)
    return x


def split(spec: SparseDomainSpec, sub: Subdomain) -> list[Subdomain]:
    """Branch on which free coordinate is the next one in the support."""
    if len(sub.on) >= spec.l:
        raise ValueError("support-extension split needs |on| < l; use split_fixed_pattern")
    children = []
    for k in free_coordinates(spec, sub):
        child = Subdomain(j=k + 1, on=sub.on | {k}, off=sub.off, signs=sub.signs)
        if is_feasible(spec, child):
            children.append(child)
    return children


def split_fixed_pattern(spec: SparseDomainSpec, sub: Subdomain) -> tuple[Subdomain, Subdomain]:
    """Halve the widest box of a fully fixed sparsity pattern."""
    if len(sub.on) != spec.l:
        raise ValueError("box split needs a fully fixed pattern (|on| == l)")
    boxes = {i: sub.box(i, spec.eps) for i in sorted(sub.on)}
    widest = max(sorted(boxes), key=lambda i: boxes[i][1] - boxes[i][0])
    lo, hi = boxes[widest]
    mid = 0.5 * (lo + hi)
    left = dict(boxes)
    right = dict(boxes)
    left[widest] = (lo, mid)
    right[widest] = (mid, hi)
    return sub.with_boxes(left), sub.with_boxes(right)


def pattern_count(spec: SparseDomainSpec, sub: Subdomain) -> int:
    if not is_feasible(spec, sub):
        return 0
    return math.comb(len(free_coordinates(spec, sub)), _budget(spec, sub))
