"""Interval and backward linear bounds for the decoder over a sparse subdomain.

All bounds are computed over the *signal* ``x``.  The linear measurements are
folded into the first layer, so every backward pass ends in an affine function
of ``x`` that is minimized exactly by :func:`~sparseproof.domain.concretize_rows`.

Binarized measurements enter the network through ``sign(A2 x - tau)``.  On a
subdomain a sign neuron is either constant (decided by a branch, or stable
because its pre-activation does not straddle zero) or unknown, in which case
its output is only known to lie in ``[-1, 1]``.  Decided branches add the
constraint ``sigma * (a x - tau) >= 0``, which enters the lower bound through
a nonnegative multiplier ``beta``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import InfeasibleSubdomain, Subdomain, concretize_argmin, concretize_rows
from .model import Decoder

__all__ = [
    "PreactivationBounds",
    "LinearBounds",
    "BoundComputer",
    "interval_bounds",
    "backward_bounds",
    "optimize_beta",
    "refine_with_parent",
]


@dataclass
class PreactivationBounds:
    """Bounds on every hidden pre-activation, the logits and the sign neurons."""
    hidden: list            # [(lb, ub)] for each hidden layer
    output: tuple | None    # (lb, ub) on the logits
    sign_pre: tuple         # (lb, ub) on A2 x - tau
    sign_val: tuple         # (lo, hi) on the sign outputs, in {-1, 1}

    def layer(self, t: int) -> tuple:
        """Bounds on layer ``t`` (1-based hidden layers, ``depth + 1`` for logits)."""
        if t == len(self.hidden) + 1:
            return self.output
        return self.hidden[t - 1]


@dataclass
class LinearBounds:
    """``lower_w @ x + lower_b <= v(x) <= upper_w @ x + upper_b`` on the subdomain."""
    lower_w: np.ndarray
    lower_b: np.ndarray
    upper_w: np.ndarray
    upper_b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    layer: int


def _relu_relaxation(lb, ub):
    """Slopes and intercepts of the lower and upper linear envelopes of relu."""
    active = lb >= 0
    unstable = (lb < 0) & (ub > 0)
    denom = np.where(unstable, ub - lb, 1.0)
    up_slope = np.where(active, 1.0, np.where(unstable, ub / denom, 0.0))
    up_icpt = np.where(unstable, -lb * ub / denom, 0.0)
    low_slope = np.where(active, 1.0, np.where(unstable & (ub >= -lb), 1.0, 0.0))
    return low_slope, up_slope, up_icpt


def _interval_affine(w, b, lo, hi):
    mid = 0.5 * (lo + hi)
    rad = 0.5 * (hi - lo)
    c = w @ mid + b
    r = np.abs(w) @ rad
    return c - r, c + r


def _sign_values(sub: Subdomain, pre_lb, pre_ub):
    lo = np.where(pre_lb >= 0, 1.0, -1.0)
    hi = np.where(pre_ub >= 0, 1.0, -1.0)
    for j, s in sub.signs:
        if (s > 0 and pre_ub[j] < 0) or (s < 0 and pre_lb[j] >= 0):
            raise InfeasibleSubdomain(f"sign decision {j}:{s:+d} contradicts its pre-activation range")
        lo[j] = hi[j] = float(s)
    return lo, hi


class BoundComputer:
    """Bound propagation for one decoder; precomputes the input wiring."""

    def __init__(self, decoder: Decoder):
        self.decoder = decoder
        self.spec = decoder.domain
        s = decoder.sensing
        p = decoder.params
        K = len(p.scales)
        self.m1, self.m2, self.K = s.m1, s.m2, K
        self.a2, self.tau = s.a2, s.tau
        # h0 = lin @ x + gate @ sign(A2 x - tau)
        lin = np.zeros((s.m * K, s.n))
        lin[:s.m1 * K] = (s.a1[:, None, :] * p.scales[None, :, None]).reshape(-1, s.n)
        gate = np.zeros((s.m * K, s.m2))
        for j in range(s.m2):
            gate[(s.m1 + j) * K:(s.m1 + j + 1) * K, j] = p.scales
        self.lin, self.gate = lin, gate
        self.mk = s.m * K
        self.layers = list(p.hidden) + [p.output]
        self.depth = p.depth
        self.calls = 0

    # -- inputs -----------------------------------------------------------
    def _sign_pre(self, sub: Subdomain):
        if not self.m2:
            return np.zeros(0), np.zeros(0)
        lb = concretize_rows(self.spec, sub, self.a2, -self.tau)
        ub = -concretize_rows(self.spec, sub, -self.a2, self.tau)
        return lb, ub

    def _h0_interval(self, sub: Subdomain, sign_lo, sign_hi):
        lo = concretize_rows(self.spec, sub, self.lin)
        hi = -concretize_rows(self.spec, sub, -self.lin)
        glo, ghi = _interval_affine(self.gate, np.zeros(self.mk), sign_lo, sign_hi)
        return lo + glo, hi + ghi

    def _split_weight(self, t: int):
        """Weights of layer ``t`` reading the previous layer and reading h0."""
        w, b = self.layers[t - 1]
        if t == self.depth + 1:
            return w, None, b
        return w[:, :-self.mk], w[:, -self.mk:], b

    # -- interval propagation -----------------------------------------------
    def interval_bounds(self, sub: Subdomain) -> PreactivationBounds:
        sign_pre = self._sign_pre(sub)
        sign_val = _sign_values(sub, *sign_pre)
        h_lo, h_hi = self._h0_interval(sub, *sign_val)
        a_lo, a_hi = h_lo, h_hi
        hidden = []
        for w, b in self.layers[:-1]:
            lb, ub = _interval_affine(w, b, np.concatenate([a_lo, h_lo]), np.concatenate([a_hi, h_hi]))
            hidden.append((lb, ub))
            a_lo, a_hi = np.maximum(lb, 0.0), np.maximum(ub, 0.0)
        w, b = self.layers[-1]
        output = _interval_affine(w, b, a_lo, a_hi)
        return PreactivationBounds(hidden, output, sign_pre, sign_val)

    # -- backward substitution ----------------------------------------------
    def _backward_lower(self, rows, t, pre: PreactivationBounds):
        """Affine lower bound of ``rows @ layer_t`` as (coef on x, coef on signs, const)."""
        A = np.asarray(rows, dtype=float)
        const = np.zeros(A.shape[0])
        coef_h0 = np.zeros((A.shape[0], self.mk))
        for u in range(t, 0, -1):
            wa, wh, b = self._split_weight(u)
            const += A @ b
            if wh is not None:
                coef_h0 += A @ wh
            A = A @ wa
            if u == 1:
                coef_h0 += A
                break
            lb, ub = pre.hidden[u - 2]
            low_slope, up_slope, up_icpt = _relu_relaxation(lb, ub)
            pos, neg = np.maximum(A, 0.0), np.minimum(A, 0.0)
            const += neg @ up_icpt
            A = pos * low_slope + neg * up_slope
        return coef_h0 @ self.lin, coef_h0 @ self.gate, const

    def _fold_signs(self, coef_s, const, pre: PreactivationBounds, sub: Subdomain):
        """Replace sign outputs by their worst case for a lower bound."""
        if not self.m2:
            return const
        lo, hi = pre.sign_val
        return const + np.minimum(coef_s * lo, coef_s * hi).sum(axis=1)

    def _lagrangian(self, coef_x, const, sub: Subdomain, beta):
        if beta is None or not sub.signs:
            return coef_x, const
        idx = np.array([j for j, _ in sub.signs])
        sig = np.array([s for _, s in sub.signs], dtype=float)
        beta = np.atleast_2d(beta)
        # lower bound of f(x) - sum_j beta_j * sigma_j * (a_j x - tau_j)
        coef_x = coef_x - (beta * sig) @ self.a2[idx]
        const = const + (beta * sig) @ self.tau[idx]
        return coef_x, const

    def lower_affine(self, rows, t, pre, sub, beta=None):
        coef_x, coef_s, const = self._backward_lower(rows, t, pre)
        const = self._fold_signs(coef_s, const, pre, sub)
        return self._lagrangian(coef_x, const, sub, beta)

    def backward_bounds(self, sub: Subdomain, t: int, pre: PreactivationBounds,
                        rows=None, beta=None) -> LinearBounds:
        """Linear bounds on ``rows @ layer_t`` given bounds on all earlier layers."""
        if len(pre.hidden) < t - 1:
            raise ValueError(f"need pre-activation bounds for layers below {t}")
        width = self.layers[t - 1][0].shape[0]
        rows = np.eye(width) if rows is None else np.atleast_2d(rows)
        self.calls += 1
        lw, lb_ = self.lower_affine(rows, t, pre, sub, beta)
        uw, ub_ = self.lower_affine(-rows, t, pre, sub, beta)
        lb = concretize_rows(self.spec, sub, lw, lb_)
        ub = -concretize_rows(self.spec, sub, uw, ub_)
        return LinearBounds(lw, lb_, -uw, -ub_, lb, ub, t)

    def crown_bounds(self, sub: Subdomain, parent: PreactivationBounds | None = None,
                     include_output: bool = True) -> PreactivationBounds:
        """Layer-by-layer backward bounds, intersected with interval and parent bounds."""
        ibp = self.interval_bounds(sub)
        if parent is not None:
            ibp = refine_with_parent(ibp, parent)
        pre = PreactivationBounds([], None, ibp.sign_pre, ibp.sign_val)
        for t in range(1, self.depth + 1):
            lin = self.backward_bounds(sub, t, pre)
            pre.hidden.append(_intersect(lin.lb, lin.ub, *ibp.hidden[t - 1]))
        if include_output:
            lin = self.backward_bounds(sub, self.depth + 1, pre)
            pre.output = _intersect(lin.lb, lin.ub, *ibp.output)
        return pre

    def optimize_beta(self, sub: Subdomain, t: int, pre: PreactivationBounds, row,
                      steps: int = 20, lr: float = 0.1):
        """Projected supergradient ascent on the sign-constraint multipliers."""
        row = np.atleast_2d(row)
        coef_x, coef_s, const = self._backward_lower(row, t, pre)
        const = self._fold_signs(coef_s, const, pre, sub)
        self.calls += 1
        if not sub.signs:
            return np.zeros(0), float(concretize_rows(self.spec, sub, coef_x, const)[0])
        idx = np.array([j for j, _ in sub.signs])
        sig = np.array([s for _, s in sub.signs], dtype=float)
        a, tau = self.a2[idx], self.tau[idx]
        scale = np.linalg.norm(coef_x) / np.maximum((a * a).sum(axis=1), 1e-12)

        beta = np.zeros(len(idx))
        best_beta, best = beta.copy(), -np.inf
        for k in range(steps + 1):
            cx, c0 = self._lagrangian(coef_x, const, sub, beta[None, :])
            val = float(concretize_rows(self.spec, sub, cx, c0)[0])
            if val > best:
                best, best_beta = val, beta.copy()
            if k == steps:
                break
            x_star = concretize_argmin(self.spec, sub, cx[0])
            # supergradient of the dual function with respect to beta
            g = -sig * (a @ x_star - tau)
            beta = np.maximum(beta + lr * scale * g / np.sqrt(k + 1), 0.0)
        return best_beta, best


def _intersect(lb, ub, lb2, ub2):
    lo = np.maximum(lb, lb2)
    hi = np.minimum(ub, ub2)
    return np.minimum(lo, hi), np.maximum(lo, hi)


def refine_with_parent(child: PreactivationBounds, parent: PreactivationBounds,
                       tol: float = 1e-9) -> PreactivationBounds:
    """Elementwise intersection; an empty intersection means the child is empty."""
    def meet(c, p):
        lo = np.maximum(c[0], p[0])
        hi = np.minimum(c[1], p[1])
        if np.any(lo > hi + tol * (1.0 + np.abs(hi))):
            raise InfeasibleSubdomain("child bounds are disjoint from the parent's")
        return np.minimum(lo, hi), np.maximum(lo, hi)

    hidden = [meet(c, p) for c, p in zip(child.hidden, parent.hidden)]
    output = None
    if child.output is not None and parent.output is not None:
        output = meet(child.output, parent.output)
    elif child.output is not None:
        output = child.output
    sign_pre = meet(child.sign_pre, parent.sign_pre) if len(child.sign_pre[0]) else child.sign_pre
    return PreactivationBounds(hidden, output, sign_pre, child.sign_val)


def interval_bounds(decoder: Decoder, sub: Subdomain) -> PreactivationBounds:
    return BoundComputer(decoder).interval_bounds(sub)


def backward_bounds(decoder: Decoder, sub: Subdomain, rows=None, beta=None) -> LinearBounds:
    """Backward bounds on the logits (or ``rows @ logits``) over ``sub``."""
    bc = BoundComputer(decoder)
    pre = bc.crown_bounds(sub, include_output=False)
    return bc.backward_bounds(sub, bc.depth + 1, pre, rows=rows, beta=beta)


def optimize_beta(decoder: Decoder, sub: Subdomain, row, steps: int = 20, lr: float = 0.1):
    """Best lower bound of ``row @ logits`` over the multipliers of decided signs."""
    bc = BoundComputer(decoder)
    pre = bc.crown_bounds(sub, include_output=False)
    return bc.optimize_beta(sub, bc.depth + 1, pre, row, steps=steps, lr=lr)
