"""Sensing operator and skip-connected ReLU decoder.

The decoder reads measurements ``y = [A1 x ; sign(A2 x - tau)]`` and works in
three stages:

1. a fixed expansion ``h0[j * K + k] = scales[k] * y[j]``,
2. ``h`` hidden layers ``a_t = relu(W_t [a_{t-1}; h0] + b_t)`` with ``a_0 = h0``,
3. an affine head producing one logit per signal coordinate.

A positive logit means "this coordinate is in the support".
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import DimensionError, SparseDomainSpec

FORMAT_VERSION = 1
DEFAULT_SCALES = (0.5, 1.0, 2.0, 4.0)


def sign(v):
    """Sign with the boundary mapped to +1."""
    return np.where(np.asarray(v) >= 0, 1.0, -1.0)


@dataclass(eq=False)
class SensingSpec:
    a1: np.ndarray
    a2: np.ndarray | None = None
    tau: np.ndarray | None = None
    learn_a1: bool = False
    learn_a2: bool = False

    def __post_init__(self):
        self.a1 = np.atleast_2d(np.asarray(self.a1, dtype=float))
        n = self.a1.shape[1]
        if self.a2 is None:
            self.a2 = np.zeros((0, n))
            self.tau = np.zeros(0)
        else:
            self.a2 = np.atleast_2d(np.asarray(self.a2, dtype=float))
            self.tau = (np.zeros(self.a2.shape[0]) if self.tau is None
                        else np.asarray(self.tau, dtype=float).reshape(-1))
        if self.a2.shape[1] != n:
            raise DimensionError("A1 and A2 must have the same number of columns")
        if self.tau.shape != (self.a2.shape[0],):
            raise DimensionError("tau must have one entry per row of A2")
        if not 1 <= self.m < n:
            raise ValueError(f"need 1 <= m1 + m2 < n, got m = {self.m}, n = {n}")
        for arr in (self.a1, self.a2, self.tau):
            if not np.all(np.isfinite(arr)):
                raise ValueError("sensing matrices must be finite")

    @property
    def n(self) -> int:
        return self.a1.shape[1]

    @property
    def m1(self) -> int:
        return self.a1.shape[0]

    @property
    def m2(self) -> int:
        return self.a2.shape[0]

    @property
    def m(self) -> int:
        return self.m1 + self.m2

    @property
    def is_linear(self) -> bool:
        return self.m2 == 0

    def copy(self) -> "SensingSpec":
        return SensingSpec(self.a1.copy(), self.a2.copy(), self.tau.copy(),
                           self.learn_a1, self.learn_a2)


def gaussian_sensing(n: int, m1: int, rng: np.random.Generator, m2: int = 0,
                     tau: float | np.ndarray = 0.0, learn: bool = False) -> SensingSpec:
    """I.i.d. Gaussian sensing, rows scaled by ``1/sqrt(n)``."""
    a1 = rng.standard_normal((m1, n)) / np.sqrt(n)
    a2 = rng.standard_normal((m2, n)) / np.sqrt(n) if m2 else None
    taus = np.broadcast_to(np.asarray(tau, dtype=float), (m2,)).copy() if m2 else None
    return SensingSpec(a1, a2, taus, learn_a1=learn, learn_a2=False)


def measure(sensing: SensingSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != sensing.n:
        raise DimensionError(f"expected signal length {sensing.n}, got {x.shape[-1]}")
    y1 = x @ sensing.a1.T
    y2 = sign(x @ sensing.a2.T - sensing.tau)
    return np.concatenate([y1, y2], axis=-1)


@dataclass(eq=False)
class DecoderParams:
    scales: np.ndarray
    hidden: list = field(default_factory=list)   # [(W, b), ...]
    output: tuple = None                          # (W, b)

    def __post_init__(self):
        self.scales = np.asarray(self.scales, dtype=float).reshape(-1)
        if not np.all(self.scales > 0):
            raise ValueError("expansion scales must be positive")
        self.hidden = [(np.asarray(w, dtype=float), np.asarray(b, dtype=float))
                       for w, b in self.hidden]
        w, b = self.output
        self.output = (np.asarray(w, dtype=float), np.asarray(b, dtype=float))

    @property
    def depth(self) -> int:
        return len(self.hidden)

    @property
    def n_out(self) -> int:
        return self.output[0].shape[0]

    def arrays(self) -> list[np.ndarray]:
        """Trainable arrays, in a fixed order."""
        out = []
        for w, b in self.hidden:
            out += [w, b]
        return out + list(self.output)

    def copy(self) -> "DecoderParams":
        return DecoderParams(self.scales.copy(),
                             [(w.copy(), b.copy()) for w, b in self.hidden],
                             (self.output[0].copy(), self.output[1].copy()))


@dataclass(eq=False)
class Decoder:
    """A trained or candidate decoder together with the problem it solves."""
    domain: SparseDomainSpec
    sensing: SensingSpec
    params: DecoderParams

    def __post_init__(self):
        if self.sensing.n != self.domain.n or self.params.n_out != self.domain.n:
            raise DimensionError("sensing, decoder and domain disagree on n")
        mk = self.sensing.m * len(self.params.scales)
        prev = mk
        for t, (w, b) in enumerate(self.params.hidden, 1):
            if w.shape[1] != prev + mk or b.shape != (w.shape[0],):
                raise DimensionError(f"hidden layer {t} has shape {w.shape}, expected (*, {prev + mk})")
            prev = w.shape[0]
        w, b = self.params.output
        if w.shape[1] != prev or b.shape != (w.shape[0],):
            raise DimensionError(f"output layer has shape {w.shape}, expected ({self.domain.n}, {prev})")

    def logits(self, x) -> np.ndarray:
        return forward(self.params, self.sensing, x)

    def copy(self) -> "Decoder":
        return Decoder(self.domain, self.sensing.copy(), self.params.copy())


def init_params(n: int, m: int, rng: np.random.Generator, *, scales=DEFAULT_SCALES,
                depth: int = 2, width: int = 128) -> DecoderParams:
    """He-initialized weights, zero biases."""
    scales = np.asarray(scales, dtype=float)
    mk = m * len(scales)
    hidden = []
    prev = mk
    for _ in range(depth):
        fan_in = prev + mk
        hidden.append((rng.standard_normal((width, fan_in)) * np.sqrt(2.0 / fan_in), np.zeros(width)))
        prev = width
    out = (rng.standard_normal((n, prev)) * np.sqrt(2.0 / prev), np.zeros(n))
    return DecoderParams(scales, hidden, out)


def expand(scales: np.ndarray, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return (y[..., :, None] * scales).reshape(*y.shape[:-1], -1)


def forward_measurements(params: DecoderParams, y, trace: bool = False):
    """Logits from measurements; with ``trace`` also the hidden pre-activations."""
    h0 = expand(params.scales, y)
    a = h0
    pre = []
    for w, b in params.hidden:
        p = np.concatenate([a, h0], axis=-1) @ w.T + b
        pre.append(p)
        a = np.maximum(p, 0.0)
    w, b = params.output
    z = a @ w.T + b
    if trace:
        return z, pre
    return z


def forward(params: DecoderParams, sensing: SensingSpec, x, trace: bool = False):
    return forward_measurements(params, measure(sensing, x), trace=trace)


def decode_support(params: DecoderParams, sensing: SensingSpec | None = None, *, x=None, y=None) -> frozenset:
    """Coordinates with strictly positive logits, from a signal or its measurements."""
    if y is None:
        if x is None or sensing is None:
            raise ValueError("pass either y, or x together with sensing")
        y = measure(sensing, x)
    z = forward_measurements(params, y)
    return frozenset(int(i) for i in np.flatnonzero(z > 0))


def reconstruct(sensing: SensingSpec, y, supp) -> np.ndarray:
    """Least-squares signal on a known support from the linear measurements."""
    supp = sorted(supp)
    x = np.zeros(sensing.n)
    if supp:
        y1 = np.asarray(y, dtype=float)[:sensing.m1]
        x[supp] = np.linalg.lstsq(sensing.a1[:, supp], y1, rcond=None)[0]
    return x


def _opt_list(a: np.ndarray):
    return a.tolist()


def to_dict(decoder: Decoder) -> dict:
    s = decoder.sensing
    sensing = {"a1": _opt_list(s.a1)}
    if s.m2:
        sensing["a2"] = _opt_list(s.a2)
        sensing["tau"] = _opt_list(s.tau)
    return {
        "version": FORMAT_VERSION,
        "n": decoder.domain.n,
        "l": decoder.domain.l,
        "eps": decoder.domain.eps,
        "scales": decoder.params.scales.tolist(),
        "sensing": sensing,
        "hidden": [{"w": w.tolist(), "b": b.tolist()} for w, b in decoder.params.hidden],
        "output": {"w": decoder.params.output[0].tolist(), "b": decoder.params.output[1].tolist()},
    }


def from_dict(doc: dict) -> Decoder:
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')!r}")
    n = int(doc["n"])
    sens = doc["sensing"]
    a1 = np.array(sens["a1"], dtype=float).reshape(-1, n)
    a2 = np.array(sens["a2"], dtype=float).reshape(-1, n) if "a2" in sens else None
    tau = np.array(sens["tau"], dtype=float) if "tau" in sens else None
    sensing = SensingSpec(a1, a2, tau)
    params = DecoderParams(
        doc["scales"],
        [(np.array(h["w"], dtype=float), np.array(h["b"], dtype=float)) for h in doc["hidden"]],
        (np.array(doc["output"]["w"], dtype=float), np.array(doc["output"]["b"], dtype=float)),
    )
    return Decoder(SparseDomainSpec(n, int(doc["l"]), float(doc["eps"])), sensing, params)


def save_model(decoder: Decoder, path) -> None:
    Path(path).write_text(json.dumps(to_dict(decoder)))


def load_model(path) -> Decoder:
    return from_dict(json.loads(Path(path).read_text()))
