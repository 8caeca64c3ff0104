"""Worst-case training of the decoder.

Each step draws a batch of random corners and a batch of PGD attacks, keeps
for every slot whichever of the two has the higher loss, and takes an Adam
step on the mean cross-entropy plus an interval-bound stability penalty.

Gradients are written out by hand; they are checked against finite
differences in the test suite.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .domain import (SparseDomainSpec, Subdomain, concretize_argmin, concretize_rows,
                     project_batch, sample_corners)
from .model import Decoder, DecoderParams, SensingSpec, expand, sign

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class PGDConfig:
    iterations: int = 100
    restarts: int = 5
    step_size: float = 0.5
    momentum: float = 0.75
    rho: float = 0.75

    def __post_init__(self):
        if self.restarts < 1 or self.iterations < 0:
            raise ValueError("pgd needs restarts >= 1 and iterations >= 0")


@dataclass
class TrainConfig:
    steps: int = 20000
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    lr_schedule: str = "constant"     # or "cosine"
    pgd: PGDConfig = field(default_factory=PGDConfig)
    reg_weight: float = 1e-4
    l1_weight: float = 0.0
    learn_sensing: bool = False
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        if isinstance(self.pgd, dict):
            self.pgd = PGDConfig(**self.pgd)
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.reg_weight < 0 or self.l1_weight < 0:
            raise ValueError("regularization weights must be nonnegative")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr schedule {self.lr_schedule!r}")


# -- forward / backward ---------------------------------------------------------

def _forward_cache(params: DecoderParams, sensing: SensingSpec, X):
    y = np.concatenate([X @ sensing.a1.T, sign(X @ sensing.a2.T - sensing.tau)], axis=1)
    h0 = expand(params.scales, y)
    inputs, pres = [], []
    a = h0
    for w, b in params.hidden:
        inp = np.concatenate([a, h0], axis=1)
        p = inp @ w.T + b
        inputs.append(inp)
        pres.append(p)
        a = np.maximum(p, 0.0)
    z = a @ params.output[0].T + params.output[1]
    return {"X": X, "h0": h0, "inputs": inputs, "pres": pres, "a_last": a, "z": z}


def _backward_cache(params: DecoderParams, sensing: SensingSpec, cache, dz):
    """Gradients of ``sum(dz * z)`` w.r.t. the parameters, the signal and the sensing."""
    mk = cache["h0"].shape[1]
    wo = params.output[0]
    g_out = (dz.T @ cache["a_last"], dz.sum(axis=0))
    ga = dz @ wo
    gh0 = np.zeros_like(cache["h0"])
    g_hidden = []
    for (w, _), inp, p in zip(reversed(params.hidden), reversed(cache["inputs"]), reversed(cache["pres"])):
        gp = ga * (p > 0)
        g_hidden.append((gp.T @ inp, gp.sum(axis=0)))
        ginp = gp @ w
        ga = ginp[:, :-mk]
        gh0 += ginp[:, -mk:]
    gh0 += ga
    g_hidden.reverse()

    K = len(params.scales)
    gy = (gh0.reshape(gh0.shape[0], -1, K) * params.scales).sum(axis=2)
    gy1, gy2 = gy[:, :sensing.m1], gy[:, sensing.m1:]
    X = cache["X"]
    # sign is treated as the identity on the way back (straight-through)
    gx = gy1 @ sensing.a1 + gy2 @ sensing.a2
    grads = []
    for gw, gb in g_hidden:
        grads += [gw, gb]
    grads += list(g_out)
    return {"params": grads, "x": gx, "a1": gy1.T @ X, "a2": gy2.T @ X, "tau": -gy2.sum(axis=0)}


def _bce(z, s):
    return (np.logaddexp(0.0, z) - s * z).mean(axis=-1)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def losses(decoder: Decoder, X) -> np.ndarray:
    """Per-signal mean binary cross-entropy of the support logits."""
    X = np.atleast_2d(X)
    z = decoder.logits(X)
    return _bce(z, (X != 0).astype(float))


def loss(decoder: Decoder, x) -> float:
    return float(losses(decoder, x)[0])


def loss_and_grads(decoder: Decoder, X):
    """Batch-mean loss and its gradients."""
    X = np.atleast_2d(X)
    cache = _forward_cache(decoder.params, decoder.sensing, X)
    s = (X != 0).astype(float)
    z = cache["z"]
    dz = (_sigmoid(z) - s) / (z.shape[1] * z.shape[0])
    return float(_bce(z, s).mean()), _backward_cache(decoder.params, decoder.sensing, cache, dz)


def _input_grad(decoder: Decoder, X):
    """Per-signal loss and its gradient w.r.t. each signal."""
    cache = _forward_cache(decoder.params, decoder.sensing, X)
    s = (X != 0).astype(float)
    z = cache["z"]
    dz = (_sigmoid(z) - s) / z.shape[1]
    return _bce(z, s), _backward_cache(decoder.params, decoder.sensing, cache, dz)["x"]


# -- attack ---------------------------------------------------------------------

def _random_members(spec: SparseDomainSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    X = sample_corners(spec, rng, size)
    nz = X != 0
    X[nz] = rng.uniform(spec.eps, 1.0, size=int(nz.sum()))
    return X


def pgd_attack_batch(decoder: Decoder, cfg: PGDConfig, rng: np.random.Generator, batch: int):
    """Momentum PGD with step halving; returns the best signal per slot and its loss."""
    spec = decoder.domain
    chains = batch * cfg.restarts
    X = _random_members(spec, rng, chains)
    cur, g = _input_grad(decoder, X)
    best, best_x = cur.copy(), X.copy()
    prev = X.copy()
    eta = np.full(chains, cfg.step_size)
    window = max(2, cfg.iterations // 5)
    ups = np.zeros(chains)
    best_at_check = best.copy()
    eta_at_check = eta.copy()

    for k in range(cfg.iterations):
        step = project_batch(spec, X + eta[:, None] * np.sign(g))
        if k:
            step = project_batch(spec, X + cfg.momentum * (step - X) + (1 - cfg.momentum) * (X - prev))
        prev, X = X, step
        new, g = _input_grad(decoder, X)
        ups += new > cur
        cur = new
        better = cur > best
        best[better] = cur[better]
        best_x[better] = X[better]

        if (k + 1) % window == 0:
            stalled = (ups < cfg.rho * window) | ((eta == eta_at_check) & (best <= best_at_check))
            eta_at_check = eta.copy()
            eta[stalled] *= 0.5
            X[stalled] = best_x[stalled]
            prev[stalled] = best_x[stalled]
            if stalled.any():
                cur[stalled], g[stalled] = _input_grad(decoder, X[stalled])
            ups[:] = 0
            best_at_check = best.copy()

    best = best.reshape(batch, cfg.restarts)
    pick = best.argmax(axis=1)
    rows = np.arange(batch)
    return best_x.reshape(batch, cfg.restarts, -1)[rows, pick], best[rows, pick]


def pgd_attack(decoder: Decoder, cfg: PGDConfig, rng: np.random.Generator) -> np.ndarray:
    return pgd_attack_batch(decoder, cfg, rng, 1)[0][0]


# -- interval regularizer ---------------------------------------------------------

def _measurement_intervals(decoder: Decoder):
    """Exact range of each measurement over the whole domain, with the extremal signals."""
    spec, s = decoder.domain, decoder.sensing
    root = Subdomain()
    lo1 = concretize_rows(spec, root, s.a1)
    hi1 = -concretize_rows(spec, root, -s.a1)
    x_lo = np.array([concretize_argmin(spec, root, r) for r in s.a1]).reshape(s.m1, spec.n)
    x_hi = np.array([concretize_argmin(spec, root, -r) for r in s.a1]).reshape(s.m1, spec.n)
    if s.m2:
        plo = concretize_rows(spec, root, s.a2, -s.tau)
        phi = -concretize_rows(spec, root, -s.a2, s.tau)
        lo2, hi2 = sign(plo), sign(phi)
    else:
        lo2 = hi2 = np.zeros(0)
    return np.concatenate([lo1, lo2]), np.concatenate([hi1, hi2]), x_lo, x_hi


def regularizer(decoder: Decoder, reg_weight: float, l1_weight: float = 0.0, grads: bool = False):
    """Penalty on unstable ReLUs under interval bounds over the whole domain, plus L1.

    Returns ``(value, unstable_count)`` or, with ``grads``, also the gradient
    dict in the layout of :func:`loss_and_grads`.
    """
    p, s = decoder.params, decoder.sensing
    y_lo, y_hi, x_lo, x_hi = _measurement_intervals(decoder)
    h_lo, h_hi = expand(p.scales, y_lo), expand(p.scales, y_hi)
    mk = h_lo.shape[0]

    a_lo, a_hi = h_lo, h_hi
    tape = []
    value = 0.0
    unstable = 0
    for w, b in p.hidden:
        lo_in = np.concatenate([a_lo, h_lo])
        hi_in = np.concatenate([a_hi, h_hi])
        mid, rad = 0.5 * (lo_in + hi_in), 0.5 * (hi_in - lo_in)
        c = w @ mid + b
        r = np.abs(w) @ rad
        lb, ub = c - r, c + r
        v = np.maximum(-lb * ub, 0.0)
        value += reg_weight * np.sqrt(v).sum()
        unstable += int(((lb < 0) & (ub > 0)).sum())
        tape.append((mid, rad, lb, ub, v))
        a_lo, a_hi = np.maximum(lb, 0.0), np.maximum(ub, 0.0)
    weights = [w for w, _ in p.hidden] + [p.output[0]]
    value += l1_weight * sum(np.abs(w).sum() for w in weights)
    if not grads:
        return value, unstable

    g_params = [None] * (2 * p.depth) + [l1_weight * np.sign(p.output[0]), np.zeros_like(p.output[1])]
    g_hlo = np.zeros(mk)
    g_hhi = np.zeros(mk)
    g_lb = g_ub = None
    for t in range(p.depth - 1, -1, -1):
        w, _ = p.hidden[t]
        mid, rad, lb, ub, v = tape[t]
        pos = v > 0
        dv = np.where(pos, reg_weight / (2.0 * np.sqrt(np.where(pos, v, 1.0))), 0.0)
        d_lb = dv * -ub + (0.0 if g_lb is None else g_lb)
        d_ub = dv * -lb + (0.0 if g_ub is None else g_ub)
        dc, dr = d_lb + d_ub, d_ub - d_lb
        g_params[2 * t] = np.outer(dc, mid) + np.sign(w) * np.outer(dr, rad) + l1_weight * np.sign(w)
        g_params[2 * t + 1] = dc
        dmid, drad = w.T @ dc, np.abs(w).T @ dr
        d_lo_in, d_hi_in = 0.5 * (dmid - drad), 0.5 * (dmid + drad)
        g_hlo += d_lo_in[-mk:]
        g_hhi += d_hi_in[-mk:]
        if t == 0:
            g_hlo += d_lo_in[:-mk]
            g_hhi += d_hi_in[:-mk]
        else:
            plb, pub = tape[t - 1][2], tape[t - 1][3]
            g_lb = d_lo_in[:-mk] * (plb > 0)
            g_ub = d_hi_in[:-mk] * (pub > 0)

    K = len(p.scales)
    gy_lo = (g_hlo.reshape(-1, K) * p.scales).sum(axis=1)[:s.m1]
    gy_hi = (g_hhi.reshape(-1, K) * p.scales).sum(axis=1)[:s.m1]
    g_a1 = gy_lo[:, None] * x_lo + gy_hi[:, None] * x_hi
    return value, unstable, {"params": g_params, "a1": g_a1,
                             "a2": np.zeros_like(s.a2), "tau": np.zeros_like(s.tau)}


# -- optimizer ------------------------------------------------------------------

class Adam:
    def __init__(self, arrays, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.arrays = arrays
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0

    def step(self, grads, lr=None):
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for a, g, m, v in zip(self.arrays, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            a -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# -- training loop ----------------------------------------------------------------

def _members(spec: SparseDomainSpec, X) -> np.ndarray:
    nz = X != 0
    ok_vals = np.where(nz, (X >= spec.eps) & (X <= 1.0), True).all(axis=1)
    return ok_vals & (nz.sum(axis=1) == spec.l)


def select_hardest(decoder: Decoder, Xc, Xa):
    """Per slot, the higher-loss of the corner and the attack (corner on ties)."""
    lc, la = losses(decoder, Xc), losses(decoder, Xa)
    take_attack = la > lc
    X = np.where(take_attack[:, None], Xa, Xc)
    return X, np.maximum(lc, la), lc, la


def support_errors(decoder: Decoder, X) -> np.ndarray:
    """True where the decoded support differs from the true one."""
    z = decoder.logits(np.atleast_2d(X))
    return ((z > 0) != (np.atleast_2d(X) != 0)).any(axis=1)


@dataclass
class TrainResult:
    decoder: Decoder
    history: list


def train(decoder: Decoder, config: TrainConfig, log_file=None) -> TrainResult:
    """Train a copy of ``decoder``; the input model is left untouched."""
    rng = np.random.default_rng(config.seed)
    model = decoder.copy()
    spec, sensing = model.domain, model.sensing
    sensing.learn_a1 = config.learn_sensing or sensing.learn_a1
    arrays = model.params.arrays()
    keys = []
    if sensing.learn_a1:
        arrays.append(sensing.a1)
        keys.append("a1")
    if sensing.learn_a2 and sensing.m2:
        arrays += [sensing.a2, sensing.tau]
        keys += ["a2", "tau"]
    opt = Adam(arrays, config.lr, config.beta1, config.beta2, config.adam_eps)
    history = []
    log.info("training seed=%d steps=%d", config.seed, config.steps)

    for step in range(1, config.steps + 1):
        Xc = sample_corners(spec, rng, config.batch_size)
        Xa, _ = pgd_attack_batch(model, config.pgd, rng, config.batch_size)
        X, _, _, la = select_hardest(model, Xc, Xa)
        if not _members(spec, X).all():
            raise AssertionError("training signal outside the domain")

        value, g = loss_and_grads(model, X)
        reg, unstable, rg = regularizer(model, config.reg_weight, config.l1_weight, grads=True)
        grads = [a + b for a, b in zip(g["params"], rg["params"])]
        grads += [g[k] + rg[k] for k in keys]
        if not (math.isfinite(value + reg) and all(np.all(np.isfinite(x)) for x in grads)):
            raise TrainingDiverged(f"non-finite loss or gradient at step {step} (loss={value}, reg={reg})")

        lr = config.lr
        if config.lr_schedule == "cosine":
            lr = 0.5 * config.lr * (1 + math.cos(math.pi * (step - 1) / config.steps))
        opt.step(grads, lr=lr)

        if step % config.log_every == 0 or step == config.steps:
            rec = {
                "step": step,
                "loss": value,
                "attack_loss": float(la.mean()),
                "reg": float(reg),
                "unstable_neuron_count": unstable,
                "attack_success_rate": float(support_errors(model, X).mean()),
            }
            history.append(rec)
            log.debug("%s", rec)
            if log_file is not None:
                log_file.write(json.dumps(rec) + "\n")
                log_file.flush()
    return TrainResult(model, history)


def fuzz(decoder: Decoder, samples: int, rng: np.random.Generator, corners_fraction: float = 0.5,
         chunk: int = 20000) -> np.ndarray:
    """Random members (half corners, half interior); returns the misdecoded ones."""
    spec = decoder.domain
    bad = []
    done = 0
    while done < samples:
        size = min(chunk, samples - done)
        nc = int(round(size * corners_fraction))
        X = np.concatenate([sample_corners(spec, rng, nc), _random_members(spec, rng, size - nc)])
        err = support_errors(decoder, X)
        bad.append(X[err])
        done += size
    return np.concatenate(bad) if bad else np.zeros((0, spec.n))


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
