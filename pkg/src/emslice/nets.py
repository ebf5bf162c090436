"""Hand-rolled MLP with exact reverse-mode gradients, Adam, and categorical heads.

Networks are lists of (weight, bias) pairs with tanh hidden activations and
a linear output head (logits for policies, a scalar for value functions).
Everything is float64 numpy; gradients are checked against central finite
differences in the test suite.
"""
from __future__ import annotations

import numpy as np

from .errors import ContractViolation, NumericsError


def xavier_init(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class MlpNet:
    """Fully connected net: affine -> tanh, repeated, then a linear head.

    ``params`` interleaves weights and biases layer by layer; ``grads``
    mirrors it and accumulates across backward() calls until zero_grads().
    """

    def __init__(self, layer_sizes: list[int], rng: np.random.Generator,
                 out_scale: float = 1.0):
        if len(layer_sizes) < 2:
            raise ContractViolation("need at least an input and an output size")
        self.layer_sizes = list(layer_sizes)
        self.params: list[np.ndarray] = []
        for i, (fan_in, fan_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
            w = xavier_init(rng, fan_in, fan_out)
            if i == len(layer_sizes) - 2:
                w *= out_scale  # small head keeps initial policies near uniform
            self.params.append(w)
            self.params.append(np.zeros(fan_out))
        self.grads = [np.zeros_like(p) for p in self.params]

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Returns (output, cache); cache holds per-layer inputs for backward.

        Accepts a single observation (in_dim,) or a batch (B, in_dim); the
        output matches the input rank.
        """
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.layer_sizes[0]:
            raise ContractViolation(
                f"input dim {x.shape[1]} != expected {self.layer_sizes[0]}")
        cache = [x]
        h = x
        for i in range(self.n_layers):
            z = h @ self.params[2 * i] + self.params[2 * i + 1]
            h = np.tanh(z) if i < self.n_layers - 1 else z
            cache.append(h)
        return (h[0] if single else h), cache

    def backward(self, cache: list[np.ndarray], dout: np.ndarray) -> None:
        """Accumulate exact parameter gradients for the cached forward pass."""
        if not cache:
            raise ContractViolation("backward called without a forward cache")
        dout = np.asarray(dout, dtype=np.float64)
        if dout.ndim == 1:
            dout = dout[None, :]
        dh = dout
        for i in range(self.n_layers - 1, -1, -1):
            if i < self.n_layers - 1:
                a = cache[i + 1]          # tanh activations of this layer
                dz = dh * (1.0 - a * a)
            else:
                dz = dh                   # linear head
            self.grads[2 * i] += cache[i].T @ dz
            self.grads[2 * i + 1] += dz.sum(axis=0)
            if i > 0:
                dh = dz @ self.params[2 * i].T

    def zero_grads(self) -> None:
        for g in self.grads:
            g.fill(0.0)

    def copy_params(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params]

    def set_params(self, params: list[np.ndarray]) -> None:
        for dst, src in zip(self.params, params):
            dst[...] = src

    def all_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.params)


class AdamState:
    """Adam moments for one parameter list; lr/betas/eps fixed at creation."""

    def __init__(self, params: list[np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-5):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def categorical_sample_and_logprob(logits: np.ndarray, rng: np.random.Generator
                                   ) -> tuple[int, float, float]:
    """Sample one action from softmax(logits); returns (action, log-prob, entropy)."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(logits).all():
        raise NumericsError(f"non-finite logits: {logits}")
    logp = log_softmax(logits)
    p = np.exp(logp)
    action = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
    action = min(action, len(p) - 1)  # guard the cumsum==1.0 edge
    entropy = float(-(p * logp).sum())
    return action, float(logp[action]), entropy


def categorical_sample_batch(logits: np.ndarray, rng: np.random.Generator
                             ) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise sampling for a (B, K) batch; returns (actions, log-probs).

    Uses one uniform draw per row; equivalent to B scalar calls but cheaper.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(logits).all():
        raise NumericsError("non-finite logits in batch sampler")
    logp = log_softmax(logits)
    cdf = np.cumsum(np.exp(logp), axis=1)
    draws = rng.random(logits.shape[0])
    actions = (cdf < draws[:, None]).sum(axis=1)
    np.clip(actions, 0, logits.shape[1] - 1, out=actions)
    return actions, logp[np.arange(len(actions)), actions]


def categorical_entropy(logits: np.ndarray) -> np.ndarray:
    """Entropy per row of a batch of logits."""
    logp = log_softmax(logits)
    return -(np.exp(logp) * logp).sum(axis=-1)


def entropy_grad_wrt_logits(logits: np.ndarray) -> np.ndarray:
    """d entropy / d logits, rowwise: -p * (log p + H)."""
    logp = log_softmax(logits)
    p = np.exp(logp)
    h = -(p * logp).sum(axis=-1, keepdims=True)
    return -p * (logp + h)


def action_logprobs(logits: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """log pi(a|s) for each (row, action) pair."""
    logp = log_softmax(logits)
    return logp[np.arange(len(actions)), actions]


def logprob_grad_to_logits_grad(logits: np.ndarray, actions: np.ndarray,
                                dlogp: np.ndarray) -> np.ndarray:
    """Chain d/dlogp(a) back through log-softmax: dlogits = dlogp * (onehot - p)."""
    p = softmax(logits)
    out = -p * dlogp[:, None]
    out[np.arange(len(actions)), actions] += dlogp
    return out
