"""Small MLPs with hand-written backprop, a diagonal-Gaussian policy head,
and Adam. Everything is float64 numpy; gradients are exact and checked
against central finite differences in the test suite.
"""

from __future__ import annotations

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


def elu(x):
    neg = np.minimum(x, 0.0)
    return np.where(x > 0.0, x, np.expm1(neg))


def elu_grad(x):
    neg = np.minimum(x, 0.0)
    return np.where(x > 0.0, 1.0, np.exp(neg))


class Mlp:
    """Fully connected net with elu hidden activations and a linear head.

    dtype float64 by default; float32 halves update cost for large runs."""

    def __init__(self, sizes, rng, out_gain=0.01, dtype=np.float64):
        self.sizes = list(sizes)
        self.dtype = np.dtype(dtype)
        self.W = []
        self.b = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            gain = out_gain if i == len(sizes) - 2 else 1.0
            self.W.append(rng.normal(0.0, gain * np.sqrt(2.0 / a),
                                     size=(a, b)).astype(self.dtype))
            self.b.append(np.zeros(b, dtype=self.dtype))
        self._cache = None

    @property
    def n_in(self):
        return self.sizes[0]

    @property
    def n_out(self):
        return self.sizes[-1]

    def params(self):
        return self.W + self.b

    def forward(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=self.dtype))
        pre = []
        acts = [x]
        h = x
        for i, (W, b) in enumerate(zip(self.W, self.b)):
            z = h @ W + b
            pre.append(z)
            h = z if i == len(self.W) - 1 else elu(z)
            acts.append(h)
        self._cache = (pre, acts)
        return h

    def backward(self, dout):
        """Gradients of sum(dout * output) w.r.t. params and input.

        Must follow a forward() on the same batch. Returns (grads, dx) where
        grads aligns with params().
        """
        pre, acts = self._cache
        dW = [None] * len(self.W)
        db = [None] * len(self.b)
        d = np.asarray(dout, dtype=self.dtype)
        for i in range(len(self.W) - 1, -1, -1):
            if i != len(self.W) - 1:
                d = d * elu_grad(pre[i])
            dW[i] = acts[i].T @ d
            db[i] = d.sum(axis=0)
            d = d @ self.W[i].T
        return dW + db, d


class GaussianPolicy:
    """Diagonal Gaussian over actions; the mean comes from an Mlp, the
    log-std is a free parameter vector shared across states."""

    def __init__(self, obs_dim, act_dim, hidden, rng, init_log_std=0.0,
                 dtype=np.float64):
        self.mean_net = Mlp([obs_dim] + list(hidden) + [act_dim], rng, dtype=dtype)
        self.log_std = np.full(act_dim, float(init_log_std), dtype=np.float64)
        self.act_dim = act_dim

    def params(self):
        return self.mean_net.params() + [self.log_std]

    def forward(self, obs):
        """Returns (mean, log_std broadcast to the batch)."""
        mean = self.mean_net.forward(obs)
        return mean, np.broadcast_to(self.log_std, mean.shape)

    def sample(self, obs, rng):
        mean, log_std = self.forward(obs)
        std = np.exp(log_std)
        noise = rng.standard_normal(mean.shape)
        action = mean + std * noise
        return action, self.log_prob_given(mean, action)

    def act_deterministic(self, obs):
        mean, _ = self.forward(obs)
        return mean

    def log_prob_given(self, mean, action):
        z = (action - mean) / np.exp(self.log_std)
        return (-0.5 * np.sum(z * z, axis=-1)
                - np.sum(self.log_std)
                - 0.5 * self.act_dim * LOG_2PI)

    def entropy(self):
        return float(np.sum(self.log_std) + 0.5 * self.act_dim * (1.0 + LOG_2PI))

    def log_prob_backward(self, mean, action, dlogp):
        """Given d(loss)/d(logp) per sample, gradients w.r.t. mean and
        log_std: dlogp/dmean = z/std, dlogp/dlog_std = z^2 - 1."""
        std = np.exp(self.log_std)
        z = (action - mean) / std
        dmean = dlogp[:, None] * z / std
        dlog_std = (dlogp[:, None] * (z * z - 1.0)).sum(axis=0)
        return dmean, dlog_std


class Adam:
    def __init__(self, params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

    def state_arrays(self):
        """All optimizer state tensors, for checkpointing."""
        return self.m + self.v


def clip_grads_(grads, max_norm):
    """Global-norm gradient clipping in place; returns the pre-clip norm."""
    total = 0.0
    for g in grads:
        total += float(np.sum(g * g))
    norm = np.sqrt(total)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm
