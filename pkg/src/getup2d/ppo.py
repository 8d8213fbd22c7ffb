"""PPO with GAE and regularized online adaptation, from scratch.

The actor-critic carries four networks: policy mean, state value, the
privileged extrinsics encoder mu (z = mu(e), input to both heads), and the
adaptation encoder phi trained by regression onto stopgrad(mu(e)).
Policy/value gradients flow through z into mu; phi receives only the
regression gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nets import Adam, GaussianPolicy, Mlp, clip_grads_
from .obs import ObsLayout


class DivergedTraining(RuntimeError):
    def __init__(self, msg, last_good_checkpoint=None):
        super().__init__(msg)
        self.last_good_checkpoint = last_good_checkpoint


@dataclass
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 5
    minibatches: int = 4
    learning_rate: float = 3e-4
    value_coef: float = 0.5
    entropy_coef: float = 0.005
    max_grad_norm: float = 20.0  # value-loss scale dominates the global norm
    adaptation_coef: float = 1.0
    adaptation_reverse_coef: float = 0.2  # regularizes mu toward phi's estimate
    policy_hidden: tuple[int, ...] = (256, 128)
    value_hidden: tuple[int, ...] = (256, 128)
    encoder_hidden: tuple[int, ...] = (64,)
    init_log_std: float = 0.0
    desired_kl: float = 0.01   # adaptive LR target; 0 disables
    dtype: str = "float64"

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must lie in [0, 1]")
        if self.clip_eps <= 0.0:
            raise ValueError("clip_eps must be positive")


class RolloutBuffer:
    """Fixed-capacity on-policy storage, time-ordered per environment."""

    def __init__(self, n_steps, n_envs, obs_dim, act_dim, e_dim):
        self.n_steps = n_steps
        self.n_envs = n_envs
        self.obs = np.zeros((n_steps, n_envs, obs_dim))
        self.actions = np.zeros((n_steps, n_envs, act_dim))
        self.log_probs = np.zeros((n_steps, n_envs))
        self.rewards = np.zeros((n_steps, n_envs))
        self.values = np.zeros((n_steps, n_envs))
        self.dones = np.zeros((n_steps, n_envs), dtype=bool)
        self.extrinsics = np.zeros((n_steps, n_envs, e_dim))
        self.bootstrap_values = np.zeros(n_envs)
        self.ptr = 0

    def add(self, obs, action, log_prob, reward, value, done, extrinsics):
        t = self.ptr
        self.obs[t] = obs
        self.actions[t] = action
        self.log_probs[t] = log_prob
        self.rewards[t] = reward
        self.values[t] = value
        self.dones[t] = done
        self.extrinsics[t] = extrinsics
        self.ptr += 1

    @property
    def full(self):
        return self.ptr == self.n_steps


def gae_advantages(buffer: RolloutBuffer, gamma: float, lam: float):
    """A_t = sum_k (gamma lam)^k delta_{t+k} with episode-boundary masking.

    ``dones[t]`` marks that the transition at t ended its episode; the value
    bootstrap after a terminal step is zero. Returns (advantages, returns).
    """
    T, N = buffer.rewards.shape
    adv = np.zeros((T, N))
    last = np.zeros(N)
    for t in range(T - 1, -1, -1):
        next_value = buffer.bootstrap_values if t == T - 1 else buffer.values[t + 1]
        mask = 1.0 - buffer.dones[t].astype(float)
        delta = buffer.rewards[t] + gamma * next_value * mask - buffer.values[t]
        last = delta + gamma * lam * mask * last
        adv[t] = last
    returns = adv + buffer.values
    return adv, returns


class ActorCritic:
    """Bundles the four networks and their single Adam optimizer."""

    def __init__(self, layout: ObsLayout, act_dim: int, e_dim: int,
                 cfg: PpoConfig, seed: int = 0):
        rng = np.random.default_rng(np.random.Philox(key=seed))
        self.layout = layout
        self.act_dim = act_dim
        self.e_dim = e_dim
        self.cfg = cfg
        obs_dim = layout.total
        hist_dim = layout.n_s * (layout.history + 1)
        dtype = np.dtype(cfg.dtype)
        self.policy = GaussianPolicy(obs_dim, act_dim, cfg.policy_hidden, rng,
                                     init_log_std=cfg.init_log_std, dtype=dtype)
        self.value = Mlp([obs_dim] + list(cfg.value_hidden) + [1], rng,
                         out_gain=1.0, dtype=dtype)
        self.mu = Mlp([e_dim] + list(cfg.encoder_hidden) + [layout.n_z], rng,
                      out_gain=1.0, dtype=dtype)
        self.phi = Mlp([hist_dim] + list(cfg.encoder_hidden) + [layout.n_z], rng,
                       out_gain=1.0, dtype=dtype)
        self.optimizer = Adam(self.all_params(), lr=cfg.learning_rate)

    def all_params(self):
        return (self.policy.params() + self.value.params()
                + self.mu.params() + self.phi.params())

    def named_tensors(self):
        """Stable name -> array mapping for checkpoints."""
        out = {}
        groups = {
            "policy": self.policy.mean_net,
            "value": self.value,
            "mu": self.mu,
            "phi": self.phi,
        }
        for gname, net in groups.items():
            for i, W in enumerate(net.W):
                out[f"{gname}/W{i}"] = W
            for i, b in enumerate(net.b):
                out[f"{gname}/b{i}"] = b
        out["policy/log_std"] = self.policy.log_std
        return out

    def encode(self, e: np.ndarray) -> np.ndarray:
        """Privileged latent z = mu(e)."""
        return self.mu.forward(e)

    def adapt(self, history: np.ndarray) -> np.ndarray:
        """Estimated latent from proprioception history."""
        return self.phi.forward(history)

    def obs_with_latent(self, obs: np.ndarray, z: np.ndarray) -> np.ndarray:
        out = np.array(obs, copy=True)
        out[..., : self.layout.n_z] = z
        return out


def ppo_update(ac: ActorCritic, buffer: RolloutBuffer, cfg: PpoConfig, rng):
    """One PPO update over the full buffer; returns a stats dict."""
    T, N = buffer.rewards.shape
    B = T * N
    obs = buffer.obs.reshape(B, -1)
    actions = buffer.actions.reshape(B, -1)
    old_logp = buffer.log_probs.reshape(B)
    extr = buffer.extrinsics.reshape(B, -1)

    adv, returns = gae_advantages(buffer, cfg.gamma, cfg.gae_lambda)
    adv = adv.reshape(B)
    returns = returns.reshape(B)
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    n_z = ac.layout.n_z
    hist = obs[:, n_z:]
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
             "adaptation_loss": 0.0, "clip_fraction": 0.0, "approx_kl": 0.0,
             "grad_norm": 0.0}
    n_batches = 0
    mb_size = max(B // cfg.minibatches, 1)
    for _ in range(cfg.epochs):
        order = rng.permutation(B)
        for start in range(0, B, mb_size):
            idx = order[start:start + mb_size]
            if idx.size == 0:
                continue
            mb_obs = obs[idx]
            mb_act = actions[idx]
            mb_adv = adv[idx]
            mb_ret = returns[idx]
            mb_old = old_logp[idx]
            mb_e = extr[idx]
            mb_hist = hist[idx]
            k = idx.size

            # latent recomputed so policy/value gradients reach mu
            z = ac.mu.forward(mb_e)
            o = ac.obs_with_latent(mb_obs, z)

            mean, _ = ac.policy.forward(o)
            logp = ac.policy.log_prob_given(mean, mb_act)
            ratio = np.exp(logp - mb_old)
            clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
            s1 = ratio * mb_adv
            s2 = clipped * mb_adv
            use_unclipped = s1 <= s2
            policy_loss = -np.mean(np.minimum(s1, s2))

            v = ac.value.forward(o)[:, 0]
            v_err = v - mb_ret
            value_loss = np.mean(v_err**2)

            entropy = ac.policy.entropy()

            zhat = ac.phi.forward(mb_hist)
            # forward term trains phi toward sg(z); the reverse term
            # regularizes mu toward sg(zhat) so the target stays learnable
            a_err = zhat - z
            adaptation_loss = (np.mean(np.sum(a_err**2, axis=-1))
                               * (1.0 + cfg.adaptation_reverse_coef))

            loss = (policy_loss + cfg.value_coef * value_loss
                    - cfg.entropy_coef * entropy
                    + cfg.adaptation_coef * adaptation_loss)
            if not np.isfinite(loss):
                raise DivergedTraining("non-finite PPO loss")

            # backward
            dlogp = np.where(use_unclipped, ratio * mb_adv, 0.0) * (-1.0 / k)
            dmean, dlog_std = ac.policy.log_prob_backward(mean, mb_act, dlogp)
            dlog_std -= cfg.entropy_coef * np.ones_like(ac.policy.log_std)
            pol_grads, d_obs_pol = ac.policy.mean_net.backward(dmean)
            pol_grads = pol_grads + [dlog_std]

            dv = (cfg.value_coef * 2.0 / k) * v_err[:, None]
            val_grads, d_obs_val = ac.value.backward(dv)

            dzhat = (cfg.adaptation_coef * 2.0 / k) * a_err
            phi_grads, _ = ac.phi.backward(dzhat)

            # mu trains through the policy path and the reverse adaptation
            # pull; the value head's much larger gradients are detached so
            # they cannot dominate the latent
            dz = d_obs_pol[:, :n_z]
            dz = dz + (cfg.adaptation_coef * cfg.adaptation_reverse_coef
                       * 2.0 / k) * (-a_err)
            mu_grads, _ = ac.mu.backward(dz)

            grads = pol_grads + val_grads + mu_grads + phi_grads
            gnorm = clip_grads_(grads, cfg.max_grad_norm)
            ac.optimizer.step(grads)
            for p in ac.all_params():
                if not np.all(np.isfinite(p)):
                    raise DivergedTraining("non-finite parameters after update")

            stats["policy_loss"] += policy_loss
            stats["value_loss"] += value_loss
            stats["entropy"] += entropy
            stats["adaptation_loss"] += adaptation_loss
            stats["clip_fraction"] += float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps))
            # non-negative kl estimator: mean((r - 1) - log r)
            stats["approx_kl"] += float(np.mean((ratio - 1.0) - (logp - mb_old)))
            stats["grad_norm"] += gnorm
            n_batches += 1

    for key in stats:
        stats[key] /= max(n_batches, 1)

    if cfg.desired_kl > 0:
        kl = stats["approx_kl"]
        if kl > 2.0 * cfg.desired_kl:
            ac.optimizer.lr = max(ac.optimizer.lr / 1.5, 1e-5)
        elif 0.0 < kl < 0.5 * cfg.desired_kl:
            ac.optimizer.lr = min(ac.optimizer.lr * 1.5, 1e-2)
    stats["learning_rate"] = ac.optimizer.lr
    return stats
