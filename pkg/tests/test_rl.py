import numpy as np
import pytest

from getup2d.nets import Adam, GaussianPolicy, Mlp, clip_grads_
from getup2d.obs import Extrinsics, HistoryBuffer, ObsLayout, build_observation, proprio
from getup2d.ppo import ActorCritic, PpoConfig, RolloutBuffer, gae_advantages, ppo_update


# -- observation layout -----------------------------------------------------------

def test_planar_layout_294():
    layout = ObsLayout.for_model(n_joints=8, n_z=8)
    assert layout.n_s == 26  # 1 pitch + 1 ang vel + 8 q + 8 qd + 8 prev action
    assert layout.total == 8 + 26 + 260 == 294


def test_reference_humanoid_layout_868():
    layout = ObsLayout(n_s=74, n_z=54)
    assert layout.total == 54 + 74 + 10 * 74 == 868


def test_history_zero_padded_at_start():
    layout = ObsLayout.for_model(8)
    hist = HistoryBuffer(layout.n_s)
    s = proprio(0.1, 0.2, np.ones(8), np.ones(8), np.zeros(8))
    obs = build_observation(np.zeros(8), s, hist)
    assert obs.shape == (294,)
    assert np.all(obs[8 + 26:] == 0.0)
    hist.push(s)
    obs = build_observation(np.zeros(8), s, hist)
    assert np.all(obs[-26:] == s)       # newest history slot is last
    assert np.all(obs[8 + 26:-26] == 0.0)


def test_proprio_excludes_linear_velocity():
    s = proprio(0.3, -1.0, np.arange(8.0), np.zeros(8), np.zeros(8))
    assert s.shape == (26,)
    assert s[0] == 0.3
    assert s[1] == -0.25  # scaled angular velocity


def test_build_observation_rejects_mismatch():
    hist = HistoryBuffer(26)
    with pytest.raises(ValueError):
        build_observation(np.zeros(8), np.zeros(25), hist)


def test_extrinsics_vector_dim(robot):
    e = Extrinsics(friction_mu=0.8, mass_scale=np.ones(robot.n_links),
                   com_offset=0.0, control_delay=1, terrain_slope=0.1)
    assert e.to_vector().shape == (Extrinsics.dim(robot.n_links),)


# -- policy basics -----------------------------------------------------------------

def test_zero_net_zero_mean():
    rng = np.random.default_rng(0)
    pol = GaussianPolicy(6, 3, (8,), rng)
    for W in pol.mean_net.W:
        W[:] = 0.0
    for b in pol.mean_net.b:
        b[:] = 0.0
    mean, _ = pol.forward(rng.normal(0, 1, (4, 6)))
    assert np.all(mean == 0.0)


def test_log_prob_at_mean():
    rng = np.random.default_rng(1)
    pol = GaussianPolicy(4, 3, (8,), rng)
    pol.log_std[:] = 0.0
    obs = rng.normal(0, 1, (1, 4))
    mean, _ = pol.forward(obs)
    logp = pol.log_prob_given(mean, mean)
    assert logp[0] == pytest.approx(-1.5 * np.log(2 * np.pi), abs=1e-12)


def test_sampling_deterministic_given_rng():
    rng = np.random.default_rng(2)
    pol = GaussianPolicy(4, 3, (8,), rng)
    obs = np.ones((2, 4))
    a1, lp1 = pol.sample(obs, np.random.default_rng(99))
    a2, lp2 = pol.sample(obs, np.random.default_rng(99))
    assert np.array_equal(a1, a2) and np.array_equal(lp1, lp2)


def test_log_prob_integrates_to_one():
    """1-D Gaussian: sum of exp(logp) over a fine grid approximates 1."""
    rng = np.random.default_rng(3)
    pol = GaussianPolicy(2, 1, (4,), rng)
    pol.log_std[:] = np.log(0.7)
    obs = np.zeros((1, 2))
    mean, _ = pol.forward(obs)
    grid = np.linspace(mean[0, 0] - 6, mean[0, 0] + 6, 4001)
    dx = grid[1] - grid[0]
    mean_rep = np.repeat(mean, grid.size, axis=0)
    logp = pol.log_prob_given(mean_rep, grid[:, None])
    assert np.sum(np.exp(logp)) * dx == pytest.approx(1.0, abs=1e-3)


# -- gradient checks ----------------------------------------------------------------

def _numeric_grad(loss_fn, params, h=1e-5):
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = loss_fn()
            flat[i] = orig - h
            lo = loss_fn()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * h)
        grads.append(g)
    return grads


def _rel_err(a, b):
    # floor sits above the central-difference cancellation noise
    # (~eps * |loss| / 2h ~ 1e-10) so near-zero entries compare on it
    num = np.abs(a - b)
    den = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-5)
    return float((num / den).max())


def _ppo_loss_and_grads(ac, cfg, obs, actions, adv, returns, old_logp, e, hist,
                        z_target, zhat_target=None):
    """Same loss as ppo_update; the stop-gradient adaptation targets are
    passed in as explicit constants so finite differences see the same
    function."""
    n_z = ac.layout.n_z
    k = obs.shape[0]
    z = ac.mu.forward(e)
    o = ac.obs_with_latent(obs, z)
    mean, _ = ac.policy.forward(o)
    logp = ac.policy.log_prob_given(mean, actions)
    ratio = np.exp(logp - old_logp)
    clipped = np.clip(ratio, 1 - cfg.clip_eps, 1 + cfg.clip_eps)
    s1, s2 = ratio * adv, clipped * adv
    policy_loss = -np.mean(np.minimum(s1, s2))
    # the value head reads the latent through a stop-gradient
    v = ac.value.forward(ac.obs_with_latent(obs, z_target))[:, 0]
    value_loss = np.mean((v - returns) ** 2)
    entropy = ac.policy.entropy()
    zhat = ac.phi.forward(hist)
    if zhat_target is None:
        zhat_target = zhat.copy()
    adaptation_loss = (np.mean(np.sum((zhat - z_target) ** 2, axis=-1))
                       + cfg.adaptation_reverse_coef
                       * np.mean(np.sum((z - zhat_target) ** 2, axis=-1)))
    loss = (policy_loss + cfg.value_coef * value_loss
            - cfg.entropy_coef * entropy + cfg.adaptation_coef * adaptation_loss)

    use1 = s1 <= s2
    dlogp = np.where(use1, ratio * adv, 0.0) * (-1.0 / k)
    dmean, dlog_std = ac.policy.log_prob_backward(mean, actions, dlogp)
    dlog_std -= cfg.entropy_coef
    pol_grads, d_obs_pol = ac.policy.mean_net.backward(dmean)
    pol_grads = pol_grads + [dlog_std]
    dv = (cfg.value_coef * 2.0 / k) * (v - returns)[:, None]
    val_grads, d_obs_val = ac.value.backward(dv)
    dzhat = (cfg.adaptation_coef * 2.0 / k) * (zhat - z_target)
    phi_grads, _ = ac.phi.backward(dzhat)
    dz = d_obs_pol[:, :n_z]
    dz = dz + (cfg.adaptation_coef * cfg.adaptation_reverse_coef * 2.0 / k) \
        * (z - zhat_target)
    mu_grads, _ = ac.mu.backward(dz)
    return loss, pol_grads + val_grads + mu_grads + phi_grads


def _small_ac(seed=0):
    layout = ObsLayout(n_s=5, n_z=3, history=2)
    cfg = PpoConfig(policy_hidden=(8,), value_hidden=(8,), encoder_hidden=(6,),
                    desired_kl=0.0)
    return ActorCritic(layout, act_dim=2, e_dim=4, cfg=cfg, seed=seed), cfg, layout


def test_gradients_match_finite_differences():
    """Full PPO loss: analytic vs central differences on all four networks."""
    ac, cfg, layout = _small_ac()
    rng = np.random.default_rng(42)
    worst = 0.0
    for trial in range(6):
        k = 5
        obs = rng.normal(0, 1, (k, layout.total))
        actions = rng.normal(0, 1, (k, 2))
        adv = rng.normal(0, 1, k)
        returns = rng.normal(0, 1, k)
        e = rng.normal(0, 1, (k, 4))
        hist = obs[:, layout.n_z:]
        mean, _ = ac.policy.forward(ac.obs_with_latent(obs, ac.mu.forward(e)))
        old_logp = ac.policy.log_prob_given(mean, actions) + rng.normal(0, 0.1, k)
        z_target = ac.mu.forward(e).copy()
        zhat_target = ac.phi.forward(hist).copy()

        loss, grads = _ppo_loss_and_grads(ac, cfg, obs, actions, adv, returns,
                                          old_logp, e, hist, z_target,
                                          zhat_target)

        def loss_only():
            l, _ = _ppo_loss_and_grads(ac, cfg, obs, actions, adv, returns,
                                       old_logp, e, hist, z_target, zhat_target)
            return l

        num = _numeric_grad(loss_only, ac.all_params())
        for g_a, g_n in zip(grads, num):
            worst = max(worst, _rel_err(g_a, g_n))
    assert worst < 1e-4


def test_update_matches_test_grads():
    """ppo_update must apply exactly the gradients validated above."""
    ac, cfg, layout = _small_ac(seed=7)
    rng = np.random.default_rng(0)
    T, N = 4, 3
    buf = RolloutBuffer(T, N, layout.total, 2, 4)
    for t in range(T):
        obs = rng.normal(0, 1, (N, layout.total))
        e = rng.normal(0, 1, (N, 4))
        z = ac.mu.forward(e)
        o = ac.obs_with_latent(obs, z)
        mean, _ = ac.policy.forward(o)
        a, lp = ac.policy.sample(o, rng)
        v = ac.value.forward(o)[:, 0]
        buf.add(o, a, lp, rng.normal(0, 1, N), v, np.zeros(N, bool), e)
    buf.bootstrap_values = np.zeros(N)
    cfg_one = PpoConfig(policy_hidden=(8,), value_hidden=(8,), encoder_hidden=(6,),
                        epochs=1, minibatches=1, desired_kl=0.0)
    stats = ppo_update(ac, buf, cfg_one, np.random.default_rng(5))
    assert np.isfinite(stats["policy_loss"])
    assert stats["grad_norm"] > 0


# -- GAE ------------------------------------------------------------------------

def _brute_force_gae(rewards, values, dones, bootstrap, gamma, lam):
    T, N = rewards.shape
    adv = np.zeros((T, N))
    for n in range(N):
        for t in range(T):
            acc = 0.0
            coef = 1.0
            for k in range(t, T):
                nv = bootstrap[n] if k == T - 1 else values[k + 1, n]
                mask = 0.0 if dones[k, n] else 1.0
                delta = rewards[k, n] + gamma * nv * mask - values[k, n]
                acc += coef * delta
                if dones[k, n]:
                    break
                coef *= gamma * lam
            adv[t, n] = acc
            if dones[t, n]:
                continue
    return adv


def _random_buffer(rng, T=20, N=3):
    buf = RolloutBuffer(T, N, 4, 2, 3)
    buf.rewards[:] = rng.normal(0, 1, (T, N))
    buf.values[:] = rng.normal(0, 1, (T, N))
    buf.dones[:] = rng.random((T, N)) < 0.15
    buf.bootstrap_values[:] = rng.normal(0, 1, N)
    return buf


def test_gae_lambda_zero_is_td():
    rng = np.random.default_rng(0)
    buf = _random_buffer(rng)
    adv, rets = gae_advantages(buf, 0.99, 0.0)
    T, N = buf.rewards.shape
    for n in range(N):
        for t in range(T):
            nv = buf.bootstrap_values[n] if t == T - 1 else buf.values[t + 1, n]
            mask = 0.0 if buf.dones[t, n] else 1.0
            expected = buf.rewards[t, n] + 0.99 * nv * mask - buf.values[t, n]
            assert adv[t, n] == pytest.approx(expected, abs=1e-12)
    assert np.allclose(rets, adv + buf.values)


def test_gae_gamma_zero_is_myopic():
    rng = np.random.default_rng(1)
    buf = _random_buffer(rng)
    adv, _ = gae_advantages(buf, 0.0, 0.95)
    assert np.allclose(adv, buf.rewards - buf.values, atol=1e-12)


def test_gae_matches_brute_force():
    rng = np.random.default_rng(2)
    for trial in range(5):
        buf = _random_buffer(rng)
        adv, _ = gae_advantages(buf, 0.99, 0.95)
        expected = _brute_force_gae(buf.rewards, buf.values, buf.dones,
                                    buf.bootstrap_values, 0.99, 0.95)
        assert np.abs(adv - expected).max() < 1e-10


# -- invariants -------------------------------------------------------------------

def test_advantage_normalization_in_update():
    rng = np.random.default_rng(3)
    buf = _random_buffer(rng)
    adv, _ = gae_advantages(buf, 0.99, 0.95)
    flat = adv.reshape(-1)
    norm = (flat - flat.mean()) / (flat.std() + 1e-8)
    assert abs(norm.mean()) < 1e-6
    assert abs(norm.std() - 1.0) < 1e-6


def test_zero_advantages_zero_policy_gradient():
    ac, cfg, layout = _small_ac(seed=3)
    rng = np.random.default_rng(4)
    k = 6
    obs = rng.normal(0, 1, (k, layout.total))
    actions = rng.normal(0, 1, (k, 2))
    e = rng.normal(0, 1, (k, 4))
    mean, _ = ac.policy.forward(ac.obs_with_latent(obs, ac.mu.forward(e)))
    old_logp = ac.policy.log_prob_given(mean, actions)
    loss, grads = _ppo_loss_and_grads(
        ac, PpoConfig(entropy_coef=0.0, value_coef=0.0, adaptation_coef=0.0,
                      policy_hidden=(8,), value_hidden=(8,), encoder_hidden=(6,)),
        obs, actions, np.zeros(k), np.zeros(k), old_logp, e, obs[:, layout.n_z:],
        ac.mu.forward(e).copy())
    n_pol = len(ac.policy.params())
    for g in grads[:n_pol]:
        assert np.all(g == 0.0)


def test_seed_determinism_of_training_step():
    results = []
    for _ in range(2):
        ac, cfg, layout = _small_ac(seed=11)
        rng = np.random.default_rng(0)
        buf = RolloutBuffer(6, 2, layout.total, 2, 4)
        for t in range(6):
            obs = rng.normal(0, 1, (2, layout.total))
            e = rng.normal(0, 1, (2, 4))
            o = ac.obs_with_latent(obs, ac.mu.forward(e))
            a, lp = ac.policy.sample(o, rng)
            v = ac.value.forward(o)[:, 0]
            buf.add(o, a, lp, rng.normal(0, 1, 2), v, np.zeros(2, bool), e)
        ppo_update(ac, buf, cfg, np.random.default_rng(1))
        results.append(np.concatenate([p.reshape(-1) for p in ac.all_params()]))
    assert np.array_equal(results[0], results[1])


def test_adam_and_clip():
    p = np.array([1.0, 2.0])
    opt = Adam([p], lr=0.1)
    g = [np.array([0.5, -0.5])]
    opt.step(g)
    assert p[0] < 1.0 and p[1] > 2.0
    grads = [np.array([3.0, 4.0])]
    norm = clip_grads_(grads, 1.0)
    assert norm == pytest.approx(5.0)
    assert np.linalg.norm(grads[0]) == pytest.approx(1.0)


# -- two-armed bandit convergence -------------------------------------------------

def bandit_prob_better_arm(seed, updates=200):
    """One-step episodes; reward 1 iff the 1-D action is positive."""
    layout = ObsLayout(n_s=2, n_z=1, history=1)
    cfg = PpoConfig(policy_hidden=(16,), value_hidden=(16,), encoder_hidden=(4,),
                    epochs=3, minibatches=2, learning_rate=1e-2, entropy_coef=0.0,
                    adaptation_coef=0.0, desired_kl=0.0)
    ac = ActorCritic(layout, act_dim=1, e_dim=2, cfg=cfg, seed=seed)
    rng = np.random.default_rng(seed + 1000)
    N = 64
    obs = np.zeros((N, layout.total))
    e = np.zeros((N, 2))
    for _ in range(updates):
        buf = RolloutBuffer(1, N, layout.total, 1, 2)
        o = ac.obs_with_latent(obs, ac.mu.forward(e))
        a, lp = ac.policy.sample(o, rng)
        r = (a[:, 0] > 0).astype(float)
        v = ac.value.forward(o)[:, 0]
        buf.add(o, a, lp, r, v, np.ones(N, bool), e)
        ppo_update(ac, buf, cfg, rng)
        mean, log_std = ac.policy.forward(o[:1])
        from math import erf, sqrt
        p = 0.5 * (1 + erf(mean[0, 0] / (np.exp(log_std[0, 0]) * sqrt(2))))
        if p > 0.97:
            break
    return p


def test_bandit_converges():
    p = bandit_prob_better_arm(seed=0)
    assert p > 0.95
