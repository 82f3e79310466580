import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from coreplace import rl
from coreplace.instances import chain_graph, random_dag
from coreplace.mesh import Mesh, communication_cost
from coreplace.placement import place_oracle, place_zigzag
from coreplace.taskgraph import make_graph


def toy3():
    return make_graph(3, [(0, 1, 5), (1, 2, 3), (0, 2, 1)])


# --------------------------------------------------------------------------- state


def test_single_node_operator():
    g = make_graph(1, [])
    enc = rl.encode_state(g, np.ones((5, 4)))
    assert enc.operator.tolist() == [[1.0]]
    assert np.allclose(enc.embedding, np.maximum(enc.features @ np.ones((5, 4)), 0))


def test_two_node_operator():
    _, L = rl.normalized_operator(make_graph(2, [(0, 1, 9)]))
    assert np.allclose(L, [[0.5, 0.5], [0.5, 0.5]])


@given(n=st.integers(1, 12), seed=st.integers(0, 10_000))
def test_operator_spectral_radius(n, seed):
    _, L = rl.normalized_operator(random_dag(n, seed, edge_prob=0.3))
    assert np.allclose(L, L.T)
    assert np.max(np.abs(np.linalg.eigvalsh(L))) <= 1 + 1e-12


def test_features_scaled():
    X = rl.node_feature_matrix(random_dag(8, 1))
    assert X.shape == (8, 5)
    assert set(np.unique(X[:, 0])) <= {0.0, 1.0}
    assert X[:, 1:].min() >= 0 and X[:, 1:].max() <= 1


def test_pretrained_encoder_shape():
    W = rl.pretrain_encoder(random_dag(6, 0), rl.init_encoder(np.random.default_rng(0)), np.random.default_rng(1), steps=20)
    assert W.shape == (5, 32) and np.isfinite(W).all()


# --------------------------------------------------------------------------- networks


@pytest.mark.parametrize("actor", ["graph", "node"])
def test_zero_weights_give_uniform_mu(actor):
    rng = np.random.default_rng(0)
    p = rl.init_params(rng, 8, 6, 3, actor)
    p["W1"][:] = 0
    p["W2"][:] = 0
    p["b2"][:] = 0.3
    H = rng.normal(size=(3, 8))
    mu, sigma, _ = rl.actor_forward(p, H)
    assert mu.shape == sigma.shape == (3, 2)
    assert np.allclose(mu, math.tanh(0.3))
    assert (sigma >= 0.05).all()


def test_actor_bounded_for_extreme_inputs():
    rng = np.random.default_rng(0)
    p = rl.init_params(rng, 32, 64, 4, "graph")
    mu, sigma, _ = rl.actor_forward(p, np.full((4, 32), 1e6))
    assert np.isfinite(mu).all() and np.isfinite(sigma).all()
    assert (np.abs(mu) <= 1).all() and (sigma >= 0.05).all()


def test_critic_finite():
    rng = np.random.default_rng(0)
    p = rl.init_params(rng, 8, 6, 3, "node")
    v, _ = rl.critic_forward(p, rng.normal(size=(3, 8)))
    assert math.isfinite(v)


# --------------------------------------------------------------------------- actions / reward


def test_discretize_boundaries():
    m = Mesh(4, 8)
    bins = rl.discretize(np.array([[-1.0, -1.0], [1.0, 1.0], [-0.1, 0.0], [-5.0, 5.0]]), m)
    assert bins.tolist() == [[0, 0], [3, 7], [1, 4], [0, 7]]


@given(a=st.floats(-3, 3), w=st.integers(1, 9))
def test_discretize_in_bounds(a, w):
    b = rl.discretize(np.array([[a, a]]), Mesh(w, w))
    assert 0 <= b[0, 0] < w


def test_sample_concentrates_at_sigma_min():
    m = Mesh(4, 8)
    mu = np.array([[0.1, -0.3], [-0.6, 0.45]])  # away from bin edges
    sigma = np.full_like(mu, 1e-9)
    rng = np.random.default_rng(0)
    s = rl.sample_action(mu, sigma, m, rng, [0, 1], batch=20)
    assert (s.targets == s.targets[0]).all()
    assert np.isfinite(s.log_prob).all()


def test_log_prob_is_preclip_density():
    mu = np.zeros((1, 2))
    sigma = np.ones((1, 2))
    a = np.array([[[2.0, 0.0]]])
    expected = -0.5 * 4 - math.log(2 * math.pi)
    assert rl.gaussian_log_prob(a, mu, sigma)[0] == pytest.approx(expected)


def test_reward_examples():
    assert rl.reward(100, 100) == 0.0
    assert rl.reward(0, 100) == 10.0
    assert rl.reward(200, 100) == -10.0
    assert rl.reward(300, 100) == -10.0
    with pytest.raises(ValueError):
        rl.reward(1, 0)


@given(c1=st.integers(0, 199), c2=st.integers(0, 199))
def test_reward_strictly_decreasing(c1, c2):
    if c1 < c2:
        assert rl.reward(c1, 100) > rl.reward(c2, 100)


# --------------------------------------------------------------------------- PPO


def _instance(actor, perturb_old=True, seed=0):
    g = toy3()
    cfg = rl.RLConfig(embed_dim=8, hidden=6, actor=actor)
    rng = np.random.default_rng(seed)
    H = rl.encode_state(g, rl.init_encoder(rng, 8)).embedding
    p = rl.init_params(rng, 8, 6, 3, actor)
    for k in p:
        p[k] = p[k] + rng.normal(0, 0.3, p[k].shape)
    mu, sig, _ = rl.actor_forward(p, H)
    a = mu[None] + sig[None] * rng.standard_normal((16, 3, 2))
    old = rl.gaussian_log_prob(a, mu, sig)
    if perturb_old:
        old = old + rng.normal(0, 0.15, 16)
    r = rng.uniform(-3, 3, 16)
    return cfg, H, p, rl.Trajectory(a, old, r, r - 0.5)


@pytest.mark.parametrize("actor", ["graph", "node"])
def test_gradients_match_finite_differences(actor):
    # seed 3 keeps every sample ratio >= 4e-3 away from the clip edges, so no
    # central difference straddles a kink
    cfg, H, p, traj = _instance(actor, seed=3)

    def total(q):
        s, _ = rl.ppo_losses(q, H, traj, cfg, need_grads=False)
        return s["actor_loss"] + s["critic_loss"]

    stats, grads = rl.ppo_losses(p, H, traj, cfg)
    assert 0 < stats["clip_frac"] < 1  # both branches exercised
    h = 1e-4
    worst = 0.0
    for k in p:
        for idx in np.ndindex(p[k].shape):
            q = dict(p)
            q[k] = p[k].copy()
            q[k][idx] += h
            f1 = total(q)
            q[k][idx] -= 2 * h
            f2 = total(q)
            num = (f1 - f2) / (2 * h)
            worst = max(worst, abs(num - grads[k][idx]) / max(abs(num), abs(grads[k][idx]), 1e-8))
    assert worst < 1e-4


def test_first_epoch_ratio_one():
    cfg, H, p, traj = _instance("graph", perturb_old=False)
    stats, _ = rl.ppo_losses(p, H, traj, cfg)
    assert stats["ratio_mean"] == pytest.approx(1.0, abs=1e-12)
    assert stats["surr_clipped"] == pytest.approx(stats["surr_unclipped"], abs=1e-12)
    assert stats["actor_loss"] == pytest.approx(-traj.advantages.mean(), abs=1e-12)


def test_zero_advantage_zero_actor_grad():
    cfg, H, p, traj = _instance("node")
    traj.advantages = np.zeros_like(traj.advantages)
    _, grads = rl.ppo_losses(p, H, traj, cfg)
    for k in rl.ACTOR_KEYS:
        assert not grads[k].any()


def test_update_clips_and_rejects_nan():
    cfg, H, p, traj = _instance("graph")
    new, hist = rl.ppo_update(p, H, traj, cfg)
    assert len(hist) == cfg.ppo_epochs
    assert any(not np.array_equal(new[k], p[k]) for k in p)
    traj.rewards = traj.rewards * np.nan
    with pytest.raises(FloatingPointError, match="non-finite"):
        rl.ppo_update(p, H, traj, cfg)


def test_adam_optimizer_moves_params():
    cfg, H, p, traj = _instance("node")
    new, _ = rl.ppo_update(p, H, traj, rl.RLConfig(embed_dim=8, hidden=6, actor="node", optimizer="adam", ppo_epochs=2))
    assert any(not np.array_equal(new[k], p[k]) for k in p)


# --------------------------------------------------------------------------- training


def test_train_small_chain():
    g = chain_graph(6)
    m = Mesh(2, 3)
    res = rl.train(g, m, rl.RLConfig(episodes=30, batch_size=32, seed=1))
    assert len(res.curve) == 30
    best = [c for _, _, c in res.curve]
    assert all(a >= b for a, b in zip(best, best[1:]))
    assert res.best_cost <= communication_cost(g, place_zigzag(g, m))
    assert res.best_cost == communication_cost(g, res.placement)
    assert len(set(res.placement.assign.values())) == g.n


def test_train_chain_hits_oracle():
    g = chain_graph(6)
    m = Mesh(2, 3)
    opt = communication_cost(g, place_oracle(g, m))
    hits = sum(rl.train(g, m, rl.RLConfig(episodes=200, batch_size=64, seed=s)).best_cost == opt for s in range(10))
    assert hits >= 8


def test_train_deterministic_and_encoder_frozen():
    g = random_dag(5, 3)
    m = Mesh(3, 2)
    cfg = rl.RLConfig(episodes=5, batch_size=8, seed=7)
    a, b = rl.train(g, m, cfg), rl.train(g, m, cfg)
    assert a.curve == b.curve and a.placement == b.placement
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    W0 = rl.init_encoder(
        np.random.default_rng(np.random.default_rng(7).integers(0, 2**63 - 1, size=2)[0]), 32
    )
    assert np.array_equal(a.encoder, W0)


def test_zero_budget_returns_zigzag(caplog):
    g = random_dag(5, 3)
    m = Mesh(3, 2)
    res = rl.train(g, m, rl.RLConfig(episodes=0))
    assert res.placement == place_zigzag(g, m)
    assert res.curve == []
    assert "budget" in caplog.text


def test_checkpoint_roundtrip(tmp_path):
    g = random_dag(4, 0)
    res = rl.train(g, Mesh(2, 2), rl.RLConfig(episodes=2, batch_size=4, pretrain_encoder=True))
    rl.save_checkpoint(res, tmp_path / "c.json")
    doc = rl.load_checkpoint(tmp_path / "c.json")
    assert doc["encoder_mode"] == "autoencoder"
    assert doc["placement"] == res.placement
    assert all(np.array_equal(doc["params"][k], res.params[k]) for k in res.params)
    assert res.curve_csv().splitlines()[0] == "episode,mean_reward,best_cost"


def test_config_validation():
    with pytest.raises(ValueError):
        rl.RLConfig(optimizer="rmsprop")
    with pytest.raises(ValueError):
        rl.RLConfig(sigma_min=0)
