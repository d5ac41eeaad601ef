import numpy as np
import pytest

from limbrl.augment import AugmentConfig, TransitionBatch
from limbrl.features import FeatureLayout, Slice, layout_for
from limbrl.morphology import get_task
from limbrl.rl import DdpgAgent, Environment, Hyperparams, ReplayBuffer, evaluate, train
from limbrl.rl.nets import Mlp

RNG = np.random.default_rng(31)


def _flat_layout(dim):
    return FeatureLayout([Slice("all", 0, dim, "InvariantScalar")], "limb")


def _agent(state_dim=6, action_dim=2, **hp_kw):
    hp = Hyperparams(hidden_size=16, dtype="float64", **hp_kw)
    return DdpgAgent(state_dim, action_dim, hp, np.random.default_rng(0)), hp


def _batch(state_dim=6, action_dim=2, B=16, discount=None, r=None):
    rng = np.random.default_rng(1)
    return TransitionBatch(
        s=rng.normal(size=(B, state_dim)),
        a=rng.uniform(-1, 1, (B, action_dim)),
        r=rng.uniform(0, 1, B) if r is None else np.full(B, float(r)),
        s_next=rng.normal(size=(B, state_dim)),
        discount=np.full(B, 0.97) if discount is None else np.full(B, float(discount)),
        layout=_flat_layout(state_dim),
    )


# ---------------------------------------------------------------- buffer


def test_nstep_assembly_hand_computed():
    # five-step episode with known rewards, gamma 0.99, n = 3
    g = 0.99
    buf = ReplayBuffer(state_dim=1, action_dim=1, n_step=3, gamma=g)
    rewards = [1.0, 2.0, 3.0, 4.0, 5.0]
    for t, r in enumerate(rewards):
        buf.add(np.array([float(t)]), np.array([0.0]), r, done=(t == 4))
    buf.add_boundary(np.array([5.0]))

    r_cum, next_idx, disc = buf.assemble(np.array([0, 1, 2, 3, 4]))
    expected = [
        (1 + 2 * g + 3 * g * g, 3, g**3),   # full window
        (2 + 3 * g + 4 * g * g, 4, g**3),
        (3 + 4 * g + 5 * g * g, 5, 0.0),    # done inside the window
        (4 + 5 * g, 5, 0.0),
        (5.0, 5, 0.0),
    ]
    for i, (rc, ni, dc) in enumerate(expected):
        assert abs(r_cum[i] - rc) < 1e-12
        assert next_idx[i] == ni
        assert disc[i] == dc


def test_nstep_never_crosses_episodes():
    g = 0.5
    buf = ReplayBuffer(state_dim=1, action_dim=1, n_step=3, gamma=g)
    # episode A: two steps; episode B: big rewards that must not leak into A
    buf.add(np.array([0.0]), np.array([0.0]), 1.0, done=False)
    buf.add(np.array([1.0]), np.array([0.0]), 1.0, done=True)
    buf.add_boundary(np.array([2.0]))
    for t in range(5):
        buf.add(np.array([10.0 + t]), np.array([0.0]), 100.0, done=(t == 4))
    buf.add_boundary(np.array([99.0]))
    r_cum, next_idx, disc = buf.assemble(np.array([0]))
    assert r_cum[0] == 1.0 + g * 1.0
    assert next_idx[0] == 2  # the boundary row of episode A
    assert disc[0] == 0.0


def test_buffer_sampleable_counts_and_growth():
    buf = ReplayBuffer(state_dim=2, action_dim=1, n_step=2, gamma=0.9,
                       initial_alloc=16, capacity=10_000)
    assert buf.num_starts() == 0
    for t in range(50):
        buf.add(np.zeros(2), np.zeros(1), 0.0, done=False)
    assert buf.num_starts() == 50 - 2
    out = buf.sample(8, np.random.default_rng(0), _flat_layout(2))
    assert out.s.shape == (8, 2)


def test_buffer_fifo_drop_at_capacity():
    buf = ReplayBuffer(state_dim=1, action_dim=1, n_step=2, gamma=0.9,
                       initial_alloc=8, capacity=64)
    for t in range(200):
        buf.add(np.array([float(t)]), np.zeros(1), 0.0, done=False)
    assert buf.size <= 64
    assert buf.num_starts() > 0
    batch = buf.sample(16, np.random.default_rng(0), _flat_layout(1))
    assert batch.s.min() >= 100.0  # only recent rows survive


# ----------------------------------------------------------------- agent


def test_gamma_zero_target_reduces_to_reward():
    agent, _ = _agent()
    batch = _batch(discount=0.0, r=0.7)
    # run many critic steps on the same batch: Q must approach r
    rng = np.random.default_rng(2)
    agent.critic_opt.lr = 1e-2
    for _ in range(600):
        loss = agent.critic_update(batch, step=10_000, rng=rng)
    q = agent.critic(np.concatenate([batch.s, batch.a], axis=1))[:, 0]
    assert np.max(np.abs(q - 0.7)) < 0.05
    assert loss < 1e-3


def test_critic_loss_finite_nonnegative():
    agent, _ = _agent()
    loss = agent.critic_update(_batch(), step=0, rng=np.random.default_rng(0))
    assert np.isfinite(loss) and loss >= 0.0


def test_convergence_on_single_transition():
    agent, _ = _agent()
    agent.critic_opt.lr = 1e-2
    b = _batch(B=1, discount=0.0, r=0.5)
    rng = np.random.default_rng(3)
    losses = [agent.critic_update(b, 0, rng) for _ in range(300)]
    assert losses[-1] < 1e-4
    assert losses[-1] < losses[0]


def test_actor_moves_toward_synthetic_optimum():
    # critic Q = -||a - a*||^2 has its argmax at a*; actor must approach it
    agent, _ = _agent(state_dim=3, action_dim=2)
    a_star = np.array([0.4, -0.3])

    class QuadCritic:
        def forward(self, x):
            a = x[:, 3:]
            q = -np.sum((a - a_star) ** 2, axis=1, keepdims=True)
            return q, (x, a)

        def backward(self, cache, dq):
            x, a = cache
            da = -2.0 * (a - a_star) * dq
            dx = np.concatenate([np.zeros((x.shape[0], 3)), da], axis=1)
            return ([], []), dx

    agent.critic = QuadCritic()
    agent.actor_opt.lr = 5e-3
    s = RNG.normal(size=(32, 3))
    batch = TransitionBatch(s, np.zeros((32, 2)), np.zeros(32), s,
                            np.zeros(32), _flat_layout(3))
    for _ in range(800):
        agent.actor_update(batch)
    out = agent.actor(s)
    assert np.max(np.abs(out - a_star)) < 0.05


def test_constant_critic_gives_zero_actor_gradient():
    agent, _ = _agent(state_dim=3, action_dim=2)

    class FlatCritic:
        def forward(self, x):
            return np.full((x.shape[0], 1), 3.3), x

        def backward(self, cache, dq):
            return ([], []), np.zeros_like(cache)

    agent.critic = FlatCritic()
    before = [w.copy() for w in agent.actor.W]
    agent.actor_update(_batch(state_dim=3, action_dim=2))
    # Adam normalizes zero gradients to zero steps
    for w0, w1 in zip(before, agent.actor.W):
        assert np.allclose(w0, w1, atol=1e-12)


def test_exploration_schedule_values():
    agent, _ = _agent()
    assert agent.sigma(0) == 1.0
    assert abs(agent.sigma(500_000) - 0.55) < 1e-12
    assert abs(agent.sigma(1_000_000) - 0.1) < 1e-12
    assert abs(agent.sigma(5_000_000) - 0.1) < 1e-12


def test_act_modes_and_bounds():
    agent, hp = _agent()
    s = RNG.normal(size=6)
    rng = np.random.default_rng(5)
    # uniform random phase
    a0 = agent.act(s, 10, "train", rng)
    assert a0.shape == (2,) and np.all(np.abs(a0) <= 1.0)
    # noisy policy phase
    a1 = agent.act(s, hp.exploration_steps + 5, "train", rng)
    assert np.all(np.abs(a1) <= 1.0)
    # eval is deterministic
    e1 = agent.act(s, 123, "eval")
    e2 = agent.act(s, 456, "eval")
    assert np.array_equal(e1, e2)
    assert np.all(np.abs(e1) <= 1.0)


def test_actor_and_target_cadence():
    agent, _ = _agent()
    rng = np.random.default_rng(6)
    b = _batch()
    tw0 = agent.target_critic.W[0].copy()
    m1 = agent.update(b, 100, rng)
    assert "actor_loss" not in m1  # first critic update: counter 1, cadence 2
    assert np.array_equal(tw0, agent.target_critic.W[0])
    m2 = agent.update(b, 101, rng)
    assert "actor_loss" in m2
    assert not np.array_equal(tw0, agent.target_critic.W[0])


# ------------------------------------------------------------- training


def _tiny_hp(**kw):
    base = dict(hidden_size=16, seed_frames=150, exploration_steps=60,
                batch_size=32, dtype="float64")
    base.update(kw)
    return Hyperparams(**base)


def test_everything_below_seed_frames_means_no_updates():
    task = get_task("reacher_hard")
    hp = _tiny_hp(seed_frames=5000)
    curve = train(task, "limb", AugmentConfig(kind="none"), hp,
                  total_steps=300, seed=0, eval_every=10_000)
    assert curve == []  # no evals scheduled, and no crash without updates


def test_train_determinism_same_seed():
    task = get_task("reacher_hard")
    hp = _tiny_hp()
    kw = dict(total_steps=700, seed=3, eval_every=350, eval_episodes=2,
              record_walltime=False)
    c1 = train(task, "limb", AugmentConfig(kind="euclidean", rho_aug=0.5), hp, **kw)
    c2 = train(task, "limb", AugmentConfig(kind="euclidean", rho_aug=0.5), hp, **kw)
    assert [(p.step, p.mean_return, p.std_return) for p in c1] == \
           [(p.step, p.mean_return, p.std_return) for p in c2]


def test_rho_zero_euclidean_equals_none():
    task = get_task("reacher_hard")
    hp = _tiny_hp()
    kw = dict(total_steps=600, seed=4, eval_every=300, eval_episodes=2,
              record_walltime=False)
    ca = train(task, "limb", AugmentConfig(kind="euclidean", rho_aug=0.0), hp, **kw)
    cb = train(task, "limb", AugmentConfig(kind="none"), hp, **kw)
    assert [(p.step, p.mean_return) for p in ca] == [(p.step, p.mean_return) for p in cb]


def test_evaluation_does_not_mutate_learner():
    task = get_task("reacher_hard")
    agent, _ = _agent(state_dim=layout_for(task, "limb").dim,
                      action_dim=task.morphology.action_size)
    params0 = [p.copy() for p in agent.critic.parameters() + agent.actor.parameters()]
    evaluate(agent, task, "limb", episodes=1, rng=np.random.default_rng(0))
    for p0, p1 in zip(params0, agent.critic.parameters() + agent.actor.parameters()):
        assert np.array_equal(p0, p1)


def test_environment_episode_length_and_blowup_handling():
    task = get_task("reacher_hard")
    env = Environment(task, "limb", np.random.default_rng(0))
    s = env.reset()
    done = False
    steps = 0
    rng = np.random.default_rng(1)
    while not done:
        s, r, done, info = env.step(rng.uniform(-1, 1, env.action_size))
        assert 0.0 <= r <= 1.0
        steps += 1
        assert steps <= task.episode_steps
    assert steps == task.episode_steps
