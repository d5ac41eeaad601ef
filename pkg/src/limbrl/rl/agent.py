"""DDPG with target networks, n-step targets and target-policy smoothing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..augment import TransitionBatch
from .nets import Adam, Mlp, soft_update


@dataclass
class Hyperparams:
    lr: float = 1e-4
    batch_size: int = 256
    actor_update_every: int = 2
    target_update_every: int = 2
    tau: float = 0.01
    smoothing_clip: float = 0.3
    seed_frames: int = 4000
    exploration_steps: int = 2000
    noise_start: float = 1.0
    noise_end: float = 0.1
    noise_decay_steps: int = 1_000_000
    action_repeat: int = 1
    n_step: int = 3
    gamma: float = 0.99
    hidden_size: int = 256
    capacity: int = 1_000_000
    actor_final_scale: float = 0.1
    # float32 keeps updates memory-bound ops ~4x faster; gradients are
    # verified in float64 by the test suite.
    dtype: str = "float32"

    def validate(self) -> None:
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        for name in ("lr", "batch_size", "actor_update_every", "target_update_every",
                     "seed_frames", "n_step", "hidden_size", "capacity"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


class DdpgAgent:
    """Deterministic actor plus Q critic, trained from augmented batches."""

    def __init__(self, state_dim: int, action_dim: int, hp: Hyperparams,
                 rng: np.random.Generator):
        hp.validate()
        self.hp = hp
        self.state_dim = state_dim
        self.action_dim = action_dim
        h = hp.hidden_size
        dt = np.dtype(hp.dtype).type
        self.critic = Mlp([state_dim + action_dim, h, h, 1], out="linear", rng=rng,
                          dtype=dt)
        self.actor = Mlp([state_dim, h, h, action_dim], out="tanh", rng=rng,
                         final_scale=hp.actor_final_scale, dtype=dt)
        self.target_critic = self.critic.clone()
        self.target_actor = self.actor.clone()
        self.critic_opt = Adam(self.critic.parameters(), lr=hp.lr)
        self.actor_opt = Adam(self.actor.parameters(), lr=hp.lr)
        self.critic_updates = 0

    # -- acting -----------------------------------------------------------

    def sigma(self, step: int) -> float:
        """Exploration stddev: linear decay from start to end, then constant."""
        hp = self.hp
        frac = min(max(step, 0), hp.noise_decay_steps) / hp.noise_decay_steps
        return hp.noise_start + (hp.noise_end - hp.noise_start) * frac

    def act(self, state: np.ndarray, step: int, mode: str,
            rng: np.random.Generator | None = None) -> np.ndarray:
        if mode == "eval":
            a = self.actor(state[None, :])[0]
            return np.clip(a, -1.0, 1.0)
        if mode != "train":
            raise ValueError(f"unknown mode {mode!r}")
        if rng is None:
            raise ValueError("train mode needs an rng")
        if step < self.hp.exploration_steps:
            return rng.uniform(-1.0, 1.0, self.action_dim)
        a = self.actor(state[None, :])[0]
        a = a + rng.normal(0.0, self.sigma(step), self.action_dim)
        return np.clip(a, -1.0, 1.0)

    # -- updates ----------------------------------------------------------

    def critic_update(self, batch: TransitionBatch, step: int,
                      rng: np.random.Generator) -> float:
        """One gradient step on the mean squared n-step TD error."""
        hp = self.hp
        B = batch.size
        a_next = self.target_actor(batch.s_next)
        noise = np.clip(rng.normal(0.0, self.sigma(step), a_next.shape),
                        -hp.smoothing_clip, hp.smoothing_clip)
        a_next = np.clip(a_next + noise, -1.0, 1.0)
        q_next = self.target_critic(np.concatenate([batch.s_next, a_next], axis=1))[:, 0]
        y = batch.r + batch.discount * q_next

        q, cache = self.critic.forward(np.concatenate([batch.s, batch.a], axis=1))
        err = q[:, 0] - y
        loss = float(np.mean(err * err))
        dq = (2.0 / B) * err[:, None]
        (dW, db), _ = self.critic.backward(cache, dq)
        self.critic_opt.step(dW + db)
        self.critic_updates += 1
        return loss

    def actor_update(self, batch: TransitionBatch) -> float:
        """One gradient step on -mean Q(s, pi(s)) with the critic frozen."""
        B = batch.size
        a_pi, cache_a = self.actor.forward(batch.s)
        q, cache_q = self.critic.forward(np.concatenate([batch.s, a_pi], axis=1))
        loss = float(-np.mean(q))
        dq = np.full((B, 1), -1.0 / B)
        _, dx = self.critic.backward(cache_q, dq)
        da = dx[:, self.state_dim:]
        (dW, db), _ = self.actor.backward(cache_a, da)
        self.actor_opt.step(dW + db)
        return loss

    def update_targets(self) -> None:
        soft_update(self.target_critic, self.critic, self.hp.tau)
        soft_update(self.target_actor, self.actor, self.hp.tau)

    def update(self, batch: TransitionBatch, step: int,
               rng: np.random.Generator) -> dict:
        """Critic step; actor and target refresh on their cadence."""
        metrics = {"critic_loss": self.critic_update(batch, step, rng)}
        if self.critic_updates % self.hp.actor_update_every == 0:
            metrics["actor_loss"] = self.actor_update(batch)
        if self.critic_updates % self.hp.target_update_every == 0:
            self.update_targets()
        return metrics

    # -- persistence --------------------------------------------------------

    def state_dict(self) -> dict:
        out = {"critic_updates": np.array(self.critic_updates)}
        for name, net in (("critic", self.critic), ("actor", self.actor),
                          ("target_critic", self.target_critic),
                          ("target_actor", self.target_actor)):
            for k, v in net.state_dict().items():
                out[f"{name}.{k}"] = v
        for name, opt in (("critic_opt", self.critic_opt), ("actor_opt", self.actor_opt)):
            for k, v in opt.state_dict().items():
                out[f"{name}.{k}"] = v
        return out

    def load_state_dict(self, d: dict) -> None:
        self.critic_updates = int(d["critic_updates"])
        for name, net in (("critic", self.critic), ("actor", self.actor),
                          ("target_critic", self.target_critic),
                          ("target_actor", self.target_actor)):
            net.load_state_dict({k.split(".", 1)[1]: v for k, v in d.items()
                                 if k.startswith(name + ".") and not k.startswith(name + "_opt")})
        for name, opt in (("critic_opt", self.critic_opt), ("actor_opt", self.actor_opt)):
            opt.load_state_dict({k.split(".", 1)[1]: v for k, v in d.items()
                                 if k.startswith(name + ".")})
