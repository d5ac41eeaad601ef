"""Environment wrapper and the DDPG training loop."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..augment import AugmentConfig, augment_batch
from ..dynamics import GeneralizedState, Simulator, initial_state, sample_target
from ..errors import NumericalBlowup
from ..features import StateVector, build_state, layout_for
from ..morphology import TaskSpec
from .agent import DdpgAgent, Hyperparams
from .buffer import ReplayBuffer


@dataclass
class EvalPoint:
    step: int
    mean_return: float
    std_return: float
    wall_seconds: float


class Environment:
    """Episode loop around the simulator: resets, observation building, rewards.

    Episodes run exactly ``task.episode_steps`` control steps; integrator
    blowups terminate early and zero the final reward.
    """

    def __init__(self, task: TaskSpec, repr_kind: str, rng: np.random.Generator):
        self.task = task
        self.repr_kind = repr_kind
        self.rng = rng
        self.sim = Simulator(task)
        self.gs: GeneralizedState | None = None
        self.target: np.ndarray | None = None
        self.t = 0

    @property
    def action_size(self) -> int:
        return self.task.morphology.action_size

    def observe(self) -> StateVector:
        return build_state(self.task, self.repr_kind, self.gs, target=self.target)

    def reset(self) -> StateVector:
        self.gs = initial_state(self.task, self.rng)
        self.target = sample_target(self.task, self.rng)
        self.t = 0
        return self.observe()

    def step(self, action: np.ndarray):
        """Returns (next_state, reward, done, info)."""
        if self.gs is None:
            raise RuntimeError("call reset() before step()")
        self.t += 1
        try:
            res = self.sim.step(self.gs, action, target=self.target)
        except NumericalBlowup:
            # abort the episode; reuse the last good state as the terminal one
            return self.observe(), 0.0, True, {"blowup": True}
        self.gs = res.gs
        done = self.t >= self.task.episode_steps
        return self.observe(), res.reward, done, {"blowup": False}

    def snapshot(self):
        """Underlying physical state, for the audit oracles."""
        return self.gs.copy(), None if self.target is None else self.target.copy()


def evaluate(agent: DdpgAgent, task: TaskSpec, repr_kind: str, episodes: int,
             rng: np.random.Generator) -> tuple[float, float]:
    """Mean and std of episodic returns under the noiseless policy.

    Uses its own environment and RNG stream; never touches the learner.
    """
    returns = np.empty(episodes)
    env = Environment(task, repr_kind, rng)
    for e in range(episodes):
        s = env.reset()
        total = 0.0
        done = False
        while not done:
            a = agent.act(s.values, 0, "eval")
            s, r, done, _ = env.step(a)
            total += r
        returns[e] = total
    return float(returns.mean()), float(returns.std())


def save_checkpoint(path, agent: DdpgAgent, step: int, seed: int, rngs: dict) -> None:
    """Versioned blob: parameter and optimizer arrays, RNG states, step counter.

    Layout (npz): ``version``, ``step``, ``seed``, ``rng_state_json`` plus one
    entry per agent array, named ``<net>.<param>`` as in DdpgAgent.state_dict.
    """
    import json

    states = {name: rng.bit_generator.state for name, rng in rngs.items()}
    np.savez(
        path,
        version=np.array(1),
        step=np.array(step),
        seed=np.array(seed),
        rng_state_json=np.array(json.dumps(states)),
        **agent.state_dict(),
    )


def load_checkpoint(path, agent: DdpgAgent) -> dict:
    """Restore agent arrays; returns {step, seed, rng_states}."""
    import json

    with np.load(path, allow_pickle=False) as blob:
        if int(blob["version"]) != 1:
            raise ValueError(f"unsupported checkpoint version {blob['version']}")
        agent.load_state_dict({k: blob[k] for k in blob.files
                               if "." in k or k == "critic_updates"})
        return {
            "step": int(blob["step"]),
            "seed": int(blob["seed"]),
            "rng_states": json.loads(str(blob["rng_state_json"])),
        }


def train(task: TaskSpec, repr_kind: str, aug: AugmentConfig, hp: Hyperparams,
          total_steps: int, seed: int, eval_every: int = 10_000,
          eval_episodes: int = 10, record_walltime: bool = True,
          on_eval=None, checkpoint_every: int = 0,
          checkpoint_dir=None) -> list[EvalPoint]:
    """Run DDPG on one task; returns the evaluation curve.

    Fully determined by ``seed``: environment resets, exploration noise,
    batch sampling, augmentation draws and evaluation episodes all use
    child streams of one seed sequence.
    """
    root = np.random.SeedSequence(seed)
    (env_ss, net_ss, noise_ss, sample_ss, aug_ss, smooth_ss, eval_ss) = root.spawn(7)
    env = Environment(task, repr_kind, np.random.default_rng(env_ss))
    layout = layout_for(task, repr_kind)
    agent = DdpgAgent(layout.dim, task.morphology.action_size, hp,
                      np.random.default_rng(net_ss))
    noise_rng = np.random.default_rng(noise_ss)
    sample_rng = np.random.default_rng(sample_ss)
    aug_rng = np.random.default_rng(aug_ss)
    smooth_rng = np.random.default_rng(smooth_ss)

    alloc = min(hp.capacity, total_steps + task.episode_steps + hp.n_step + 8)
    buffer = ReplayBuffer(layout.dim, task.morphology.action_size,
                          capacity=hp.capacity, n_step=hp.n_step, gamma=hp.gamma,
                          initial_alloc=alloc)

    curve: list[EvalPoint] = []
    t0 = time.perf_counter()
    s = env.reset()
    for step in range(1, total_steps + 1):
        a = agent.act(s.values, step, "train", noise_rng)
        s_next, r, done, info = env.step(a)
        buffer.add(s.values, a, r, done)
        if done:
            buffer.add_boundary(s_next.values)
            s = env.reset()
        else:
            s = s_next

        if step >= hp.seed_frames and buffer.num_starts() >= hp.batch_size:
            batch = buffer.sample(hp.batch_size, sample_rng, layout)
            batch_aug = augment_batch(batch, aug, aug_rng)
            if aug.kind in ("euclidean", "joint_euclidean"):
                # symmetry-based augmentation must keep rewards bit-identical
                assert np.array_equal(batch_aug.r, batch.r)
            agent.update(batch_aug, step, smooth_rng)

        if step % eval_every == 0:
            mean, std = evaluate(agent, task, repr_kind, eval_episodes,
                                 np.random.default_rng(eval_ss.spawn(1)[0]))
            wall = time.perf_counter() - t0 if record_walltime else 0.0
            point = EvalPoint(step, mean, std, wall)
            curve.append(point)
            if on_eval is not None:
                on_eval(point, agent)

        if checkpoint_every and checkpoint_dir is not None \
                and step % checkpoint_every == 0:
            save_checkpoint(
                f"{checkpoint_dir}/ckpt_{step:08d}.npz", agent, step, seed,
                {"env": env.rng, "noise": noise_rng, "sample": sample_rng,
                 "augment": aug_rng, "smooth": smooth_rng},
            )
    return curve
