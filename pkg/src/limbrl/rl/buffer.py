"""Replay storage with n-step return assembly.

Rows are appended per environment step: (state, action, reward, done).
After a terminal step the final next state is appended as a boundary row
that can never be sampled as a start. n-step sums stop at episode ends;
the bootstrap discount is gamma^n, or 0 when the episode ended inside the
window (episode boundaries are treated as terminal).

Arrays grow geometrically up to ``capacity``; at capacity the oldest
quarter is dropped, keeping FIFO semantics without ring arithmetic in the
sampling path.
"""

from __future__ import annotations

import numpy as np

from ..augment import TransitionBatch
from ..features import FeatureLayout


class ReplayBuffer:
    def __init__(self, state_dim: int, action_dim: int, capacity: int = 10**6,
                 n_step: int = 3, gamma: float = 0.99, initial_alloc: int = 4096):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.capacity = int(capacity)
        self.n_step = int(n_step)
        self.gamma = float(gamma)
        self._alloc = min(max(int(initial_alloc), 16), self.capacity)
        self.S = np.zeros((self._alloc, state_dim))
        self.A = np.zeros((self._alloc, action_dim))
        self.R = np.zeros(self._alloc)
        self.DONE = np.zeros(self._alloc, dtype=bool)
        self.BOUND = np.zeros(self._alloc, dtype=bool)
        self.size = 0
        self._starts = np.zeros(self._alloc, dtype=np.int64)
        self._n_starts = 0
        self._gammas = self.gamma ** np.arange(self.n_step)

    def __len__(self) -> int:
        return self.size

    def _ensure_room(self, extra: int = 1) -> None:
        if self.size + extra <= self._alloc:
            return
        if self._alloc < self.capacity:
            new = min(max(self._alloc * 2, self.size + extra), self.capacity)
            grow = lambda arr: np.concatenate(
                [arr, np.zeros((new - self._alloc,) + arr.shape[1:], dtype=arr.dtype)])
            self.S, self.A = grow(self.S), grow(self.A)
            self.R, self.DONE, self.BOUND = grow(self.R), grow(self.DONE), grow(self.BOUND)
            self._starts = np.concatenate(
                [self._starts, np.zeros(new - self._alloc, dtype=np.int64)])
            self._alloc = new
            return
        # full: drop the oldest quarter
        drop = max(self.capacity // 4, extra)
        keep = self.size - drop
        for arr in (self.S, self.A, self.R, self.DONE, self.BOUND):
            arr[:keep] = arr[drop:self.size]
        self.size = keep
        kept = self._starts[:self._n_starts]
        kept = kept[kept >= drop] - drop
        self._n_starts = len(kept)
        self._starts[:self._n_starts] = kept

    def add(self, s: np.ndarray, a: np.ndarray, reward: float, done: bool) -> None:
        self._ensure_room()
        i = self.size
        self.S[i] = s
        self.A[i] = a
        self.R[i] = reward
        self.DONE[i] = done
        self.BOUND[i] = False
        self._starts[self._n_starts] = i
        self._n_starts += 1
        self.size += 1

    def add_boundary(self, s_final: np.ndarray) -> None:
        """Store the terminal next state after a done step."""
        self._ensure_room()
        i = self.size
        self.S[i] = s_final
        self.A[i] = 0.0
        self.R[i] = 0.0
        self.DONE[i] = False
        self.BOUND[i] = True
        self.size += 1

    def num_starts(self) -> int:
        limit = self.size - self.n_step
        if limit <= 0:
            return 0
        return int(np.searchsorted(self._starts[:self._n_starts], limit, side="left"))

    def assemble(self, idx: np.ndarray):
        """n-step targets for start rows ``idx`` (vectorized)."""
        n = self.n_step
        window = idx[:, None] + np.arange(n)[None, :]
        dmat = self.DONE[window]
        ended = dmat.any(axis=1)
        first = np.where(ended, dmat.argmax(axis=1), n - 1)
        K = first + 1
        mask = np.arange(n)[None, :] <= first[:, None]
        r_cum = (self.R[window] * mask * self._gammas[None, :]).sum(axis=1)
        next_idx = idx + K
        discount = np.where(ended, 0.0, self.gamma ** n)
        return r_cum, next_idx, discount

    def sample(self, batch_size: int, rng: np.random.Generator,
               layout: FeatureLayout) -> TransitionBatch:
        valid = self.num_starts()
        if valid == 0:
            raise ValueError("buffer has no sampleable transitions yet")
        idx = self._starts[rng.integers(0, valid, batch_size)]
        r_cum, next_idx, discount = self.assemble(idx)
        return TransitionBatch(
            s=self.S[idx].copy(),
            a=self.A[idx].copy(),
            r=r_cum,
            s_next=self.S[next_idx].copy(),
            discount=discount,
            layout=layout,
        )
