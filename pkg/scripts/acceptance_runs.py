"""Populate the acceptance-gate training cache (15 seeded runs, several hours).

The acceptance suite (tests/test_acceptance.py) reuses these runs when their
configs match, and launches any missing ones itself. Running this script ahead
of time keeps the pytest wall-clock short:

    OMP_NUM_THREADS=1 python scripts/acceptance_runs.py --jobs 2
"""

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

os.environ.setdefault("OMP_NUM_THREADS", "1")
sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from limbrl.cli import RunConfig, run_training  # noqa: E402

CACHE = Path(os.environ.get(
    "LIMBRL_ACCEPT_CACHE",
    Path(__file__).resolve().parent.parent / ".acceptance_cache"))


def smoke_config(seed: int) -> RunConfig:
    return RunConfig(
        task="reacher_hard", repr_kind="limb", aug_kind="none", rho_aug=0.0,
        total_steps=200_000, seed=seed,
        out_dir=str(CACHE / f"smoke_reacher_seed{seed}"),
        eval_every=10_000, eval_episodes=10, checkpoint_every=0,
        record_walltime=True,
    )


def directional_config(rho: float, seed: int) -> RunConfig:
    tag = "r25" if rho > 0 else "r0"
    return RunConfig(
        task="hopper3d_hop_lite", repr_kind="limb", aug_kind="euclidean",
        rho_aug=rho, total_steps=200_000, seed=seed,
        out_dir=str(CACHE / f"dir_hoplite_{tag}_seed{seed}"),
        eval_every=40_000, eval_episodes=10, checkpoint_every=0,
        record_walltime=True,
    )


def matrix() -> list:
    cfgs = [smoke_config(seed) for seed in range(5)]
    for rho in (0.25, 0.0):
        cfgs += [directional_config(rho, seed) for seed in range(5)]
    return cfgs


def is_complete(cfg: RunConfig) -> bool:
    curve = Path(cfg.out_dir) / "curve.csv"
    if not curve.exists():
        return False
    rows = sum(1 for _ in curve.open()) - 1
    return rows >= cfg.total_steps // cfg.eval_every


def run_one(cfg: RunConfig) -> str:
    if is_complete(cfg):
        return f"cached {cfg.out_dir}"
    run_training(cfg)
    return f"done {cfg.out_dir}"


def run_matrix(jobs: int = 2) -> None:
    """Smoke runs go one at a time: parallel training contends for memory
    bandwidth and would inflate the recorded wall times the smoke gate checks.
    The directional runs have no wall-time criterion and run ``jobs`` wide.
    """
    for cfg in [smoke_config(seed) for seed in range(5)]:
        print(run_one(cfg), flush=True)
    directional = [directional_config(rho, seed)
                   for rho in (0.25, 0.0) for seed in range(5)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for msg in pool.map(run_one, directional):
            print(msg, flush=True)


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--jobs", type=int, default=2)
    args = ap.parse_args()
    run_matrix(args.jobs)
    print("acceptance cache complete")
