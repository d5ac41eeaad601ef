"""Command-line entry point: train, audit, plot, list-tasks.

Output root defaults to the current directory and can be redirected with
the LIMBRL_OUT_ROOT environment variable.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .audit import PASS_THRESHOLD, run_audit
from .augment import AUGMENT_KINDS, AugmentConfig
from .morphology import builtin_tasks, get_task
from .plotting import CURVE_HEADER, plot_curves
from .rl.agent import Hyperparams
from .rl.train import train

_HYPER_FIELDS = {f.name for f in dataclasses.fields(Hyperparams)}


@dataclass
class RunConfig:
    task: str
    repr_kind: str = "limb"
    aug_kind: str = "none"
    rho_aug: float = 0.5
    total_steps: int = 200_000
    seed: int = 0
    out_dir: str = "runs/run"
    eval_every: int = 10_000
    eval_episodes: int = 10
    checkpoint_every: int = 50_000
    record_walltime: bool = True
    gn_sigma: float = 1.0
    hyper: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.task not in builtin_tasks():
            raise ValueError(f"unknown task {self.task!r}")
        if self.repr_kind not in ("limb", "joint"):
            raise ValueError(f"repr must be limb or joint, got {self.repr_kind!r}")
        if self.aug_kind not in AUGMENT_KINDS:
            raise ValueError(f"unknown augmentation {self.aug_kind!r}")
        unknown = set(self.hyper) - _HYPER_FIELDS
        if unknown:
            raise ValueError(f"unknown hyperparameter overrides: {sorted(unknown)}")

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=1, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "RunConfig":
        return RunConfig(**json.loads(text))

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(**self.hyper)

    def augment_config(self) -> AugmentConfig:
        return AugmentConfig(kind=self.aug_kind, rho_aug=self.rho_aug,
                             gn_sigma=self.gn_sigma)


def _out_root() -> Path:
    return Path(os.environ.get("LIMBRL_OUT_ROOT", "."))


def run_training(cfg: RunConfig) -> Path:
    """Execute one seeded run; returns the run directory."""
    cfg.validate()
    task = get_task(cfg.task)
    out = _out_root() / cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json())
    # sidecar schema so stored states stay interpretable across versions
    from .features import layout_for

    (out / "layout.json").write_text(layout_for(task, cfg.repr_kind).to_json())

    curve_path = out / "curve.csv"
    f = curve_path.open("w", newline="")
    writer = csv.writer(f)
    writer.writerow(CURVE_HEADER)
    f.flush()

    def on_eval(point, agent):
        writer.writerow([point.step, f"{point.mean_return:.6f}",
                         f"{point.std_return:.6f}", f"{point.wall_seconds:.3f}"])
        f.flush()

    try:
        train(
            task, cfg.repr_kind, cfg.augment_config(), cfg.hyperparams(),
            total_steps=cfg.total_steps, seed=cfg.seed,
            eval_every=cfg.eval_every, eval_episodes=cfg.eval_episodes,
            record_walltime=cfg.record_walltime, on_eval=on_eval,
            checkpoint_every=cfg.checkpoint_every, checkpoint_dir=str(out),
        )
    finally:
        f.close()
    return out


def _cmd_train(args) -> int:
    seeds = [int(s) for s in str(args.seeds).split(",")]
    cfgs = []
    for seed in seeds:
        out_dir = args.out if len(seeds) == 1 else f"{args.out}/seed{seed}"
        cfgs.append(RunConfig(
            task=args.task, repr_kind=args.repr, aug_kind=args.aug,
            rho_aug=args.rho_aug, total_steps=args.steps, seed=seed,
            out_dir=out_dir, eval_every=args.eval_every,
            eval_episodes=args.eval_episodes,
            checkpoint_every=args.checkpoint_every,
            record_walltime=not args.no_walltime,
            hyper=json.loads(args.hyper),
        ))
    for cfg in cfgs:
        cfg.validate()
    if len(cfgs) == 1 or args.jobs <= 1:
        for cfg in cfgs:
            out = run_training(cfg)
            print(f"run complete: {out}")
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for out in pool.map(run_training, cfgs):
                print(f"run complete: {out}")
    return 0


def _cmd_audit(args) -> int:
    names = list(builtin_tasks()) if args.task == "all" else [args.task]
    failed = False
    for name in names:
        report = run_audit(name, args.repr, samples=args.samples, seed=args.seed)
        for line in report.lines():
            print(line)
        failed = failed or not report.passed
    if failed:
        print(f"AUDIT FAILED: residual above {PASS_THRESHOLD:g}")
        return 1
    return 0


def _cmd_plot(args) -> int:
    plot_curves(args.curves, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_list(args) -> int:
    for name, task in sorted(builtin_tasks().items()):
        c = task.morphology.dof_counts()
        print(f"{name:22s} n={c['n']:2d} d1={c['d1']} "
              f"1dof={c['n_1dof']} 2dof={c['n_2dof']} 3dof={c['n_3dof']} "
              f"actions={c['m']:2d} reward={task.reward_kind}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="limbrl",
                                description="continuous-control training toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run seeded training")
    t.add_argument("--task", required=True)
    t.add_argument("--repr", default="limb", choices=("limb", "joint"))
    t.add_argument("--aug", default="none", choices=AUGMENT_KINDS)
    t.add_argument("--rho-aug", dest="rho_aug", type=float, default=0.5)
    t.add_argument("--steps", type=int, default=200_000)
    t.add_argument("--seeds", default="0", help="comma-separated seed list")
    t.add_argument("--jobs", type=int, default=1)
    t.add_argument("--out", required=True, help="output directory (under LIMBRL_OUT_ROOT)")
    t.add_argument("--eval-every", type=int, default=10_000)
    t.add_argument("--eval-episodes", type=int, default=10)
    t.add_argument("--checkpoint-every", type=int, default=50_000)
    t.add_argument("--no-walltime", action="store_true",
                   help="write 0.0 wall seconds (byte-reproducible output)")
    t.add_argument("--hyper", default="{}", help="JSON hyperparameter overrides")
    t.set_defaults(func=_cmd_train)

    a = sub.add_parser("audit", help="equivariance regression gates")
    a.add_argument("--task", default="all")
    a.add_argument("--repr", default="limb", choices=("limb", "joint"))
    a.add_argument("--samples", type=int, default=1000)
    a.add_argument("--seed", type=int, default=0)
    a.set_defaults(func=_cmd_audit)

    pl = sub.add_parser("plot", help="plot learning curves")
    pl.add_argument("curves", nargs="+")
    pl.add_argument("--out", default="curves.svg")
    pl.set_defaults(func=_cmd_plot)

    ls = sub.add_parser("list-tasks", help="show the task registry")
    ls.set_defaults(func=_cmd_list)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
