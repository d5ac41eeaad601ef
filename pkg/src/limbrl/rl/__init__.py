from .nets import Adam, Mlp, soft_update
from .buffer import ReplayBuffer
from .agent import DdpgAgent, Hyperparams
from .train import Environment, EvalPoint, evaluate, train

__all__ = [
    "Adam", "Mlp", "soft_update", "ReplayBuffer", "DdpgAgent", "Hyperparams",
    "Environment", "EvalPoint", "evaluate", "train",
]
