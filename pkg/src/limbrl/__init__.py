"""limbrl: yaw-symmetric rigid-body control tasks, limb/joint state
representations, rotation-based replay augmentation, and a DDPG trainer."""

from . import augment, dynamics, features, morphology, spatial
from .audit import run_audit
from .augment import AugmentConfig, Transition, TransitionBatch, augment_batch
from .dynamics import (
    ContactModel,
    GeneralizedState,
    LimbKinematics,
    Simulator,
    bias_forces,
    forward_kinematics,
    mass_matrix,
    mechanical_energy,
    rotate_internal,
)
from .features import FeatureLayout, StateVector, build_joint_state, build_limb_state
from .morphology import MorphologyTree, TaskSpec, builtin_tasks, feature_dimension, get_task, load_morphology

__version__ = "0.1.0"
