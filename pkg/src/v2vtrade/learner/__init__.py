from .maddpg import (
    ACT_DIM,
    EGO_DIM,
    SLOT_DIM,
    critic_width,
    LearnerConfig,
    MADDPG,
    act,
    actor_objective_grad,
    critic_loss_grad,
    joint_input,
    pad_joint,
    pad_slots,
    policy,
    soft_update,
    squash,
    to_offer_terms,
)
from .nets import MLP, Adam
from .noise import OUNoise, annealed_sigma
from .replay import ReplayBuffer

__all__ = [
    "ACT_DIM",
    "EGO_DIM",
    "critic_width",
    "SLOT_DIM",
    "LearnerConfig",
    "MADDPG",
    "MLP",
    "Adam",
    "OUNoise",
    "ReplayBuffer",
    "act",
    "actor_objective_grad",
    "annealed_sigma",
    "critic_loss_grad",
    "joint_input",
    "pad_joint",
    "pad_slots",
    "policy",
    "soft_update",
    "squash",
    "to_offer_terms",
]
