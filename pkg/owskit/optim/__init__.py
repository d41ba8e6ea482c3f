"""Adam과 저랭크 투영 Adam"""

from owskit.optim.adam import AdamState, adam_step
from owskit.optim.lowrank import (
    LowRankOptState,
    ProjectionSide,
    compute_projector,
    low_rank_state_elements,
    low_rank_step,
    project,
    project_back,
    projected_shape,
    projection_side,
    projector_shape,
)
from owskit.optim.snapshot import load_optimizer_state, save_optimizer_state

__all__ = [
    "AdamState",
    "LowRankOptState",
    "ProjectionSide",
    "adam_step",
    "compute_projector",
    "load_optimizer_state",
    "low_rank_state_elements",
    "low_rank_step",
    "project",
    "project_back",
    "projected_shape",
    "projection_side",
    "projector_shape",
    "save_optimizer_state",
]
