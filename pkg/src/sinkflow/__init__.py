"""Forecasting mass flow between categories with a differentiable Sinkhorn layer."""

from .dataio import FactionTimeline, FlowData, SplitSpec, SyntheticSpec, build_marginals_and_plans, generate_synthetic
from .metrics import faction_rmse, flow_cost, multi_step_cost
from .model import LossConfig, ModelInput, ModelParams, init_params, loss, predict_plan, rollout, train
from .ot_layer import SinkhornConfig, null_space_recenter, sinkhorn_backward, sinkhorn_forward

__version__ = "0.1.0"

__all__ = [
    "FactionTimeline",
    "FlowData",
    "SplitSpec",
    "SyntheticSpec",
    "build_marginals_and_plans",
    "generate_synthetic",
    "faction_rmse",
    "flow_cost",
    "multi_step_cost",
    "LossConfig",
    "ModelInput",
    "ModelParams",
    "init_params",
    "loss",
    "predict_plan",
    "rollout",
    "train",
    "SinkhornConfig",
    "null_space_recenter",
    "sinkhorn_backward",
    "sinkhorn_forward",
]
