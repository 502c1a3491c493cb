"""Workbench for learning generalizing state-value and Q-value policies for
classical planning domains from optimal plans."""

from .pddl import Domain, GroundTask, Instance, PddlError, ground, parse_domain, parse_instance
from .teacher import Dataset, build_dataset, builtin_domain, generate_instance, load_dataset, save_dataset
from .models import Model, build_model, load_model, save_model
from .policy import PolicyConfig, RunResult, run_policy
from .training import GeneralizedPolicyLearner, LossConfig, TrainConfig, train
from .evaluation import ScalingConfig, scaling_evaluation

__version__ = "0.1.0"

__all__ = [
    "Domain", "GroundTask", "Instance", "PddlError", "ground", "parse_domain", "parse_instance",
    "Dataset", "build_dataset", "builtin_domain", "generate_instance", "load_dataset", "save_dataset",
    "Model", "build_model", "load_model", "save_model",
    "PolicyConfig", "RunResult", "run_policy",
    "GeneralizedPolicyLearner", "LossConfig", "TrainConfig", "train",
    "ScalingConfig", "scaling_evaluation",
]
