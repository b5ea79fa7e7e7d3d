"""Failure prediction and policy repair by tempered MCMC over policy and environment parameters."""

from .baselines import BaselineConfig, BaselineResult, gd_adversarial, gd_random, l2c_repair, reinforce_adversary, run_baseline
from .core import (
    ConfigError, ExperimentConfig, InvalidValue, MissingKey, RngStream, UnknownEnvironment, UnknownKey,
    config_from_dict, config_hash, elu, load_config, parse_config, serialize_config, stream_id,
)
from .envs import make_env
from .harness import MetricsReport, evaluate, gibbs_toy, normalize_costs
from .radium import FailurePrediction, Population, RepairResult, predict_failures, quench, radium_budget, radium_run
from .samplers import (
    ChainState, TemperedTarget, failure_logprob, mala_step, repair_logprob, rmh_step, run_chain,
    tempering_tau,
)

__version__ = "0.1.0"

__all__ = [
    "BaselineConfig", "BaselineResult", "ChainState", "ConfigError", "ExperimentConfig", "FailurePrediction",
    "InvalidValue", "MetricsReport", "MissingKey", "Population", "RepairResult", "RngStream", "TemperedTarget",
    "UnknownEnvironment", "UnknownKey", "config_from_dict", "config_hash", "elu", "evaluate", "failure_logprob",
    "gd_adversarial", "gd_random", "gibbs_toy", "l2c_repair", "load_config", "make_env", "mala_step",
    "normalize_costs", "parse_config", "predict_failures", "quench", "radium_budget", "radium_run",
    "reinforce_adversary", "repair_logprob", "rmh_step", "run_baseline", "run_chain", "serialize_config",
    "stream_id", "tempering_tau",
]
