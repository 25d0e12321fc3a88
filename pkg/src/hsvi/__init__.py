"""Heuristic search value iteration for POMDPs."""
from .model import (
    Belief, ImpossibleObservation, ModelError, PomdpModel, StochasticityError,
    belief_reward, belief_update, expand, make_model, observation_probability,
)
from .ingest import load_benchmark, load_pomdp, parse_pomdp, serialize_pomdp

__version__ = "0.1.0"
