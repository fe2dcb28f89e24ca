"""Circuit optimisation by rule-based rewriting, simulated annealing and RL.

Modules:
    circuit  gate set, circuits, scheduling, dense unitaries, JSON I/O
    rules    hard/soft transformation rules, pruning, local verification
    datagen  random circuits and the random-expansion pipeline
    env      RL environment (observation grid, action mask, reward)
    anneal   simulated-annealing baseline
    agent    convolutional policy/value net and PPO
    qaoa     MaxCut QAOA compilation onto a qubit chain
    cli      command-line front end
"""

from .circuit import (
    CNot,
    Circuit,
    PhasedX,
    ZRot,
    depth,
    equivalent_up_to_phase,
    gate_count,
    load_circuit,
    render,
    resynthesize_1q,
    save_circuit,
    schedule_asap,
    success_probability,
    unitary_of,
)
from .env import QualityWeights, quality
from .rules import apply, enumerate_transformations, prune, verify_local

__version__ = "0.1.0"

__all__ = [
    "CNot",
    "Circuit",
    "PhasedX",
    "QualityWeights",
    "ZRot",
    "apply",
    "depth",
    "enumerate_transformations",
    "equivalent_up_to_phase",
    "gate_count",
    "load_circuit",
    "prune",
    "quality",
    "render",
    "resynthesize_1q",
    "save_circuit",
    "schedule_asap",
    "success_probability",
    "unitary_of",
    "verify_local",
]
