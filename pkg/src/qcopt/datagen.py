"""Random circuit generation and the random-expansion pipeline.

Pipeline for one episode: generate -> prune -> expand (random soft
transformations, each followed by pruning).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .circuit import CNot, Circuit, PhasedX, ZRot, resynthesize_1q
from .rules import prune, soft_transformations, step


@dataclass(frozen=True)
class GenConfig:
    num_qubits: int = 12
    num_logical_gates: int = 150
    seed: int = 0
    expansion_steps: int = 500
    #: probability that a logical gate is a CNot
    p_cnot: float = 0.8
    #: probability that a local logical gate is a general (Haar) unitary;
    #: otherwise it is a single ZRot or PhasedX with random angles
    p_general_local: float = 0.3

    def __post_init__(self):
        if self.num_qubits < 0 or self.num_logical_gates < 0 or self.expansion_steps < 0:
            raise ValueError("counts must be non-negative")


def haar_unitary_2x2(rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def _local_gates(rng: np.random.Generator, q: int, p_general: float) -> list:
    u = rng.random()
    if u < p_general:
        return resynthesize_1q(haar_unitary_2x2(rng), q)
    if u < p_general + (1 - p_general) / 2:
        return [ZRot(q, rng.uniform(0, 2 * math.pi))]
    return [PhasedX(q, rng.uniform(0, 2 * math.pi), rng.uniform(0, 2 * math.pi))]


def random_circuit(cfg: GenConfig) -> Circuit:
    """Random nearest-neighbour circuit of `cfg.num_logical_gates` logical gates."""
    m = cfg.num_qubits
    if m < 2 and cfg.num_logical_gates:
        raise ValueError("random circuits need at least 2 qubits")
    rng = np.random.default_rng(cfg.seed)
    gates = []
    for _ in range(cfg.num_logical_gates):
        if rng.random() < cfg.p_cnot:
            q = int(rng.integers(m - 1))
            gates.append(CNot(q, q + 1) if rng.random() < 0.5 else CNot(q + 1, q))
        else:
            gates.extend(_local_gates(rng, int(rng.integers(m)), cfg.p_general_local))
    return Circuit(m, gates)


@dataclass
class Expansion:
    circuit: Circuit
    #: applied soft transformations as (rule name, locus)
    log: list = field(default_factory=list)
    #: set when the run stopped early for lack of soft transformations
    stalled: bool = False


def expand_traced(circuit: Circuit, steps: int, seed) -> Expansion:
    rng = np.random.default_rng(seed)
    log = []
    for _ in range(steps):
        options = soft_transformations(circuit)
        if not options:
            return Expansion(circuit, log, stalled=True)
        t = options[int(rng.integers(len(options)))]
        log.append((t.rule.name, t.locus))
        circuit = step(circuit, t)
    return Expansion(circuit, log)


def expand(circuit: Circuit, steps: int, seed) -> Circuit:
    """Apply `steps` uniformly random soft transformations, pruning after each."""
    return expand_traced(circuit, steps, seed).circuit


def episode_seeds(master_seed: int, count: int) -> list[int]:
    ss = np.random.SeedSequence(master_seed)
    return [int(s.generate_state(1, np.uint64)[0]) for s in ss.spawn(count)]


@dataclass(frozen=True)
class Episode:
    seed: int
    original: Circuit
    pruned: Circuit
    start: Circuit


def make_episode(cfg: GenConfig, seed: int) -> Episode:
    original = random_circuit(_with_seed(cfg, seed))
    pruned = prune(original)
    start = expand(pruned, cfg.expansion_steps, seed) if cfg.expansion_steps else pruned
    return Episode(seed, original, pruned, start)


def _with_seed(cfg: GenConfig, seed: int) -> GenConfig:
    from dataclasses import replace

    return replace(cfg, seed=seed)


def episode_stream(cfg: GenConfig, count: int, full: bool = False) -> Iterator:
    """Lazily yield `count` episode start circuits (or full `Episode`s).

    Per-episode seeds are spawned from `cfg.seed`.
    """
    for seed in episode_seeds(cfg.seed, count):
        ep = make_episode(cfg, seed)
        yield ep if full else ep.start
