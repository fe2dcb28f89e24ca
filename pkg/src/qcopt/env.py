"""Reinforcement-learning environment over circuits.

States are circuits, actions are soft transformations (each followed by
pruning). Both the observation and the action space live on a
(qubit, moment) grid:

* observation: uint8 one-hot array of shape (m, L, 8), channels listed in
  `CHANNELS`. A CNot is written only into its lower qubit's cell; the
  channel says which end is the control.
* actions: cells (qubit, moment, rule) of an (m, L, R) grid, R = number of
  soft rules. A transformation's cell is its locus; the boolean mask marks
  the cells that carry a legal transformation.

Binary layout for exchanging observations and masks with other programs:
row-major over (qubit, moment, channel|rule); observations one byte per
entry, masks packed 8 entries per byte, most significant bit first
(`numpy.packbits` order), zero padded at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .circuit import Circuit, PhasedX, ZRot, angle_close
from .errors import CapacityExceeded, MaskedAction
from .rules import SOFT, Transformation, prune, rules_of_kind, soft_transformations, step as rule_step

CHANNELS = (
    "zrot_half_pi",
    "zrot_pi",
    "zrot_three_half_pi",
    "zrot_generic",
    "phasedx_x_like",
    "phasedx_generic",
    "cnot_control_low",
    "cnot_target_low",
)
NUM_CHANNELS = len(CHANNELS)


@dataclass(frozen=True)
class QualityWeights:
    """q = alpha * depth + beta * gate_count; lower is better."""

    alpha: float = 1.0
    beta: float = 0.2

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("quality weights must be non-negative")

    def __call__(self, circuit: Circuit) -> float:
        return self.alpha * circuit.depth + self.beta * len(circuit.gates)


DEFAULT_WEIGHTS = QualityWeights()


def quality(circuit: Circuit, w: QualityWeights = DEFAULT_WEIGHTS) -> float:
    return w(circuit)


def gate_channel(g) -> int:
    if type(g) is ZRot:
        t = g.theta
        if angle_close(t, math.pi / 2):
            return 0
        if angle_close(t, math.pi):
            return 1
        if angle_close(t, 3 * math.pi / 2):
            return 2
        return 3
    if type(g) is PhasedX:
        x_axis = angle_close(g.axis_phase, 0.0) or angle_close(g.axis_phase, math.pi)
        return 4 if x_axis and angle_close(g.angle, math.pi) else 5
    return 6 if g.control < g.target else 7


def observe(circuit: Circuit, capacity: int) -> np.ndarray:
    """One-hot (m, capacity, 8) grid; gates at moments >= capacity are dropped."""
    obs = np.zeros((circuit.num_qubits, capacity, NUM_CHANNELS), dtype=np.uint8)
    for g, t in zip(circuit.gates, circuit.moments):
        if t < capacity:
            obs[min(g.qubits), t, gate_channel(g)] = 1
    return obs


def encode_observation(obs: np.ndarray) -> bytes:
    return np.ascontiguousarray(obs, dtype=np.uint8).tobytes()


def decode_observation(data: bytes, num_qubits: int, capacity: int) -> np.ndarray:
    return np.frombuffer(data, dtype=np.uint8).reshape(num_qubits, capacity, NUM_CHANNELS).copy()


def pack_mask(mask: np.ndarray) -> bytes:
    return np.packbits(np.asarray(mask, dtype=bool).ravel()).tobytes()


def unpack_mask(data: bytes, shape: tuple[int, int, int]) -> np.ndarray:
    n = int(np.prod(shape))
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), count=n)
    return bits.astype(bool).reshape(shape)


def soft_rule_names() -> list[str]:
    return [r.name for r in rules_of_kind(SOFT)]


@dataclass
class StepOutcome:
    observation: np.ndarray
    reward: float
    done: bool
    #: depth, gate count and quality of the new state, plus flags
    info: dict = field(default_factory=dict)


class CircuitEnv:
    """Single-actor optimisation episode over one start circuit.

    `capacity` fixes the moment axis L; by default it is twice the start
    depth. A step whose result is deeper than L ends the episode with an
    extra reward of -q(new state).
    """

    def __init__(
        self,
        episode_length: int = 250,
        capacity: int | None = None,
        quality_fn: Callable[[Circuit], float] = DEFAULT_WEIGHTS,
        capacity_factor: int = 2,
    ):
        self.episode_length = episode_length
        self.fixed_capacity = capacity
        self.capacity_factor = capacity_factor
        self.quality_fn = quality_fn
        self.rule_names = soft_rule_names()
        self.rule_index = {name: k for k, name in enumerate(self.rule_names)}
        self.circuit: Circuit | None = None

    # -- episode control ---------------------------------------------------

    def reset(self, start: Circuit, capacity: int | None = None) -> np.ndarray:
        if capacity is None:
            capacity = self.fixed_capacity
        if capacity is None:
            capacity = max(self.capacity_factor * start.depth, 1)
        if start.depth > capacity:
            raise CapacityExceeded(f"start depth {start.depth} exceeds capacity {capacity}")
        self.capacity = capacity
        self.circuit = start
        self.t = 0
        self.done = False
        self.q = self.quality_fn(start)
        self._refresh()
        if not self._cells:
            self.done = True
        return self.observation

    def _refresh(self):
        self._options = soft_transformations(self.circuit)
        self._cells = {self.transformation_to_action(t): t for t in self._options}
        self._mask = None
        self._obs = None

    @property
    def observation(self) -> np.ndarray:
        if self._obs is None:
            self._obs = observe(self.circuit, self.capacity)
        return self._obs

    @property
    def mask(self) -> np.ndarray:
        if self._mask is None:
            mask = np.zeros(
                (self.circuit.num_qubits, self.capacity, len(self.rule_names)), dtype=bool
            )
            for q, t, r in self._cells:
                if t < self.capacity:
                    mask[q, t, r] = True
            self._mask = mask
        return self._mask

    @property
    def transformations(self) -> list[Transformation]:
        return self._options

    @property
    def legal_cells(self) -> list[tuple[int, int, int]]:
        return list(self._cells)

    def transformation_to_action(self, t: Transformation) -> tuple[int, int, int]:
        moment, qubit = t.locus
        return (qubit, moment, self.rule_index[t.rule.name])

    def action_to_transformation(self, cell) -> Transformation:
        cell = tuple(int(x) for x in cell)
        try:
            return self._cells[cell]
        except KeyError:
            raise MaskedAction(f"no legal transformation at cell {cell}") from None

    def step(self, cell) -> StepOutcome:
        if self.done:
            raise RuntimeError("episode is over; call reset()")
        t = self.action_to_transformation(cell)
        nxt = rule_step(self.circuit, t)
        q_next = self.quality_fn(nxt)
        reward = self.q - q_next
        self.circuit = nxt
        self.q = q_next
        self.t += 1
        info = {"depth": nxt.depth, "gates": len(nxt.gates), "quality": q_next, "overflow": False}
        if nxt.depth > self.capacity:
            reward -= q_next
            info["overflow"] = True
            info["penalty"] = -q_next
            self.done = True
            self._options, self._cells, self._mask, self._obs = [], {}, None, None
            return StepOutcome(self.observation, reward, True, info)
        self._refresh()
        self.done = self.t >= self.episode_length or not self._cells
        return StepOutcome(self.observation, reward, self.done, info)


def reset(start: Circuit, episode_length: int = 250, capacity: int | None = None, **kw):
    """Create an environment on `start`; returns (env, observation)."""
    env = CircuitEnv(episode_length, capacity, **kw)
    obs = env.reset(start)
    return env, obs


__all__ = [
    "CHANNELS",
    "CircuitEnv",
    "QualityWeights",
    "StepOutcome",
    "decode_observation",
    "encode_observation",
    "gate_channel",
    "observe",
    "pack_mask",
    "prune",
    "quality",
    "reset",
    "unpack_mask",
]
