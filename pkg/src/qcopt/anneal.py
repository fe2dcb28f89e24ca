"""Simulated-annealing baseline over the soft-transformation action space."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .circuit import Circuit
from .env import DEFAULT_WEIGHTS
from .errors import TuningFailed
from .rules import soft_transformations, step


@dataclass(frozen=True)
class AnnealConfig:
    """Exponential cooling T_k = t_start * (t_end / t_start) ** (k / steps)."""

    steps: int = 20000
    t_start: float = 0.3
    t_end: float = 0.003
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not (self.t_start >= self.t_end > 0):
            raise ValueError("need t_start >= t_end > 0")

    def temperature(self, k: int) -> float:
        return self.t_start * (self.t_end / self.t_start) ** (k / self.steps)


def accept_probability(dq: float, temperature: float) -> float:
    if dq <= 0:
        return 1.0
    return math.exp(-dq / temperature)


@dataclass
class AnnealResult:
    best: Circuit
    best_q: float
    final: Circuit
    #: per step: (temperature, q of current state, d, n, accepted)
    trace: list
    #: accepted transformations as (rule name, locus), in order
    log: list
    stalled: bool = False
    #: replaying log[:best_moves] from the input reaches `best`
    best_moves: int = 0

    @property
    def acceptance(self) -> float:
        if not self.trace:
            return 0.0
        return sum(row[4] for row in self.trace) / len(self.trace)

    def best_trace(self) -> np.ndarray:
        """Best-so-far q after every step."""
        q0 = self.trace[0][1] if self.trace else self.best_q
        qs = np.array([q0] + [row[1] for row in self.trace])
        return np.minimum.accumulate(qs)[1:]


def anneal(
    circuit: Circuit,
    cfg: AnnealConfig,
    quality_fn: Callable[[Circuit], float] = DEFAULT_WEIGHTS,
) -> AnnealResult:
    """Metropolis chain on q; returns the best state ever visited.

    The log records accepted moves only: replaying it from `circuit`
    reaches `final`, and its first `best_moves` entries reach `best`.
    """
    rng = np.random.default_rng(cfg.seed)
    cur, q = circuit, quality_fn(circuit)
    best, best_q, best_moves = cur, q, 0
    trace, log = [], []
    for k in range(cfg.steps):
        options = soft_transformations(cur)
        if not options:
            return AnnealResult(best, best_q, cur, trace, log, True, best_moves)
        temp = cfg.temperature(k)
        t = options[int(rng.integers(len(options)))]
        cand = step(cur, t)
        cq = quality_fn(cand)
        dq = cq - q
        # always draw so the random stream does not depend on dq's sign
        u = rng.random()
        accepted = dq <= 0 or u < math.exp(-dq / temp)
        if accepted:
            cur, q = cand, cq
            log.append((t.rule.name, t.locus))
            if q < best_q:
                best, best_q, best_moves = cur, q, len(log)
        trace.append((temp, q, cur.depth, len(cur.gates), accepted))
    return AnnealResult(best, best_q, cur, trace, log, False, best_moves)


def write_trace(result: AnnealResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "temperature", "q", "d", "n", "accepted"])
        for k, (temp, q, d, n, acc) in enumerate(result.trace):
            w.writerow([k, f"{temp:.6g}", f"{q:.6g}", d, n, int(acc)])


def measure_acceptance(circuits: Sequence[Circuit], cfg: AnnealConfig, quality_fn=DEFAULT_WEIGHTS) -> float:
    accepted = total = 0
    for i, c in enumerate(circuits):
        res = anneal(c, replace(cfg, seed=cfg.seed + i), quality_fn)
        accepted += sum(row[4] for row in res.trace)
        total += len(res.trace)
    return accepted / total if total else 0.0


def tune_acceptance(
    cfg: AnnealConfig,
    circuits: Sequence[Circuit],
    target: tuple[float, float] = (0.10, 0.25),
    pilot_steps: int | None = None,
    max_iter: int = 12,
    quality_fn=DEFAULT_WEIGHTS,
) -> AnnealConfig:
    """Rescale the temperature schedule until pilot acceptance lands in `target`.

    t_start and t_end are multiplied by a common scale, keeping the cooling
    ratio. Acceptance is not monotone in the scale (very cold chains sit on
    plateaus of neutral moves), so scales are scanned outwards from 1 by
    factors of 2 and bisected in log space once two neighbouring scales
    bracket the target. Pilots default to the full step count, since
    acceptance over a shortened schedule is not representative.
    """
    if len(circuits) < 10:
        raise ValueError("need at least 10 sample circuits")
    lo_t, hi_t = target
    steps = pilot_steps or cfg.steps
    seen: dict[float, float] = {}

    def scaled(x: float) -> AnnealConfig:
        s = 2.0**x
        return replace(cfg, t_start=cfg.t_start * s, t_end=cfg.t_end * s)

    def acc_at(x: float) -> float:
        seen[x] = measure_acceptance(circuits, replace(scaled(x), steps=steps), quality_fn)
        return seen[x]

    def bracket():
        xs = sorted(seen)
        for x0, x1 in zip(xs, xs[1:]):
            a0, a1 = seen[x0], seen[x1]
            if (a0 < lo_t and a1 > hi_t) or (a0 > hi_t and a1 < lo_t):
                return x0, x1
        return None

    scan = [0.0]
    for k in range(1, max_iter):
        scan += [-k, k]
    it = 0
    while it < max_iter:
        br = bracket()
        if br:
            x = 0.5 * (br[0] + br[1])
        else:
            x = next(x for x in scan if x not in seen)
        it += 1
        a = acc_at(x)
        if lo_t <= a <= hi_t:
            return scaled(x)
    raise TuningFailed(
        f"no schedule scale reached acceptance in {target} after {max_iter} pilot rounds; "
        f"measured {dict(sorted(seen.items()))}"
    )
