"""MaxCut QAOA circuits compiled onto the nearest-neighbour chain.

Each cycle applies exp(-i gamma Z_u Z_v) for every edge, then
exp(-i beta X) on every qubit. Edges between nodes that are not neighbours
on the chain are reached with an odd-even transposition swap network; a
ZZ followed by a SWAP on the same pair is fused into three CNots plus the
ZRot. The network runs from whatever layout the previous cycle left, so the
final layout is a permutation that `CompiledQaoa.layout` reports.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from .circuit import DEFAULT_QUBIT_CAP, CNot, Circuit, PhasedX, ZRot
from .errors import QubitCapExceeded, TooManyNodes
from .rules import prune


@dataclass(frozen=True)
class Graph:
    num_nodes: int
    edges: frozenset

    def __init__(self, num_nodes: int, edges: Iterable[tuple[int, int]] = ()):
        norm = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop on node {u}")
            if not (0 <= u < num_nodes and 0 <= v < num_nodes):
                raise ValueError(f"edge ({u}, {v}) outside 0..{num_nodes - 1}")
            e = (min(u, v), max(u, v))
            if e in norm:
                raise ValueError(f"duplicate edge {e}")
            norm.add(e)
        object.__setattr__(self, "num_nodes", int(num_nodes))
        object.__setattr__(self, "edges", frozenset(norm))

    @classmethod
    def complete(cls, n: int) -> "Graph":
        return cls(n, [(u, v) for u in range(n) for v in range(u + 1, n)])

    @classmethod
    def parse(cls, text: str, num_nodes: int | None = None) -> "Graph":
        """Edge list, one "u v" pair per line; '#' starts a comment."""
        edges = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                u, v = line.split()
                edges.append((int(u), int(v)))
        if num_nodes is None:
            num_nodes = 1 + max((max(e) for e in edges), default=-1)
        return cls(num_nodes, edges)


@dataclass(frozen=True)
class QaoaParams:
    gammas: tuple
    betas: tuple
    #: set to silence the warning for angles close to special values
    allow_special: bool = False

    def __init__(self, gammas: Sequence[float], betas: Sequence[float], allow_special: bool = False):
        if len(gammas) != len(betas) or len(gammas) == 0:
            raise ValueError("need one (gamma, beta) pair per cycle, at least one cycle")
        object.__setattr__(self, "gammas", tuple(float(g) for g in gammas))
        object.__setattr__(self, "betas", tuple(float(b) for b in betas))
        object.__setattr__(self, "allow_special", allow_special)

    @property
    def cycles(self) -> int:
        return len(self.gammas)


def special_angles(params: QaoaParams, tol: float = 1e-6) -> list[str]:
    """Gate angles (2 gamma, 2 beta) lying within `tol` of a multiple of pi/2."""
    out = []
    for c, (g, b) in enumerate(zip(params.gammas, params.betas)):
        for name, x in (("gamma", 2 * g), ("beta", 2 * b)):
            r = math.remainder(x, math.pi / 2)
            if abs(r) < tol:
                out.append(f"cycle {c}: 2*{name} = {x!r} is within {tol} of a multiple of pi/2")
    return out


@dataclass
class CompiledQaoa:
    circuit: Circuit
    #: layout[q] = graph node held by qubit q at the end of the circuit
    layout: tuple
    raw_gate_count: int


def _zz(a: int, b: int, gamma: float) -> list:
    return [CNot(a, b), ZRot(b, 2 * gamma), CNot(a, b)]


def _swap(a: int, b: int) -> list:
    return [CNot(a, b), CNot(b, a), CNot(a, b)]


def _zz_swap(a: int, b: int, gamma: float) -> list:
    return [CNot(a, b), ZRot(b, 2 * gamma), CNot(b, a), CNot(a, b)]


def _cycle(graph: Graph, layout: list, gamma: float) -> list:
    n = len(layout)
    todo = set(graph.edges)
    gates = []
    layer = 0
    while todo:
        pairs = [(i, i + 1) for i in range(layer % 2, n - 1, 2)]
        met = [(i, j) for i, j in pairs if tuple(sorted((layout[i], layout[j]))) in todo]
        for i, j in met:
            todo.discard(tuple(sorted((layout[i], layout[j]))))
        last = not todo
        met = set(met)
        for i, j in pairs:
            if last:
                if (i, j) in met:
                    gates += _zz(i, j, gamma)
                continue
            gates += _zz_swap(i, j, gamma) if (i, j) in met else _swap(i, j)
            layout[i], layout[j] = layout[j], layout[i]
        layer += 1
        if layer > n + 1:
            raise AssertionError("swap network failed to meet every edge")
    return gates


def compile_maxcut(graph: Graph, params: QaoaParams, num_qubits: int | None = None) -> CompiledQaoa:
    if num_qubits is None:
        num_qubits = graph.num_nodes
    if graph.num_nodes > num_qubits:
        raise TooManyNodes(f"{graph.num_nodes} nodes do not fit on {num_qubits} qubits")
    if not params.allow_special:
        for msg in special_angles(params):
            warnings.warn(msg, stacklevel=2)
    layout = list(range(num_qubits))
    gates = []
    for gamma, beta in zip(params.gammas, params.betas):
        gates += _cycle(graph, layout, gamma)
        gates += [PhasedX(q, 0.0, 2 * beta) for q in range(num_qubits)]
    return CompiledQaoa(prune(Circuit(num_qubits, gates)), tuple(layout), len(gates))


# ---------------------------------------------------------------------------
# dense reference


def maxcut_reference_unitary(graph: Graph, params: QaoaParams, cap: int = DEFAULT_QUBIT_CAP) -> np.ndarray:
    """prod_c [ (x) exp(-i beta_c X) ] . exp(-i gamma_c sum_{uv} Z_u Z_v), node 0 most significant."""
    n = graph.num_nodes
    if n > cap:
        raise QubitCapExceeded(f"{n} nodes exceed the unitary cap {cap}")
    bits = (np.arange(2**n)[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    z = 1 - 2 * bits
    zz = sum((z[:, u] * z[:, v] for u, v in graph.edges), np.zeros(2**n))
    u = np.eye(2**n, dtype=complex)
    for gamma, beta in zip(params.gammas, params.betas):
        c, s = math.cos(beta), math.sin(beta)
        rx = np.array([[c, -1j * s], [-1j * s, c]])
        mixer = reduce(np.kron, [rx] * n, np.ones((1, 1), dtype=complex))
        u = mixer @ (np.exp(-1j * gamma * zz)[:, None] * u)
    return u


def relabel(u: np.ndarray, layout: Sequence[int]) -> np.ndarray:
    """Move the output of node layout[q] onto qubit q (inputs stay in node order)."""
    n = len(layout)
    t = u.reshape((2,) * (2 * n))
    t = np.transpose(t, list(layout) + list(range(n, 2 * n)))
    return t.reshape(2**n, 2**n)
