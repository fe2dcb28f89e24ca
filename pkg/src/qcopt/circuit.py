"""Circuit representation over the {ZRot, PhasedX, CNot} gate set.

Qubits sit on a 1D chain; a CNot may only couple neighbours. A `Circuit` is
immutable and always stored in canonical form: gates are scheduled
as-soon-as-possible and listed by (moment, lowest qubit). Two circuits with
the same gate DAG therefore compare equal.

Matrix conventions (qubit 0 is the most significant bit):

    ZRot(t)        = diag(1, e^{it})
    PhasedX(p, t)  = [[cos t/2, -i e^{-ip} sin t/2],
                      [-i e^{ip} sin t/2, cos t/2]]
    CNot(c, t)     = standard controlled-X
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConnectivityError, NotUnitary, QubitCapExceeded

TAU = 2.0 * math.pi
#: tolerance for classifying angles (identity drops, X-like axes, channels)
ANGLE_TOL = 1e-9
#: tolerance on matrix entries when choosing how many gates a 1q unitary needs
SYNTH_TOL = 1e-10
DEFAULT_QUBIT_CAP = 10


def canon_angle(x: float) -> float:
    """Reduce an angle into [0, 2pi)."""
    x = math.fmod(x, TAU)
    if x < 0.0:
        x += TAU
    if x >= TAU:
        x -= TAU
    return x


def angle_distance(a: float, b: float) -> float:
    d = abs(canon_angle(a - b))
    return min(d, TAU - d)


def angle_close(a: float, b: float, tol: float = ANGLE_TOL) -> bool:
    return angle_distance(a, b) < tol


@dataclass(frozen=True, slots=True)
class ZRot:
    qubit: int
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", canon_angle(float(self.theta)))

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.qubit,)

    def on(self, qubit: int) -> "ZRot":
        return ZRot(qubit, self.theta)

    def matrix(self) -> np.ndarray:
        return np.array(_mat1(self)).reshape(2, 2)


@dataclass(frozen=True, slots=True)
class PhasedX:
    qubit: int
    axis_phase: float
    angle: float

    def __post_init__(self):
        object.__setattr__(self, "axis_phase", canon_angle(float(self.axis_phase)))
        object.__setattr__(self, "angle", canon_angle(float(self.angle)))

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.qubit,)

    def on(self, qubit: int) -> "PhasedX":
        return PhasedX(qubit, self.axis_phase, self.angle)

    def matrix(self) -> np.ndarray:
        return np.array(_mat1(self)).reshape(2, 2)


@dataclass(frozen=True, slots=True)
class CNot:
    control: int
    target: int

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.control, self.target)

    def matrix(self) -> np.ndarray:
        return _CNOT_MATRIX.copy()


Gate = ZRot | PhasedX | CNot

_CNOT_MATRIX = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)


def check_gate(gate: Gate, num_qubits: int) -> None:
    """Raise ConnectivityError if `gate` does not fit a chain of `num_qubits`."""
    for q in gate.qubits:
        if not (0 <= q < num_qubits):
            raise ConnectivityError(f"{gate} acts outside qubits 0..{num_qubits - 1}")
    if type(gate) is CNot:
        if gate.control == gate.target:
            raise ConnectivityError(f"{gate}: control equals target")
        if abs(gate.control - gate.target) != 1:
            raise ConnectivityError(f"{gate}: qubits are not nearest neighbours")


# ---------------------------------------------------------------------------
# single-qubit algebra on flat (a, b, c, d) tuples; much faster than numpy
# for 2x2 work in the rule engine's inner loop


def _mat1(g) -> tuple[complex, complex, complex, complex]:
    if type(g) is ZRot:
        return (1.0 + 0j, 0j, 0j, cmath.exp(1j * g.theta))
    c = math.cos(g.angle / 2)
    s = math.sin(g.angle / 2)
    e = cmath.exp(1j * g.axis_phase)
    return (c + 0j, -1j * s / e, -1j * s * e, c + 0j)


def _mul(x, y):
    a, b, c, d = x
    e, f, g, h = y
    return (a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)


def product_1q(gates: Iterable) -> tuple[complex, complex, complex, complex]:
    """Matrix of single-qubit gates applied in time order."""
    m = (1.0 + 0j, 0j, 0j, 1.0 + 0j)
    for g in gates:
        m = _mul(_mat1(g), m)
    return m


def _synth(m, qubit: int, tol: float = SYNTH_TOL) -> list:
    a, b, c, d = m
    # strip the global phase so that the matrix lies in SU(2); working from
    # the SU(2) entries keeps every branch well conditioned
    ph = cmath.sqrt(a * d - b * c)
    alpha = a / ph
    beta = c / ph
    if abs(beta) <= tol:
        lam = canon_angle(-2.0 * cmath.phase(alpha))
        if angle_distance(lam, 0.0) <= tol:
            return []
        return [ZRot(qubit, lam)]
    if abs(alpha) <= tol:
        return [PhasedX(qubit, cmath.phase(beta) + math.pi / 2, math.pi)]
    theta = 2.0 * math.atan2(abs(beta), abs(alpha))
    lam = -2.0 * cmath.phase(alpha)
    phi = cmath.phase(beta) + math.pi / 2 + lam / 2
    if angle_distance(lam, 0.0) <= tol:
        return [PhasedX(qubit, phi, theta)]
    return [ZRot(qubit, lam), PhasedX(qubit, phi, theta)]


def resynthesize_1q(u, qubit: int = 0) -> list:
    """Shortest [ZRot][PhasedX] sequence (time order) equal to `u` up to phase.

    Returns 0, 1 or 2 gates.
    """
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2) or not np.allclose(u.conj().T @ u, np.eye(2), atol=1e-8):
        raise NotUnitary("expected a 2x2 unitary")
    return _synth(tuple(u.ravel()), qubit)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Schedule:
    moments: tuple[int, ...]
    depth: int

    def moment_of(self, index: int) -> int:
        return self.moments[index]


class Circuit:
    """Immutable, canonically ordered gate DAG on a nearest-neighbour chain."""

    __slots__ = ("num_qubits", "gates", "moments", "depth", "_wires", "_pairs", "_cells", "memo")

    def __init__(self, num_qubits: int, gates: Iterable[Gate] = ()):
        if num_qubits < 0:
            raise ValueError("num_qubits must be non-negative")
        wires: list[list] = [[] for _ in range(num_qubits)]
        for g in gates:
            check_gate(g, num_qubits)
            for q in g.qubits:
                wires[q].append(g)
        self._init_from_wires(num_qubits, wires)

    @classmethod
    def from_wires(cls, num_qubits: int, wires: Sequence[Sequence]) -> "Circuit":
        """Build from per-qubit gate sequences.

        Two-qubit nodes are matched by object identity across wires, so a CNot
        object must not be shared between distinct nodes on different wires.
        """
        self = cls.__new__(cls)
        self._init_from_wires(num_qubits, wires)
        return self

    def _init_from_wires(self, num_qubits, wires):
        ptr = [0] * num_qubits
        front = [0] * num_qubits
        waiting: dict[int, int] = {}
        placed = []
        stack = list(range(num_qubits - 1, -1, -1))
        while stack:
            q = stack.pop()
            w = wires[q]
            p = ptr[q]
            while p < len(w):
                g = w[p]
                if type(g) is CNot:
                    other = g.target if g.control == q else g.control
                    key = id(g)
                    if key in waiting:
                        mom = max(front[q], waiting.pop(key))
                        placed.append((mom, min(q, other), g))
                        front[q] = front[other] = mom + 1
                        p += 1
                        ptr[other] += 1
                        stack.append(other)
                    else:
                        waiting[key] = front[q]
                        break
                else:
                    placed.append((front[q], q, g))
                    front[q] += 1
                    p += 1
            ptr[q] = p
        if waiting or any(ptr[q] != len(wires[q]) for q in range(num_qubits)):
            raise ValueError("wire sequences do not form an acyclic circuit")
        # (moment, qubit) is unique, so gate objects are never compared
        placed.sort()
        self.num_qubits = num_qubits
        self.gates = tuple(t[2] for t in placed)
        self.moments = tuple(t[0] for t in placed)
        self.depth = max(front) if num_qubits else 0
        self._wires = None
        self._pairs = None
        self._cells = None
        # scratch space for derived data owned by other modules (rule matches)
        self.memo = {}

    # -- derived structure -------------------------------------------------

    @property
    def wires(self) -> list[list[int]]:
        """Per-qubit gate indices in time order."""
        if self._wires is None:
            wires = [[] for _ in range(self.num_qubits)]
            for i, g in enumerate(self.gates):
                for q in g.qubits:
                    wires[q].append(i)
            self._wires = wires
        return self._wires

    @property
    def cells(self) -> dict[tuple[int, int], int]:
        """(moment, qubit) -> index of the gate occupying that cell."""
        if self._cells is None:
            cells = {}
            for i, (g, m) in enumerate(zip(self.gates, self.moments)):
                for q in g.qubits:
                    cells[(m, q)] = i
            self._cells = cells
        return self._cells

    def adjacent_pairs(self) -> dict[str, list[tuple[int, int, int, bool]]]:
        """Gate pairs (i, j) with j directly after i on a shared wire.

        Each pair is reported once, on its lowest shared qubit, as
        (i, j, shared_qubit, adjacent_on_all_shared_wires), bucketed by gate
        arity: "qq" (two 1q gates), "qc" (one 1q gate and a CNot, either
        order) and "cc" (two CNots). Within a bucket pairs are sorted by
        (moment of i, shared qubit).
        """
        if self._pairs is None:
            nxt = {}
            for q, w in enumerate(self.wires):
                for k in range(len(w) - 1):
                    nxt[w[k], q] = w[k + 1]
            qq, qc, cc = [], [], []
            gates = self.gates
            for i, gi in enumerate(gates):
                if type(gi) is CNot:
                    lo, hi = (gi.control, gi.target) if gi.control < gi.target else (gi.target, gi.control)
                    j = nxt.get((i, lo))
                    if j is not None:
                        gj = gates[j]
                        if type(gj) is CNot:
                            if hi in gj.qubits:
                                cc.append((i, j, lo, nxt.get((i, hi)) == j))
                            else:
                                cc.append((i, j, lo, True))
                        else:
                            qc.append((i, j, lo, True))
                    j = nxt.get((i, hi))
                    if j is not None:
                        gj = gates[j]
                        if type(gj) is CNot:
                            if lo not in gj.qubits:
                                cc.append((i, j, hi, True))
                        else:
                            qc.append((i, j, hi, True))
                else:
                    q = gi.qubit
                    j = nxt.get((i, q))
                    if j is not None:
                        if type(gates[j]) is CNot:
                            qc.append((i, j, q, True))
                        else:
                            qq.append((i, j, q, True))
            self._pairs = {"qq": qq, "qc": qc, "cc": cc}
        return self._pairs

    # -- value semantics ---------------------------------------------------

    def __len__(self) -> int:
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Circuit):
            return NotImplemented
        return self.num_qubits == other.num_qubits and self.gates == other.gates

    def __hash__(self) -> int:
        return hash((self.num_qubits, self.gates))

    def __repr__(self) -> str:
        return f"Circuit(num_qubits={self.num_qubits}, depth={self.depth}, gates={len(self.gates)})"


def depth(circuit: Circuit) -> int:
    return circuit.depth


def gate_count(circuit: Circuit) -> int:
    return len(circuit.gates)


def schedule_asap(circuit: Circuit) -> Schedule:
    return Schedule(circuit.moments, circuit.depth)


def success_probability(m: int, gamma_t: float, factors: Sequence[float]) -> float:
    """Error-free execution probability exp(-m * Gamma*T) * prod(u_k)."""
    if gamma_t < 0:
        raise ValueError("gamma_t must be non-negative")
    p = math.exp(-m * gamma_t)
    for u in factors:
        if not (0.0 < u <= 1.0):
            raise ValueError(f"underperformance factor {u} outside (0, 1]")
        p *= u
    return p


# ---------------------------------------------------------------------------
# dense unitaries


def _apply(state: np.ndarray, mat: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    k = len(qubits)
    t = mat.reshape((2,) * (2 * k))
    out = np.tensordot(t, state, axes=(list(range(k, 2 * k)), list(qubits)))
    return np.moveaxis(out, list(range(k)), list(qubits))


def gates_unitary(gates: Iterable[Gate], num_qubits: int) -> np.ndarray:
    """Dense unitary of `gates` (time order) on `num_qubits` qubits."""
    dim = 2**num_qubits
    state = np.eye(dim, dtype=complex).reshape((2,) * num_qubits + (dim,))
    for g in gates:
        state = _apply(state, g.matrix(), g.qubits)
    return state.reshape(dim, dim)


def unitary_of(circuit: Circuit, cap: int = DEFAULT_QUBIT_CAP) -> np.ndarray:
    if circuit.num_qubits > cap:
        raise QubitCapExceeded(f"{circuit.num_qubits} qubits exceeds the cap of {cap}")
    return gates_unitary(circuit.gates, circuit.num_qubits)


def equivalent_up_to_phase(u: np.ndarray, v: np.ndarray, tol: float = 1e-9) -> bool:
    """True iff u = c*v for some unit scalar c, within `tol` (max-norm)."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {v.shape}")
    idx = np.unravel_index(np.argmax(np.abs(v)), v.shape)
    if abs(v[idx]) == 0:
        return bool(np.max(np.abs(u)) < tol)
    c = u[idx] / v[idx]
    if abs(c) == 0:
        return False
    c /= abs(c)
    return bool(np.max(np.abs(u - c * v)) < tol)


# ---------------------------------------------------------------------------
# canonical JSON


def gate_to_dict(g: Gate) -> dict:
    if type(g) is ZRot:
        return {"type": "zrot", "qubit": g.qubit, "theta": g.theta}
    if type(g) is PhasedX:
        return {"type": "phasedx", "qubit": g.qubit, "axis_phase": g.axis_phase, "angle": g.angle}
    return {"type": "cnot", "control": g.control, "target": g.target}


def gate_from_dict(d: dict) -> Gate:
    kind = d.get("type")
    if kind == "zrot":
        return ZRot(int(d["qubit"]), float(d["theta"]))
    if kind == "phasedx":
        return PhasedX(int(d["qubit"]), float(d["axis_phase"]), float(d["angle"]))
    if kind == "cnot":
        return CNot(int(d["control"]), int(d["target"]))
    raise ValueError(f"unknown gate type {kind!r}")


def circuit_to_dict(circuit: Circuit) -> dict:
    return {"num_qubits": circuit.num_qubits, "gates": [gate_to_dict(g) for g in circuit.gates]}


def circuit_from_dict(d: dict) -> Circuit:
    return Circuit(int(d["num_qubits"]), [gate_from_dict(g) for g in d["gates"]])


def dumps(circuit: Circuit) -> str:
    return json.dumps(circuit_to_dict(circuit))


def loads(text: str) -> Circuit:
    return circuit_from_dict(json.loads(text))


def save_circuit(circuit: Circuit, path) -> None:
    with open(path, "w") as fh:
        json.dump(circuit_to_dict(circuit), fh)
        fh.write("\n")


def load_circuit(path) -> Circuit:
    with open(path) as fh:
        return circuit_from_dict(json.load(fh))


# ---------------------------------------------------------------------------


def _symbol(g: Gate, q: int) -> str:
    if type(g) is ZRot:
        for name, ref in (("S", math.pi / 2), ("Z", math.pi), ("s", 3 * math.pi / 2)):
            if angle_close(g.theta, ref):
                return name
        return "R"
    if type(g) is PhasedX:
        if angle_close(g.angle, math.pi) and (
            angle_close(g.axis_phase, 0.0) or angle_close(g.axis_phase, math.pi)
        ):
            return "X"
        return "P"
    if q == g.control:
        return "@"
    return "+"


def render(circuit: Circuit) -> str:
    """Monospaced diagram: one line per qubit, one column per moment.

    R = generic ZRot, S/Z/s = ZRot by pi/2, pi, 3pi/2; P = PhasedX, X = X-like
    PhasedX; @ and + are CNot control and target, joined by '|'.
    """
    m, d = circuit.num_qubits, circuit.depth
    rows = [["-"] * d for _ in range(2 * m - 1)] if m else []
    for i in range(2 * m - 1):
        if i % 2:
            rows[i] = [" "] * d
    for g, t in zip(circuit.gates, circuit.moments):
        for q in g.qubits:
            rows[2 * q][t] = _symbol(g, q)
        if type(g) is CNot:
            rows[2 * min(g.qubits) + 1][t] = "|"
    lines = []
    for i, row in enumerate(rows):
        label = f"q{i // 2:<3d}" if i % 2 == 0 else "    "
        lines.append(label + " " + "".join(row))
    return "\n".join(lines)
