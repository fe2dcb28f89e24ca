"""Transformation rules: enumeration, application, local verification, pruning.

A rule instance is located on the circuit grid by a locus (moment, qubit):
single-gate rules anchor at the gate's moment and lowest qubit, two-gate
rules at the first gate's moment and the lowest qubit shared by both gates.
Two-gate rules only ever pair a gate with its direct successor on that
qubit, so (rule, locus) identifies a transformation uniquely.

Hard rules are always applied by `prune`; soft rules are the action space of
the annealer and the RL agent.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Iterable, Iterator, NamedTuple, Sequence

from .circuit import (
    ANGLE_TOL,
    TAU,
    CNot,
    Circuit,
    PhasedX,
    ZRot,
    _synth,
    angle_close,
    equivalent_up_to_phase,
    gates_unitary,
    product_1q,
)
from .errors import QcoptError, InjectivityViolation, NotApplicable, StaleTransformation

HARD = "hard"
SOFT = "soft"


class Rule:
    """Base class. Subclasses define `find` and `rewrite`."""

    name: str = ""
    kind: str = SOFT

    def find(self, circuit: Circuit) -> Iterator[tuple[tuple[int, ...], tuple[int, int]]]:
        """Yield (affected gate indices in time order, locus)."""
        raise NotImplementedError

    def rewrite(self, gates: Sequence) -> list:
        """Replacement for the affected gates, in time order."""
        raise NotImplementedError

    def check(self, circuit: Circuit, affected: tuple[int, ...]) -> bool:
        """Whether the rule still matches `affected` in `circuit`."""
        return any(a == affected for a, _ in self.find(circuit))

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name} ({self.kind})>"


class GateRule(Rule):
    def accepts(self, g) -> bool:
        raise NotImplementedError

    def find(self, circuit):
        moments = circuit.moments
        for i, g in enumerate(circuit.gates):
            if self.accepts(g):
                yield (i,), (moments[i], min(g.qubits))

    def check(self, circuit, affected):
        return len(affected) == 1 and self.accepts(circuit.gates[affected[0]])


class PairRule(Rule):
    #: which bucket of Circuit.adjacent_pairs() to scan
    bucket = "qq"

    def accepts(self, a, b, q: int, both: bool) -> bool:
        raise NotImplementedError

    def find(self, circuit):
        gates = circuit.gates
        moments = circuit.moments
        for i, j, q, both in circuit.adjacent_pairs()[self.bucket]:
            if self.accepts(gates[i], gates[j], q, both):
                yield (i, j), (moments[i], q)

    def check(self, circuit, affected):
        if len(affected) != 2:
            return False
        i, j = affected
        for pi, pj, q, both in circuit.adjacent_pairs()[self.bucket]:
            if pi == i and pj == j:
                return self.accepts(circuit.gates[i], circuit.gates[j], q, both)
        return False


# ---------------------------------------------------------------------------
# helpers


_HI = TAU - ANGLE_TOL


def is_identity_gate(g) -> bool:
    # angles are stored in [0, 2pi)
    if type(g) is ZRot:
        return g.theta < ANGLE_TOL or g.theta > _HI
    if type(g) is PhasedX:
        return g.angle < ANGLE_TOL or g.angle > _HI
    return False


def is_x_axis(g) -> bool:
    """PhasedX about the +X or -X axis (commutes with a CNot target)."""
    return type(g) is PhasedX and (
        angle_close(g.axis_phase, 0.0) or angle_close(g.axis_phase, math.pi)
    )


@lru_cache(maxsize=65536)
def _merge(a, b) -> tuple:
    return tuple(_synth(product_1q((a, b)), a.qubit))


def hadamard(qubit: int) -> list:
    """Hadamard as canonical [ZRot, PhasedX]: ZRot(pi) then PhasedX(pi/2, pi/2)."""
    return [ZRot(qubit, math.pi), PhasedX(qubit, math.pi / 2, math.pi / 2)]


# ---------------------------------------------------------------------------
# catalog


class DropIdentity(GateRule):
    """Remove a ZRot or PhasedX whose angle is 0 mod 2pi."""

    name = "H1_drop_identity"
    kind = HARD

    def accepts(self, g):
        return is_identity_gate(g)

    def rewrite(self, gates):
        return []


class Merge1q(PairRule):
    """Resynthesise two neighbouring single-qubit gates on one wire.

    Matches when the product needs fewer gates, when two gates of the same
    type meet, or when a PhasedX-then-ZRot pair is part of a longer run
    (a ZRot directly before it or a PhasedX directly after it), where
    bringing it into ZRot-then-PhasedX order lets the run shrink. A lone
    PhasedX-then-ZRot pair is left alone: it is as short as its canonical
    form, and canonicalising it would undo every MoveZAcrossPhasedX move
    during pruning. After pruning every single-qubit run has at most two
    gates.
    """

    name = "H2_merge_1q"
    kind = HARD
    bucket = "qq"

    def accepts(self, a, b, q, both):
        ta, tb = type(a), type(b)
        if ta is tb:
            return True
        return len(_merge(a, b)) < 2

    def find(self, circuit):
        gates = circuit.gates
        moments = circuit.moments
        pairs = circuit.adjacent_pairs()["qq"]
        before = {j: i for i, j, _, _ in pairs}
        after = {i: j for i, j, _, _ in pairs}
        for i, j, q, both in pairs:
            a, b = gates[i], gates[j]
            if self.accepts(a, b, q, both):
                yield (i, j), (moments[i], q)
            elif type(a) is PhasedX:
                h, k = before.get(i), after.get(j)
                if (h is not None and type(gates[h]) is ZRot) or (k is not None and type(gates[k]) is PhasedX):
                    yield (i, j), (moments[i], q)

    def check(self, circuit, affected):
        return Rule.check(self, circuit, affected)

    def rewrite(self, gates):
        a, b = gates
        return list(_merge(a, b))


class CancelCnotPair(PairRule):
    name = "H4_cancel_cnot_pair"
    kind = HARD
    bucket = "cc"

    def accepts(self, a, b, q, both):
        return both and a.control == b.control and a.target == b.target

    def rewrite(self, gates):
        return []


class CommuteZThroughControl(PairRule):
    name = "S1_commute_zrot_through_control"
    kind = SOFT
    bucket = "qc"

    def accepts(self, a, b, q, both):
        if type(a) is ZRot:
            return b.control == q
        if type(b) is ZRot:
            return a.control == q
        return False

    def rewrite(self, gates):
        a, b = gates
        return [b, a]


class CommuteXThroughTarget(PairRule):
    name = "S2_commute_xlike_through_target"
    kind = SOFT
    bucket = "qc"

    def accepts(self, a, b, q, both):
        if type(b) is CNot:
            return b.target == q and is_x_axis(a)
        return a.target == q and is_x_axis(b)

    def rewrite(self, gates):
        a, b = gates
        return [b, a]


class ExchangeCnots(PairRule):
    """Swap two CNots that share only their control or only their target."""

    name = "S3_exchange_cnots_shared_wire"
    kind = SOFT
    bucket = "cc"

    def accepts(self, a, b, q, both):
        if a.control == b.control:
            return a.target != b.target
        if a.target == b.target:
            return a.control != b.control
        return False

    def rewrite(self, gates):
        a, b = gates
        return [CNot(b.control, b.target), CNot(a.control, a.target)]


class MoveZAcrossPhasedX(PairRule):
    """ZRot(l) then PhasedX(p, t)  <->  PhasedX(p - l, t) then ZRot(l)."""

    name = "S5_move_zrot_across_phasedx"
    kind = SOFT
    bucket = "qq"
    sign = 1.0

    def accepts(self, a, b, q, both):
        return (type(a) is ZRot and type(b) is PhasedX) or (
            type(a) is PhasedX and type(b) is ZRot
        )

    def rewrite(self, gates):
        a, b = gates
        s = self.sign
        if type(a) is ZRot:
            return [PhasedX(b.qubit, b.axis_phase - s * a.theta, b.angle), a]
        return [b, PhasedX(a.qubit, a.axis_phase + s * b.theta, a.angle)]


class ReverseCnot(GateRule):
    """CNot(c, t) = (H x H) CNot(t, c) (H x H)."""

    name = "S6_reverse_cnot"
    kind = SOFT

    def accepts(self, g):
        return type(g) is CNot

    def rewrite(self, gates):
        (g,) = gates
        c, t = g.control, g.target
        return [*hadamard(c), *hadamard(t), CNot(t, c), *hadamard(c), *hadamard(t)]


CATALOG: list[Rule] = [
    DropIdentity(),
    Merge1q(),
    CancelCnotPair(),
    CommuteZThroughControl(),
    CommuteXThroughTarget(),
    ExchangeCnots(),
    MoveZAcrossPhasedX(),
    ReverseCnot(),
]


def register_rule(rule: Rule) -> None:
    """Append a rule to the catalog; it joins enumeration (and pruning if hard)."""
    if rule.kind not in (HARD, SOFT):
        raise ValueError(f"rule kind must be {HARD!r} or {SOFT!r}")
    if any(r.name == rule.name for r in CATALOG):
        raise ValueError(f"a rule named {rule.name!r} is already registered")
    CATALOG.append(rule)


def unregister_rule(name: str) -> None:
    CATALOG[:] = [r for r in CATALOG if r.name != name]


def rules_of_kind(kind: str) -> list[Rule]:
    return [r for r in CATALOG if r.kind == kind]


def rule_by_name(name: str) -> Rule:
    for r in CATALOG:
        if r.name == name:
            return r
    raise KeyError(name)


# ---------------------------------------------------------------------------


class Transformation(NamedTuple):
    rule: Rule
    locus: tuple[int, int]
    #: indices of the affected gates, in time order
    affected: tuple[int, ...]
    #: the affected gates themselves; used to detect stale transformations
    gates: tuple

    @property
    def key(self) -> tuple[str, tuple[int, int]]:
        return (self.rule.name, self.locus)


def _matches(circuit: Circuit, rule: Rule) -> list[Transformation]:
    memo = circuit.memo
    key = ("rule", rule.name, id(rule))
    hit = memo.get(key)
    if hit is None:
        gates = circuit.gates
        hit = []
        seen = set()
        for affected, locus in rule.find(circuit):
            if locus in seen:
                raise InjectivityViolation(f"{rule.name} has two instances at {locus}")
            seen.add(locus)
            hit.append(Transformation(rule, locus, affected, tuple(gates[i] for i in affected)))
        if any(hit[k].locus > hit[k + 1].locus for k in range(len(hit) - 1)):
            hit.sort(key=lambda t: t.locus)
        memo[key] = hit
    return hit


def enumerate_transformations(
    circuit: Circuit, kinds: Iterable[str] = (HARD, SOFT), rules: Sequence[Rule] | None = None
) -> list[Transformation]:
    """All rule instances of the requested kinds, by (rule, moment, qubit)."""
    kinds = {kinds} if isinstance(kinds, str) else set(kinds)
    out = []
    for rule in CATALOG if rules is None else rules:
        if rule.kind in kinds:
            out.extend(_matches(circuit, rule))
    return out


def _splice(circuit: Circuit, affected: tuple[int, ...], replacement: list) -> Circuit:
    gates = circuit.gates
    wires = circuit.wires
    touched = sorted({q for i in affected for q in gates[i].qubits})
    new_wires = [None] * circuit.num_qubits
    aff = set(affected)
    for q in touched:
        w = wires[q]
        pos = [p for p, i in enumerate(w) if i in aff]
        lo, hi = pos[0], pos[-1]
        new_wires[q] = (
            [gates[i] for i in w[:lo]]
            + [g for g in replacement if q in g.qubits]
            + [gates[i] for i in w[hi + 1 :]]
        )
    for q in range(circuit.num_qubits):
        if new_wires[q] is None:
            new_wires[q] = [gates[i] for i in wires[q]]
    return Circuit.from_wires(circuit.num_qubits, new_wires)


def apply(circuit: Circuit, t: Transformation) -> Circuit:
    """Circuit with `t` applied. Does not prune."""
    gates = circuit.gates
    if any(i >= len(gates) for i in t.affected) or tuple(
        gates[i] for i in t.affected
    ) != t.gates:
        raise StaleTransformation(f"{t.rule.name} at {t.locus} does not belong to this circuit")
    if not t.rule.check(circuit, t.affected):
        raise NotApplicable(f"{t.rule.name} does not match at {t.locus}")
    return _splice(circuit, t.affected, t.rule.rewrite(t.gates))


def _apply_fast(circuit: Circuit, t: Transformation) -> Circuit:
    # t was just enumerated on `circuit`
    return _splice(circuit, t.affected, t.rule.rewrite(t.gates))


def _remap(g, mapping: dict[int, int]):
    if type(g) is CNot:
        return CNot(mapping[g.control], mapping[g.target])
    return g.on(mapping[g.qubit])


def verify_local(circuit: Circuit, t: Transformation, tol: float = 1e-8) -> bool:
    """Compare the affected gates with their replacement on the touched wires."""
    before = list(t.gates)
    after = t.rule.rewrite(t.gates)
    qubits = sorted({q for g in before + after for q in g.qubits})
    mapping = {q: k for k, q in enumerate(qubits)}
    u = gates_unitary([_remap(g, mapping) for g in before], len(qubits))
    v = gates_unitary([_remap(g, mapping) for g in after], len(qubits))
    return equivalent_up_to_phase(u, v, tol)


def first_hard(circuit: Circuit) -> Transformation | None:
    for rule in CATALOG:
        if rule.kind == HARD:
            hit = _matches(circuit, rule)
            if hit:
                return hit[0]
    return None


class PruneBudgetExceeded(QcoptError, RuntimeError):
    pass


def prune(circuit: Circuit) -> Circuit:
    """Apply hard rules to a fixpoint, first match in (rule, moment, qubit) order."""
    budget = 10 * len(circuit.gates) + 10
    steps = 0
    while True:
        t = first_hard(circuit)
        if t is None:
            return circuit
        circuit = _apply_fast(circuit, t)
        steps += 1
        if steps > budget:
            raise PruneBudgetExceeded(f"pruning did not terminate within {budget} steps")


def soft_transformations(circuit: Circuit) -> list[Transformation]:
    return enumerate_transformations(circuit, (SOFT,))


def step(circuit: Circuit, t: Transformation) -> Circuit:
    """Apply a freshly enumerated transformation, then prune."""
    return prune(_apply_fast(circuit, t))


def find(circuit: Circuit, rule_name: str, locus: tuple[int, int]) -> Transformation:
    """Look up the transformation with the given (rule, locus)."""
    locus = tuple(locus)
    for t in _matches(circuit, rule_by_name(rule_name)):
        if t.locus == locus:
            return t
    raise NotApplicable(f"no {rule_name} instance at {locus}")
