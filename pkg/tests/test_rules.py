import math

import pytest
from hypothesis import given, settings

import oracles
from qcopt import rules
from qcopt.circuit import CNot, Circuit, PhasedX, ZRot, unitary_of
from qcopt.datagen import GenConfig, random_circuit
from qcopt.env import quality
from qcopt.errors import InjectivityViolation, NotApplicable, StaleTransformation
from qcopt.rules import (
    HARD,
    SOFT,
    apply,
    enumerate_transformations,
    find,
    hadamard,
    prune,
    rule_by_name,
    verify_local,
)

from test_circuit import gates_strategy


def names(ts):
    return [(t.rule.name, t.locus) for t in ts]


def small_circuits(count, m=5, gates=20, seed=0, p_cnot=0.5):
    return [random_circuit(GenConfig(m, gates, seed + s, p_cnot=p_cnot)) for s in range(count)]


def runs_of_locals(c):
    """Lengths of maximal single-qubit gate runs on every wire."""
    out = []
    for w in c.wires:
        k = 0
        for i in w:
            if type(c.gates[i]) is CNot:
                if k:
                    out.append(k)
                k = 0
            else:
                k += 1
        if k:
            out.append(k)
    return out


# -- catalog -------------------------------------------------------------------


def test_catalog_kinds():
    hard = {r.name for r in rules.rules_of_kind(HARD)}
    soft = {r.name for r in rules.rules_of_kind(SOFT)}
    assert hard == {"H1_drop_identity", "H2_merge_1q", "H4_cancel_cnot_pair"}
    assert soft == {
        "S1_commute_zrot_through_control",
        "S2_commute_xlike_through_target",
        "S3_exchange_cnots_shared_wire",
        "S5_move_zrot_across_phasedx",
        "S6_reverse_cnot",
    }


# -- enumeration ---------------------------------------------------------------


def test_enumerate_examples():
    assert enumerate_transformations(Circuit(2), (HARD, SOFT)) == []
    ts = enumerate_transformations(Circuit(2, [CNot(0, 1), CNot(0, 1)]), (HARD,))
    assert ("H4_cancel_cnot_pair", (0, 0)) in names(ts)
    ts = enumerate_transformations(Circuit(2, [ZRot(0, math.pi / 2), CNot(0, 1)]), (SOFT,))
    assert ("S1_commute_zrot_through_control", (0, 0)) in names(ts)


def test_enumeration_order_and_uniqueness():
    order = [r.name for r in rules.CATALOG]
    for c in small_circuits(50, seed=100):
        ts = enumerate_transformations(c, (HARD, SOFT))
        keys = [(order.index(t.rule.name), t.locus) for t in ts]
        assert keys == sorted(keys)
        assert len(set(keys)) == len(keys)


def test_locus_is_first_moment_lowest_shared_qubit():
    c = Circuit(3, [CNot(1, 0), CNot(1, 2)])
    (t,) = [t for t in enumerate_transformations(c, (SOFT,)) if t.rule.name.startswith("S3")]
    assert t.locus == (0, 1)
    c = Circuit(2, [PhasedX(1, 0.1, 0.2), ZRot(1, 0.3)])
    (t,) = [t for t in enumerate_transformations(c, (SOFT,)) if t.rule.name.startswith("S5")]
    assert t.locus == (0, 1)


def test_injectivity_violation_detected():
    class Clash(rules.GateRule):
        name = "X_clash"
        kind = SOFT

        def find(self, circuit):
            yield (0,), (0, 0)
            yield (1,), (0, 0)

        def rewrite(self, gates):
            return list(gates)

    rules.register_rule(Clash())
    try:
        with pytest.raises(InjectivityViolation):
            enumerate_transformations(Circuit(2, [ZRot(0, 1.0), ZRot(1, 1.0)]), (SOFT,))
    finally:
        rules.unregister_rule("X_clash")
    assert all(r.name != "X_clash" for r in rules.CATALOG)


def test_register_rejects_duplicates_and_bad_kind():
    with pytest.raises(ValueError):
        rules.register_rule(rules.ReverseCnot())

    class Odd(rules.GateRule):
        name = "X_odd"
        kind = "sideways"

    with pytest.raises(ValueError):
        rules.register_rule(Odd())


# -- apply ---------------------------------------------------------------------


def test_apply_examples():
    c = Circuit(2, [CNot(0, 1), CNot(0, 1)])
    assert apply(c, find(c, "H4_cancel_cnot_pair", (0, 0))).gates == ()
    c = Circuit(1, [ZRot(0, math.pi / 2), ZRot(0, math.pi / 2)])
    out = apply(c, find(c, "H2_merge_1q", (0, 0)))
    assert out.gates == (ZRot(0, math.pi),)


def test_s5_direction():
    lam, phi, theta = 0.7, 0.4, 1.1
    c = Circuit(1, [ZRot(0, lam), PhasedX(0, phi, theta)])
    out = apply(c, find(c, "S5_move_zrot_across_phasedx", (0, 0)))
    px, z = out.gates
    assert type(px) is PhasedX and type(z) is ZRot
    assert px.axis_phase == pytest.approx((phi - lam) % (2 * math.pi))
    assert oracles.same_up_to_phase(oracles.unitary(c.gates, 1), oracles.unitary(out.gates, 1))
    back = apply(out, find(out, "S5_move_zrot_across_phasedx", (0, 0)))
    assert back.gates[0] == ZRot(0, lam)
    assert back.gates[1].axis_phase == pytest.approx(phi)


def test_s2_only_x_like():
    c = Circuit(2, [PhasedX(1, 0.0, 0.5), CNot(0, 1)])
    assert "S2_commute_xlike_through_target" in [t.rule.name for t in enumerate_transformations(c, (SOFT,))]
    c = Circuit(2, [PhasedX(1, 0.3, 0.5), CNot(0, 1)])
    assert "S2_commute_xlike_through_target" not in [t.rule.name for t in enumerate_transformations(c, (SOFT,))]
    c = Circuit(2, [PhasedX(1, math.pi, 0.5), CNot(0, 1)])
    assert "S2_commute_xlike_through_target" in [t.rule.name for t in enumerate_transformations(c, (SOFT,))]


def test_s6_reverses_and_adds_hadamards():
    c = Circuit(2, [CNot(0, 1)])
    out = apply(c, find(c, "S6_reverse_cnot", (0, 0)))
    assert CNot(1, 0) in out.gates and len(out.gates) == 9
    assert oracles.same_up_to_phase(unitary_of(c), unitary_of(out))


def test_stale_and_not_applicable():
    c = Circuit(2, [CNot(0, 1), CNot(0, 1)])
    t = find(c, "H4_cancel_cnot_pair", (0, 0))
    other = Circuit(2, [ZRot(0, 1.0), ZRot(1, 1.0)])
    with pytest.raises(StaleTransformation):
        apply(other, t)
    with pytest.raises(NotApplicable):
        find(c, "S6_reverse_cnot", (5, 0))


@settings(max_examples=150, deadline=None)
@given(gates_strategy(4, 18))
def test_every_transformation_is_sound(gates):
    c = Circuit(4, gates)
    u = unitary_of(c)
    for t in enumerate_transformations(c, (HARD, SOFT)):
        assert verify_local(c, t)
        out = apply(c, t)
        assert oracles.same_up_to_phase(u, oracles.unitary(out.gates, 4))


def test_special_angle_instances_are_sound():
    # exact pi multiples exercise the class-membership paths
    g = [ZRot(0, math.pi), PhasedX(0, 0.0, math.pi), CNot(0, 1), PhasedX(1, math.pi, math.pi / 2),
         ZRot(1, 3 * math.pi / 2), CNot(1, 0), ZRot(0, math.pi / 2), *hadamard(1), CNot(0, 1)]
    c = Circuit(2, g)
    for t in enumerate_transformations(c, (HARD, SOFT)):
        assert verify_local(c, t)
        assert oracles.same_up_to_phase(unitary_of(c), unitary_of(apply(c, t)))


def test_corrupted_rule_fails_local_check():
    s5 = rule_by_name("S5_move_zrot_across_phasedx")
    c = Circuit(1, [ZRot(0, 0.8), PhasedX(0, 0.3, 1.2)])
    t = find(c, s5.name, (0, 0))
    assert verify_local(c, t)
    s5.sign = -1.0
    try:
        assert not verify_local(c, t)
    finally:
        s5.sign = 1.0


def test_verify_local_s6_window():
    c = Circuit(3, [CNot(1, 2), ZRot(0, 0.4)])
    assert all(verify_local(c, t) for t in enumerate_transformations(c, (SOFT,)))


# -- prune ---------------------------------------------------------------------


def test_prune_examples():
    assert prune(Circuit(2, [CNot(0, 1), CNot(0, 1)])).gates == ()
    assert prune(Circuit(1, [ZRot(0, math.pi), ZRot(0, math.pi)])).gates == ()
    h = hadamard(0)
    assert prune(Circuit(1, h + h)).gates == ()


def test_prune_leaves_lone_phasedx_zrot_pair():
    c = Circuit(1, [PhasedX(0, 0.3, 1.0), ZRot(0, 0.5)])
    assert prune(c) == c


@settings(max_examples=200, deadline=None)
@given(gates_strategy(4, 30))
def test_prune_properties(gates):
    c = Circuit(4, gates)
    p = prune(c)
    assert quality(p) <= quality(c)
    assert prune(p) == p
    assert enumerate_transformations(p, (HARD,)) == []
    assert all(k <= 2 for k in runs_of_locals(p))
    assert oracles.same_up_to_phase(unitary_of(c), unitary_of(p))


def test_prune_termination_budget():
    for c in small_circuits(30, m=6, gates=60, seed=5):
        steps = 0
        cur = c
        while (t := rules.first_hard(cur)) is not None:
            cur = rules._apply_fast(cur, t)
            steps += 1
        assert steps <= 10 * len(c.gates)
        assert cur == prune(c)
