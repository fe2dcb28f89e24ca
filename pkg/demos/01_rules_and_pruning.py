"""Rewrite rules and pruning on a small circuit.

Builds a circuit with some obvious redundancy, lists the rule instances the
engine finds, prunes it and checks the unitary is unchanged.
"""

# %%
import math

from qcopt.circuit import CNot, Circuit, PhasedX, ZRot, equivalent_up_to_phase, render, unitary_of
from qcopt.env import quality
from qcopt.rules import HARD, SOFT, enumerate_transformations, hadamard, prune

gates = [
    ZRot(0, 0.4), ZRot(0, 0.3),        # two Z rotations that merge
    CNot(0, 1), CNot(0, 1),            # an inverse pair
    *hadamard(2), *hadamard(2),        # H.H on qubit 2
    PhasedX(1, 0.2, 1.1), ZRot(1, 0.5),
    CNot(1, 2),
]
c = Circuit(3, gates)
print(render(c))
print(f"d={c.depth} n={len(c.gates)} q={quality(c):.2f}")

# %% every rule instance, hard and soft, in enumeration order
for t in enumerate_transformations(c, (HARD, SOFT)):
    print(f"{t.rule.kind:4s} {t.rule.name:34s} locus={t.locus}")

# %% prune applies hard rules to a fixpoint
p = prune(c)
print(render(p))
print(f"d={p.depth} n={len(p.gates)} q={quality(p):.2f}")
print("same unitary up to phase:", equivalent_up_to_phase(unitary_of(c), unitary_of(p)))

# %% soft moves remain: these are what the annealer and the agent choose between
for t in enumerate_transformations(p, (SOFT,)):
    print(f"{t.rule.name:34s} locus={t.locus}")
