"""Compile MaxCut QAOA onto a nearest-neighbour chain and check it.

The compiled circuit leaves the graph nodes permuted across the qubits; the
returned layout says which node ends up where.
"""

# %%
from qcopt.circuit import equivalent_up_to_phase, render, unitary_of
from qcopt.qaoa import Graph, QaoaParams, compile_maxcut, maxcut_reference_unitary, relabel

graph = Graph.complete(4)
params = QaoaParams(gammas=[0.37, 0.81], betas=[0.23, 0.64])
res = compile_maxcut(graph, params)
print(render(res.circuit))
print(f"d={res.circuit.depth} n={len(res.circuit.gates)} (before pruning: {res.raw_gate_count} gates)")
print("final layout (qubit -> node):", res.layout)

# %% compare with the dense reference, relabelled by the layout
ref = relabel(maxcut_reference_unitary(graph, params), res.layout)
print("matches reference:", equivalent_up_to_phase(unitary_of(res.circuit), ref, 1e-8))

# %% the all-to-all 6-node graph at two cycles
six = compile_maxcut(Graph.complete(6), params)
print(f"K6, 2 cycles: d={six.circuit.depth} n={len(six.circuit.gates)}")
