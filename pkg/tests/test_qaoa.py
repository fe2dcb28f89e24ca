import itertools
import math
import warnings

import numpy as np
import pytest

import oracles
from qcopt.circuit import CNot, unitary_of
from qcopt.errors import TooManyNodes
from qcopt.qaoa import Graph, QaoaParams, compile_maxcut, maxcut_reference_unitary, relabel, special_angles

GAMMAS = (0.37, 0.81)
BETAS = (0.23, 0.64)


def all_graphs(n):
    pairs = list(itertools.combinations(range(n), 2))
    for k in range(len(pairs) + 1):
        for es in itertools.combinations(pairs, k):
            yield Graph(n, es)


def check(graph, cycles):
    params = QaoaParams(GAMMAS[:cycles], BETAS[:cycles])
    res = compile_maxcut(graph, params)
    got = unitary_of(res.circuit)
    want = oracles.qaoa_reference(graph.num_nodes, sorted(graph.edges), params.gammas, params.betas)
    assert oracles.same_up_to_phase(got, oracles.permute_outputs(want, res.layout))
    return res


def test_graph_validation_and_parse():
    with pytest.raises(ValueError):
        Graph(3, [(0, 0)])
    with pytest.raises(ValueError):
        Graph(3, [(0, 3)])
    with pytest.raises(ValueError):
        Graph(3, [(0, 1), (1, 0)])
    g = Graph.parse("# triangle\n0 1\n1 2\n\n2 0\n")
    assert g == Graph.complete(3)
    assert Graph.parse("", 4).num_nodes == 4


def test_params_validation_and_special_angles():
    with pytest.raises(ValueError):
        QaoaParams([0.1], [])
    with pytest.raises(ValueError):
        QaoaParams([], [])
    assert special_angles(QaoaParams([0.3], [0.4])) == []
    assert len(special_angles(QaoaParams([math.pi / 4], [0.4]))) == 1
    with pytest.warns(UserWarning):
        compile_maxcut(Graph.complete(2), QaoaParams([math.pi / 4], [0.3]))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        compile_maxcut(Graph.complete(2), QaoaParams([math.pi / 4], [0.3], allow_special=True))


def test_edgeless_graph_is_a_mixer_layer():
    res = compile_maxcut(Graph(3), QaoaParams([0.3], [0.4]))
    assert res.circuit.depth == 1 and len(res.circuit.gates) == 3
    assert res.layout == (0, 1, 2)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
@pytest.mark.parametrize("cycles", [1, 2])
def test_all_small_graphs_match_reference(n, cycles):
    for g in all_graphs(n):
        check(g, cycles)


@pytest.mark.parametrize("cycles", [1, 2])
def test_complete_five(cycles):
    check(Graph.complete(5), cycles)


def test_random_sparse_graphs():
    rng = np.random.default_rng(0)
    for _ in range(8):
        n = int(rng.integers(4, 7))
        es = [e for e in itertools.combinations(range(n), 2) if rng.random() < 0.5]
        check(Graph(n, es), 1)


def test_package_reference_agrees_with_expm():
    g = Graph(4, [(0, 1), (1, 3), (0, 2)])
    p = QaoaParams(GAMMAS, BETAS)
    a = maxcut_reference_unitary(g, p)
    b = oracles.qaoa_reference(4, sorted(g.edges), GAMMAS, BETAS)
    assert np.allclose(a, b)
    lay = (2, 0, 3, 1)
    assert np.allclose(relabel(a, lay), oracles.permute_outputs(a, lay))


def test_circuit_is_nearest_neighbour_and_reports_layout():
    res = check(Graph.complete(4), 1)
    assert sorted(res.layout) == [0, 1, 2, 3]
    assert all(abs(g.control - g.target) == 1 for g in res.circuit.gates if type(g) is CNot)
    assert len(res.circuit.gates) <= res.raw_gate_count


def test_too_many_nodes():
    with pytest.raises(TooManyNodes):
        compile_maxcut(Graph.complete(5), QaoaParams([0.3], [0.4]), num_qubits=4)


def test_spare_qubits_are_allowed():
    g = Graph(3, [(0, 2)])
    res = compile_maxcut(g, QaoaParams([0.3], [0.4]), num_qubits=4)
    assert res.circuit.num_qubits == 4
