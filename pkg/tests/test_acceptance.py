"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Long-running: the whole module takes about an hour and a half on one core.
"""

import itertools
import math

import numpy as np
import pytest
import torch

import oracles
from conftest import report
from qcopt.agent import PolicyValueNet, RolloutBatch, TrainConfig, masked_log_probs, ppo_update, rollout, train
from qcopt.anneal import AnnealConfig, anneal, tune_acceptance
from qcopt.circuit import equivalent_up_to_phase, unitary_of
from qcopt.datagen import GenConfig, episode_seeds, expand, make_episode, random_circuit
from qcopt.env import quality, reset
from qcopt.qaoa import Graph, QaoaParams, compile_maxcut, maxcut_reference_unitary
from qcopt.rules import HARD, SOFT, enumerate_transformations, prune, verify_local

from test_agent import flat_grad, objective_along, random_batch, random_net

# pinned tolerances and bars
LOCAL_TOL = 1e-8
FULL_TOL = 1e-8
FD_REL_TOL = 1e-4
FD_DIRECTIONS = 20
ANCHOR_N_RAW, ANCHOR_RAW_TOL = 159.0, 0.25
ANCHOR_PRUNED, ANCHOR_PRUNED_TOL = (37.15, 115.27), 0.25
ANCHOR_EXPANDED, ANCHOR_EXPANDED_TOL = (248.0, 508.0), 0.35
SA_RATIO = 0.95
SA_ACCEPTANCE = (0.10, 0.25)
RL_SIGMAS = 3.0
QAOA_TOL = 1e-8


def within(x, ref, rel):
    return abs(x - ref) <= rel * ref


# -- 1 -------------------------------------------------------------------------------


def test_criterion_1_soundness():
    checked = 0
    bad = []
    for s in range(1000):
        c = random_circuit(GenConfig(5, 30, seed=s))
        c = expand(prune(c), 5, seed=s) if s % 2 else c
        for t in enumerate_transformations(c, (HARD, SOFT)):
            checked += 1
            if not verify_local(c, t, LOCAL_TOL):
                bad.append((s, t.rule.name, t.locus))
    mismatched = 0
    for s, seed in enumerate(episode_seeds(1, 100)):
        c = make_episode(GenConfig(5, 30, expansion_steps=20), seed).start
        env, _ = reset(c, episode_length=100)
        rng = np.random.default_rng(seed)
        while not env.done:
            cells = env.legal_cells
            env.step(cells[rng.integers(len(cells))])
        u, v = unitary_of(c), unitary_of(env.circuit)
        assert u.shape == (32, 32)
        mismatched += not equivalent_up_to_phase(u, v, FULL_TOL)
    ok = not bad and mismatched == 0
    report(1, ok, f"local checks={checked} failures={len(bad)}; episodes=100 full-unitary mismatches={mismatched}")
    assert ok, bad[:5]


# -- 2 -------------------------------------------------------------------------------


def test_criterion_2_pruning():
    worse = not_idem = leftover = 0
    for s in range(10_000):
        cfg = GenConfig(4 + s % 3, 10 + s % 31, seed=s, p_cnot=(0.3, 0.5, 0.8)[s % 3])
        c = random_circuit(cfg)
        p = prune(c)
        worse += quality(p) > quality(c) + 1e-12
        not_idem += prune(p) != p
        leftover += len(enumerate_transformations(p, (HARD,)))
    ok = worse == 0 and not_idem == 0 and leftover == 0
    report(2, ok, f"circuits=10000 q-increases={worse} non-idempotent={not_idem} hard-left={leftover}")
    assert ok


# -- 3 -------------------------------------------------------------------------------


def test_criterion_3_statistics_anchors():
    raw_n, pr, ex = [], [], []
    for seed in episode_seeds(3, 300):
        ep = make_episode(GenConfig(12, 150, expansion_steps=500), seed)
        raw_n.append(len(ep.original.gates))
        pr.append((ep.pruned.depth, len(ep.pruned.gates)))
        ex.append((ep.start.depth, len(ep.start.gates)))
    n0 = float(np.mean(raw_n))
    d1, n1 = np.mean(pr, axis=0)
    d2, n2 = np.mean(ex, axis=0)
    checks = {
        "raw n": within(n0, ANCHOR_N_RAW, ANCHOR_RAW_TOL),
        "pruned d": within(d1, ANCHOR_PRUNED[0], ANCHOR_PRUNED_TOL),
        "pruned n": within(n1, ANCHOR_PRUNED[1], ANCHOR_PRUNED_TOL),
        "expanded d": within(d2, ANCHOR_EXPANDED[0], ANCHOR_EXPANDED_TOL),
        "expanded n": within(n2, ANCHOR_EXPANDED[1], ANCHOR_EXPANDED_TOL),
    }
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    report(
        3, ok,
        f"seeds=300 raw n={n0:.1f} (159+-25%); pruned d/n={d1:.2f}/{n1:.2f} (37.15/115.27+-25%); "
        f"expanded d/n={d2:.1f}/{n2:.1f} (248/508+-35%); out of band: {failed or 'none'}",
    )
    assert ok, failed


# -- 4 -------------------------------------------------------------------------------


def sa_class(seed, count):
    eps = [make_episode(GenConfig(8, 60, expansion_steps=100), s) for s in episode_seeds(seed, count)]
    return [e.start for e in eps], [e.pruned for e in eps]


def test_criterion_4_annealing():
    tune_starts, _ = sa_class(40, 10)
    cfg = tune_acceptance(AnnealConfig(steps=20_000), tune_starts, target=SA_ACCEPTANCE)
    starts, pruned = sa_class(4, 100)
    best, acc, monotone = [], [], True
    for k, (c, s) in enumerate(zip(starts, episode_seeds(44, 100))):
        res = anneal(c, AnnealConfig(steps=cfg.steps, t_start=cfg.t_start, t_end=cfg.t_end, seed=s))
        best.append(res.best_q)
        acc.append(res.acceptance)
        monotone &= bool(np.all(np.diff(res.best_trace()) <= 0))
    q_best, q_pruned, a = float(np.mean(best)), float(np.mean([quality(p) for p in pruned])), float(np.mean(acc))
    ok = q_best <= SA_RATIO * q_pruned and SA_ACCEPTANCE[0] <= a <= SA_ACCEPTANCE[1] and monotone
    report(
        4, ok,
        f"T={cfg.t_start:.4g}->{cfg.t_end:.4g} mean best q={q_best:.2f} vs 0.95*pruned={SA_RATIO * q_pruned:.2f} "
        f"(pruned {q_pruned:.2f}); acceptance={a:.3f}; best trace non-increasing={monotone}",
    )
    assert ok


# -- 5 -------------------------------------------------------------------------------


def test_criterion_5_ppo_correctness():
    cfg = TrainConfig(clip=0.2, value_coef=0.5)
    net = random_net(seed=21)
    batch = random_batch(net.num_rules, seed=22)
    grad = flat_grad(net, batch, cfg)
    g = torch.Generator().manual_seed(23)
    worst = 0.0
    for _ in range(FD_DIRECTIONS):
        d = torch.randn(grad.numel(), generator=g, dtype=torch.float64)
        d /= d.norm()
        fd = (objective_along(net, batch, cfg, d, 1e-6) - objective_along(net, batch, cfg, d, -1e-6)) / 2e-6
        an = float(grad @ d)
        worst = max(worst, abs(fd - an) / max(abs(an), abs(fd), 1e-12))
    grp = batch.groups[0]
    with torch.no_grad():
        logits, values = net(grp.obs)
        probs = masked_log_probs(logits, grp.masks).exp()
    masked_zero = bool(torch.all(probs[~grp.masks] == 0))
    still = RolloutBatch.single(grp.obs, grp.masks, grp.actions, grp.old_log_probs, values.clone(), torch.zeros_like(values))
    before = [p.detach().clone() for p in net.parameters()]
    ppo_update(net, still, TrainConfig(lr=1e-2, ppo_steps=3))
    zero_update = all(torch.equal(a, p) for a, p in zip(before, net.parameters()))
    ok = worst < FD_REL_TOL and masked_zero and zero_update
    report(5, ok, f"directions={FD_DIRECTIONS} max rel err={worst:.2e}; masked prob zero={masked_zero}; zero update={zero_update}")
    assert ok


# -- 6 and 7 -------------------------------------------------------------------------

TOY = GenConfig(num_qubits=4, num_logical_gates=20, expansion_steps=30)


@pytest.fixture(scope="module")
def trained_net():
    torch.manual_seed(0)
    net = PolicyValueNet()
    # gamma 0.9 was picked on a separate validation seed set, not on the held-out episodes below
    train(net, TOY, TrainConfig(epochs=200, episodes_per_epoch=32, episode_length=50, gamma=0.9, seed=0))
    return net


def test_criterion_6_rl_learning(trained_net):
    eps = [make_episode(TOY, s) for s in episode_seeds(12345, 200)]
    starts = [e.start for e in eps]
    t = np.array([tr.final_q for tr in rollout(trained_net, starts, 50, seed=1, record=False)])
    r = np.array([tr.final_q for tr in rollout(None, starts, 50, seed=1, record=False)])
    q_pruned = float(np.mean([quality(e.pruned) for e in eps]))
    se = math.hypot(t.std(ddof=1), r.std(ddof=1)) / math.sqrt(len(t))
    margin = (r.mean() - t.mean()) / se
    ok = margin >= RL_SIGMAS and t.mean() < q_pruned
    report(
        6, ok,
        f"held-out=200 trained final q={t.mean():.2f} random={r.mean():.2f} (margin {margin:.1f} SE); "
        f"pruned originals={q_pruned:.2f}",
    )
    assert ok


def test_criterion_7_size_extrapolation(trained_net):
    # unexpanded pruned circuits, as in the large-circuit setting: the final state is scored
    cs = [prune(random_circuit(GenConfig(50, 2500, seed=s))) for s in episode_seeds(7, 20)]
    trs = rollout(trained_net, cs, 250, seed=2, record=False)
    q0 = float(np.mean([quality(c) for c in cs]))
    q1 = float(np.mean([tr.final_q for tr in trs]))
    d1 = float(np.mean([tr.final_depth for tr in trs]))
    n1 = float(np.mean([tr.final_gates for tr in trs]))
    ok = q1 <= q0
    report(
        7, ok,
        f"circuits=20 qubits=50 mean q pruned={q0:.2f} final after T=250 policy episode={q1:.2f} "
        f"(d={d1:.1f} n={n1:.1f}; overflow={sum(t.overflow for t in trs)})",
    )
    assert ok


# -- 8 -------------------------------------------------------------------------------


def test_criterion_8_qaoa():
    rng = np.random.default_rng(8)
    graphs = []
    for n in range(1, 5):
        pairs = list(itertools.combinations(range(n), 2))
        graphs += [Graph(n, es) for k in range(len(pairs) + 1) for es in itertools.combinations(pairs, k)]
    graphs.append(Graph.complete(5))
    failures = 0
    for cycles in (1, 2):
        for g in graphs:
            params = QaoaParams(rng.uniform(0.1, 1.4, cycles), rng.uniform(0.1, 1.4, cycles))
            res = compile_maxcut(g, params)
            want = oracles.permute_outputs(maxcut_reference_unitary(g, params), res.layout)
            failures += not equivalent_up_to_phase(unitary_of(res.circuit), want, QAOA_TOL)
    six = compile_maxcut(Graph.complete(6), QaoaParams([0.37, 0.81], [0.23, 0.64]))
    ok = failures == 0
    report(
        8, ok,
        f"compilations={2 * len(graphs)} failures={failures}; K6 C=2 d={six.circuit.depth} n={len(six.circuit.gates)} "
        "(reference anchor d=75 n=142, informational)",
    )
    assert ok


# -- 9 -------------------------------------------------------------------------------


def test_criterion_9_encoding_bijection():
    total = mismatched = count_off = 0
    for s in range(1000):
        c = random_circuit(GenConfig(4 + s % 3, 25, seed=s))
        c = expand(prune(c), 8, seed=s) if s % 2 else c
        env, _ = reset(c, capacity=2 * max(c.depth, 1))
        ts = env.transformations
        count_off += int(env.mask.sum()) != len(ts)
        for t in ts:
            total += 1
            mismatched += env.action_to_transformation(env.transformation_to_action(t)) is not t
    ok = mismatched == 0 and count_off == 0
    report(9, ok, f"circuits=1000 transformations={total} round-trip mismatches={mismatched} mask-count mismatches={count_off}")
    assert ok
