"""Train a small policy-value net with PPO and compare it with a random policy.

A short run on 4-qubit circuits; a few minutes on one core. Longer runs
(200 epochs) learn considerably more.
"""

# %%
import numpy as np
import torch

from qcopt.agent import PolicyValueNet, TrainConfig, optimize, rollout, train
from qcopt.datagen import GenConfig, episode_seeds, make_episode
from qcopt.env import quality

torch.manual_seed(0)
gen = GenConfig(num_qubits=4, num_logical_gates=20, expansion_steps=30)
net = PolicyValueNet()
# a shorter discount than the default makes detours late in an episode visibly costly
cfg = TrainConfig(epochs=15, episodes_per_epoch=32, episode_length=50, gamma=0.9)

res = train(net, gen, cfg, callback=lambda r: print(f"epoch {r['epoch']:3d} mean final q {r['mean_q']:.2f}"))

# %% held-out comparison on the same start circuits
eps = [make_episode(gen, s) for s in episode_seeds(999, 100)]
starts = [e.start for e in eps]
trained = np.mean([t.final_q for t in rollout(net, starts, 50, seed=1, record=False)])
rand = np.mean([t.final_q for t in rollout(None, starts, 50, seed=1, record=False)])
print(f"start q {np.mean([quality(c) for c in starts]):.2f}  pruned q {np.mean([quality(e.pruned) for e in eps]):.2f}")
print(f"random policy {rand:.2f}  trained policy {trained:.2f}")

# %% the net is fully convolutional: the same weights run on a 12-qubit circuit
big = make_episode(GenConfig(12, 150, expansion_steps=0), 0).pruned
out = optimize(net, big, episode_length=50, attempts=2)
print(f"12 qubits: pruned q {quality(out.start):.2f} -> best q {out.best_q:.2f}")
