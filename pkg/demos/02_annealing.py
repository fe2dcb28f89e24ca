"""Simulated annealing over soft rewrites.

Generates a few 8-qubit circuits, scrambles them with random soft moves and
lets a Metropolis chain look for a cheaper equivalent circuit.
"""

# %%
import numpy as np

from qcopt.anneal import AnnealConfig, anneal
from qcopt.circuit import equivalent_up_to_phase, unitary_of
from qcopt.datagen import GenConfig, episode_seeds, make_episode
from qcopt.env import quality

gen = GenConfig(num_qubits=8, num_logical_gates=60, expansion_steps=100)
episodes = [make_episode(gen, s) for s in episode_seeds(0, 3)]

# %%
for ep in episodes:
    res = anneal(ep.start, AnnealConfig(steps=3000, seed=1))
    print(
        f"pruned q={quality(ep.pruned):6.2f}  scrambled q={quality(ep.start):6.2f}  "
        f"annealed q={res.best_q:6.2f}  acceptance={res.acceptance:.2f}"
    )
    assert equivalent_up_to_phase(unitary_of(ep.start), unitary_of(res.best))

# %% the best-so-far trace only goes down
bt = res.best_trace()
print("best q every 500 steps:", np.round(bt[::500], 2))
