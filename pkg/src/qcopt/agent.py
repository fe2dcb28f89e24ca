"""Fully convolutional policy/value network and PPO training.

The network sees an observation grid (m, L, C) as an image with C colour
channels and spatial axes (qubit, moment). The policy head emits one logit
per (qubit, moment, soft rule) cell; the value head is a single channel
averaged over all cells. No parameter depends on m or L.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch
from torch import nn

from .circuit import Circuit
from .datagen import GenConfig, episode_seeds, make_episode
from .env import DEFAULT_WEIGHTS, NUM_CHANNELS, CircuitEnv, soft_rule_names
from .errors import AllMasked, NonfiniteLoss
from .rules import prune


class PolicyValueNet(nn.Module):
    def __init__(
        self,
        in_channels: int = NUM_CHANNELS,
        hidden: int = 32,
        layers: int = 4,
        kernel: int = 3,
        num_rules: int | None = None,
    ):
        super().__init__()
        if num_rules is None:
            num_rules = len(soft_rule_names())
        self.arch = dict(in_channels=in_channels, hidden=hidden, layers=layers, kernel=kernel, num_rules=num_rules)
        body = []
        ch = in_channels
        for _ in range(layers):
            body += [nn.Conv2d(ch, hidden, kernel, padding=kernel // 2), nn.ReLU()]
            ch = hidden
        self.body = nn.Sequential(*body)
        self.policy = nn.Conv2d(ch, num_rules, 1)
        self.value = nn.Conv2d(ch, 1, 1)
        # uniform initial policy
        nn.init.zeros_(self.policy.weight)
        nn.init.zeros_(self.policy.bias)

    @property
    def num_rules(self) -> int:
        return self.arch["num_rules"]

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """x: (B, C, m, L) -> logits (B, m*L*R) in (qubit, moment, rule) order, values (B,)."""
        h = self.body(x)
        logits = self.policy(h).permute(0, 2, 3, 1).reshape(x.shape[0], -1)
        values = self.value(h).mean(dim=(1, 2, 3))
        return logits, values


def obs_to_tensor(obs, dtype=torch.float32) -> torch.Tensor:
    """(m, L, C) or (B, m, L, C) uint8 -> (B, C, m, L) float tensor."""
    t = torch.as_tensor(np.asarray(obs), dtype=dtype)
    if t.dim() == 3:
        t = t.unsqueeze(0)
    return t.permute(0, 3, 1, 2).contiguous()


def masked_log_probs(logits: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Log-softmax restricted to mask; masked cells get -inf (probability exactly 0)."""
    if not bool(mask.any(dim=-1).all()):
        raise AllMasked("observation has no legal action")
    return torch.log_softmax(logits.masked_fill(~mask, float("-inf")), dim=-1)


def forward(net: PolicyValueNet, observation, mask) -> tuple[torch.Tensor, float]:
    """Probabilities over the flattened (m, L, R) grid and the state value."""
    mask_t = torch.as_tensor(np.asarray(mask), dtype=torch.bool).reshape(1, -1)
    with torch.no_grad():
        logits, v = net(obs_to_tensor(observation, next(net.parameters()).dtype))
        logp = masked_log_probs(logits, mask_t)
    return logp.exp()[0], float(v[0])


# ---------------------------------------------------------------------------
# trajectories and PPO


@dataclass
class Trajectory:
    observations: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    values: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    #: V(s_T); zero when the episode ended in a terminal state
    last_value: float = 0.0
    final_q: float = 0.0
    start_q: float = 0.0
    final_depth: int = 0
    final_gates: int = 0
    overflow: bool = False

    def __len__(self):
        return len(self.rewards)


def returns_and_advantages(
    rewards: Sequence[float], values: Sequence[float], last_value: float, gamma: float
) -> tuple[np.ndarray, np.ndarray]:
    """Discounted suffix sums R_t and one-step advantages r_t + g V_{t+1} - V_t."""
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    ret = np.zeros_like(r)
    acc = 0.0
    for t in range(len(r) - 1, -1, -1):
        acc = r[t] + gamma * acc
        ret[t] = acc
    v_next = np.append(v[1:], last_value)
    adv = r + gamma * v_next - v
    return ret, adv


@dataclass
class TrainConfig:
    gamma: float = 0.99
    value_coef: float = 0.5
    clip: float = 0.2
    lr: float = 1e-3
    episodes_per_epoch: int = 32
    epochs: int = 200
    ppo_steps: int = 16
    entropy_coef: float = 0.0
    episode_length: int = 50
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.gamma <= 1):
            raise ValueError("gamma must be in (0, 1]")
        if self.value_coef < 0 or self.clip <= 0:
            raise ValueError("need value_coef >= 0 and clip > 0")


@dataclass
class RolloutGroup:
    """Steps whose observations share one (m, L) shape."""

    obs: torch.Tensor  # (N, C, m, L)
    masks: torch.Tensor  # (N, m*L*R) bool
    actions: torch.Tensor  # (N,) long, flat cell index
    old_log_probs: torch.Tensor  # (N,)
    returns: torch.Tensor  # (N,)
    advantages: torch.Tensor  # (N,), not yet normalised

    def to(self, dtype) -> "RolloutGroup":
        return RolloutGroup(
            self.obs.to(dtype), self.masks, self.actions,
            self.old_log_probs.to(dtype), self.returns.to(dtype), self.advantages.to(dtype),
        )


@dataclass
class RolloutBatch:
    groups: list

    def __len__(self):
        return sum(len(g.actions) for g in self.groups)

    def to(self, dtype) -> "RolloutBatch":
        return RolloutBatch([g.to(dtype) for g in self.groups])

    @classmethod
    def single(cls, obs, masks, actions, old_log_probs, returns, advantages) -> "RolloutBatch":
        return cls([RolloutGroup(obs, masks, actions, old_log_probs, returns, advantages)])


def make_batch(trajs: Sequence[Trajectory], gamma: float) -> RolloutBatch:
    by_shape: dict = {}
    for tr in trajs:
        if not len(tr):
            continue
        R, A = returns_and_advantages(tr.rewards, tr.values, tr.last_value, gamma)
        for t in range(len(tr)):
            rows = by_shape.setdefault(tr.observations[t].shape, [])
            rows.append((tr.observations[t], tr.masks[t].reshape(-1), tr.actions[t], tr.log_probs[t], R[t], A[t]))
    if not by_shape:
        raise ValueError("empty batch")
    groups = []
    for shape in sorted(by_shape):
        obs, masks, acts, logps, rets, advs = zip(*by_shape[shape])
        groups.append(
            RolloutGroup(
                obs_to_tensor(np.stack(obs)),
                torch.as_tensor(np.stack(masks)),
                torch.as_tensor(acts, dtype=torch.long),
                torch.as_tensor(logps, dtype=torch.float32),
                torch.as_tensor(rets, dtype=torch.float32),
                torch.as_tensor(advs, dtype=torch.float32),
            )
        )
    return RolloutBatch(groups)


def normalize_advantages(adv: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    centred = adv - adv.mean()
    std = centred.std(unbiased=False) if adv.numel() > 1 else adv.new_tensor(0.0)
    if std < eps:
        return centred
    return centred / std


def ppo_objective(net: PolicyValueNet, batch: RolloutBatch, cfg: TrainConfig):
    """Clipped surrogate minus value loss (to be maximised), with parts.

    Means run over all steps of the batch; advantages are normalised over
    the whole batch.
    """
    logps, values, old, rets, masks, logp_alls = [], [], [], [], [], []
    for g in batch.groups:
        logits, v = net(g.obs)
        la = masked_log_probs(logits, g.masks)
        logps.append(la.gather(1, g.actions[:, None])[:, 0])
        values.append(v)
        old.append(g.old_log_probs)
        rets.append(g.returns)
        if cfg.entropy_coef:
            masks.append(g.masks)
            logp_alls.append(la)
    logp, values, old, rets = map(torch.cat, (logps, values, old, rets))
    adv = normalize_advantages(torch.cat([g.advantages for g in batch.groups]))
    ratio = torch.exp(logp - old)
    surr = torch.minimum(ratio * adv, torch.clamp(ratio, 1 - cfg.clip, 1 + cfg.clip) * adv)
    policy_term = surr.mean()
    value_loss = ((values - rets) ** 2).mean()
    obj = policy_term - cfg.value_coef * value_loss
    if cfg.entropy_coef:
        ent = 0.0
        for la, m in zip(logp_alls, masks):
            ent = ent - (la.exp() * torch.where(m, la, torch.zeros_like(la))).sum()
        obj = obj + cfg.entropy_coef * ent / len(logp)
    with torch.no_grad():
        parts = {
            "surrogate": policy_term.item(),
            "value_loss": value_loss.item(),
            "clip_frac": ((ratio - 1).abs() > cfg.clip).float().mean().item(),
            "approx_kl": (old - logp).mean().item(),
        }
    return obj, parts


def ppo_update(net: PolicyValueNet, batch: RolloutBatch, cfg: TrainConfig, optimizer=None) -> dict:
    """`cfg.ppo_steps` full-batch ascent steps on the PPO objective."""
    if optimizer is None:
        optimizer = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    report = {}
    for _ in range(cfg.ppo_steps):
        obj, report = ppo_objective(net, batch, cfg)
        if not torch.isfinite(obj):
            raise NonfiniteLoss(f"PPO objective is {obj.item()}")
        optimizer.zero_grad()
        (-obj).backward()
        optimizer.step()
        report["objective"] = obj.item()
    return report


# ---------------------------------------------------------------------------
# rollouts


def _sample(logp: torch.Tensor, gen: torch.Generator, greedy: bool) -> torch.Tensor:
    if greedy:
        return logp.argmax(dim=-1)
    return torch.multinomial(logp.exp(), 1, generator=gen)[:, 0]


def bucket_capacity(depth: int, factor: int = 2, quantum: int = 8) -> int:
    """factor * depth rounded up to a multiple of `quantum` (at least `quantum`)."""
    return max(quantum, -(-factor * depth // quantum) * quantum)


def _policy(net, obs: np.ndarray, masks: np.ndarray):
    mask_t = torch.as_tensor(masks)
    if net is None:
        logits = torch.zeros(mask_t.shape)
        values = torch.zeros(len(masks))
    else:
        with torch.no_grad():
            logits, values = net(obs_to_tensor(obs))
    return masked_log_probs(logits, mask_t), values


def rollout(
    net: PolicyValueNet | None,
    starts: Sequence[Circuit],
    episode_length: int,
    capacity: int | None = None,
    seed: int = 0,
    greedy: bool = False,
    quality_fn=DEFAULT_WEIGHTS,
    record: bool = True,
) -> list[Trajectory]:
    """Run episodes in lockstep; each step does one forward pass per observation shape.

    Each episode's moment capacity defaults to `bucket_capacity(depth(start))`.
    `net=None` samples uniformly among legal actions.
    """
    gen = torch.Generator().manual_seed(seed)
    envs, trajs = [], []
    for c in starts:
        env = CircuitEnv(episode_length, capacity or bucket_capacity(c.depth), quality_fn)
        env.reset(c)
        envs.append(env)
        trajs.append(Trajectory(start_q=env.q))
    while True:
        groups: dict = {}
        for i, e in enumerate(envs):
            if not e.done:
                groups.setdefault(e.mask.shape, []).append(i)
        if not groups:
            break
        for shape in sorted(groups):
            live = groups[shape]
            obs = np.stack([envs[i].observation for i in live])
            masks = np.stack([envs[i].mask for i in live]).reshape(len(live), -1)
            logp, values = _policy(net, obs, masks)
            acts = _sample(logp, gen, greedy)
            chosen = logp.gather(1, acts[:, None])[:, 0]
            for k, i in enumerate(live):
                a = int(acts[k])
                out = envs[i].step(np.unravel_index(a, shape))
                tr = trajs[i]
                if record:
                    tr.observations.append(obs[k])
                    tr.masks.append(masks[k])
                    tr.actions.append(a)
                    tr.values.append(float(values[k]))
                    tr.log_probs.append(float(chosen[k]))
                tr.rewards.append(out.reward)
                tr.overflow = out.info["overflow"]
    # bootstrap V(s_T) for episodes cut by the step limit
    if net is not None and record:
        for i, e in enumerate(envs):
            if not trajs[i].overflow and e._cells:
                with torch.no_grad():
                    _, v = net(obs_to_tensor(e.observation))
                trajs[i].last_value = float(v[0])
    for env, tr in zip(envs, trajs):
        tr.final_q = env.q
        tr.final_depth = env.circuit.depth
        tr.final_gates = len(env.circuit.gates)
    return trajs


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    net: PolicyValueNet
    #: one dict per epoch: epoch, mean_d, mean_n, mean_q, mean_return, overflow
    curves: list


def train(
    net: PolicyValueNet,
    gen: GenConfig,
    cfg: TrainConfig,
    quality_fn=DEFAULT_WEIGHTS,
    callback: Callable[[dict], None] | None = None,
) -> TrainResult:
    """PPO on a fresh batch of generated circuits every epoch."""
    torch.manual_seed(cfg.seed)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    curves = []
    seeds = episode_seeds(cfg.seed, cfg.epochs) if cfg.epochs else []
    for epoch in range(cfg.epochs):
        starts = [make_episode(gen, s).start for s in episode_seeds(seeds[epoch], cfg.episodes_per_epoch)]
        trajs = rollout(net, starts, cfg.episode_length, seed=seeds[epoch], quality_fn=quality_fn)
        row = {
            "epoch": epoch,
            "mean_d": float(np.mean([t.final_depth for t in trajs])),
            "mean_n": float(np.mean([t.final_gates for t in trajs])),
            "mean_q": float(np.mean([t.final_q for t in trajs])),
            "mean_return": float(np.mean([sum(t.rewards) for t in trajs])),
            "overflow": float(np.mean([t.overflow for t in trajs])),
        }
        if any(len(t) for t in trajs):
            row.update(ppo_update(net, make_batch(trajs, cfg.gamma), cfg, opt))
        curves.append(row)
        if callback:
            callback(row)
    return TrainResult(net, curves)


def write_curves(curves: Sequence[dict], path) -> None:
    cols = ["epoch", "mean_d", "mean_n", "mean_q", "mean_return"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in curves:
            w.writerow([row[c] for c in cols])


# ---------------------------------------------------------------------------
# inference


@dataclass
class OptimizeResult:
    best: Circuit
    best_q: float
    start: Circuit
    #: (rule, locus) moves leading from `start` to `best`
    log: list


def optimize(
    net: PolicyValueNet,
    circuit: Circuit,
    episode_length: int = 250,
    attempts: int = 1,
    greedy: bool = False,
    seed: int = 0,
    quality_fn=DEFAULT_WEIGHTS,
    capacity: int | None = None,
) -> OptimizeResult:
    """Best circuit over every state visited in `attempts` episodes from prune(circuit)."""
    start = prune(circuit)
    best, best_q, best_log = start, quality_fn(start), []
    gen = torch.Generator().manual_seed(seed)
    env = CircuitEnv(episode_length, capacity, quality_fn)
    for _ in range(attempts):
        env.reset(start)
        log = []
        while not env.done:
            mask_t = torch.as_tensor(env.mask.reshape(1, -1))
            with torch.no_grad():
                logits, _ = net(obs_to_tensor(env.observation))
            a = int(_sample(masked_log_probs(logits, mask_t), gen, greedy)[0])
            t = env.action_to_transformation(np.unravel_index(a, env.mask.shape))
            log.append((t.rule.name, t.locus))
            env.step(np.unravel_index(a, env.mask.shape))
            if env.q < best_q:
                best, best_q, best_log = env.circuit, env.q, list(log)
    return OptimizeResult(best, best_q, start, best_log)


# ---------------------------------------------------------------------------
# parameter files
#
# layout (little endian):
#   magic b"QCPV", u32 version, u32 header length, header JSON (architecture),
#   u32 tensor count, then per tensor: u16 name length, name (utf-8),
#   u8 ndim, ndim x u32 dims, row-major float32 data.

MAGIC = b"QCPV"
FORMAT_VERSION = 1


def save_params(net: PolicyValueNet, path) -> None:
    buf = io.BytesIO()
    header = json.dumps(net.arch, sort_keys=True).encode()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", FORMAT_VERSION, len(header)))
    buf.write(header)
    state = net.state_dict()
    buf.write(struct.pack("<I", len(state)))
    for name, t in state.items():
        raw = name.encode()
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", t.dim()))
        buf.write(struct.pack(f"<{t.dim()}I", *t.shape))
        buf.write(t.detach().cpu().numpy().astype("<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_params(path) -> PolicyValueNet:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError("not a parameter file")
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported parameter file version {version}")
    off = 12
    arch = json.loads(data[off : off + hlen])
    off += hlen
    net = PolicyValueNet(**arch)
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    state = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off : off + nlen].decode()
        off += nlen
        (ndim,) = struct.unpack_from("<B", data, off)
        off += 1
        dims = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        size = int(np.prod(dims)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f4", count=size, offset=off).reshape(dims)
        off += 4 * size
        state[name] = torch.from_numpy(arr.astype(np.float32))
    net.load_state_dict(state)
    return net
