"""MADDPG from scratch: decentralized actors, centralized critics.

Each learning entity (the surrounding agents and, optionally, the evader) owns
a bounded actor and a critic that sees every entity's observation and every
learner's action. Networks are numpy ``Mlp``s with hand-written gradients.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import arena as A
from .config import ArenaConfig, MaddpgConfig, RewardWeights
from .nn import Adam, Mlp

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"MARLOTCK"
CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


class CheckpointMismatch(CheckpointError):
    pass


@dataclass
class NoiseSchedule:
    scale: float = 0.75
    decay: float = 0.999995
    floor: float = 0.01
    steps: int = 0
    initial: float | None = None

    def __post_init__(self) -> None:
        if self.initial is None:
            self.initial = self.scale

    def advance(self) -> float:
        # closed form avoids drift from repeated multiplication
        self.steps += 1
        self.scale = max(self.floor, self.initial * self.decay ** self.steps)
        return self.scale

    @staticmethod
    def steps_to_floor(initial: float, decay: float, floor: float) -> int:
        return math.ceil(math.log(floor / initial) / math.log(decay))


class Actor:
    """Mlp whose output is squashed into an axis-aligned action box."""

    def __init__(self, obs_dim: int, low, high, hidden: int = 128, layers: int = 2,
                 rng: np.random.Generator | None = None, dtype=np.float32,
                 zero_output: bool = False):
        self.low = np.asarray(low, dtype=float)
        self.high = np.asarray(high, dtype=float)
        self.net = Mlp([obs_dim] + [hidden] * layers + [len(self.low)], rng, dtype,
                       zero_output=zero_output)
        self._half = ((self.high - self.low) / 2).astype(self.net.dtype)
        self._mid = ((self.high + self.low) / 2).astype(self.net.dtype)

    @property
    def obs_dim(self) -> int:
        return self.net.in_dim

    def forward(self, obs: np.ndarray, keep: bool = False):
        z, acts = self.net.forward(obs, keep=True)
        t = np.tanh(z)
        a = self._mid + self._half * t
        return (a, (acts, t)) if keep else a

    __call__ = forward

    def backward(self, cache, grad_action: np.ndarray):
        acts, t = cache
        return self.net.backward(acts, grad_action * self._half * (1.0 - t * t))

    def clip(self, a: np.ndarray) -> np.ndarray:
        return np.clip(a, self.low, self.high)

    def copy(self) -> "Actor":
        other = Actor.__new__(Actor)
        other.low, other.high = self.low.copy(), self.high.copy()
        other.net = self.net.copy()
        other._half, other._mid = self._half, self._mid
        return other


def actor_forward(actor: Actor, state: np.ndarray) -> np.ndarray:
    # float32 rounding of a saturated tanh can land a hair outside the box
    return actor.clip(np.asarray(actor(state), dtype=float))


def select_action(actor: Actor, state: np.ndarray, noise: NoiseSchedule,
                  rng: np.random.Generator) -> np.ndarray:
    """Actor output plus Gaussian exploration, clamped to the action box.

    The noise standard deviation is ``noise.scale`` times the half-width of each
    action dimension; the schedule advances by one step.
    """
    raw = actor_forward(actor, state)
    half = (actor.high - actor.low) / 2
    a = actor.clip(raw + rng.normal(size=raw.shape) * noise.scale * half)
    noise.advance()
    return a


@dataclass
class Transition:
    obs: list[np.ndarray]
    actions: list[np.ndarray]
    rewards: np.ndarray
    next_obs: list[np.ndarray]
    done: bool


class ReplayBuffer:
    def __init__(self, obs_dims: list[int], act_dims: list[int], capacity: int):
        self.capacity = capacity
        self.obs = [np.zeros((capacity, d), np.float32) for d in obs_dims]
        self.next_obs = [np.zeros((capacity, d), np.float32) for d in obs_dims]
        self.actions = [np.zeros((capacity, d), np.float32) for d in act_dims]
        self.rewards = np.zeros((capacity, len(obs_dims)), np.float32)
        self.done = np.zeros(capacity, np.float32)
        self.size = 0
        self.ptr = 0

    def __len__(self) -> int:
        return self.size

    def add(self, tr: Transition) -> None:
        if len(tr.obs) != len(self.obs) or len(tr.actions) != len(self.actions):
            raise ValueError("transition does not match buffer agent layout")
        i = self.ptr
        for k, o in enumerate(tr.obs):
            self.obs[k][i] = o
            self.next_obs[k][i] = tr.next_obs[k]
        for k, a in enumerate(tr.actions):
            self.actions[k][i] = a
        self.rewards[i] = tr.rewards
        self.done[i] = float(tr.done)
        self.ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch: int, rng: np.random.Generator) -> dict:
        if self.size < batch:
            raise ValueError(f"buffer holds {self.size} < batch {batch}")
        idx = rng.integers(0, self.size, size=batch)
        return {
            "obs": [o[idx] for o in self.obs],
            "next_obs": [o[idx] for o in self.next_obs],
            "actions": [a[idx] for a in self.actions],
            "rewards": self.rewards[idx],
            "done": self.done[idx],
        }


class Learner:
    """One entity's actor/critic pair with targets and optimizers.

    ``critic_obs`` lists which entity observations its critic conditions on and
    ``critic_acts`` which learners' actions; MADDPG uses all of both, the
    independent baseline only its own.
    """

    def __init__(self, index: int, actor: Actor, critic_obs: list[int], critic_acts: list[int],
                 obs_dims: list[int], act_dims: list[int], cfg: MaddpgConfig,
                 rng: np.random.Generator, dtype=np.float32):
        self.index = index
        self.actor = actor
        self.critic_obs = critic_obs
        self.critic_acts = critic_acts
        in_dim = sum(obs_dims[k] for k in critic_obs) + sum(act_dims[k] for k in critic_acts)
        self.critic = Mlp([in_dim] + [cfg.hidden] * cfg.layers + [1], rng, dtype)
        self.target_actor = actor.copy()
        self.target_critic = self.critic.copy()
        self.actor_opt = Adam(self.actor.net.params, cfg.lr)
        self.critic_opt = Adam(self.critic.params, cfg.lr)
        self.noise = NoiseSchedule(cfg.noise_init, cfg.noise_decay, cfg.noise_floor)
        # where this learner's own action sits inside the critic input
        offset = sum(obs_dims[k] for k in critic_obs)
        for k in critic_acts:
            if k == index:
                break
            offset += act_dims[k]
        self.own_action_slice = slice(offset, offset + act_dims[index])

    def critic_input(self, obs: list[np.ndarray], actions: list[np.ndarray]) -> np.ndarray:
        return np.concatenate([obs[k] for k in self.critic_obs]
                              + [actions[k] for k in self.critic_acts], axis=-1)


def critic_loss_and_grads(critic: Mlp, x: np.ndarray, y: np.ndarray):
    """Mean squared TD error and its gradients w.r.t. critic parameters."""
    q, acts = critic.forward(x, keep=True)
    q = q[:, 0]
    err = q - y
    loss = float(np.mean(err * err))
    grads, _ = critic.backward(acts, (2.0 / len(y)) * err[:, None])
    return loss, grads, q


def maddpg_update(learners: list[Learner], batch: dict, cfg: MaddpgConfig) -> list[dict]:
    """One gradient step for every learner followed by soft target updates."""
    obs, nobs, acts = batch["obs"], batch["next_obs"], batch["actions"]
    rewards, done = batch["rewards"], batch["done"]
    # target policy actions for every learner; non-learners keep replayed actions
    next_acts = list(acts)
    by_index = {ln.index: ln for ln in learners}
    for k in range(len(acts)):
        if k in by_index:
            next_acts[k] = by_index[k].target_actor(nobs[k])
    stats = []
    for ln in learners:
        i = ln.index
        q_next = ln.target_critic(ln.critic_input(nobs, next_acts))[:, 0]
        y = rewards[:, i] + cfg.gamma * (1.0 - done) * q_next
        x = ln.critic_input(obs, acts)
        c_loss, c_grads, q = critic_loss_and_grads(ln.critic, x, y)
        ln.critic_opt.step(c_grads)

        a_i, a_cache = ln.actor.forward(obs[i], keep=True)
        joint = list(acts)
        joint[i] = a_i
        xa = ln.critic_input(obs, joint)
        qa, qa_cache = ln.critic.forward(xa, keep=True)
        _, gx = ln.critic.backward(qa_cache, np.full_like(qa, -1.0 / len(qa)))
        g_act = gx[:, ln.own_action_slice]
        a_grads, _ = ln.actor.backward(a_cache, g_act)
        ln.actor_opt.step(a_grads)
        a_loss = -float(qa.mean())
        if not (math.isfinite(c_loss) and math.isfinite(a_loss)):
            raise TrainingDiverged(f"non-finite loss for learner {i}: critic={c_loss} actor={a_loss}")
        if not (ln.critic.all_finite() and ln.actor.net.all_finite()):
            raise TrainingDiverged(f"non-finite parameters for learner {i}")
        stats.append({"critic_loss": c_loss, "actor_loss": a_loss,
                      "mean_abs_q": float(np.abs(q).mean())})
    for ln in learners:
        ln.target_actor.net.soft_update_from(ln.actor.net, cfg.tau)
        ln.target_critic.soft_update_from(ln.critic, cfg.tau)
    return stats


@dataclass
class Checkpoint:
    """Actor parameters for every learner plus training metadata."""

    actors: list[Actor]
    meta: dict = field(default_factory=dict)

    @property
    def n_agents(self) -> int:
        return int(self.meta["n_agents"])

    def agent_actor(self, i: int) -> Actor:
        return self.actors[i]

    @property
    def evader_actor(self) -> Actor | None:
        return self.actors[self.n_agents] if len(self.actors) > self.n_agents else None

    def check_agents(self, n: int) -> None:
        if self.n_agents != n:
            raise CheckpointMismatch(
                f"checkpoint trained for {self.n_agents} agents, run needs {n} "
                f"(observation dimension {self.actors[0].obs_dim} vs {A.obs_dim(n)})")


def save_checkpoint(ck: Checkpoint, path: str | Path) -> None:
    """Binary layout: magic, u32 header length, JSON header, float32 LE payload."""
    arrays = []
    layout = []
    for actor in ck.actors:
        layout.append({
            "sizes": actor.net.sizes,
            "low": actor.low.tolist(),
            "high": actor.high.tolist(),
        })
        arrays.extend(actor.net.params)
    payload = b"".join(np.ascontiguousarray(p, dtype="<f4").tobytes() for p in arrays)
    header = {
        "version": CHECKPOINT_VERSION,
        "actors": layout,
        "meta": ck.meta,
        "payload_bytes": len(payload),
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    hb = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(hb)))
        fh.write(hb)
        fh.write(payload)


def load_checkpoint(path: str | Path, n_agents: int | None = None) -> Checkpoint:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic or truncated)")
    (hlen,) = struct.unpack("<I", data[8:12])
    if 12 + hlen > len(data):
        raise CheckpointError(f"{path}: corrupt checkpoint, header truncated")
    try:
        header = json.loads(data[12:12 + hlen])
    except ValueError as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint header") from exc
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")
    payload = data[12 + hlen:]
    if len(payload) != header["payload_bytes"]:
        raise CheckpointError(
            f"{path}: corrupt checkpoint, payload has {len(payload)} of {header['payload_bytes']} bytes")
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise CheckpointError(f"{path}: corrupt checkpoint, payload hash mismatch")
    flat = np.frombuffer(payload, dtype="<f4")
    actors = []
    pos = 0
    for spec in header["actors"]:
        sizes = spec["sizes"]
        actor = Actor(sizes[0], spec["low"], spec["high"], hidden=sizes[1], layers=len(sizes) - 2)
        for k, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:])):
            actor.net.params[2 * k] = flat[pos:pos + fi * fo].reshape(fi, fo).astype(np.float32)
            pos += fi * fo
            actor.net.params[2 * k + 1] = flat[pos:pos + fo].astype(np.float32)
            pos += fo
        actors.append(actor)
    ck = Checkpoint(actors, header["meta"])
    if n_agents is not None:
        ck.check_agents(n_agents)
    return ck


# --------------------------------------------------------------------------
# training


def build_learners(n: int, arena_cfg: ArenaConfig, cfg: MaddpgConfig, rng: np.random.Generator,
                   centralized: bool = True) -> tuple[list[Learner], list[int], list[int]]:
    learned_evader = arena_cfg.evader == "learned"
    obs_dims = [A.obs_dim(n)] * n + [A.evader_obs_dim(n)]
    act_dims = [2] * (n + 1)
    n_learners = n + 1 if learned_evader else n
    learner_ids = list(range(n_learners))
    learners = []
    for i in learner_ids:
        if i < n:
            low, high = arena_cfg.agent_action_low, arena_cfg.agent_action_high
        else:
            low, high = arena_cfg.evader_action_low, arena_cfg.evader_action_high
        actor = Actor(obs_dims[i], low, high, cfg.hidden, cfg.layers, rng)
        if centralized:
            c_obs, c_acts = list(range(n + 1)), learner_ids
        else:
            c_obs, c_acts = [i], [i]
        learners.append(Learner(i, actor, c_obs, c_acts, obs_dims, act_dims, cfg, rng))
    return learners, obs_dims, act_dims


def _entity_obs(state: A.ArenaState) -> list[np.ndarray]:
    return [A.agent_observation(state, i) for i in range(state.n)] + [A.evader_observation(state)]


def independent_rewards(terms: A.RewardTerms, state: A.ArenaState, weights: RewardWeights) -> np.ndarray:
    """Per-agent reward for the independent learners: alignment plus a proximity bonus."""
    close = state.distances() <= weights.d_enclosure
    return weights.mu1 * terms.near + weights.mu3 * weights.completion * close


def train(cfg: MaddpgConfig | None = None, arena_cfg: ArenaConfig | None = None,
          weights: RewardWeights | None = None, centralized: bool = True,
          progress: Callable[[int, dict], None] | None = None,
          time_limit: float | None = None) -> Checkpoint:
    """Train surrounding agents (and a learned evader) in the arena.

    With ``centralized=False`` every agent learns alone against a scripted
    evader, critics see only their own observation and action, and rewards
    drop the shared encirclement terms.
    """
    cfg = cfg or MaddpgConfig()
    arena_cfg = arena_cfg or ArenaConfig()
    weights = weights or RewardWeights()
    if not centralized:
        arena_cfg = ArenaConfig(**{**arena_cfg.__dict__, "evader": "scripted"})
    rng = np.random.default_rng(cfg.seed)
    n = arena_cfg.n_agents
    learners, obs_dims, act_dims = build_learners(n, arena_cfg, cfg, rng, centralized)
    buffer = ReplayBuffer(obs_dims, act_dims, cfg.buffer_size)
    env = A.ArenaEnv(arena_cfg, weights)
    learned_evader = len(learners) > n
    curve: list[float] = []
    successes: list[bool] = []
    total_steps = 0
    updates = 0
    t0 = time.perf_counter()
    episodes_done = 0
    for ep in range(cfg.episodes):
        state = env.reset(rng)
        ep_return = 0.0
        success = False
        for _ in range(arena_cfg.episode_cap):
            obs = _entity_obs(state)
            actions = [select_action(ln.actor, obs[ln.index], ln.noise, rng) for ln in learners]
            if learned_evader:
                ev_action = actions[n]
            else:
                ev_action = A.scripted_evader_action(state, rng, arena_cfg)
                actions.append(ev_action)
            nxt, terms, r_ego, done, timeout = env.step(np.array(actions[:n]), ev_action)
            if centralized:
                rewards = np.append(terms.total, r_ego)
            else:
                rewards = np.append(independent_rewards(terms, nxt, weights), r_ego)
                done = bool((nxt.distances() <= weights.d_enclosure).all())
            buffer.add(Transition(obs, actions, rewards, _entity_obs(nxt), done))
            ep_return += float(rewards[:n].mean())
            state = nxt
            total_steps += 1
            if total_steps % cfg.update_every == 0 and len(buffer) >= max(cfg.batch_size, cfg.warmup):
                stats = maddpg_update(learners, buffer.sample(cfg.batch_size, rng), cfg)
                updates += 1
                mean_q = max(s["mean_abs_q"] for s in stats)
                if mean_q > cfg.q_divergence:
                    raise TrainingDiverged(f"mean |Q| {mean_q:.3g} exceeded {cfg.q_divergence:g}")
            if done:
                success = True
                break
            if timeout:
                break
        curve.append(ep_return)
        successes.append(success)
        episodes_done += 1
        if progress is not None:
            progress(ep, {"return": ep_return, "success": success, "steps": total_steps,
                          "noise": learners[0].noise.scale, "updates": updates,
                          "recent_success": float(np.mean(successes[-100:]))})
        if time_limit is not None and time.perf_counter() - t0 > time_limit:
            log.warning("training stopped by time limit after %d episodes", episodes_done)
            break
    actors = [ln.actor for ln in learners]
    meta = {
        "n_agents": n,
        "centralized": centralized,
        "evader": arena_cfg.evader,
        "seed": cfg.seed,
        "episodes": episodes_done,
        "env_steps": total_steps,
        "updates": updates,
        "final_noise": learners[0].noise.scale,
        "reward_curve": [round(float(r), 6) for r in curve],
        "train_success": [bool(s) for s in successes],
    }
    return Checkpoint(actors, meta)


def evaluate(ck: Checkpoint, episodes: int = 100, seed: int = 12345,
             arena_cfg: ArenaConfig | None = None, weights: RewardWeights | None = None) -> dict:
    """Greedy rollouts; returns enclosure success rate and distance statistics."""
    arena_cfg = arena_cfg or ArenaConfig()
    weights = weights or RewardWeights()
    n = ck.n_agents
    arena_cfg = ArenaConfig(**{**arena_cfg.__dict__, "n_agents": n})
    rng = np.random.default_rng(seed)
    env = A.ArenaEnv(arena_cfg, weights)
    evader = ck.evader_actor
    wins = 0
    d0, d1 = [], []
    lengths = []
    for _ in range(episodes):
        state = env.reset(rng)
        d0.append(float(state.distances().mean()))
        for t in range(arena_cfg.episode_cap):
            obs = _entity_obs(state)
            acts = np.array([actor_forward(ck.actors[i], obs[i]) for i in range(n)])
            if evader is not None:
                ev = actor_forward(evader, obs[n])
            else:
                ev = A.scripted_evader_action(state, rng, arena_cfg)
            state, terms, _, done, timeout = env.step(acts, ev)
            if done:
                wins += 1
                break
            if timeout:
                break
        lengths.append(t + 1)
        d1.append(float(state.distances().mean()))
    return {
        "episodes": episodes,
        "success_rate": wins / episodes,
        "mean_initial_distance": float(np.mean(d0)),
        "mean_final_distance": float(np.mean(d1)),
        "mean_length": float(np.mean(lengths)),
    }
