import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marlot.config import ArenaConfig, MaddpgConfig
from marlot.maddpg import (Actor, Checkpoint, CheckpointError, CheckpointMismatch, NoiseSchedule,
                           ReplayBuffer, Transition, actor_forward, build_learners, critic_loss_and_grads,
                           evaluate, load_checkpoint, maddpg_update, save_checkpoint, select_action,
                           train)
from marlot.nn import Adam, Mlp

from conftest import random_checkpoint


def rel_err(a, b):
    return abs(a - b) / max(abs(a) + abs(b), 1e-8)


def check_param_grads(loss_fn, params, grads, rng, samples=20, h=1e-6):
    worst = 0.0
    for p, g in zip(params, grads):
        for _ in range(samples):
            idx = tuple(rng.integers(s) for s in p.shape)
            old = p[idx]
            p[idx] = old + h
            up = loss_fn()
            p[idx] = old - h
            down = loss_fn()
            p[idx] = old
            numeric = (up - down) / (2 * h)
            if abs(numeric) + abs(g[idx]) > 1e-7:
                worst = max(worst, rel_err(numeric, g[idx]))
    return worst


def test_mlp_gradients():
    rng = np.random.default_rng(0)
    for trial in range(5):
        net = Mlp([5, 7, 6, 3], rng, np.float64, out_scale=300.0)
        x = rng.normal(size=(4, 5))
        w = rng.normal(size=(4, 3))
        out, acts = net.forward(x, keep=True)
        grads, gx = net.backward(acts, w)
        assert check_param_grads(lambda: float(np.sum(net(x) * w)), net.params, grads, rng) < 1e-4
        # input gradient
        for _ in range(5):
            i, j = rng.integers(4), rng.integers(5)
            xp, xm = x.copy(), x.copy()
            xp[i, j] += 1e-6
            xm[i, j] -= 1e-6
            num = (np.sum(net(xp) * w) - np.sum(net(xm) * w)) / 2e-6
            assert rel_err(num, gx[i, j]) < 1e-4


def test_actor_gradients_through_squash():
    rng = np.random.default_rng(1)
    actor = Actor(6, (-0.1, 0.0), (0.1, 0.1), hidden=8, layers=2, rng=rng, dtype=np.float64)
    actor.net.params[-2] *= 300.0
    x = rng.normal(size=(3, 6))
    w = rng.normal(size=(3, 2))
    _, cache = actor.forward(x, keep=True)
    grads, _ = actor.backward(cache, w)
    assert check_param_grads(lambda: float(np.sum(actor(x) * w)), actor.net.params, grads, rng) < 1e-4


def test_critic_loss_gradients():
    rng = np.random.default_rng(2)
    critic = Mlp([4, 8, 1], rng, np.float64, out_scale=300.0)
    x, y = rng.normal(size=(6, 4)), rng.normal(size=6)
    _, grads, _ = critic_loss_and_grads(critic, x, y)
    loss = lambda: critic_loss_and_grads(critic, x, y)[0]
    assert check_param_grads(loss, critic.params, grads, rng) < 1e-4


def test_adam_minimizes_quadratic():
    p = [np.array([3.0, -2.0])]
    opt = Adam(p, lr=0.1)
    for _ in range(500):
        opt.step([2 * p[0]])
    assert np.allclose(p[0], 0.0, atol=1e-2)


def test_noise_floor_closed_form():
    n = NoiseSchedule.steps_to_floor(0.75, 0.999995, 0.01)
    assert n == math.ceil(math.log(0.01 / 0.75) / math.log(0.999995))
    assert 0.75 * 0.999995 ** n <= 0.01 < 0.75 * 0.999995 ** (n - 1)


def test_noise_schedule_floors():
    s = NoiseSchedule(0.75, 0.9, 0.01)
    for _ in range(100):
        s.advance()
    assert s.scale == 0.01


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_actor_stays_in_box(seed):
    rng = np.random.default_rng(seed)
    actor = Actor(14, (-0.1, 0.0), (0.1, 0.1), hidden=16, rng=rng)
    actor.net.params[-2] *= 1000.0
    a = actor_forward(actor, rng.normal(scale=100.0, size=(64, 14)))
    assert np.all(a >= actor.low) and np.all(a <= actor.high)
    noisy = select_action(actor, rng.normal(size=14), NoiseSchedule(5.0), rng)
    assert np.all(noisy >= actor.low) and np.all(noisy <= actor.high)


def test_replay_buffer_wraps():
    buf = ReplayBuffer([2], [1], capacity=3)
    for k in range(5):
        buf.add(Transition([np.full(2, k)], [np.array([k])], np.array([k]), [np.zeros(2)], False))
    assert len(buf) == 3
    assert sorted(buf.rewards[:, 0]) == [2, 3, 4]
    with pytest.raises(ValueError):
        buf.sample(4, np.random.default_rng(0))
    with pytest.raises(ValueError):
        buf.add(Transition([np.zeros(2)] * 2, [np.zeros(1)], np.zeros(1), [np.zeros(2)], False))


def test_update_runs_and_moves_targets():
    rng = np.random.default_rng(0)
    cfg = MaddpgConfig(hidden=16, batch_size=8)
    learners, obs_dims, act_dims = build_learners(3, ArenaConfig(), cfg, rng)
    buf = ReplayBuffer(obs_dims, act_dims, 64)
    for _ in range(32):
        buf.add(Transition([rng.normal(size=d) for d in obs_dims], [rng.normal(size=d) for d in act_dims],
                           rng.normal(size=len(obs_dims)), [rng.normal(size=d) for d in obs_dims], False))
    before = learners[0].target_critic.params[0].copy()
    stats = maddpg_update(learners, buf.sample(8, rng), cfg)
    assert len(stats) == 4
    assert all(math.isfinite(s["critic_loss"]) for s in stats)
    assert not np.array_equal(before, learners[0].target_critic.params[0])


def test_checkpoint_round_trip(tmp_path):
    ck = random_checkpoint()
    path = tmp_path / "ck.bin"
    save_checkpoint(ck, path)
    back = load_checkpoint(path, 3)
    x = np.ones(ck.actors[0].obs_dim)
    assert np.allclose(back.actors[0](x), ck.actors[0](x))
    with pytest.raises(CheckpointMismatch):
        load_checkpoint(path, 4)


def test_checkpoint_corruption(tmp_path):
    path = tmp_path / "ck.bin"
    save_checkpoint(random_checkpoint(), path)
    data = bytearray(path.read_bytes())
    data[-1] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    path.write_bytes(b"nonsense")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_short_training_is_deterministic():
    cfg = MaddpgConfig(episodes=3, hidden=16, warmup=64, batch_size=32)
    arena = ArenaConfig(episode_cap=40)
    a, b = train(cfg, arena), train(cfg, arena)
    assert a.meta["reward_curve"] == b.meta["reward_curve"]
    assert a.meta["updates"] > 0
    res = evaluate(a, 2, arena_cfg=arena)
    assert 0.0 <= res["success_rate"] <= 1.0
