"""Comparison methods: random maneuvers, NSGA-II offline search, independent RL.

All of them drive the SVs through the same episode loop, safety filter and
violation oracle as the fuzzer; only the controller differs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import ArenaConfig, Config, GaConfig, MaddpgConfig, RewardWeights
from .controllers import Controller, MarlOtController, Proposal, ScriptedController
from .maddpg import Checkpoint, load_checkpoint, train
from .road import RoadNetwork
from .sim import MANEUVERS, Maneuver

METHODS = ("marl_ot", "random", "ga", "single_rl")


def random_policy_step(rng: np.random.Generator, n: int = 1) -> list[Maneuver]:
    """Uniform draw over the five maneuvers for each of ``n`` SVs."""
    return [MANEUVERS[int(i)] for i in rng.integers(len(MANEUVERS), size=n)]


class RandomController(Controller):
    name = "random"

    def act(self, world, network, rng):
        out = random_policy_step(rng, len(world.surrounding))
        return Proposal(out, [self.name] * len(out))


# --------------------------------------------------------------------------
# NSGA-II over maneuver sequences


@dataclass
class Chromosome:
    genes: np.ndarray  # (n_sv, length) maneuver indices
    fitness: tuple[float, float] | None = None  # maximized
    violated: bool = False

    def copy(self) -> "Chromosome":
        return Chromosome(self.genes.copy(), self.fitness, self.violated)


def dominates(a, b) -> bool:
    """``a`` dominates ``b`` when maximizing every objective."""
    return all(x >= y for x, y in zip(a, b)) and any(x > y for x, y in zip(a, b))


def non_dominated_sort(objectives: list[tuple[float, ...]]) -> list[list[int]]:
    """Fast non-dominated sorting; returns fronts of indices, best first."""
    n = len(objectives)
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    counts = [0] * n
    fronts: list[list[int]] = [[]]
    for p in range(n):
        for q in range(n):
            if p == q:
                continue
            if dominates(objectives[p], objectives[q]):
                dominated_by[p].append(q)
            elif dominates(objectives[q], objectives[p]):
                counts[p] += 1
        if counts[p] == 0:
            fronts[0].append(p)
    i = 0
    while fronts[i]:
        nxt = []
        for p in fronts[i]:
            for q in dominated_by[p]:
                counts[q] -= 1
                if counts[q] == 0:
                    nxt.append(q)
        i += 1
        fronts.append(nxt)
    return fronts[:-1]


def crowding_distance(objectives: list[tuple[float, ...]], front: list[int]) -> dict[int, float]:
    dist = {i: 0.0 for i in front}
    if len(front) <= 2:
        return {i: np.inf for i in front}
    for m in range(len(objectives[front[0]])):
        ordered = sorted(front, key=lambda i: objectives[i][m])
        lo, hi = objectives[ordered[0]][m], objectives[ordered[-1]][m]
        dist[ordered[0]] = dist[ordered[-1]] = np.inf
        if hi == lo:
            continue
        for a, b, c in zip(ordered, ordered[1:], ordered[2:]):
            dist[b] += (objectives[c][m] - objectives[a][m]) / (hi - lo)
    return dist


def rank_and_crowding(objectives: list[tuple[float, ...]]) -> tuple[list[int], list[float]]:
    rank = [0] * len(objectives)
    crowd = [0.0] * len(objectives)
    for r, front in enumerate(non_dominated_sort(objectives)):
        cd = crowding_distance(objectives, front)
        for i in front:
            rank[i] = r
            crowd[i] = cd[i]
    return rank, crowd


def select_survivors(objectives: list[tuple[float, ...]], k: int) -> list[int]:
    """Best ``k`` indices by (front rank, larger crowding distance)."""
    rank, crowd = rank_and_crowding(objectives)
    return sorted(range(len(objectives)), key=lambda i: (rank[i], -crowd[i], i))[:k]


def tournament(rank: list[int], crowd: list[float], rng: np.random.Generator) -> int:
    a, b = (int(x) for x in rng.integers(len(rank), size=2))
    if (rank[a], -crowd[a]) <= (rank[b], -crowd[b]):
        return a
    return b


def one_point_crossover(a: np.ndarray, b: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Independent cut point per SV row."""
    c1, c2 = a.copy(), b.copy()
    for row in range(a.shape[0]):
        cut = int(rng.integers(1, a.shape[1])) if a.shape[1] > 1 else 0
        c1[row, cut:], c2[row, cut:] = b[row, cut:], a[row, cut:]
    return c1, c2


def mutate(genes: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    out = genes.copy()
    mask = rng.random(out.shape) < rate
    out[mask] = rng.integers(len(MANEUVERS), size=int(mask.sum()))
    return out


def ga_fitness(result, cfg: GaConfig) -> tuple[float, float]:
    """Violation scores the fixed maximum; otherwise smaller gaps score higher."""
    if result.violated:
        return cfg.violation_fitness, cfg.violation_fitness
    return -float(result.min_gap), -float(result.mean_min_gap)


@dataclass
class GaReport:
    results: list  # EpisodeResult in evaluation order
    generations: list[list[Chromosome]] = field(default_factory=list)


def ga_search(evaluate: Callable[[Chromosome, int], object], budget: int, n_sv: int, length: int,
              cfg: GaConfig, rng: np.random.Generator) -> GaReport:
    """Generational NSGA-II; every evaluation is one episode of the budget.

    A partial last generation is evaluated when the budget does not divide
    evenly, then the search stops.
    """
    if budget < cfg.population:
        raise ValueError(f"budget {budget} is smaller than the population {cfg.population}")
    results = []
    gens: list[list[Chromosome]] = []

    def run(pop: list[Chromosome]) -> list[Chromosome]:
        done = []
        for ch in pop:
            if len(results) >= budget:
                break
            res = evaluate(ch, len(results))
            results.append(res)
            ch.fitness = ga_fitness(res, cfg)
            ch.violated = res.violated
            done.append(ch)
        return done

    pop = [Chromosome(rng.integers(len(MANEUVERS), size=(n_sv, length))) for _ in range(cfg.population)]
    pop = run(pop)
    gens.append([c.copy() for c in pop])
    while len(results) < budget:
        objs = [c.fitness for c in pop]
        rank, crowd = rank_and_crowding(objs)
        children: list[Chromosome] = []
        while len(children) < cfg.population:
            a = pop[tournament(rank, crowd, rng)].genes
            b = pop[tournament(rank, crowd, rng)].genes
            if rng.random() < cfg.crossover_rate:
                a, b = one_point_crossover(a, b, rng)
            children.append(Chromosome(mutate(a, cfg.mutation_rate, rng)))
            if len(children) < cfg.population:
                children.append(Chromosome(mutate(b, cfg.mutation_rate, rng)))
        children = run(children)
        gens.append([c.copy() for c in children])
        merged = pop + children
        keep = select_survivors([c.fitness for c in merged], cfg.population)
        pop = [merged[i] for i in keep]
    return GaReport(results, gens)


def ga_run(cfg: Config, network: RoadNetwork, episode: Callable[[Controller, int], object],
           rng: np.random.Generator) -> GaReport:
    """NSGA-II campaign: chromosomes are per-SV maneuver sequences over the step cap."""
    from .harness import step_cap

    length = step_cap(network, cfg)

    def evaluate(ch: Chromosome, i: int):
        return episode(ScriptedController(ch.genes), i)

    return ga_search(evaluate, cfg.harness.budget, cfg.scenario.n_surrounding, length, cfg.ga, rng)


# --------------------------------------------------------------------------
# independent learners


def single_rl_train(cfg: MaddpgConfig | None = None, arena_cfg: ArenaConfig | None = None,
                    weights: RewardWeights | None = None, **kwargs) -> Checkpoint:
    """Each agent learns alone: own-observation critics, no shared reward terms."""
    return train(cfg, arena_cfg, weights, centralized=False, **kwargs)


def single_rl_controller(checkpoint: Checkpoint, cfg: Config) -> MarlOtController:
    """Actor plus maneuver mapping, without attack patterns."""
    ctrl = MarlOtController(checkpoint, cfg.fuzzer, cfg.arena, use_patterns=False)
    ctrl.name = "single_rl"
    return ctrl


def single_rl_step(world, state, checkpoint: Checkpoint, network, cfg: Config, rng=None):
    from .fuzzer import orchestrate_step

    res = orchestrate_step(world, state, checkpoint, rng or np.random.default_rng(0), network,
                           cfg.fuzzer, cfg.arena, use_patterns=False)
    return res.raw, res.state


def controller_factory_for(cfg: Config) -> Callable[[], Controller]:
    method = cfg.harness.method
    if method == "random":
        return RandomController
    if method in ("marl_ot", "single_rl"):
        path = cfg.harness.checkpoint if method == "marl_ot" else cfg.harness.single_rl_checkpoint
        if not path:
            raise ValueError(f"method {method} needs a checkpoint path (harness.checkpoint"
                             f"{'' if method == 'marl_ot' else ' / harness.single_rl_checkpoint'})")
        ck = load_checkpoint(path, cfg.scenario.n_surrounding)
        if method == "marl_ot":
            return lambda: MarlOtController(ck, cfg.fuzzer, cfg.arena)
        return lambda: single_rl_controller(ck, cfg)
    if method == "ga":
        raise ValueError("the GA drives whole campaigns; use ga_run")
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
