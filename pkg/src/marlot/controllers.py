"""Surrounding-vehicle controllers that plug into the shared episode loop.

A controller only proposes maneuvers. The episode loop applies the safety
filter, steps the world and judges violations identically for every method.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ArenaConfig, FuzzerConfig
from .fuzzer import FuzzerState, initial_state, orchestrate_step
from .maddpg import Checkpoint
from .road import RoadNetwork
from .sim import Maneuver, WorldState


@dataclass
class Proposal:
    maneuvers: list[Maneuver]
    owners: list[str]
    events: list[str] = field(default_factory=list)


class Controller:
    name = "base"

    def reset(self, world: WorldState, network: RoadNetwork, rng: np.random.Generator) -> None:
        pass

    def act(self, world: WorldState, network: RoadNetwork, rng: np.random.Generator) -> Proposal:
        raise NotImplementedError


class MarlOtController(Controller):
    """Trained actors steer the SVs; attack patterns take over inside trigger zones.

    With ``use_patterns=False`` it is the plain actor-plus-mapping controller
    used for the independent-learner baseline.
    """

    name = "marl_ot"

    def __init__(self, checkpoint: Checkpoint, fuzzer: FuzzerConfig | None = None,
                 arena: ArenaConfig | None = None, use_patterns: bool = True):
        self.checkpoint = checkpoint
        self.fuzzer = fuzzer or FuzzerConfig()
        self.arena = arena or ArenaConfig()
        self.use_patterns = use_patterns
        self.state: FuzzerState | None = None

    def reset(self, world, network, rng):
        self.checkpoint.check_agents(len(world.surrounding))
        self.state = initial_state(len(world.surrounding))

    def act(self, world, network, rng):
        res = orchestrate_step(world, self.state, self.checkpoint, rng, network, self.fuzzer,
                               self.arena, use_patterns=self.use_patterns)
        self.state = res.state
        return Proposal(res.raw, res.owner_kinds, res.events)


class ScriptedController(Controller):
    """Replays fixed per-SV maneuver sequences; the last maneuver repeats."""

    name = "scripted"

    def __init__(self, sequences: list[list[Maneuver]] | np.ndarray):
        self.sequences = [[Maneuver(m) if not isinstance(m, (int, np.integer)) else list(Maneuver)[int(m)]
                           for m in seq] for seq in sequences]
        self.t = 0

    def reset(self, world, network, rng):
        if len(self.sequences) != len(world.surrounding):
            raise ValueError(f"{len(self.sequences)} sequences for {len(world.surrounding)} SVs")
        self.t = 0

    def act(self, world, network, rng):
        out = [seq[min(self.t, len(seq) - 1)] for seq in self.sequences]
        self.t += 1
        return Proposal(out, [self.name] * len(out))
