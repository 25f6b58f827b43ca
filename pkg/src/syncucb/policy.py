"""LinUCB agents and the two-stage nomination / ranking / sync loop.

A TwoStageSystem holds one ranker and N nominators, each a LinUCBAgent.
Each round: nominators pick one action from their pools, the ranker picks
among the nominations, everyone updates on the realized reward, and in
the sync modes nominators whose uncertainty about their nominated action
exceeds the ranker's are pulled onto the ranker's reward statistics via
the minimal-KL update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .belief import BetaSchedule, GaussianBelief, SyncTarget
from .env import LinearEnv, NoiseTable

MODES = ("naive", "sync_post", "sync_pre")
TIE_BREAKS = ("seeded_uniform", "lowest_index")
UPDATE_TARGETS = ("recommended", "nominated")

# Scores within this absolute distance of the maximum count as tied.
TIE_TOL = 1e-12


class InvariantViolation(RuntimeError):
    """A structural invariant of the two-stage system was broken."""


@dataclass
class LinUCBAgent:
    """One LinUCB learner: belief, bonus schedule, embeddings, action pool."""

    belief: GaussianBelief
    schedule: BetaSchedule
    embed: dict[int, np.ndarray]
    pool: tuple[int, ...]

    def __post_init__(self):
        if not self.pool:
            raise ValueError("pool must be nonempty")
        for a in self.pool:
            if a not in self.embed:
                raise ValueError(f"pool action {a} has no embedding")
            if len(self.embed[a]) != self.belief.dim:
                raise ValueError(f"embedding for action {a} has wrong length")


@dataclass
class RoundOutcome:
    nominations: list[int]
    recommended: int
    reward: float
    instant_regret: float
    sync_events: list[int]


def select_action(
    agent: LinUCBAgent,
    candidates: tuple[int, ...],
    t: int,
    tie_break: str = "lowest_index",
    rng: np.random.Generator | None = None,
) -> int:
    """Argmax of the UCB score over candidates at round t.

    Scores within TIE_TOL of the maximum are tied; ties go to the lowest
    action id or to a uniform draw from rng, per tie_break.  A singleton
    candidate set short-circuits without scoring or consuming randomness.
    """
    if not candidates:
        raise ValueError("candidate set must be nonempty")
    if len(candidates) == 1:
        return candidates[0]
    beta = agent.schedule.beta(t)
    scores = [agent.belief.ucb_score(agent.embed[a], beta) for a in candidates]
    best = max(scores)
    tied = [a for a, s in zip(candidates, scores) if s >= best - TIE_TOL]
    if len(tied) == 1 or tie_break == "lowest_index":
        return min(tied)
    if tie_break != "seeded_uniform":
        raise ValueError(f"unknown tie_break {tie_break!r}")
    if rng is None:
        raise ValueError("seeded_uniform tie-breaking requires an rng")
    tied.sort()
    return tied[int(rng.random() * len(tied))]


def sync_condition(nominator: LinUCBAgent, ranker: LinUCBAgent, a: int) -> bool:
    """True iff the nominator is strictly more uncertain about a's reward
    than the ranker (posterior standard deviation, no tolerance)."""
    _, v_n = nominator.belief.reward_mean_var(nominator.embed[a])
    _, v_r = ranker.belief.reward_mean_var(ranker.embed[a])
    return math.sqrt(v_n) > math.sqrt(v_r)


@dataclass
class TwoStageSystem:
    ranker: LinUCBAgent
    nominators: list[LinUCBAgent]
    mode: str = "naive"
    update_target: str = "recommended"
    tie_break: str = "seeded_uniform"
    round: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.update_target not in UPDATE_TARGETS:
            raise ValueError(f"unknown update_target {self.update_target!r}")
        if self.tie_break not in TIE_BREAKS:
            raise ValueError(f"unknown tie_break {self.tie_break!r}")
        if not self.nominators:
            raise ValueError("need at least one nominator")
        ranker_pool = set(self.ranker.pool)
        for n, nom in enumerate(self.nominators):
            if not set(nom.pool) <= ranker_pool:
                raise InvariantViolation(f"nominator {n} pool outside ranker pool")

    def nominate(self, rng: np.random.Generator | None = None) -> list[int]:
        return [
            select_action(nom, nom.pool, self.round, self.tie_break, rng)
            for nom in self.nominators
        ]

    def recommend(self, nominations: list[int], rng: np.random.Generator | None = None) -> int:
        if not nominations:
            raise ValueError("nominations must be nonempty")
        for a in nominations:
            if a not in set(self.ranker.pool):
                raise InvariantViolation(f"nomination {a} outside ranker pool")
        unique = tuple(sorted(set(nominations)))
        return select_action(self.ranker, unique, self.round, self.tie_break, rng)

    def _sync_one(self, n: int, a: int, ranker_belief: GaussianBelief) -> None:
        """Pull nominator n's posterior for action a onto the given vintage
        of the ranker's reward statistics."""
        nom = self.nominators[n]
        u = nom.embed[a]
        phi = self.ranker.embed[a]
        target = SyncTarget(
            target_mean=float(ranker_belief.mean @ phi),
            target_var=float(phi @ ranker_belief.covariance @ phi),
        )
        nom.belief = nom.belief.sync_to_target(u, target)

    def step(
        self,
        env: LinearEnv,
        noise: NoiseTable,
        rng: np.random.Generator | None = None,
    ) -> RoundOutcome:
        """Run one full round and advance the round counter."""
        t = self.round
        nominations = self.nominate(rng)
        recommended = self.recommend(nominations, rng)
        reward = env.sample_reward(recommended, t, noise)

        ranker_pre = self.ranker.belief
        self.ranker.belief = ranker_pre.observe(self.ranker.embed[recommended], reward)

        sync_events: list[int] = []
        for n, nom in enumerate(self.nominators):
            a_n = nominations[n]
            obs_action = recommended if self.update_target == "recommended" else a_n
            if self.mode == "sync_pre":
                # Condition and targets on pre-round-update statistics.
                v_n = float(nom.embed[a_n] @ nom.belief.covariance @ nom.embed[a_n])
                phi = self.ranker.embed[a_n]
                v_r = float(phi @ ranker_pre.covariance @ phi)
                if math.sqrt(v_n) > math.sqrt(v_r):
                    self._sync_one(n, a_n, ranker_pre)
                    sync_events.append(n)
                nom.belief = nom.belief.observe(nom.embed[obs_action], reward)
            else:
                nom.belief = nom.belief.observe(nom.embed[obs_action], reward)
                if self.mode == "sync_post" and sync_condition(nom, self.ranker, a_n):
                    self._sync_one(n, a_n, self.ranker.belief)
                    sync_events.append(n)

        self.round += 1
        return RoundOutcome(
            nominations=nominations,
            recommended=recommended,
            reward=reward,
            instant_regret=env.pseudo_regret(recommended),
            sync_events=sync_events,
        )


@dataclass
class SingleStageSystem:
    """One LinUCB agent with direct access to the full action pool."""

    agent: LinUCBAgent
    tie_break: str = "seeded_uniform"
    round: int = 0

    def step(
        self,
        env: LinearEnv,
        noise: NoiseTable,
        rng: np.random.Generator | None = None,
    ) -> RoundOutcome:
        t = self.round
        a = select_action(self.agent, self.agent.pool, t, self.tie_break, rng)
        reward = env.sample_reward(a, t, noise)
        self.agent.belief = self.agent.belief.observe(self.agent.embed[a], reward)
        self.round += 1
        return RoundOutcome(
            nominations=[a],
            recommended=a,
            reward=reward,
            instant_regret=env.pseudo_regret(a),
            sync_events=[],
        )


__all__ = [
    "LinUCBAgent",
    "TwoStageSystem",
    "SingleStageSystem",
    "RoundOutcome",
    "InvariantViolation",
    "select_action",
    "sync_condition",
    "MODES",
    "TIE_BREAKS",
    "UPDATE_TARGETS",
    "TIE_TOL",
]
