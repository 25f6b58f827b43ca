"""Ground-truth stochastic linear bandit environment.

Static per-action embeddings (single fixed context), Gaussian reward
noise, and the pseudo-regret oracle.  Reward noise is pre-drawn into a
(round, action) table so different policy variants of the same run face
identical potential outcomes (common random numbers).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TOY_THETA_STAR = np.array([0.5, 0.25, 0.75])
TOY_REWARD_NOISE_SD = 0.1
TOY_POOLS = ((0,), (1, 2))


@dataclass(frozen=True)
class NoiseTable:
    """Pre-drawn standard-normal noise, one value per (round, action)."""

    values: np.ndarray  # shape (T, n_actions)

    @classmethod
    def draw(cls, horizon: int, n_actions: int, rng: np.random.Generator) -> "NoiseTable":
        return cls(values=rng.standard_normal((horizon, n_actions)))


@dataclass(frozen=True)
class LinearEnv:
    """Fixed-context linear bandit: E[r | a] = <theta_star, phi(a)>."""

    theta_star: np.ndarray
    ranker_embed: dict[int, np.ndarray]  # action id -> phi(a)
    nominator_embeds: tuple[dict[int, np.ndarray], ...]  # per nominator, action id -> phi_n(a)
    reward_noise_sd: float
    actions: tuple[int, ...]

    def __post_init__(self):
        if self.reward_noise_sd < 0:
            raise ValueError("reward_noise_sd must be nonnegative")
        for a in self.actions:
            if a not in self.ranker_embed:
                raise ValueError(f"action {a} has no ranker embedding")
            for n, table in enumerate(self.nominator_embeds):
                if a not in table:
                    raise ValueError(f"action {a} has no embedding for nominator {n}")

    def action_mean(self, a: int) -> float:
        return float(self.theta_star @ self.ranker_embed[a])

    def optimal_action(self) -> int:
        # ties broken by lowest action id
        best = self.actions[0]
        for a in self.actions[1:]:
            if self.action_mean(a) > self.action_mean(best):
                best = a
        return best

    def sample_reward(self, a: int, t: int, noise: NoiseTable) -> float:
        """Reward for pulling a at round t, deterministic given the table."""
        if a not in self.ranker_embed:
            raise ValueError(f"unknown action {a}")
        idx = self.actions.index(a)
        return self.action_mean(a) + self.reward_noise_sd * float(noise.values[t, idx])

    def pseudo_regret(self, a: int) -> float:
        """Expected-reward gap to the optimal action; zero iff a is optimal."""
        if a not in self.ranker_embed:
            raise ValueError(f"unknown action {a}")
        return self.action_mean(self.optimal_action()) - self.action_mean(a)


def build_toy_env(n_nominators: int = 2) -> LinearEnv:
    """Three one-hot actions with theta_star = [1/2, 1/4, 3/4] and reward
    noise sd 0.1; nominators share the ranker's one-hot embeddings.
    Pools for the standard two-nominator split are in TOY_POOLS."""
    eye = np.eye(3)
    embed = {a: eye[a] for a in range(3)}
    return LinearEnv(
        theta_star=TOY_THETA_STAR.copy(),
        ranker_embed=embed,
        nominator_embeds=tuple(dict(embed) for _ in range(n_nominators)),
        reward_noise_sd=TOY_REWARD_NOISE_SD,
        actions=(0, 1, 2),
    )


__all__ = [
    "LinearEnv",
    "NoiseTable",
    "build_toy_env",
    "TOY_THETA_STAR",
    "TOY_REWARD_NOISE_SD",
    "TOY_POOLS",
]
