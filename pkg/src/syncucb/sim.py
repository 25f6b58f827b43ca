"""Seeded Monte-Carlo harness for the toy two-stage bandit experiments.

Episodes are deterministic functions of (master_seed, run_index): reward
noise, prior initialization, and tie-break draws come from disjoint
Philox substreams, shared across policy variants so variants of the same
run face identical potential outcomes (common random numbers).
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import engine
from .belief import init_prior, pretrained_prior
from .env import NoiseTable, TOY_POOLS, TOY_THETA_STAR, build_toy_env
from .policy import InvariantViolation, TIE_BREAKS, UPDATE_TARGETS

VARIANTS = ("single_stage", "naive", "sync_post", "sync_pre")
GENERATOR_NAME = "philox4x64"

# substream purposes under (master_seed, run_index)
_STREAM_NOISE = 0
_STREAM_INIT = 1
_STREAM_TIE = 2


@dataclass
class ExperimentConfig:
    horizon: int = 2000
    runs: int = 400
    variants: tuple[str, ...] = ("naive", "sync_post")
    gamma_list: tuple[float, ...] = (1.0, 10.0, 25.0, 50.0)
    sigma_list: tuple[float, ...] = (0.1, 0.2)
    lam: float = 1e-3
    lam_n: float = 1e-3
    reward_noise_sd: float = 0.1
    master_seed: int = 20240 << 32 | 1337
    tie_break: str = "seeded_uniform"
    update_target: str = "recommended"

    def __post_init__(self):
        self.variants = tuple(self.variants)
        self.gamma_list = tuple(float(g) for g in self.gamma_list)
        self.sigma_list = tuple(float(s) for s in self.sigma_list)
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not self.variants:
            raise ValueError("variants must be nonempty")
        for v in self.variants:
            if v not in VARIANTS:
                raise ValueError(f"unknown variant {v!r}")
        if self.lam <= 0 or self.lam_n <= 0:
            raise ValueError("lambda and lambda_n must be positive")
        if self.reward_noise_sd < 0:
            raise ValueError("reward_noise_sd must be nonnegative")
        if any(g < 0 for g in self.gamma_list) or not self.gamma_list:
            raise ValueError("gamma_list must be nonempty and nonnegative")
        if any(s < 0 for s in self.sigma_list) or not self.sigma_list:
            raise ValueError("sigma_list must be nonempty and nonnegative")
        if self.tie_break not in TIE_BREAKS:
            raise ValueError(f"unknown tie_break {self.tie_break!r}")
        if self.update_target not in UPDATE_TARGETS:
            raise ValueError(f"unknown update_target {self.update_target!r}")


@dataclass
class RunRecord:
    run_id: int
    variant: str
    gamma: float
    sigma: float
    instant_regret: np.ndarray
    cum_regret: np.ndarray
    sync_counts: np.ndarray
    actions: np.ndarray


@dataclass
class Aggregate:
    variant: str
    gamma: float
    sigma: float
    mean_cum_regret: np.ndarray
    sd: np.ndarray
    ci_halfwidth: np.ndarray
    n_runs: int
    degenerate: bool = False


def _stream(master_seed: int, run_index: int, purpose: int) -> np.random.Generator:
    seq = np.random.SeedSequence(master_seed, spawn_key=(run_index, purpose))
    return np.random.Generator(np.random.Philox(seq))


def run_episode(
    config: ExperimentConfig,
    variant: str,
    gamma: float,
    sigma: float,
    run_index: int,
) -> RunRecord:
    """One toy-environment episode of T rounds via the compiled engine."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    env = build_toy_env()
    pools = TOY_POOLS
    n_actions = len(env.actions)
    n_nom = len(pools)
    T = config.horizon

    init_rng = _stream(config.master_seed, run_index, _STREAM_INIT)
    ranker = pretrained_prior(TOY_THETA_STAR, config.lam, gamma, sigma, init_rng)
    noms = [init_prior(n_actions, config.lam_n) for _ in range(n_nom)]

    noise_rng = _stream(config.master_seed, run_index, _STREAM_NOISE)
    noise = NoiseTable.draw(T, n_actions, noise_rng)

    tie_rng = _stream(config.master_seed, run_index, _STREAM_TIE)
    tie_u = tie_rng.random(T * (n_nom + 1))

    phi = np.stack([env.ranker_embed[a] for a in env.actions])
    phis = np.stack(
        [[env.nominator_embeds[n][a] for a in env.actions] for n in range(n_nom)]
    )
    pool_mask = np.zeros((n_nom, n_actions), dtype=bool)
    for n, pool in enumerate(pools):
        for a in pool:
            pool_mask[n, a] = True
    action_means = np.array([env.action_mean(a) for a in env.actions])
    action_regrets = np.array([env.pseudo_regret(a) for a in env.actions])

    actions_out = np.empty(T, dtype=np.int64)
    noms_out = np.empty((T, n_nom), dtype=np.int64)
    regret_out = np.empty(T)
    sync_out = np.empty(T, dtype=np.int64)

    status, fail_t = engine.run_kernel(
        engine.MODE_CODES[variant],
        config.update_target == "recommended",
        config.tie_break == "seeded_uniform",
        ranker.mean.copy(),
        ranker.precision.copy(),
        ranker.covariance.copy(),
        config.lam,
        np.stack([b.mean for b in noms]),
        np.stack([b.precision for b in noms]),
        np.stack([b.covariance for b in noms]),
        config.lam_n,
        phi,
        phis,
        pool_mask,
        action_means,
        action_regrets,
        env.reward_noise_sd,
        noise.values,
        tie_u,
        actions_out,
        noms_out,
        regret_out,
        sync_out,
    )
    if status != engine.OK:
        raise InvariantViolation(
            f"belief invariant violation in run {run_index} "
            f"(variant={variant}, gamma={gamma}, sigma={sigma}) at t={fail_t}"
        )
    return RunRecord(
        run_id=run_index,
        variant=variant,
        gamma=gamma,
        sigma=sigma,
        instant_regret=regret_out,
        cum_regret=np.cumsum(regret_out),
        sync_counts=sync_out,
        actions=actions_out,
    )


def aggregate(records: list[RunRecord]) -> Aggregate:
    """Cross-run mean / sample sd / 2-sigma half-width of cumulative regret."""
    if not records:
        raise ValueError("need at least one record")
    keys = {(r.variant, r.gamma, r.sigma, len(r.cum_regret)) for r in records}
    if len(keys) > 1:
        raise ValueError(f"heterogeneous records: {sorted(keys)}")
    n = len(records)
    curves = np.stack([r.cum_regret for r in records])
    mean = curves.mean(axis=0)
    sd = curves.std(axis=0, ddof=1) if n > 1 else np.zeros(curves.shape[1])
    r0 = records[0]
    return Aggregate(
        variant=r0.variant,
        gamma=r0.gamma,
        sigma=r0.sigma,
        mean_cum_regret=mean,
        sd=sd,
        ci_halfwidth=2.0 * sd / math.sqrt(n),
        n_runs=n,
        degenerate=(n == 1),
    )


def _episode_worker(args):
    config_dict, variant, gamma, sigma, run_index = args
    return run_episode(ExperimentConfig(**config_dict), variant, gamma, sigma, run_index)


def run_experiment(
    config: ExperimentConfig,
    keep_records: bool = False,
    n_jobs: int = 1,
    progress=None,
) -> tuple[list[Aggregate], list[RunRecord]]:
    """Full variants x gamma x sigma grid, `runs` episodes per cell.

    Episodes within a cell run in run-index order (or on a worker pool
    with an ordered reduction), so results are scheduling-independent.
    """
    aggregates: list[Aggregate] = []
    kept: list[RunRecord] = []
    for variant in config.variants:
        for gamma in config.gamma_list:
            for sigma in config.sigma_list:
                if n_jobs > 1:
                    args = [
                        (asdict(config), variant, gamma, sigma, i)
                        for i in range(config.runs)
                    ]
                    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
                        records = list(pool.map(_episode_worker, args))
                else:
                    records = [
                        run_episode(config, variant, gamma, sigma, i)
                        for i in range(config.runs)
                    ]
                aggregates.append(aggregate(records))
                if keep_records:
                    kept.extend(records)
                if progress is not None:
                    progress(aggregates[-1])
    return aggregates, kept


def write_results(
    aggregates: list[Aggregate],
    records: list[RunRecord],
    out_dir: str,
    config: ExperimentConfig | None = None,
    force: bool = False,
) -> list[str]:
    """Write aggregates.csv, runs.csv, and manifest.json into out_dir.

    Refuses to overwrite existing result files unless force is set.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        name: os.path.join(out_dir, name)
        for name in ("aggregates.csv", "runs.csv", "manifest.json")
    }
    if not force:
        existing = [p for p in paths.values() if os.path.exists(p)]
        if existing:
            raise FileExistsError(
                f"refusing to overwrite {existing[0]} (use --force)"
            )

    with open(paths["aggregates.csv"], "w", newline="\n") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(
            ["variant", "gamma", "sigma", "t", "mean_cum_regret", "sd", "ci_halfwidth", "n_runs"]
        )
        for agg in aggregates:
            for t in range(len(agg.mean_cum_regret)):
                w.writerow(
                    [
                        agg.variant,
                        repr(agg.gamma),
                        repr(agg.sigma),
                        t + 1,
                        repr(float(agg.mean_cum_regret[t])),
                        repr(float(agg.sd[t])),
                        repr(float(agg.ci_halfwidth[t])),
                        agg.n_runs,
                    ]
                )

    with open(paths["runs.csv"], "w", newline="\n") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(
            ["run_id", "variant", "gamma", "sigma", "t", "action", "instant_regret", "cum_regret", "sync_count"]
        )
        for rec in records:
            for t in range(len(rec.instant_regret)):
                w.writerow(
                    [
                        rec.run_id,
                        rec.variant,
                        repr(rec.gamma),
                        repr(rec.sigma),
                        t + 1,
                        int(rec.actions[t]),
                        repr(float(rec.instant_regret[t])),
                        repr(float(rec.cum_regret[t])),
                        int(rec.sync_counts[t]),
                    ]
                )

    manifest = {
        "config": asdict(config) if config is not None else None,
        "generator": GENERATOR_NAME,
        "code_version": _package_version(),
        "streams": {"noise": _STREAM_NOISE, "init": _STREAM_INIT, "tie": _STREAM_TIE},
    }
    with open(paths["manifest.json"], "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return [paths["aggregates.csv"], paths["runs.csv"], paths["manifest.json"]]


def _package_version() -> str:
    from . import __version__

    return __version__


__all__ = [
    "ExperimentConfig",
    "RunRecord",
    "Aggregate",
    "VARIANTS",
    "GENERATOR_NAME",
    "run_episode",
    "run_experiment",
    "aggregate",
    "write_results",
]
