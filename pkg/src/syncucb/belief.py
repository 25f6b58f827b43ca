"""Gaussian beliefs over linear reward parameters.

Ridge-regression posteriors maintained as (mean, precision, covariance)
triples with rank-one observation updates, the UCB exploration bonus, and
the KL-projection update that matches a belief's reward mean/variance
along one direction to externally supplied targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Re-invert the precision matrix after this many rank-one updates, or
# earlier if covariance * precision drifts from identity by more than
# DRIFT_TOL (max absolute entry).
REFRESH_EVERY = 1000
DRIFT_TOL = 1e-8

# A strongly contracting rank-one update (1 + c * u'Su >> 1, e.g. syncing
# a fresh prior down to a pretrained variance) cancels catastrophically in
# the Sherman-Morrison diagonal, leaving a relative inverse-pair error of
# roughly the contraction factor times machine epsilon.  Re-invert
# immediately once the factor exceeds this bound so the error stays near
# machine precision.
CONTRACTION_REFRESH = 1e3

# Guard for rank-one precision downdates (c < 0): 1 + c * u'Su must stay
# safely positive or the posterior loses positive definiteness.
POSITIVITY_FLOOR = 1e-12


class PreconditionError(ValueError):
    """A documented caller-side precondition was violated."""


@dataclass
class SyncTarget:
    """Reward mean/variance targets for a one-direction posterior match."""

    target_mean: float
    target_var: float

    def __post_init__(self):
        if self.target_var <= 0:
            raise ValueError(f"target_var must be positive, got {self.target_var}")


@dataclass
class BetaSchedule:
    """Exploration-bonus schedule beta_t for a given (regularizer, dim)."""

    reg: float
    dim: int

    def __post_init__(self):
        if self.reg <= 0:
            raise ValueError(f"reg must be positive, got {self.reg}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")

    def sqrt_beta(self, t: int) -> float:
        """sqrt(beta_t); t is clamped to 1 so the first round stays finite."""
        if t < 0:
            raise ValueError(f"t must be nonnegative, got {t}")
        tp = max(t, 1)
        d, lam = self.dim, self.reg
        return math.sqrt(lam) + math.sqrt(
            2.0 * math.log(tp) + d * math.log((d * lam + tp) / (d * lam))
        )

    def beta(self, t: int) -> float:
        return self.sqrt_beta(t) ** 2


@dataclass
class GaussianBelief:
    """Posterior N(mean, covariance) with its precision kept alongside.

    The precision matrix is the source of truth; the covariance is
    maintained incrementally by rank-one inverse updates and refreshed
    (fully re-inverted) per the drift policy.  All update methods return
    a new belief and leave the input untouched.
    """

    dim: int
    mean: np.ndarray
    precision: np.ndarray
    covariance: np.ndarray
    updates_since_refresh: int = field(default=0, compare=False)

    def _check_dim(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected vector of length {self.dim}, got shape {x.shape}")
        return x

    def _with_rank_one(self, u: np.ndarray, c: float) -> tuple[np.ndarray, np.ndarray, int]:
        """Apply precision += c * u u^T; return (precision', covariance', counter)."""
        su = self.covariance @ u
        denom = 1.0 + c * float(u @ su)
        if c < 0 and denom < POSITIVITY_FLOOR:
            raise PreconditionError(
                "rank-one downdate would break positive definiteness "
                f"(1 + c*u'Su = {denom:.3e})"
            )
        precision = self.precision + c * np.outer(u, u)
        covariance = self.covariance - (c / denom) * np.outer(su, su)
        covariance = 0.5 * (covariance + covariance.T)
        count = self.updates_since_refresh + 1
        if (
            count >= REFRESH_EVERY
            or denom > CONTRACTION_REFRESH
            or _drift(covariance, precision) > DRIFT_TOL
        ):
            covariance = _symmetric_inverse(precision)
            count = 0
        return precision, covariance, count

    def observe(self, x: np.ndarray, r: float) -> "GaussianBelief":
        """Condition on one observation reward r at feature vector x."""
        x = self._check_dim(x)
        b = self.precision @ self.mean + r * x
        precision, covariance, count = self._with_rank_one(x, 1.0)
        mean = covariance @ b
        return GaussianBelief(self.dim, mean, precision, covariance, count)

    def reward_mean_var(self, x: np.ndarray) -> tuple[float, float]:
        """Posterior mean and variance of the reward along x."""
        x = self._check_dim(x)
        return float(x @ self.mean), float(x @ self.covariance @ x)

    def ucb_score(self, x: np.ndarray, beta: float) -> float:
        """Posterior mean plus sqrt(beta) posterior standard deviations."""
        if beta < 0:
            raise ValueError(f"beta must be nonnegative, got {beta}")
        m, v = self.reward_mean_var(x)
        return m + math.sqrt(beta) * math.sqrt(v)

    def sync_to_target(self, u: np.ndarray, target: SyncTarget) -> "GaussianBelief":
        """Minimal-KL update matching reward mean/variance along u to target.

        Closed form of the constrained KL projection: shift the mean along
        covariance @ u to meet the mean constraint, and add a rank-one
        precision term so the variance along u equals target_var.  Requires
        target_var <= current variance along u (the sync gating condition).
        """
        u = self._check_dim(u)
        v = float(u @ self.covariance @ u)
        if v <= 0.0:
            raise ValueError("u must be nonzero")
        if target.target_var > v:
            raise PreconditionError(
                f"target variance {target.target_var} exceeds current variance {v}"
            )
        mean = self.mean + ((target.target_mean - float(self.mean @ u)) / v) * (
            self.covariance @ u
        )
        c = 1.0 / target.target_var - 1.0 / v
        precision, covariance, count = self._with_rank_one(u, c)
        return GaussianBelief(self.dim, mean, precision, covariance, count)

    def check_invariants(self, tol: float = 1e-8) -> None:
        """Raise if the symmetry / inverse-pair / PD invariants fail."""
        asym = np.max(np.abs(self.precision - self.precision.T))
        scale = max(np.max(np.abs(self.precision)), 1.0)
        if asym > 1e-10 * scale:
            raise RuntimeError(f"precision asymmetry {asym:.3e}")
        if _drift(self.covariance, self.precision) > tol:
            raise RuntimeError("covariance * precision deviates from identity")
        for m in (self.precision, self.covariance):
            if np.min(np.linalg.eigvalsh(0.5 * (m + m.T))) <= 0:
                raise RuntimeError("belief matrix is not positive definite")


def _drift(covariance: np.ndarray, precision: np.ndarray) -> float:
    return float(np.max(np.abs(covariance @ precision - np.eye(len(precision)))))


def _symmetric_inverse(m: np.ndarray) -> np.ndarray:
    """Symmetrized inverse; input must be symmetric positive definite.

    Uses the same LAPACK inverse as the compiled engine so refreshes on
    the two execution paths agree bit for bit.
    """
    inv = np.linalg.inv(m)
    return 0.5 * (inv + inv.T)


def init_prior(dim: int, reg: float) -> GaussianBelief:
    """Zero-mean ridge prior N(0, reg^-1 I)."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if reg <= 0:
        raise ValueError(f"reg must be positive, got {reg}")
    return GaussianBelief(
        dim=dim,
        mean=np.zeros(dim),
        precision=reg * np.eye(dim),
        covariance=(1.0 / reg) * np.eye(dim),
    )


def pretrained_prior(
    theta_star: np.ndarray,
    reg: float,
    pseudo_count: float,
    init_noise: float,
    rng: np.random.Generator,
) -> GaussianBelief:
    """Prior of an agent that has effectively seen pseudo_count samples per
    direction: precision (reg + pseudo_count) I, mean theta_star plus
    elementwise N(0, init_noise^2) perturbation drawn from rng."""
    theta_star = np.asarray(theta_star, dtype=float)
    if theta_star.ndim != 1:
        raise ValueError("theta_star must be a vector")
    if reg <= 0:
        raise ValueError(f"reg must be positive, got {reg}")
    if pseudo_count < 0:
        raise ValueError(f"pseudo_count must be nonnegative, got {pseudo_count}")
    if init_noise < 0:
        raise ValueError(f"init_noise must be nonnegative, got {init_noise}")
    dim = len(theta_star)
    z = rng.standard_normal(dim)
    prec = reg + pseudo_count
    return GaussianBelief(
        dim=dim,
        mean=theta_star + init_noise * z,
        precision=prec * np.eye(dim),
        covariance=(1.0 / prec) * np.eye(dim),
    )


def kl_divergence(b1: GaussianBelief, b2: GaussianBelief) -> float:
    """KL( N(mean1, cov1) || N(mean2, cov2) )."""
    if b1.dim != b2.dim:
        raise ValueError(f"dimension mismatch: {b1.dim} vs {b2.dim}")
    d = b1.dim
    delta = b2.mean - b1.mean
    trace = float(np.trace(b2.precision @ b1.covariance))
    maha = float(delta @ b2.precision @ delta)
    _, logdet2 = np.linalg.slogdet(b2.covariance)
    _, logdet1 = np.linalg.slogdet(b1.covariance)
    return max(0.0, 0.5 * (trace + maha - d + logdet2 - logdet1))


__all__ = [
    "GaussianBelief",
    "BetaSchedule",
    "SyncTarget",
    "PreconditionError",
    "init_prior",
    "pretrained_prior",
    "kl_divergence",
    "REFRESH_EVERY",
    "DRIFT_TOL",
]
