"""Contextual Thompson sampling over prompt variants with exact GP posteriors.

Each arm keeps a zero-mean Gaussian-process posterior under a squared-
exponential kernel. Posteriors are exact: the (kernel + noise) matrix is kept
as a Cholesky factor that is extended by one row per observation, so an update
costs O(n^2) and a from-scratch rebuild reproduces it to rounding error.

A selection round samples one plausible value per arm from its posterior at
the observed context and plays the argmax (lowest index on exact ties), which
keeps the whole loop deterministic under a seeded generator.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import FactorizationError

__all__ = [
    "BanditConfig",
    "ArmPosterior",
    "RegretLedger",
    "SyntheticEnv",
    "posterior_predict",
    "select_arm",
    "update",
    "run_synthetic",
    "constant_context_env",
    "linear_context_env",
]

SUPPORTED_KERNELS = ("squared-exponential",)


@dataclass(frozen=True)
class BanditConfig:
    num_arms: int
    context_dim: int
    kernel_name: str = "squared-exponential"
    length_scale: float = 1.0
    signal_var: float = 1.0
    obs_noise: float = 0.1  # std of the reward observation
    jitter: float = 1e-9

    def __post_init__(self):
        if self.num_arms < 1 or self.context_dim < 1:
            raise ValueError("num_arms and context_dim must be >= 1")
        if self.kernel_name not in SUPPORTED_KERNELS:
            raise ValueError(f"unsupported kernel {self.kernel_name!r}")
        for name in ("length_scale", "signal_var", "obs_noise", "jitter"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def kernel(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Squared-exponential kernel matrix between rows of a and b."""
        a = np.atleast_2d(a)
        b = np.atleast_2d(b)
        sq = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
        return self.signal_var * np.exp(-0.5 * sq / self.length_scale**2)


class ArmPosterior:
    """GP state of one arm: observed contexts, rewards, cached factorization.

    Instances are value-like: :func:`update` returns a new posterior and the
    old one stays usable. ``clamp_count`` tracks rewards that arrived outside
    [0, 1] and were clamped.
    """

    __slots__ = ("cfg", "contexts", "rewards", "_chol", "_white", "clamp_count")

    def __init__(
        self,
        cfg: BanditConfig,
        contexts: np.ndarray | None = None,
        rewards: np.ndarray | None = None,
        chol: np.ndarray | None = None,
        white: np.ndarray | None = None,
        clamp_count: int = 0,
    ):
        self.cfg = cfg
        self.contexts = (
            np.empty((0, cfg.context_dim)) if contexts is None else np.asarray(contexts, float)
        )
        self.rewards = np.empty(0) if rewards is None else np.asarray(rewards, float)
        if self.contexts.shape != (self.rewards.size, cfg.context_dim):
            raise ValueError("contexts and rewards lengths disagree")
        # _chol: lower Cholesky of K(X,X) + (noise^2 + jitter) I
        # _white: solve(_chol, rewards), cached so predictions need one solve
        self._chol = np.empty((0, 0)) if chol is None else chol
        self._white = np.empty(0) if white is None else white
        self.clamp_count = clamp_count

    @classmethod
    def empty(cls, cfg: BanditConfig) -> "ArmPosterior":
        return cls(cfg)

    def __len__(self) -> int:
        return self.rewards.size

    @property
    def factorization(self) -> np.ndarray:
        return self._chol

    def rebuilt(self) -> "ArmPosterior":
        """From-scratch refactorization of the same data (oracle for the
        incremental path)."""
        n = len(self)
        if n == 0:
            return ArmPosterior(self.cfg, clamp_count=self.clamp_count)
        gram = self.cfg.kernel(self.contexts, self.contexts)
        gram[np.diag_indices(n)] += self.cfg.obs_noise**2 + self.cfg.jitter
        try:
            chol = np.linalg.cholesky(gram)
        except np.linalg.LinAlgError as exc:
            raise FactorizationError(
                f"kernel matrix not positive definite despite jitter (n={n})",
                condition_number=float(np.linalg.cond(gram)),
            ) from exc
        white = solve_triangular(chol, self.rewards, lower=True)
        return ArmPosterior(self.cfg, self.contexts, self.rewards, chol, white, self.clamp_count)


def posterior_predict(arm: ArmPosterior, x: np.ndarray) -> tuple[float, float]:
    """Predictive mean and variance at context ``x`` (prior if no data)."""
    cfg = arm.cfg
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != cfg.context_dim:
        raise ValueError(f"context has dimension {x.size}, expected {cfg.context_dim}")
    if len(arm) == 0:
        return 0.0, cfg.signal_var
    k_star = cfg.kernel(arm.contexts, x[None, :])[:, 0]
    s = solve_triangular(arm._chol, k_star, lower=True, check_finite=False)
    mean = float(s @ arm._white)
    var = float(cfg.signal_var - s @ s)
    return mean, max(var, 0.0)


def update(arm: ArmPosterior, x: np.ndarray, r: float) -> ArmPosterior:
    """Append one observation and extend the factorization by one row.

    Rewards outside [0, 1] are clamped and counted.
    """
    cfg = arm.cfg
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != cfg.context_dim:
        raise ValueError(f"context has dimension {x.size}, expected {cfg.context_dim}")
    clamped = r < 0.0 or r > 1.0
    r = min(max(float(r), 0.0), 1.0)
    n = len(arm)
    diag = cfg.signal_var + cfg.obs_noise**2 + cfg.jitter
    if n == 0:
        chol = np.array([[np.sqrt(diag)]])
        white = np.array([r / chol[0, 0]])
    else:
        k_vec = cfg.kernel(arm.contexts, x[None, :])[:, 0]
        l_row = solve_triangular(arm._chol, k_vec, lower=True, check_finite=False)
        pivot_sq = diag - float(l_row @ l_row)
        if pivot_sq <= 0.0:
            full = cfg.kernel(arm.contexts, arm.contexts)
            raise FactorizationError(
                f"factorization update lost positive definiteness at n={n + 1}",
                condition_number=float(np.linalg.cond(full + np.eye(n) * cfg.jitter)),
            )
        pivot = np.sqrt(pivot_sq)
        chol = np.zeros((n + 1, n + 1))
        chol[:n, :n] = arm._chol
        chol[n, :n] = l_row
        chol[n, n] = pivot
        white = np.append(arm._white, (r - l_row @ arm._white) / pivot)
    return ArmPosterior(
        cfg,
        np.vstack([arm.contexts, x[None, :]]),
        np.append(arm.rewards, r),
        chol,
        white,
        arm.clamp_count + int(clamped),
    )


def _thompson_draw(
    arms: Sequence[ArmPosterior], x: np.ndarray, rng: np.random.Generator
) -> tuple[int, list[tuple[float, float]]]:
    predictions = [posterior_predict(arm, x) for arm in arms]
    samples = np.empty(len(arms))
    for k, (mean, var) in enumerate(predictions):
        samples[k] = rng.normal(mean, np.sqrt(var))
    return int(np.argmax(samples)), predictions


def select_arm(
    arms: Sequence[ArmPosterior], x: np.ndarray, rng: np.random.Generator
) -> int:
    """Thompson step: sample one value per arm from its posterior at ``x`` and
    return the argmax (lowest index on exact ties)."""
    choice, _ = _thompson_draw(arms, x, rng)
    return choice


@dataclass
class RegretLedger:
    """Per-round trace of a synthetic run plus cumulative diagnostics.

    ``cumulative_regret[t]`` is sum_{i<=t} (best true mean - chosen true mean);
    it is non-decreasing by construction. ``posterior_var_sum`` accumulates the
    chosen arm's pre-update predictive variance; ``gamma_hat`` is that total
    divided by the number of arms (the empirical information-gain bound).
    """

    seed: int
    policy: str
    arms_chosen: list[int] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    best_means: list[float] = field(default_factory=list)
    chosen_means: list[float] = field(default_factory=list)
    cumulative_regret: list[float] = field(default_factory=list)
    posterior_var_sum: float = 0.0

    def record(self, arm: int, reward: float, best_mean: float, chosen_mean: float, var: float):
        prev = self.cumulative_regret[-1] if self.cumulative_regret else 0.0
        self.arms_chosen.append(arm)
        self.rewards.append(reward)
        self.best_means.append(best_mean)
        self.chosen_means.append(chosen_mean)
        self.cumulative_regret.append(prev + (best_mean - chosen_mean))
        self.posterior_var_sum += var

    @property
    def total_regret(self) -> float:
        return self.cumulative_regret[-1] if self.cumulative_regret else 0.0

    def regret_at(self, t: int) -> float:
        return self.cumulative_regret[t - 1]

    def gamma_hat(self, num_arms: int) -> float:
        return self.posterior_var_sum / num_arms

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("round,arm,reward,regret\n")
        for t, (arm, reward, reg) in enumerate(
            zip(self.arms_chosen, self.rewards, self.cumulative_regret), start=1
        ):
            buf.write(f"{t},{arm},{reward:.10g},{reg:.10g}\n")
        return buf.getvalue()


@dataclass(frozen=True)
class SyntheticEnv:
    """Test environment exposing true mean rewards per (arm, context)."""

    num_arms: int
    context_dim: int
    mean_fn: Callable[[int, np.ndarray], float]
    context_fn: Callable[[int, np.random.Generator], np.ndarray]

    def true_means(self, x: np.ndarray) -> np.ndarray:
        return np.array([self.mean_fn(k, x) for k in range(self.num_arms)])


def constant_context_env(means: Sequence[float], context_dim: int = 1) -> SyntheticEnv:
    means = tuple(float(m) for m in means)
    return SyntheticEnv(
        num_arms=len(means),
        context_dim=context_dim,
        mean_fn=lambda k, x: means[k],
        context_fn=lambda t, rng: np.zeros(context_dim),
    )


def linear_context_env(weights, intercepts) -> SyntheticEnv:
    """Arms with mean rewards affine in a Uniform[0,1]^d context, clipped away
    from the unit interval's edges."""
    w = np.asarray(weights, dtype=float)
    b = np.asarray(intercepts, dtype=float)
    if w.ndim != 2 or b.shape != (w.shape[0],):
        raise ValueError("weights must be (K, d) and intercepts (K,)")
    return SyntheticEnv(
        num_arms=w.shape[0],
        context_dim=w.shape[1],
        mean_fn=lambda k, x: float(np.clip(b[k] + w[k] @ x, 0.05, 0.95)),
        context_fn=lambda t, rng: rng.uniform(0.0, 1.0, size=w.shape[1]),
    )


def run_synthetic(
    env: SyntheticEnv,
    T: int,
    cfg: BanditConfig,
    seed: int,
    policy: str = "thompson",
) -> RegretLedger:
    """Full bandit loop against a synthetic environment.

    Contexts come from a stream seeded independently of the policy's draws, so
    runs with different policies but the same seed see identical contexts
    (paired baselines). ``policy`` is "thompson" or "uniform".
    """
    if env.num_arms != cfg.num_arms or env.context_dim != cfg.context_dim:
        raise ValueError("environment and config disagree on arms or context dimension")
    if policy not in ("thompson", "uniform"):
        raise ValueError(f"unknown policy {policy!r}")
    ctx_seed, policy_seed = np.random.SeedSequence(seed).spawn(2)
    ctx_rng = np.random.default_rng(ctx_seed)
    rng = np.random.default_rng(policy_seed)
    arms = [ArmPosterior.empty(cfg) for _ in range(cfg.num_arms)]
    ledger = RegretLedger(seed=seed, policy=policy)
    for t in range(1, T + 1):
        x = np.asarray(env.context_fn(t, ctx_rng), dtype=float)
        if policy == "thompson":
            k, predictions = _thompson_draw(arms, x, rng)
            var = predictions[k][1]
        else:
            k = int(rng.integers(cfg.num_arms))
            var = 0.0
        means = env.true_means(x)
        reward = float(means[k] + rng.normal(0.0, cfg.obs_noise))
        if policy == "thompson":
            arms[k] = update(arms[k], x, reward)
        ledger.record(k, reward, float(means.max()), float(means[k]), var)
    return ledger
