"""Order-alpha divergences and brainstorming-speedup measurement.

All logarithms are base 2, so an information gain of ``eps`` bits corresponds
directly to a ``2**eps`` shrink factor of the effective search space.

Conventions for D_alpha(p || q) = 1/(alpha-1) * log2 sum_x p(x)^alpha q(x)^(1-alpha):
- terms with p(x) = 0 contribute 0;
- p(x) > 0 with q(x) = 0 gives +inf for alpha > 1 and a dropped term for
  alpha < 1;
- alpha = 1 is routed to the KL limit sum_x p(x) log2(p(x)/q(x)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Distribution",
    "BrainstormConfig",
    "SpeedupReport",
    "renyi_divergence",
    "kl_divergence",
    "generalized_entropy",
    "measure_speedup",
]

_NORMALIZATION_TOL = 1e-12


@dataclass(frozen=True)
class Distribution:
    """Finite probability vector over a labeled outcome set."""

    probs: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "labels", tuple(self.labels))
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a non-empty 1-d vector")
        if len(self.labels) != p.size:
            raise ValueError(f"{len(self.labels)} labels for {p.size} probabilities")
        if np.any(p < 0):
            raise ValueError("negative probability entries")
        total = float(p.sum())
        if abs(total - 1.0) > _NORMALIZATION_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")

    @classmethod
    def normalized(cls, weights, labels=None) -> "Distribution":
        """Build a distribution from nonnegative weights, normalizing exactly."""
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0):
            raise ValueError("negative weights")
        total = w.sum()
        if total <= 0:
            raise ValueError("weights sum to zero")
        if labels is None:
            labels = tuple(str(i) for i in range(w.size))
        return cls(w / total, tuple(labels))

    @classmethod
    def uniform(cls, labels) -> "Distribution":
        labels = tuple(labels)
        return cls(np.full(len(labels), 1.0 / len(labels)), labels)

    def prob_of(self, label: str) -> float:
        return float(self.probs[self.labels.index(label)])


@dataclass(frozen=True)
class BrainstormConfig:
    """Divergence order and gate threshold for proposal merging.

    alpha = 1 is accepted and routed to the Shannon/KL limit branch.
    """

    alpha: float = 2.0
    epsilon: float = 0.0
    log_base: int = field(default=2, init=False)

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")


def _check_pair(p: Distribution, q: Distribution) -> None:
    if p.labels != q.labels:
        raise ValueError("distributions are over different outcome sets")


def kl_divergence(p: Distribution, q: Distribution) -> float:
    """KL(p || q) in bits; +inf if q misses mass where p has some."""
    _check_pair(p, q)
    total = 0.0
    for pi, qi in zip(p.probs, q.probs):
        if pi == 0.0:
            continue
        if qi == 0.0:
            return math.inf
        total += pi * math.log2(pi / qi)
    # Clamp the tiny negative residue that p == q can leave behind.
    return max(total, 0.0) if total > -1e-15 else total


def renyi_divergence(p: Distribution, q: Distribution, alpha: float) -> float:
    """Order-alpha divergence of p from q, in bits."""
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    _check_pair(p, q)
    if alpha == 1.0:
        return kl_divergence(p, q)
    total = 0.0
    for pi, qi in zip(p.probs, q.probs):
        if pi == 0.0:
            continue
        if qi == 0.0:
            if alpha > 1.0:
                return math.inf
            continue  # dropped term for alpha < 1
        total += pi**alpha * qi ** (1.0 - alpha)
    if total == 0.0:
        # All of p's support fell outside q's (alpha < 1 path).
        return math.inf
    value = math.log2(total) / (alpha - 1.0)
    return max(value, 0.0) if value > -1e-12 else value


def generalized_entropy(p: Distribution, q: Distribution, alpha: float) -> float:
    """1/(1-alpha) * log2 sum_x p(x)^alpha q(x)^(1-alpha).

    Algebraically the negated order-alpha divergence; the identity is asserted.
    """
    d = renyi_divergence(p, q, alpha)
    if alpha == 1.0:
        h = -d
    else:
        total = 0.0
        for pi, qi in zip(p.probs, q.probs):
            if pi == 0.0:
                continue
            if qi == 0.0:
                if alpha > 1.0:
                    h = -math.inf
                    break
                continue
            total += pi**alpha * qi ** (1.0 - alpha)
        else:
            h = math.log2(total) / (1.0 - alpha) if total > 0.0 else -math.inf
        h = min(h, 0.0) if h < 1e-12 else h
    assert h == -d or abs(h + d) <= 1e-12, f"entropy/divergence identity broke: {h} vs {-d}"
    return h


@dataclass(frozen=True)
class SpeedupReport:
    """Monte-Carlo comparison of expected search time under two distributions."""

    mean_draws_prior: float
    mean_draws_posterior: float
    ratio: float
    epsilon_bits: float
    bound: float
    meets_bound: bool
    trials: int
    seed: int


def measure_speedup(
    prior: Distribution,
    posterior: Distribution,
    target: str,
    trials: int,
    seed: int,
    epsilon_bits: float = 0.0,
) -> SpeedupReport:
    """Estimate the draws-until-target speedup from prior to posterior.

    The search model draws outcomes i.i.d. until the target appears, so the
    draw count is geometric with success probability equal to the target's
    mass. The report states whether the measured ratio clears 2**epsilon_bits.
    """
    _check_pair(prior, posterior)
    p0 = prior.prob_of(target)
    p1 = posterior.prob_of(target)
    if p0 <= 0.0 or p1 <= 0.0:
        raise ValueError(f"target {target!r} has zero mass under prior or posterior")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    draws_prior = rng.geometric(p0, size=trials)
    draws_post = rng.geometric(p1, size=trials)
    mean_prior = float(draws_prior.mean())
    mean_post = float(draws_post.mean())
    ratio = mean_prior / mean_post
    bound = 2.0**epsilon_bits
    return SpeedupReport(
        mean_draws_prior=mean_prior,
        mean_draws_posterior=mean_post,
        ratio=ratio,
        epsilon_bits=epsilon_bits,
        bound=bound,
        meets_bound=ratio >= bound,
        trials=trials,
        seed=seed,
    )
