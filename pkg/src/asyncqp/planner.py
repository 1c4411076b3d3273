"""Closed-form parameter planning.

Stepsize intervals that make ``||I - Gamma Q||_2 < 1``, regularization
intervals that trade a target condition number against a target solution
error, and the error bound itself.  Every function accepts upper bounds on
``||Q||_2`` and ``k_Q`` in place of exact values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .qp_model import BlockPartition, RegularizationChoice, SpectralInfo

ENDPOINT_NUDGE = 1e-12


class InfeasibleError(ValueError):
    """A planning inequality cannot be satisfied.

    ``inequality`` names the violated condition in plain text.
    """

    def __init__(self, message: str, inequality: str):
        super().__init__(f"{message} (violated: {inequality})")
        self.inequality = inequality


def _positive(**kwargs):
    for name, value in kwargs.items():
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value}")


@dataclass(frozen=True)
class StepsizeInterval:
    """Open interval of admissible per-agent stepsizes."""

    lower: float
    upper: float

    def __post_init__(self):
        if not (0 <= self.lower < self.upper):
            raise ValueError(f"invalid stepsize interval ({self.lower}, {self.upper})")

    def __contains__(self, gamma) -> bool:
        return self.lower < gamma < self.upper

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return _sample_open(rng, self.lower, self.upper, size)


def _sample_open(rng, lo, hi, size):
    lo_in = lo * (1 + ENDPOINT_NUDGE) if lo > 0 else hi * ENDPOINT_NUDGE
    hi_in = hi * (1 - ENDPOINT_NUDGE)
    return rng.uniform(lo_in, hi_in, size=size)


@dataclass(frozen=True)
class GammaMatrix:
    gammas: tuple[float, ...]

    def __post_init__(self):
        g = tuple(float(v) for v in self.gammas)
        if not g or any(not v > 0 for v in g):
            raise ValueError(f"stepsizes must be > 0, got {g}")
        object.__setattr__(self, "gammas", g)

    def diagonal(self, partition: BlockPartition) -> np.ndarray:
        return partition.expand(self.gammas)

    def matrix(self, partition: BlockPartition) -> np.ndarray:
        return np.diag(self.diagonal(partition))


@dataclass(frozen=True)
class RegularizationPlan:
    alpha_lower: float
    alpha_upper: float
    k_D: float
    epsilon: float
    k_D_lower: float
    predicted_error_bound: float
    predicted_stepsize_interval: StepsizeInterval

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return _sample_open(rng, self.alpha_lower, self.alpha_upper, size)


def stepsize_interval(norm2: float, cond: float) -> StepsizeInterval:
    if not norm2 > 0:
        raise ValueError(f"norm2 must be positive, got {norm2}")
    if not cond >= 1:
        raise ValueError(f"condition number must be >= 1, got {cond}")
    s = math.sqrt(cond)
    return StepsizeInterval((s - 1) / (norm2 * s), (s + 1) / (norm2 * s))


def validate_interval(gamma_lower: float, gamma_upper: float, norm2: float, cond: float) -> bool:
    """Whether every stepsize selection from ``[gamma_lower, gamma_upper]`` contracts."""
    _positive(gamma_lower=gamma_lower, gamma_upper=gamma_upper, norm2=norm2, cond=cond)
    if gamma_lower > gamma_upper:
        raise ValueError("gamma_lower must not exceed gamma_upper")
    s = math.sqrt(cond)
    bracket = (s + 1) ** 2 / s - (gamma_upper / gamma_lower) * (s - 1) ** 2 / s
    return bracket / (2 * gamma_upper * norm2) > 1


def contraction_factor(Q, gamma: GammaMatrix, partition: BlockPartition) -> float:
    """``||I - Gamma Q||_2`` through the eigenvalues of ``M^T M``."""
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (partition.n, partition.n):
        raise ValueError(f"Q shape {Q.shape} does not match partition size {partition.n}")
    if len(gamma.gammas) != partition.N:
        raise ValueError(f"need {partition.N} stepsizes, got {len(gamma.gammas)}")
    M = np.eye(partition.n) - gamma.diagonal(partition)[:, None] * Q
    top = np.linalg.eigvalsh(M.T @ M)[-1]
    return float(math.sqrt(max(top, 0.0)))


def improves_conditioning(alphas, cond_Q: float) -> bool:
    """Sufficient test that adding ``diag(alphas)`` lowers the condition number."""
    alphas = RegularizationChoice(tuple(alphas))
    return alphas.alpha_max / alphas.alpha_min < cond_Q


def error_cap(cond_Q: float, norm2: float, norm_r: float) -> float:
    """Largest error any regularization can cause, ``||r|| k_Q / ||Q||``."""
    return norm_r * cond_Q / norm2


def _check_epsilon(cond_Q, norm2, norm_r, epsilon):
    _positive(cond_Q=cond_Q, norm2=norm2, norm_r=norm_r, epsilon=epsilon)
    cap = error_cap(cond_Q, norm2, norm_r)
    if not epsilon < cap:
        raise InfeasibleError(
            f"error target {epsilon} is not below the regularization error cap {cap:.6g}",
            "epsilon < ||r||_2 k_Q / ||Q||_2",
        )


def feasible_kD_lower(cond_Q: float, norm2: float, norm_r: float, epsilon: float) -> float:
    """Strict lower bound on reachable target condition numbers."""
    _check_epsilon(cond_Q, norm2, norm_r, epsilon)
    return cond_Q - epsilon * norm2 * (cond_Q - 1) / (norm_r * cond_Q)


def alpha_min_lower(cond_Q: float, norm2: float, norm_r: float, epsilon: float, k_D: float) -> float:
    kd_lo = feasible_kD_lower(cond_Q, norm2, norm_r, epsilon)
    if not k_D > kd_lo:
        raise InfeasibleError(
            f"target condition number {k_D} is not above the feasible minimum {kd_lo:.6g}",
            "k_D > k_Q - epsilon ||Q||_2 (k_Q - 1) / (||r||_2 k_Q)",
        )
    return norm2 * (1 / k_D - 1 / cond_Q) + epsilon * norm2**2 / (
        cond_Q * k_D * (norm_r * cond_Q - epsilon * norm2)
    )


def alpha_max_upper(cond_Q: float, norm2: float, norm_r: float, epsilon: float) -> float:
    _check_epsilon(cond_Q, norm2, norm_r, epsilon)
    return epsilon * norm2**2 / (norm_r * cond_Q**2 - epsilon * norm2 * cond_Q)


def error_bound(cond_Q: float, norm2: float, norm_r: float, alpha_max: float) -> float:
    """Upper bound on ``||x_hat - x_hat_A||_2`` given the largest regularization."""
    return norm_r * cond_Q**2 * alpha_max / (norm2**2 + norm2 * cond_Q * alpha_max)


def regularized_stepsize_interval(norm2: float, alpha_max: float, k_D: float) -> StepsizeInterval:
    """Stepsizes for ``Q + A`` from ``||Q + A|| <= ||Q|| + alpha_max`` and ``k_{Q+A} <= k_D``."""
    return stepsize_interval(norm2 + alpha_max, k_D)


def plan_regularization(cond_Q: float, norm2: float, norm_r: float, epsilon: float, k_D: float) -> RegularizationPlan:
    lo = alpha_min_lower(cond_Q, norm2, norm_r, epsilon, k_D)
    hi = alpha_max_upper(cond_Q, norm2, norm_r, epsilon)
    if not lo < hi:
        raise InfeasibleError(
            f"regularization interval ({lo:.6g}, {hi:.6g}) is empty",
            "alpha_min lower bound < alpha_max upper bound",
        )
    return RegularizationPlan(
        alpha_lower=lo,
        alpha_upper=hi,
        k_D=k_D,
        epsilon=epsilon,
        k_D_lower=feasible_kD_lower(cond_Q, norm2, norm_r, epsilon),
        predicted_error_bound=error_bound(cond_Q, norm2, norm_r, hi),
        predicted_stepsize_interval=regularized_stepsize_interval(norm2, hi, k_D),
    )


def homogeneous_contraction(gamma: float, norm2: float, cond: float) -> float:
    """``||I - gamma Q||_2`` when every agent uses the same stepsize."""
    return max(abs(1 - gamma * norm2), abs(1 - gamma * norm2 / cond))


@dataclass(frozen=True)
class ParameterPlan:
    spectral: SpectralInfo
    norm_r: float
    stepsizes: StepsizeInterval
    q_mid: float
    regularization: RegularizationPlan | None = None

    def lines(self) -> list[str]:
        sp = self.spectral
        out = [
            f"norm2={sp.norm2!r}",
            f"cond={sp.cond!r}",
            f"spectral_upper_bound={str(sp.is_upper_bound).lower()}",
            f"norm_r={self.norm_r!r}",
            f"gamma_lo={self.stepsizes.lower!r}",
            f"gamma_hi={self.stepsizes.upper!r}",
            f"q_mid={self.q_mid!r}",
            "q_hi=1.0",
        ]
        reg = self.regularization
        if reg is not None:
            out += [
                f"epsilon={reg.epsilon!r}",
                f"k_D={reg.k_D!r}",
                f"k_D_lo={reg.k_D_lower!r}",
                f"alpha_lo={reg.alpha_lower!r}",
                f"alpha_hi={reg.alpha_upper!r}",
                f"error_bound={reg.predicted_error_bound!r}",
                f"reg_gamma_lo={reg.predicted_stepsize_interval.lower!r}",
                f"reg_gamma_hi={reg.predicted_stepsize_interval.upper!r}",
            ]
        return out


def make_plan(spectral: SpectralInfo, norm_r: float, epsilon: float | None = None, k_D: float | None = None) -> ParameterPlan:
    steps = stepsize_interval(spectral.norm2, spectral.cond)
    mid = 0.5 * (steps.lower + steps.upper)
    reg = None
    if epsilon is not None or k_D is not None:
        if epsilon is None or k_D is None:
            raise ValueError("regularization planning needs both epsilon and k_D")
        reg = plan_regularization(spectral.cond, spectral.norm2, norm_r, epsilon, k_D)
    return ParameterPlan(
        spectral=spectral,
        norm_r=norm_r,
        stepsizes=steps,
        q_mid=homogeneous_contraction(mid, spectral.norm2, spectral.cond),
        regularization=reg,
    )
