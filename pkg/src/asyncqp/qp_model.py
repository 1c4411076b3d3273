"""Block-partitioned quadratic programs.

A problem is ``f(x) = 0.5 x^T Q x + r^T x`` with ``Q`` symmetric positive
definite and ``x`` split into ``N`` agent-owned blocks.  Everything here is an
immutable value; the simulator hands each agent only its row block of ``Q``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg as sp_linalg

SYMMETRY_RTOL = 1e-10


class ProblemError(ValueError):
    """Malformed problem data (shape, symmetry, definiteness, bounds)."""


@dataclass(frozen=True)
class BlockPartition:
    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) == 0:
            raise ProblemError("partition needs at least one block")
        if any(s < 1 for s in sizes):
            raise ProblemError(f"block sizes must be >= 1, got {sizes}")
        object.__setattr__(self, "sizes", sizes)

    @property
    def N(self) -> int:
        return len(self.sizes)

    @property
    def n(self) -> int:
        return sum(self.sizes)

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)]).astype(int)

    def slice(self, i: int) -> slice:
        """Index range of block ``i`` (zero-based)."""
        if not 0 <= i < self.N:
            raise IndexError(f"block index {i} out of range for {self.N} blocks")
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))

    def slices(self) -> list[slice]:
        return [self.slice(i) for i in range(self.N)]

    def block_of(self) -> np.ndarray:
        """Owner block of every coordinate, shape ``(n,)``."""
        return np.repeat(np.arange(self.N), self.sizes)

    def expand(self, per_block) -> np.ndarray:
        """Repeat one value per block into an ``n``-vector."""
        per_block = np.asarray(per_block, dtype=float)
        if per_block.shape != (self.N,):
            raise ProblemError(f"expected {self.N} per-block values, got shape {per_block.shape}")
        return np.repeat(per_block, self.sizes)


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float).reshape(-1)
        hi = np.array(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ProblemError("box lower/upper length mismatch")
        if not np.all(lo < hi):
            raise ProblemError("box requires lower < upper in every coordinate")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)


def _check_symmetric(Q: np.ndarray) -> np.ndarray:
    diff = np.abs(Q - Q.T)
    scale = np.maximum(np.abs(Q), np.abs(Q.T))
    if np.any(diff > SYMMETRY_RTOL * scale):
        raise ProblemError(f"matrix is not symmetric (max asymmetry {diff.max():.3e})")
    return 0.5 * (Q + Q.T)


@dataclass(frozen=True)
class QuadraticProblem:
    Q: np.ndarray
    r: np.ndarray
    partition: BlockPartition
    box: Box | None = None
    _chol: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        r = np.array(self.r, dtype=float).reshape(-1)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ProblemError(f"Q must be square, got shape {Q.shape}")
        n = Q.shape[0]
        if r.shape != (n,):
            raise ProblemError(f"r has length {r.size}, expected {n}")
        if self.partition.n != n:
            raise ProblemError(f"partition covers {self.partition.n} coordinates, Q is {n}x{n}")
        if self.box is not None and self.box.lower.shape != (n,):
            raise ProblemError("box dimension does not match Q")
        if not np.all(np.isfinite(Q)) or not np.all(np.isfinite(r)):
            raise ProblemError("Q and r must be finite")
        Q = _check_symmetric(Q)
        try:
            chol = sp_linalg.cho_factor(Q, lower=True)
        except np.linalg.LinAlgError as exc:
            raise ProblemError("Q is not positive definite") from exc
        Q.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "_chol", chol)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def N(self) -> int:
        return self.partition.N


@dataclass(frozen=True)
class SpectralInfo:
    norm2: float
    lambda_min: float
    cond: float
    is_upper_bound: bool
    lambda_min_usable: bool = True


@dataclass(frozen=True)
class RegularizationChoice:
    alphas: tuple[float, ...]

    def __post_init__(self):
        alphas = tuple(float(a) for a in self.alphas)
        if not alphas or any(not a > 0 for a in alphas):
            raise ProblemError(f"regularization parameters must be > 0, got {alphas}")
        object.__setattr__(self, "alphas", alphas)

    @property
    def alpha_max(self) -> float:
        return max(self.alphas)

    @property
    def alpha_min(self) -> float:
        return min(self.alphas)

    def matrix(self, partition: BlockPartition) -> np.ndarray:
        return np.diag(partition.expand(self.alphas))


def _check_x(problem: QuadraticProblem, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n,):
        raise ProblemError(f"x has shape {x.shape}, expected ({problem.n},)")
    return x


def block_rows(M, i: int, partition: BlockPartition) -> np.ndarray:
    """Rows (or entries) of ``M`` owned by agent ``i``."""
    M = np.asarray(M)
    if M.shape[0] != partition.n:
        raise ProblemError(f"leading dimension {M.shape[0]} != partition size {partition.n}")
    return M[partition.slice(i)]


def objective(problem: QuadraticProblem, x) -> float:
    x = _check_x(problem, x)
    return float(0.5 * x @ problem.Q @ x + problem.r @ x)


def gradient(problem: QuadraticProblem, x) -> np.ndarray:
    x = _check_x(problem, x)
    return problem.Q @ x + problem.r


def gradient_block(problem: QuadraticProblem, i: int, x) -> np.ndarray:
    x = _check_x(problem, x)
    sl = problem.partition.slice(i)
    return problem.Q[sl] @ x + problem.r[sl]


def exact_minimizer(problem: QuadraticProblem) -> np.ndarray:
    """Unconstrained minimizer, ``Q x = -r`` by Cholesky solve.

    Box constraints are ignored on purpose; the interior case is the one the
    convergence and error analysis covers.
    """
    return sp_linalg.cho_solve(problem._chol, -problem.r)


def regularize(problem: QuadraticProblem, choice: RegularizationChoice) -> QuadraticProblem:
    if len(choice.alphas) != problem.N:
        raise ProblemError(f"need {problem.N} regularization parameters, got {len(choice.alphas)}")
    QA = problem.Q + choice.matrix(problem.partition)
    return QuadraticProblem(QA, problem.r, problem.partition, problem.box)


def spectral_exact(Q) -> SpectralInfo:
    Q = np.asarray(Q, dtype=float)
    Q = _check_symmetric(Q)
    eig = np.linalg.eigvalsh(Q)
    lam_min, lam_max = float(eig[0]), float(eig[-1])
    if lam_min <= 0:
        raise ProblemError(f"matrix is not positive definite (lambda_min={lam_min:.3e})")
    return SpectralInfo(norm2=lam_max, lambda_min=lam_min, cond=lam_max / lam_min, is_upper_bound=False)


def spectral_bounds(Q, assume_pd: bool = True) -> SpectralInfo:
    """Cheap Gershgorin/trace bounds.

    ``norm2`` always bounds ``||Q||_2`` from above.  The trace is only a valid
    bound on ``lambda_1`` when ``Q`` is PSD, hence ``assume_pd``.
    """
    Q = np.asarray(Q, dtype=float)
    Q = _check_symmetric(Q)
    d = np.diag(Q)
    radii = np.abs(Q).sum(axis=1) - np.abs(d)
    upper = float(np.max(np.abs(d) + radii))
    lower = float(np.min(d - radii))
    pd_known = assume_pd or lower > 0
    if pd_known:
        upper = min(upper, float(np.trace(Q)))
    usable = lower > 0
    cond = upper / lower if usable else float("inf")
    return SpectralInfo(norm2=upper, lambda_min=lower, cond=cond, is_upper_bound=True, lambda_min_usable=usable)


def project_box(x, box: Box | None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if box is None:
        return x
    return np.clip(x, box.lower, box.upper)
