"""Seeded random QP instances with a prescribed spectrum."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qp_model import BlockPartition, QuadraticProblem

SPECTRUM_LAWS = ("loguniform", "uniform")


@dataclass(frozen=True)
class GenSpec:
    n: int
    norm2: float
    cond: float
    blocks: int | tuple[int, ...] | None = None
    spectrum: str = "loguniform"
    r_norm: float = 1.0
    r: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.norm2 > 0:
            raise ValueError("target norm must be positive")
        if not self.cond >= 1:
            raise ValueError("target condition number must be >= 1")
        if self.n == 1 and self.cond != 1:
            raise ValueError("a 1x1 matrix has condition number 1")
        if self.spectrum not in SPECTRUM_LAWS:
            raise ValueError(f"unknown spectrum law {self.spectrum!r}; expected one of {SPECTRUM_LAWS}")
        if self.r is not None and len(self.r) != self.n:
            raise ValueError("explicit r has the wrong length")
        if self.r is None and self.r_norm < 0:
            raise ValueError("target ||r|| must be >= 0")
        self.partition()

    def partition(self) -> BlockPartition:
        if self.blocks is None:
            return even_partition(self.n, self.n)
        if isinstance(self.blocks, int):
            return even_partition(self.n, self.blocks)
        part = BlockPartition(tuple(self.blocks))
        if part.n != self.n:
            raise ValueError(f"block sizes sum to {part.n}, expected {self.n}")
        return part

    def rngs(self) -> tuple[np.random.Generator, np.random.Generator]:
        """Independent streams for Q and r so either can be regenerated alone."""
        q_seq, r_seq = np.random.SeedSequence(self.seed).spawn(2)
        return np.random.default_rng(q_seq), np.random.default_rng(r_seq)


def random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    # QR of a Gaussian matrix; fixing the signs of diag(R) makes the result Haar distributed.
    G = rng.standard_normal((n, n))
    U, R = np.linalg.qr(G)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return U * signs


def spectrum(spec: GenSpec, rng: np.random.Generator) -> np.ndarray:
    hi = spec.norm2
    lo = spec.norm2 / spec.cond
    inner = spec.n - 2
    if spec.n == 1:
        return np.array([hi])
    if spec.spectrum == "loguniform":
        mid = np.exp(rng.uniform(np.log(lo), np.log(hi), size=inner))
    else:
        mid = rng.uniform(lo, hi, size=inner)
    return np.sort(np.concatenate([[hi], mid, [lo]]))[::-1]


def generate_q(spec: GenSpec) -> np.ndarray:
    if spec.cond == 1:
        return spec.norm2 * np.eye(spec.n)
    rng, _ = spec.rngs()
    lam = spectrum(spec, rng)
    U = random_orthogonal(spec.n, rng)
    Q = (U.T * lam) @ U
    return 0.5 * (Q + Q.T)


def generate_r(spec: GenSpec) -> np.ndarray:
    if spec.r is not None:
        return np.array(spec.r, dtype=float)
    if spec.r_norm == 0:
        return np.zeros(spec.n)
    _, rng = spec.rngs()
    v = rng.standard_normal(spec.n)
    return v * (spec.r_norm / np.linalg.norm(v))


def even_partition(n: int, N: int) -> BlockPartition:
    if N < 1 or N > n:
        raise ValueError(f"cannot split {n} coordinates into {N} non-empty blocks")
    base, extra = divmod(n, N)
    return BlockPartition(tuple(base + 1 if i < extra else base for i in range(N)))


def generate_problem(spec: GenSpec) -> QuadraticProblem:
    return QuadraticProblem(generate_q(spec), generate_r(spec), spec.partition())
