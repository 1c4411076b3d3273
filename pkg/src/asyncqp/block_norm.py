"""Weighted block-maximum norm and the nested convergence sets built on it."""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass

import numpy as np

from .qp_model import BlockPartition

# Set-index sentinels, chosen so that ordinary integer comparison stays meaningful.
OUTSIDE = -1
CONVERGED = sys.maxsize
CONVERGED_RTOL = 1e-12


@dataclass(frozen=True)
class NormScheme:
    weights: tuple[float, ...]
    exponents: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        p = tuple(float(v) for v in self.exponents)
        if len(w) != len(p) or not w:
            raise ValueError("weights and exponents must be non-empty and equally long")
        if any(not v >= 1 for v in w):
            raise ValueError(f"block weights must be >= 1, got {w}")
        if any(not v >= 1 for v in p):
            raise ValueError(f"block exponents must be in [1, inf], got {p}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "exponents", p)

    @classmethod
    def uniform(cls, N: int, weight: float = 1.0, p: float = 2.0) -> "NormScheme":
        return cls((weight,) * N, (p,) * N)

    @property
    def N(self) -> int:
        return len(self.weights)

    @property
    def omega_min(self) -> float:
        return min(self.weights)

    @property
    def p_min(self) -> float:
        return min(self.exponents)


def _check(scheme: NormScheme, partition: BlockPartition, n: int):
    if scheme.N != partition.N:
        raise ValueError(f"norm scheme has {scheme.N} blocks, partition has {partition.N}")
    if n != partition.n:
        raise ValueError(f"vector length {n} does not match partition size {partition.n}")


def block_norms(x, partition: BlockPartition, scheme: NormScheme) -> np.ndarray:
    """Weighted per-block norms ``||x_i||_{p_i} / w_i``, shape ``(..., N)``.

    Works on stacks of vectors along leading axes.
    """
    x = np.asarray(x, dtype=float)
    _check(scheme, partition, x.shape[-1])
    out = np.empty(x.shape[:-1] + (partition.N,))
    for i, sl in enumerate(partition.slices()):
        out[..., i] = np.linalg.norm(x[..., sl], ord=scheme.exponents[i], axis=-1) / scheme.weights[i]
    return out


def block_max_norm(x, partition: BlockPartition, scheme: NormScheme):
    norms = block_norms(x, partition, scheme)
    res = norms.max(axis=-1)
    return float(res) if res.ndim == 0 else res


def induced_norm_bound(B, scheme: NormScheme) -> float:
    """The block-max operator norm estimate used in the convergence argument.

    ``n**(1/p_min - 1/2) ||B||_2 / w_min`` when ``p_min < 2``, else
    ``||B||_2 / w_min``.  Not a valid bound for every ``B``; see
    :func:`induced_norm_bound_rigorous`.
    """
    B = np.asarray(B, dtype=float)
    n = B.shape[0]
    spec = float(np.linalg.norm(B, 2))
    p_min = scheme.p_min
    if p_min < 2:
        return n ** (1.0 / p_min - 0.5) * spec / scheme.omega_min
    return spec / scheme.omega_min


def induced_norm_bound_rigorous(B, partition: BlockPartition, scheme: NormScheme) -> float:
    """Provable upper bound on the induced block-max norm of ``B``.

    :func:`induced_norm_bound` can undershoot: with size-1 blocks the norm is
    the infinity norm and ``[[1, 1], [0, 0]] / sqrt(2)`` has induced norm
    ``sqrt(2)`` but spectral norm 1.  This bound goes through the 2-norm of
    the whole vector instead and pays the block-count factor.
    """
    B = np.asarray(B, dtype=float)
    _check(scheme, partition, B.shape[0])
    sizes = np.asarray(partition.sizes, dtype=float)
    p = np.asarray(scheme.exponents)
    w = np.asarray(scheme.weights)
    inv_p = np.where(np.isinf(p), 0.0, 1.0 / p)
    out_c = sizes ** np.maximum(0.0, inv_p - 0.5)  # ||y||_p <= out_c ||y||_2
    in_c = sizes ** np.maximum(0.0, 0.5 - inv_p)  # ||x||_2 <= in_c ||x||_p
    return float(np.max(out_c / w) * np.linalg.norm(B, 2) * np.sqrt(np.sum((in_c * w) ** 2)))


def initial_radius(states, x_hat, partition: BlockPartition, scheme: NormScheme) -> float:
    """Largest block-max distance from ``x_hat`` over all agents' initial copies."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    x_hat = np.asarray(x_hat, dtype=float)
    if states.shape[-1] != x_hat.shape[-1]:
        raise ValueError("state and minimizer dimensions differ")
    return float(np.max(block_max_norm(states - x_hat, partition, scheme)))


def _check_q(q: float):
    if not 0 < q < 1:
        raise ValueError(f"contraction factor must lie in (0, 1), got {q}")


def index_from_distance(dist: float, q: float, radius: float) -> int:
    """Largest ``s`` with ``dist <= q**s * radius``; ``radius`` is ``n * D_o``."""
    _check_q(q)
    if radius <= 0:
        raise ValueError("set radius must be positive")
    if dist <= CONVERGED_RTOL * radius:
        return CONVERGED
    if dist > radius:
        return OUTSIDE
    s = max(int(math.floor(math.log(dist / radius) / math.log(q))), 0)
    # log rounding can be off by one either way near a boundary
    while s > 0 and dist > q**s * radius:
        s -= 1
    while dist <= q ** (s + 1) * radius:
        s += 1
    return s


def set_index(y, x_hat, q: float, n: int, D_o: float, scheme: NormScheme, partition: BlockPartition) -> int:
    """Level of ``y`` in the nested sets ``{y : ||y - x_hat||_max <= q^s n D_o}``.

    Returns ``OUTSIDE`` if ``y`` is not even in the outermost set and
    ``CONVERGED`` once the distance is negligible against ``n * D_o``.
    """
    dist = block_max_norm(np.asarray(y, dtype=float) - np.asarray(x_hat, dtype=float), partition, scheme)
    return index_from_distance(dist, q, n * D_o)


def in_set(y, x_hat, s: int, q: float, n: int, D_o: float, scheme: NormScheme, partition: BlockPartition) -> bool:
    dist = block_max_norm(np.asarray(y, dtype=float) - np.asarray(x_hat, dtype=float), partition, scheme)
    return bool(dist <= q**s * n * D_o)


def format_index(s) -> str:
    if s is None:
        return "na"
    if s == OUTSIDE:
        return "outside"
    if s == CONVERGED:
        return "converged"
    return str(int(s))
