"""Deterministic tick-based simulation of asynchronous block gradient descent.

Each agent keeps a full local copy of ``x`` but only ever computes its own
block, using just its row block of ``Q`` and ``r``.  Other blocks change only
when a message from their owner is delivered.  One tick runs three phases:

A. deliveries due at ``k+1`` are applied to receivers' copies,
B. agents active at ``k`` take a gradient step on their own block,
C. agents transmitting at ``k+1`` enqueue their current block.

By default B reads the copy from before phase A, so a value delivered at
``k+1`` is first used by an update at ``k+1``.  ``deliver_first=True``
swaps that order.
"""
from __future__ import annotations

import logging
import math
import queue
import threading
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import block_norm
from .block_norm import NormScheme
from .planner import GammaMatrix, contraction_factor
from .qp_model import QuadraticProblem, exact_minimizer

log = logging.getLogger(__name__)


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class ActivationSchedule:
    """When agents update and transmit.

    ``bernoulli``: each tick, every agent updates with probability
    ``p_update`` and sends to every other agent independently with
    probability ``p_transmit``.  ``explicit``: per-agent lists of update ticks
    and broadcast ticks.  ``always``: every agent updates and broadcasts
    every tick.
    """

    mode: str = "always"
    p_update: float = 1.0
    p_transmit: float = 1.0
    seed: int = 0
    updates: tuple[tuple[int, ...], ...] = ()
    transmits: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        if self.mode not in ("bernoulli", "explicit", "always"):
            raise ScheduleError(f"unknown schedule mode {self.mode!r}")
        if self.mode == "bernoulli":
            for name in ("p_update", "p_transmit"):
                p = getattr(self, name)
                if not 0 < p <= 1:
                    raise ScheduleError(f"{name} must lie in (0, 1], got {p}")
        if self.mode == "explicit":
            object.__setattr__(self, "updates", tuple(tuple(sorted(int(t) for t in ts)) for ts in self.updates))
            object.__setattr__(self, "transmits", tuple(tuple(sorted(int(t) for t in ts)) for ts in self.transmits))
            if len(self.updates) != len(self.transmits):
                raise ScheduleError("explicit schedule needs update and transmit lists for every agent")

    @classmethod
    def bernoulli(cls, p_update: float, p_transmit: float, seed: int = 0) -> "ActivationSchedule":
        return cls("bernoulli", p_update, p_transmit, seed)

    @classmethod
    def explicit(cls, updates, transmits) -> "ActivationSchedule":
        return cls("explicit", updates=tuple(map(tuple, updates)), transmits=tuple(map(tuple, transmits)))

    def _streams(self):
        up, tx = np.random.SeedSequence(self.seed).spawn(2)
        return np.random.default_rng(up), np.random.default_rng(tx)

    def update_mask(self, N: int, horizon: int) -> np.ndarray:
        """``mask[k, i]`` is true when ``k`` is in agent ``i``'s update set."""
        if self.mode == "always":
            return np.ones((horizon, N), dtype=bool)
        if self.mode == "bernoulli":
            rng, _ = self._streams()
            return rng.random((horizon, N)) < self.p_update
        self._check_agents(N)
        mask = np.zeros((horizon, N), dtype=bool)
        for i, ticks in enumerate(self.updates):
            ks = [k for k in ticks if 0 <= k < horizon]
            mask[ks, i] = True
        return mask

    def transmit_masks(self, N: int, horizon: int):
        """Yield one ``(N, N)`` sender-by-receiver mask per tick ``1..horizon``."""
        off_diag = ~np.eye(N, dtype=bool)
        if self.mode == "always":
            for _ in range(horizon):
                yield off_diag
        elif self.mode == "bernoulli":
            _, rng = self._streams()
            for _ in range(horizon):
                yield (rng.random((N, N)) < self.p_transmit) & off_diag
        else:
            self._check_agents(N)
            senders = np.zeros((horizon + 1, N), dtype=bool)
            for i, ticks in enumerate(self.transmits):
                ks = [t for t in ticks if 1 <= t <= horizon]
                senders[ks, i] = True
            for t in range(1, horizon + 1):
                yield senders[t][:, None] & off_diag

    def _check_agents(self, N):
        if len(self.updates) != N:
            raise ScheduleError(f"explicit schedule lists {len(self.updates)} agents, problem has {N}")


@dataclass(frozen=True)
class DelayRule:
    """Transit time in ticks for one link.

    ``fixed``: always ``d``.  ``uniform``: integer in ``[a, b]``.
    ``adversarial``: ``ceil(t / 2)`` for a message sent at tick ``t``, so
    delays grow without bound.  ``custom``: cycles through ``values``.
    """

    kind: str = "fixed"
    d: int = 1
    a: int = 1
    b: int = 1
    values: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in ("fixed", "uniform", "adversarial", "custom"):
            raise ValueError(f"unknown delay kind {self.kind!r}")
        if self.kind == "fixed" and self.d < 1:
            raise ValueError("delays must be >= 1 tick")
        if self.kind == "uniform" and not 1 <= self.a <= self.b:
            raise ValueError("uniform delay needs 1 <= a <= b")
        if self.kind == "custom":
            if not self.values or min(self.values) < 1:
                raise ValueError("custom delays must be a non-empty list of values >= 1")
            object.__setattr__(self, "values", tuple(int(v) for v in self.values))


@dataclass(frozen=True)
class DelayModel:
    default: DelayRule = DelayRule()
    links: dict = field(default_factory=dict)  # (sender, receiver) -> DelayRule
    seed: int = 0

    def sampler(self) -> "DelaySampler":
        return DelaySampler(self)


class DelaySampler:
    def __init__(self, model: DelayModel):
        self.model = model
        self.rng = np.random.default_rng(np.random.SeedSequence(model.seed))
        self.counters = defaultdict(int)

    def _draw(self, rule: DelayRule, tick: int, count: int, link=None) -> np.ndarray:
        if rule.kind == "fixed":
            return np.full(count, rule.d, dtype=np.int64)
        if rule.kind == "uniform":
            return self.rng.integers(rule.a, rule.b + 1, size=count)
        if rule.kind == "adversarial":
            return np.full(count, max(1, math.ceil(tick / 2)), dtype=np.int64)
        start = self.counters[link]
        self.counters[link] = start + count
        idx = np.arange(start, start + count) % len(rule.values)
        return np.asarray(rule.values, dtype=np.int64)[idx]

    def delays(self, senders: np.ndarray, receivers: np.ndarray, tick: int) -> np.ndarray:
        if not self.model.links:
            return self._draw(self.model.default, tick, len(senders), link=None)
        out = np.empty(len(senders), dtype=np.int64)
        for m, (j, i) in enumerate(zip(senders.tolist(), receivers.tolist())):
            rule = self.model.links.get((j, i), self.model.default)
            key = (j, i) if (j, i) in self.model.links else None
            out[m] = self._draw(rule, tick, 1, link=key)[0]
        return out


@dataclass
class AgentState:
    """What agent ``i`` holds: its local copy and its own rows of the problem."""

    id: int
    x: np.ndarray  # view into the world's copy matrix
    gamma: float
    block: slice
    rows: np.ndarray
    r: np.ndarray


@dataclass(frozen=True)
class MessageInFlight:
    sender: int
    receiver: int
    payload: np.ndarray
    compute_time: int
    delivery_time: int
    seq: int


class World:
    """Mutable simulation state; advance it with :meth:`step`."""

    def __init__(
        self,
        problem: QuadraticProblem,
        gammas,
        initial_states,
        schedule: ActivationSchedule,
        delays: DelayModel,
        horizon: int,
        *,
        deliver_first: bool = False,
        dedup: bool = False,
        log_events: bool = False,
    ):
        part = problem.partition
        N, n = part.N, part.n
        gammas = GammaMatrix(tuple(gammas)).gammas
        if len(gammas) != N:
            raise ValueError(f"need {N} stepsizes, got {len(gammas)}")
        X = np.array(initial_states, dtype=float)
        if X.shape == (n,):
            X = np.tile(X, (N, 1))
        if X.shape != (N, n):
            raise ValueError(f"initial states must have shape ({n},) or ({N}, {n}), got {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("initial states must be finite")
        if schedule.mode == "explicit" and horizon >= 1:
            mask = schedule.update_mask(N, horizon)
            silent = [i for i in range(N) if not mask[:, i].any()]
            if silent:
                raise ScheduleError(f"agents {silent} never update within the horizon")

        self.problem = problem
        self.partition = part
        self.horizon = horizon
        self.X = X
        self.agents = [
            AgentState(i, X[i], gammas[i], part.slice(i), problem.Q[part.slice(i)].copy(), problem.r[part.slice(i)].copy())
            for i in range(N)
        ]
        self.owned = [X[i, part.slice(i)].copy() for i in range(N)]
        self.owned_time = np.zeros(N, dtype=np.int64)
        # stamps[i, j]: time index of the value agent i currently holds for block j
        self.stamps = np.zeros((N, N), dtype=np.int64)
        self.pending: dict[int, list[MessageInFlight]] = defaultdict(list)
        self.k = 0
        self.deliver_first = deliver_first
        self.dedup = dedup
        self.events: list[tuple] | None = [] if log_events else None
        self.counts = {"update": 0, "send": 0, "deliver": 0, "discard": 0}
        self._seq = 0
        self._update_mask = schedule.update_mask(N, horizon)
        self._transmits = schedule.transmit_masks(N, horizon)
        self._delays = delays.sampler()
        self._lower = self._upper = None
        if problem.box is not None:
            self._lower = [problem.box.lower[sl] for sl in part.slices()]
            self._upper = [problem.box.upper[sl] for sl in part.slices()]

    @property
    def N(self) -> int:
        return self.partition.N

    def in_flight(self) -> int:
        return sum(len(v) for v in self.pending.values())

    def _deliver(self, tick: int):
        msgs = self.pending.pop(tick, [])
        if not msgs:
            return
        latest: dict[tuple[int, int], MessageInFlight] = {}
        for m in msgs:
            key = (m.receiver, m.sender)
            cur = latest.get(key)
            if cur is None or (m.compute_time, m.seq) > (cur.compute_time, cur.seq):
                latest[key] = m
        for (i, j), m in latest.items():
            if self.dedup and m.compute_time < self.stamps[i, j]:
                self.counts["discard"] += 1
                continue
            self.X[i, self.agents[j].block] = m.payload
            self.stamps[i, j] = m.compute_time
            self.counts["deliver"] += 1
            if self.events is not None:
                self.events.append((tick, "deliver", j, i, m.compute_time))

    def _update(self, k: int):
        for i in np.flatnonzero(self._update_mask[k]):
            a = self.agents[i]
            step = a.gamma * (a.rows @ a.x + a.r)
            new = a.x[a.block] - step
            if self._lower is not None:
                new = np.clip(new, self._lower[i], self._upper[i])
            a.x[a.block] = new
            self.owned[i] = new
            self.owned_time[i] = k + 1
            self.stamps[i, i] = k + 1
            self.counts["update"] += 1
            if self.events is not None:
                self.events.append((k, "update", int(i), int(i), k + 1))

    def _transmit(self, tick: int):
        mask = next(self._transmits)
        senders, receivers = np.nonzero(mask)
        if senders.size == 0:
            return
        delays = self._delays.delays(senders, receivers, tick)
        for j, i, d in zip(senders.tolist(), receivers.tolist(), delays.tolist()):
            m = MessageInFlight(j, i, self.owned[j], int(self.owned_time[j]), tick + d, self._seq)
            self._seq += 1
            self.pending[m.delivery_time].append(m)
            if self.events is not None:
                self.events.append((tick, "send", j, i, m.compute_time))
        self.counts["send"] += senders.size

    def step(self):
        """Advance from tick ``k`` to ``k + 1``."""
        k = self.k
        if k >= self.horizon:
            raise RuntimeError("world already reached its horizon")
        if self.deliver_first:
            self._deliver(k + 1)
            self._update(k)
        else:
            self._update(k)
            self._deliver(k + 1)
        self._transmit(k + 1)
        self.k = k + 1


@dataclass
class SimTrace:
    dist2: np.ndarray  # (horizon + 1, N)
    dist_blockmax: np.ndarray  # (horizon + 1, N)
    set_index: np.ndarray | None  # (horizon + 1, N), None when q >= 1
    final_states: np.ndarray
    counts: dict
    target: np.ndarray
    q: float
    D_o: float
    n: int
    events: list | None = None

    @property
    def horizon(self) -> int:
        return self.dist2.shape[0] - 1

    @property
    def worst_dist2(self) -> np.ndarray:
        return self.dist2.max(axis=1)

    @property
    def worst_blockmax(self) -> np.ndarray:
        return self.dist_blockmax.max(axis=1)

    @property
    def worst_index(self) -> np.ndarray | None:
        """Set level ``s(k)`` of the agent copy furthest from the target."""
        if self.set_index is None:
            return None
        return self.set_index.min(axis=1)


def set_indices(dists: np.ndarray, q: float, radius: float) -> np.ndarray:
    """Vectorized :func:`block_norm.index_from_distance`."""
    dists = np.asarray(dists, dtype=float)
    if not 0 < q < 1:
        raise ValueError(f"contraction factor must lie in (0, 1), got {q}")
    out = np.full(dists.shape, block_norm.OUTSIDE, dtype=np.int64)
    inside = dists <= radius
    conv = dists <= block_norm.CONVERGED_RTOL * radius
    live = inside & ~conv
    d = dists[live]
    s = np.maximum(np.floor(np.log(d / radius) / np.log(q)), 0).astype(np.int64)
    for _ in range(3):
        s = np.where((s > 0) & (d > q ** s.astype(float) * radius), s - 1, s)
    for _ in range(3):
        s = np.where(d <= q ** (s + 1).astype(float) * radius, s + 1, s)
    out[live] = s
    out[conv] = block_norm.CONVERGED
    return out


def run(
    problem: QuadraticProblem,
    schedule: ActivationSchedule,
    delay_model: DelayModel,
    gammas,
    horizon: int,
    initial_states,
    scheme: NormScheme | None = None,
    target=None,
    *,
    deliver_first: bool = False,
    dedup: bool = False,
    log_events: bool = False,
) -> SimTrace:
    """Run the simulation for ``horizon`` ticks and record distances to ``target``.

    ``target`` defaults to the problem's exact minimizer.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    part = problem.partition
    scheme = scheme or NormScheme.uniform(part.N)
    target = exact_minimizer(problem) if target is None else np.asarray(target, dtype=float)
    world = World(
        problem, gammas, initial_states, schedule, delay_model, horizon,
        deliver_first=deliver_first, dedup=dedup, log_events=log_events,
    )
    N = part.N
    dist2 = np.empty((horizon + 1, N))
    dmax = np.empty((horizon + 1, N))

    def record(k):
        diff = world.X - target
        dist2[k] = np.linalg.norm(diff, axis=1)
        dmax[k] = block_norm.block_max_norm(diff, part, scheme)

    record(0)
    for k in range(horizon):
        world.step()
        record(k + 1)

    q = contraction_factor(problem.Q, GammaMatrix(tuple(gammas)), part)
    D_o = float(dmax[0].max())
    idx = None
    if 0 < q < 1 and D_o > 0:
        idx = set_indices(dmax, q, part.n * D_o)
    elif D_o == 0:
        idx = np.full(dmax.shape, block_norm.CONVERGED, dtype=np.int64)
    log.debug("run finished: q=%.6g D_o=%.6g counts=%s", q, D_o, world.counts)
    return SimTrace(dist2, dmax, idx, world.X.copy(), dict(world.counts), target, q, D_o, part.n, world.events)


@dataclass
class LivenessReport:
    window: int
    worst_gap: int
    gaps: list[int]
    violations: list[int]

    @property
    def ok(self) -> bool:
        return not self.violations


def liveness_check(schedule: ActivationSchedule, N: int, horizon: int, window: int | None = None) -> LivenessReport:
    """Finite-horizon stand-in for "every agent updates infinitely often".

    The gap for an agent is the longest stretch between consecutive updates,
    counting from tick -1 and up to ``horizon``.  Agents whose gap exceeds
    ``window`` (default ``max(1, horizon // 10)``) are flagged.
    """
    window = max(1, horizon // 10) if window is None else window
    mask = schedule.update_mask(N, horizon)
    gaps = []
    for i in range(N):
        ticks = np.concatenate([[-1], np.flatnonzero(mask[:, i]), [horizon]])
        gaps.append(int(np.diff(ticks).max()))
    violations = [i for i, g in enumerate(gaps) if g > window]
    return LivenessReport(window, max(gaps) if gaps else 0, gaps, violations)


def monotone_set_diagnostic(trace: SimTrace, q: float, n: int, D_o: float) -> tuple[bool, int | None]:
    """Check that the worst agent's set level never drops.

    Returns ``(ok, first_k)`` where ``first_k`` is the first tick at which the
    level decreased, or ``None``.
    """
    if not 0 < q < 1:
        raise ValueError(f"set diagnostic needs a contraction factor in (0, 1), got {q}")
    if D_o <= 0:
        return True, None
    levels = set_indices(trace.worst_blockmax, q, n * D_o)
    drops = np.flatnonzero(np.diff(levels) < 0)
    if drops.size:
        return False, int(drops[0] + 1)
    return True, None


def run_parallel(
    problem: QuadraticProblem,
    gammas,
    iterations: int,
    initial_states,
    p_update: float = 1.0,
    p_transmit: float = 1.0,
    seed: int = 0,
    target=None,
) -> np.ndarray:
    """Free-running threaded variant: one worker per agent, queues as links.

    Interleaving is up to the thread scheduler, so results are not
    reproducible tick for tick.  Returns each agent's distance to ``target``
    after every local iteration, shape ``(iterations + 1, N)``.
    """
    part = problem.partition
    N, n = part.N, part.n
    target = exact_minimizer(problem) if target is None else np.asarray(target, dtype=float)
    X = np.array(initial_states, dtype=float)
    if X.shape == (n,):
        X = np.tile(X, (N, 1))
    inboxes = [queue.SimpleQueue() for _ in range(N)]
    dist = np.empty((iterations + 1, N))
    seeds = np.random.SeedSequence(seed).spawn(N)
    start = threading.Barrier(N)

    def worker(i):
        rng = np.random.default_rng(seeds[i])
        sl = part.slice(i)
        rows, r, g = problem.Q[sl], problem.r[sl], gammas[i]
        x = X[i]
        dist[0, i] = np.linalg.norm(x - target)
        start.wait()
        for t in range(iterations):
            while True:
                try:
                    j, payload = inboxes[i].get_nowait()
                except queue.Empty:
                    break
                x[part.slice(j)] = payload
            if rng.random() < p_update:
                x[sl] = x[sl] - g * (rows @ x + r)
            own = x[sl].copy()
            for j in np.flatnonzero(rng.random(N) < p_transmit):
                if j != i:
                    inboxes[j].put((i, own))
            dist[t + 1, i] = np.linalg.norm(x - target)

    threads = [threading.Thread(target=worker, args=(i,), daemon=True) for i in range(N)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return dist
