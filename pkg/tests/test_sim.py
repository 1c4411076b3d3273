import numpy as np
import pytest

from asyncqp.planner import stepsize_interval
from asyncqp.problem_gen import GenSpec, generate_problem
from asyncqp.qp_model import BlockPartition, QuadraticProblem, exact_minimizer, spectral_exact
from asyncqp.sim import (
    ActivationSchedule,
    DelayModel,
    DelayRule,
    ScheduleError,
    World,
    liveness_check,
    monotone_set_diagnostic,
    run,
    run_parallel,
)

ALWAYS = ActivationSchedule()
UNIT = DelayModel()


def diag_problem():
    return QuadraticProblem(np.diag([4.0, 1.0]), [1.0, 1.0], BlockPartition((1, 1)))


def coupled_problem(n=6, cond=5.0, seed=0, blocks=3):
    return generate_problem(GenSpec(n=n, norm2=1.0, cond=cond, blocks=blocks, r_norm=1.0, seed=seed))


def interval_gammas(problem, rng):
    s = spectral_exact(problem.Q)
    return stepsize_interval(s.norm2, s.cond).sample(rng, problem.N)


def test_scalar_recursion():
    P = QuadraticProblem([[2.0]], [-2.0], BlockPartition((1,)))
    tr = run(P, ALWAYS, UNIT, [0.25], 3, np.zeros(1))
    assert tr.dist2[:, 0].tolist() == pytest.approx([1.0, 0.5, 0.25, 0.125])
    w = World(P, [0.25], np.zeros(1), ALWAYS, UNIT, 3)
    xs = []
    for _ in range(3):
        w.step()
        xs.append(w.X[0, 0])
    assert xs == [0.5, 0.75, 0.875]


def test_two_agents_converge():
    tr = run(diag_problem(), ALWAYS, UNIT, [0.25, 0.25], 60, [0.0, 0.0])
    np.testing.assert_allclose(tr.final_states, [[-0.25, -1.0]] * 2, atol=1e-6)
    assert tr.q == pytest.approx(0.75)


@pytest.mark.parametrize(
    "schedule",
    [ALWAYS, ActivationSchedule.bernoulli(0.3, 0.2, seed=4), ActivationSchedule.explicit([[0, 3], [1], [2, 9]], [[1], [], [4, 5]])],
)
def test_fixed_point_is_invariant(schedule):
    P = coupled_problem()
    x_hat = exact_minimizer(P)
    tr = run(P, schedule, DelayModel(DelayRule("uniform", a=1, b=7), seed=1), [0.5, 1.0, 1.5], 200, x_hat)
    assert tr.worst_dist2.max() <= 1e-10


def test_horizon_zero():
    P = coupled_problem()
    x0 = np.arange(6.0)
    tr = run(P, ALWAYS, UNIT, [0.5] * 3, 0, x0)
    assert tr.dist2.shape == (1, 3)
    np.testing.assert_array_equal(tr.final_states, np.tile(x0, (3, 1)))
    with pytest.raises(ValueError):
        run(P, ALWAYS, UNIT, [0.5] * 3, -1, x0)


def test_runs_are_deterministic(rng):
    P = coupled_problem(seed=2)
    args = (P, ActivationSchedule.bernoulli(0.2, 0.2, seed=9), DelayModel(DelayRule("uniform", a=1, b=20), seed=3), [0.6, 0.7, 0.8], 300, rng.standard_normal(6))
    a, b = run(*args), run(*args)
    assert np.array_equal(a.dist2, b.dist2) and np.array_equal(a.set_index, b.set_index)


def test_information_causality():
    P = coupled_problem(n=8, blocks=4, seed=5)
    schedule = ActivationSchedule.bernoulli(0.3, 0.3, seed=2)
    w = World(P, [0.5] * 4, np.ones(8), schedule, DelayModel(DelayRule("uniform", a=1, b=15), seed=8), 400)
    history = [{0: w.owned[j].copy()} for j in range(4)]
    for _ in range(400):
        w.step()
        for j in range(4):
            history[j][int(w.owned_time[j])] = w.owned[j].copy()
        for i in range(4):
            for j in range(4):
                tau = int(w.stamps[i, j])
                assert tau <= w.k
                assert np.array_equal(w.X[i, P.partition.slice(j)], history[j][tau])


def test_messages_wait_for_their_delivery_tick():
    P = QuadraticProblem([[2.0, 1.0], [1.0, 2.0]], [0.0, 0.0], BlockPartition((1, 1)))
    sched = ActivationSchedule.explicit([[0], [0]], [[1], []])
    w = World(P, [0.1, 0.1], [1.0, 1.0], sched, DelayModel(DelayRule("fixed", d=3)), 5, log_events=True)
    for _ in range(3):
        w.step()
        assert w.X[1, 0] == 1.0
    w.step()
    assert w.X[1, 0] == w.owned[0][0] and w.stamps[1, 0] == 1
    kinds = [(e[0], e[1]) for e in w.events]
    assert kinds == [(0, "update"), (0, "update"), (1, "send"), (4, "deliver")]


def test_deliver_first_changes_what_updates_read():
    P = coupled_problem(seed=1)
    x0 = np.linspace(-1, 1, 6)
    a = run(P, ALWAYS, UNIT, [0.5] * 3, 20, x0)
    b = run(P, ALWAYS, UNIT, [0.5] * 3, 20, x0, deliver_first=True)
    assert not np.array_equal(a.dist2, b.dist2)


def test_out_of_order_delivery_and_dedup():
    P = QuadraticProblem([[2.0, 0.5], [0.5, 2.0]], [1.0, -1.0], BlockPartition((1, 1)))
    sched = ActivationSchedule.explicit([[0, 1, 2, 3], [0]], [[1, 2], []])
    delays = DelayModel(links={(0, 1): DelayRule("custom", values=(5, 1))})
    for dedup, stale_stamp, discards in [(False, 1, 0), (True, 2, 1)]:
        w = World(P, [0.2, 0.2], [1.0, 1.0], sched, delays, 8, dedup=dedup)
        for _ in range(8):
            w.step()
        assert w.stamps[1, 0] == stale_stamp
        assert w.counts["discard"] == discards


def test_same_tick_latest_compute_time_wins():
    P = QuadraticProblem([[2.0, 0.5], [0.5, 2.0]], [1.0, -1.0], BlockPartition((1, 1)))
    sched = ActivationSchedule.explicit([[0, 1, 2], [0]], [[1, 3], []])
    delays = DelayModel(links={(0, 1): DelayRule("custom", values=(3, 1))})
    w = World(P, [0.2, 0.2], [1.0, 1.0], sched, delays, 5)
    for _ in range(5):
        w.step()
    # both messages land at tick 4; the one computed at tick 3 must win
    assert w.stamps[1, 0] == 3 and w.counts["deliver"] == 1


def test_event_log_is_causal():
    P = coupled_problem()
    tr = run(P, ActivationSchedule.bernoulli(0.5, 0.5, seed=1), DelayModel(DelayRule("uniform", a=1, b=4), seed=1), [0.5] * 3, 50, np.ones(6), log_events=True)
    sends = {(e[2], e[3], e[4]) for e in tr.events if e[1] == "send"}
    delivers = [e for e in tr.events if e[1] == "deliver"]
    assert delivers and all((e[2], e[3], e[4]) in sends for e in delivers)
    assert sum(e[1] == "update" for e in tr.events) == tr.counts["update"]


def test_explicit_schedule_errors():
    P = diag_problem()
    with pytest.raises(ScheduleError):
        run(P, ActivationSchedule.explicit([[0], []], [[], []]), UNIT, [0.2, 0.2], 5, [0.0, 0.0])
    with pytest.raises(ScheduleError):
        run(P, ActivationSchedule.explicit([[0]], [[]]), UNIT, [0.2, 0.2], 5, [0.0, 0.0])
    with pytest.raises(ScheduleError):
        ActivationSchedule("explicit", updates=((0,),), transmits=())
    with pytest.raises(ScheduleError):
        ActivationSchedule.bernoulli(0.0, 0.5)
    with pytest.raises(ScheduleError):
        ActivationSchedule(mode="poisson")


def test_bad_inputs():
    P = diag_problem()
    with pytest.raises(ValueError):
        run(P, ALWAYS, UNIT, [0.2], 5, [0.0, 0.0])
    with pytest.raises(ValueError):
        run(P, ALWAYS, UNIT, [0.2, 0.2], 5, [0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        run(P, ALWAYS, UNIT, [0.2, 0.2], 5, [np.nan, 0.0])


def test_delay_rules():
    s = DelayModel(DelayRule("adversarial")).sampler()
    assert [int(s.delays(np.array([0]), np.array([1]), t)[0]) for t in (1, 2, 3, 10, 11)] == [1, 1, 2, 5, 6]
    s = DelayModel(DelayRule("custom", values=(2, 7, 3))).sampler()
    assert s.delays(np.zeros(5, int), np.ones(5, int), 1).tolist() == [2, 7, 3, 2, 7]
    s = DelayModel(DelayRule("uniform", a=2, b=4), seed=1).sampler()
    d = s.delays(np.zeros(1000, int), np.ones(1000, int), 1)
    assert set(d.tolist()) == {2, 3, 4}
    s = DelayModel(DelayRule("fixed", d=2), links={(1, 0): DelayRule("fixed", d=9)}).sampler()
    assert s.delays(np.array([0, 1]), np.array([1, 0]), 1).tolist() == [2, 9]
    for bad in [dict(kind="fixed", d=0), dict(kind="uniform", a=3, b=2), dict(kind="custom", values=()), dict(kind="custom", values=(0,)), dict(kind="gamma")]:
        with pytest.raises(ValueError):
            DelayRule(**bad)


def test_liveness_examples():
    rep = liveness_check(ALWAYS, 3, 100)
    assert rep.ok and rep.worst_gap == 1 and rep.window == 10
    rep = liveness_check(ActivationSchedule.explicit([[0, 50], list(range(0, 100, 5))], [[], []]), 2, 100)
    assert rep.gaps == [50, 5] and rep.violations == [0]
    assert liveness_check(ActivationSchedule.bernoulli(0.1, 0.1, seed=1), 25, 2000).ok


def test_monotone_set_diagnostic():
    P = diag_problem()
    tr = run(P, ALWAYS, UNIT, [0.25, 0.25], 60, [3.0, -4.0])
    assert monotone_set_diagnostic(tr, tr.q, tr.n, tr.D_o) == (True, None)
    assert np.all(np.diff(tr.worst_index.astype(float)) >= 0)
    fixed = run(P, ALWAYS, UNIT, [0.25, 0.25], 10, exact_minimizer(P))
    assert monotone_set_diagnostic(fixed, 0.75, 2, fixed.D_o) == (True, None)
    with pytest.raises(ValueError):
        monotone_set_diagnostic(tr, 1.0, 2, tr.D_o)
    # cI with gamma = 1/c converges in one step, so q = 0 and no set levels exist
    cI = run(QuadraticProblem(2.0 * np.eye(2), [1.0, 1.0], BlockPartition((1, 1))), ALWAYS, UNIT, [0.5, 0.5], 5, [1.0, 1.0])
    assert cI.q == pytest.approx(0.0, abs=1e-7) and cI.set_index is None
    with pytest.raises(ValueError):
        monotone_set_diagnostic(cI, cI.q, 2, cI.D_o)


def test_monotone_diagnostic_flags_drops():
    P = diag_problem()
    tr = run(P, ALWAYS, UNIT, [0.25, 0.25], 30, [3.0, -4.0])
    tr.dist_blockmax[20] = tr.dist_blockmax[0]
    ok, first = monotone_set_diagnostic(tr, tr.q, tr.n, tr.D_o)
    assert not ok and first == 20


def _bounded_delay_case(rng, n, cond, p, max_delay, seed):
    P = generate_problem(GenSpec(n=n, norm2=10.0 ** rng.uniform(-1, 1), cond=cond, blocks=int(rng.integers(1, n + 1)), r_norm=1.0, seed=seed))
    tr = run(P, ActivationSchedule.bernoulli(p, p, seed=seed), DelayModel(DelayRule("uniform", a=1, b=max_delay), seed=seed),
             interval_gammas(P, rng), 5000, rng.standard_normal(n) * 5)
    return tr.worst_dist2[-1] / tr.worst_dist2[0]


def test_bounded_delay_convergence(rng):
    for seed in range(4):
        n = int(rng.integers(2, 21))
        ratio = _bounded_delay_case(rng, n, 10.0 ** rng.uniform(0, 1), rng.uniform(0.05, 0.5), int(rng.integers(1, 51)), seed)
        assert ratio <= 1e-6


@pytest.mark.slow
def test_bounded_delay_convergence_full_size(rng):
    assert _bounded_delay_case(rng, 100, 5.0, 0.05, 50, 11) <= 1e-6


def test_parallel_mode_converges():
    P = coupled_problem(n=8, cond=2.0, blocks=4, seed=3)
    x0 = np.full(8, 3.0)
    dist = run_parallel(P, [0.8] * 4, 20000, x0, p_update=0.5, p_transmit=0.5, seed=1)
    assert dist.shape == (20001, 4)
    assert dist[-1].max() <= 1e-6 * dist[0].max()
