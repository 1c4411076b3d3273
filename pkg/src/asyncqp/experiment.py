"""Glue between a config, the planner and the simulator."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import io, planner, qp_model, sim
from .config import ConfigError, ExperimentConfig, RunSpec
from .problem_gen import generate_problem
from .qp_model import QuadraticProblem, RegularizationChoice


def load_problem(cfg: ExperimentConfig) -> QuadraticProblem:
    if cfg.gen is not None:
        return generate_problem(cfg.gen)
    return io.read_problem(cfg.problem_file)


def spectral(cfg: ExperimentConfig, Q) -> qp_model.SpectralInfo:
    if cfg.spectral == "exact":
        return qp_model.spectral_exact(Q)
    info = qp_model.spectral_bounds(Q)
    if not info.lambda_min_usable:
        raise ConfigError("spectral='bounds' but the Gershgorin lower bound is not positive; use 'exact'")
    return info


def plan(cfg: ExperimentConfig, problem: QuadraticProblem | None = None) -> list[tuple[str, planner.ParameterPlan]]:
    """One parameter plan per configured run."""
    problem = problem or load_problem(cfg)
    info = spectral(cfg, problem.Q)
    norm_r = float(np.linalg.norm(problem.r))
    out = []
    for run in cfg.runs:
        reg = run.regularization
        if reg.get("policy") == "sample":
            p = planner.make_plan(info, norm_r, float(reg["epsilon"]), float(reg["k_D"]))
        else:
            p = planner.make_plan(info, norm_r)
        out.append((run.name, p))
    return out


def _seeds(cfg: ExperimentConfig):
    init, sched, delay, params = np.random.SeedSequence(cfg.seed).spawn(4)
    return init, int(sched.generate_state(1)[0]), int(delay.generate_state(1)[0]), params


def initial_states(cfg: ExperimentConfig, problem: QuadraticProblem, seq) -> np.ndarray:
    rng = np.random.default_rng(seq)
    N, n = problem.N, problem.n
    mode = cfg.init.get("mode", "common")
    scale = float(cfg.init.get("scale", 1.0))
    box = problem.box
    if mode == "explicit":
        X = np.asarray(cfg.init["states"], dtype=float)
        if X.shape not in ((n,), (N, n)):
            raise ConfigError(f"init.states must have shape ({n},) or ({N}, {n})")
        return X
    rows = 1 if mode == "common" else N
    if mode not in ("common", "distinct"):
        raise ConfigError("init.mode must be 'common', 'distinct' or 'explicit'")
    if box is not None:
        X = rng.uniform(box.lower, box.upper, size=(rows, n))
    else:
        X = scale * rng.standard_normal((rows, n))
    return X[0] if mode == "common" else X


@dataclass
class RunResult:
    name: str
    trace: sim.SimTrace
    summary: dict
    gammas: np.ndarray


def execute_run(cfg: ExperimentConfig, problem: QuadraticProblem, run: RunSpec, index: int) -> RunResult:
    t0 = time.perf_counter()
    init_seq, sched_seed, delay_seed, params_seq = _seeds(cfg)
    rng = np.random.default_rng(params_seq.spawn(index + 1)[index])
    info = spectral(cfg, problem.Q)
    norm_r = float(np.linalg.norm(problem.r))
    N = problem.N
    x_hat = qp_model.exact_minimizer(problem)
    summary: dict = {"name": run.name, "n": problem.n, "N": N, "horizon": cfg.horizon, "seed": cfg.seed,
                     "norm2": info.norm2, "cond": info.cond, "spectral_upper_bound": info.is_upper_bound}

    reg = run.regularization
    policy = reg.get("policy", "none")
    target_problem = problem
    steps = planner.stepsize_interval(info.norm2, info.cond)
    if policy != "none":
        if policy == "sample":
            rplan = planner.plan_regularization(info.cond, info.norm2, norm_r, float(reg["epsilon"]), float(reg["k_D"]))
            alphas = rplan.sample(rng, N)
            steps = rplan.predicted_stepsize_interval
            summary.update(epsilon=rplan.epsilon, k_D=rplan.k_D, alpha_lo=rplan.alpha_lower, alpha_hi=rplan.alpha_upper)
        else:
            alphas = _per_agent(reg.get("alphas"), N, "alphas")
            reg_info = spectral(cfg, problem.Q + np.diag(problem.partition.expand(alphas)))
            steps = planner.stepsize_interval(reg_info.norm2, reg_info.cond)
        choice = RegularizationChoice(tuple(alphas))
        target_problem = qp_model.regularize(problem, choice)
        x_hat_A = qp_model.exact_minimizer(target_problem)
        summary.update(
            alpha_min=choice.alpha_min,
            alpha_max=choice.alpha_max,
            cond_QA=qp_model.spectral_exact(target_problem.Q).cond,
            e_A=float(np.linalg.norm(x_hat - x_hat_A)),
            error_bound=planner.error_bound(info.cond, info.norm2, norm_r, choice.alpha_max),
        )

    if run.stepsize.get("policy", "sample") == "explicit":
        gammas = _per_agent(run.stepsize.get("gammas"), N, "gammas")
    else:
        gammas = steps.sample(rng, N)
    summary.update(gamma_lo=steps.lower, gamma_hi=steps.upper, gamma_min=float(min(gammas)), gamma_max=float(max(gammas)))

    target = x_hat if cfg.reference == "original" else None
    schedule = cfg.activation(sched_seed)
    trace = sim.run(
        target_problem, schedule, cfg.delay_model(delay_seed), gammas, cfg.horizon,
        initial_states(cfg, problem, init_seq), cfg.norm_scheme(N), target,
        deliver_first=cfg.deliver_first, dedup=cfg.dedup, log_events=cfg.events,
    )
    summary.update(
        q=trace.q,
        D_o=trace.D_o,
        dist_initial=float(trace.worst_dist2[0]),
        dist_final=float(trace.worst_dist2[-1]),
        dist_blockmax_final=float(trace.worst_blockmax[-1]),
        **{f"count_{k}": v for k, v in trace.counts.items()},
    )
    if cfg.horizon >= 1:
        summary["liveness_worst_gap"] = sim.liveness_check(schedule, N, cfg.horizon).worst_gap
    if 0 < trace.q < 1:
        ok, first = sim.monotone_set_diagnostic(trace, trace.q, trace.n, trace.D_o)
        summary.update(set_monotone=ok, set_first_drop=first)
    summary["wall_time"] = time.perf_counter() - t0
    return RunResult(run.name, trace, summary, np.asarray(gammas, dtype=float))


def _per_agent(values, N, name):
    if values is None:
        raise ConfigError(f"explicit policy needs '{name}'")
    if np.isscalar(values):
        return np.full(N, float(values))
    values = np.asarray(values, dtype=float)
    if values.shape != (N,):
        raise ConfigError(f"'{name}' must have one entry per agent ({N})")
    return values


def format_value(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return "none"
    return str(v)
