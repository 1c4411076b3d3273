"""Experiment configuration: a versioned JSON document.

Example (the two-run study)::

    {
      "format_version": 1,
      "seed": 7,
      "problem": {"generate": {"n": 100, "blocks": 25, "norm2": 100, "cond": 100,
                               "r_norm": 0.105, "seed": 1}},
      "schedule": {"mode": "bernoulli", "p_update": 0.1, "p_transmit": 0.1},
      "delay": {"kind": "fixed", "d": 1},
      "horizon": 2000,
      "runs": [
        {"name": "unregularized"},
        {"name": "regularized",
         "regularization": {"policy": "sample", "epsilon": 0.1, "k_D": 10}}
      ],
      "output": {"dir": "out/baseline", "plot": "convergence.svg", "epsilon_line": 0.1}
    }

See README.md for every key.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .block_norm import NormScheme
from .problem_gen import GenSpec
from .sim import ActivationSchedule, DelayModel, DelayRule, ScheduleError

CONFIG_FORMAT_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunSpec:
    name: str
    stepsize: dict
    regularization: dict


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    horizon: int
    gen: GenSpec | None
    problem_file: Path | None
    spectral: str
    norm: dict
    schedule: dict
    delay: dict
    init: dict
    runs: tuple[RunSpec, ...]
    reference: str = "own"
    deliver_first: bool = False
    dedup: bool = False
    out_dir: Path = Path(".")
    plot: str | None = None
    events: bool = False
    epsilon_line: float | None = None
    base_dir: Path = field(default=Path("."), compare=False)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=seed)

    def norm_scheme(self, N: int) -> NormScheme:
        w = self.norm.get("weights", 1.0)
        p = self.norm.get("p", 2.0)
        w = [w] * N if not isinstance(w, list) else w
        p = [p] * N if not isinstance(p, list) else p
        try:
            return NormScheme(tuple(w), tuple(_exponent(v) for v in p))
        except ValueError as exc:
            raise ConfigError(f"norm: {exc}") from exc

    def activation(self, seed: int) -> ActivationSchedule:
        s = self.schedule
        mode = s.get("mode", "bernoulli")
        try:
            if mode == "bernoulli":
                return ActivationSchedule.bernoulli(float(s.get("p_update", 0.1)), float(s.get("p_transmit", 0.1)), seed)
            if mode == "explicit":
                return ActivationSchedule.explicit(s["updates"], s["transmits"])
            return ActivationSchedule(mode)
        except (KeyError, ScheduleError) as exc:
            raise ConfigError(f"schedule: {exc}") from exc

    def delay_model(self, seed: int) -> DelayModel:
        try:
            default = _delay_rule(self.delay)
            links = {}
            for spec in self.delay.get("links", []):
                links[(int(spec["sender"]), int(spec["receiver"]))] = _delay_rule(spec)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"delay: {exc}") from exc
        return DelayModel(default, links, seed)


def _exponent(v) -> float:
    if isinstance(v, str):
        if v.strip().lower() in ("inf", "infinity"):
            return math.inf
        raise ConfigError(f"norm exponent {v!r}: use a number or \"inf\"")
    return float(v)


def _delay_rule(d: dict) -> DelayRule:
    kind = d.get("kind", "fixed")
    return DelayRule(
        kind=kind,
        d=int(d.get("d", 1)),
        a=int(d.get("a", 1)),
        b=int(d.get("b", 1)),
        values=tuple(int(v) for v in d.get("values", ())),
    )


def _gen_spec(d: dict, seed_override: int | None = None) -> GenSpec:
    try:
        blocks = d.get("blocks")
        if isinstance(blocks, list):
            blocks = tuple(blocks)
        return GenSpec(
            n=int(d["n"]),
            norm2=float(d["norm2"]),
            cond=float(d["cond"]),
            blocks=blocks,
            spectrum=d.get("spectrum", "loguniform"),
            r_norm=float(d.get("r_norm", 1.0)),
            r=tuple(d["r"]) if d.get("r") is not None else None,
            seed=int(seed_override if seed_override is not None else d.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"problem.generate: {exc}") from exc


def parse_config(doc: dict, base_dir: Path = Path(".")) -> ExperimentConfig:
    if doc.get("format_version") != CONFIG_FORMAT_VERSION:
        raise ConfigError(f"unsupported config format_version {doc.get('format_version')!r}")
    prob = doc.get("problem")
    if not isinstance(prob, dict) or len({"generate", "file"} & prob.keys()) != 1:
        raise ConfigError("problem: give exactly one of 'generate' or 'file'")
    gen = _gen_spec(prob["generate"]) if "generate" in prob else None
    pfile = None
    if "file" in prob:
        pfile = (base_dir / prob["file"]).resolve()
        if not pfile.exists():
            raise ConfigError(f"problem file {pfile} does not exist")

    horizon = int(doc.get("horizon", 2000))
    if horizon < 0:
        raise ConfigError("horizon must be >= 0")
    spectral = doc.get("spectral", "exact")
    if spectral not in ("exact", "bounds"):
        raise ConfigError("spectral must be 'exact' or 'bounds'")
    reference = doc.get("reference", "own")
    if reference not in ("own", "original"):
        raise ConfigError("reference must be 'own' or 'original'")

    raw_runs = doc.get("runs") or [{"name": "run", "stepsize": doc.get("stepsize", {}), "regularization": doc.get("regularization", {})}]
    runs = []
    for i, r in enumerate(raw_runs):
        step = r.get("stepsize", {"policy": "sample"}) or {"policy": "sample"}
        reg = r.get("regularization", {"policy": "none"}) or {"policy": "none"}
        if step.get("policy", "sample") not in ("sample", "explicit"):
            raise ConfigError(f"runs[{i}].stepsize.policy must be 'sample' or 'explicit'")
        if reg.get("policy", "none") not in ("none", "sample", "explicit"):
            raise ConfigError(f"runs[{i}].regularization.policy must be 'none', 'sample' or 'explicit'")
        if reg.get("policy") == "sample" and not {"epsilon", "k_D"} <= reg.keys():
            raise ConfigError(f"runs[{i}].regularization: sampling needs 'epsilon' and 'k_D'")
        runs.append(RunSpec(str(r.get("name", f"run{i}")), step, reg))
    if len({r.name for r in runs}) != len(runs):
        raise ConfigError("run names must be unique")

    sched = doc.get("schedule", {"mode": "bernoulli", "p_update": 0.1, "p_transmit": 0.1})
    for key in ("p_update", "p_transmit"):
        if key in sched and not 0 < float(sched[key]) <= 1:
            raise ConfigError(f"schedule.{key} must lie in (0, 1]")

    opts = doc.get("options", {})
    out = doc.get("output", {})
    return ExperimentConfig(
        seed=int(doc.get("seed", 0)),
        horizon=horizon,
        gen=gen,
        problem_file=pfile,
        spectral=spectral,
        norm=doc.get("norm", {}),
        schedule=sched,
        delay=doc.get("delay", {"kind": "fixed", "d": 1}),
        init=doc.get("init", {"mode": "common", "scale": 1.0}),
        runs=tuple(runs),
        reference=reference,
        deliver_first=bool(opts.get("deliver_first", False)),
        dedup=bool(opts.get("dedup", False)),
        out_dir=Path(out.get("dir", ".")),
        plot=out.get("plot"),
        events=bool(out.get("events", False)),
        epsilon_line=out.get("epsilon_line"),
        base_dir=base_dir,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return parse_config(doc, base_dir=path.parent)
