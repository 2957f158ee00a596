"""
Hyperband over successive-halving brackets.

Schedule arithmetic is exact (fractions), so n = ceil((B/R) * eta^s / (s+1))
and r = R * eta^-s never suffer float drift. Each rung runs its slots,
replaces a failed slot once with a freshly sampled config, then promotes the
top floor(n_i / eta) by score (ties to the earlier trial id). Promoted slots
resume from their previous checkpoint.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

from fens.core.errors import ConfigError, TrialFailed
from fens.core.logs import log_event
from fens.core.queue import WorkerPool
from fens.core.rng import stream
from fens.core.safe_exec import contain

from .space import SearchSpace, sample_config

logger = logging.getLogger(__name__)

FAILED_SCORE = float("-inf")


# ---------------------------
# Plan
# ---------------------------

@dataclass(frozen=True)
class Rung:
    index: int
    configs: int
    resource: Fraction

    @property
    def epochs(self) -> int:
        return max(1, math.floor(self.resource))


@dataclass(frozen=True)
class Bracket:
    s: int
    n: int
    r: Fraction
    eta: int

    @property
    def rungs(self) -> List[Rung]:
        return [
            Rung(index=i, configs=self.n // self.eta ** i, resource=self.r * self.eta ** i)
            for i in range(self.s + 1)
        ]

    def survivors_at(self, rung: int) -> int:
        return (self.n // self.eta ** rung) // self.eta

    def epochs_planned(self) -> int:
        return sum(rung.configs * rung.epochs for rung in self.rungs)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "s": self.s,
            "n": self.n,
            "r": str(self.r),
            "rungs": [
                {"index": r.index, "configs": r.configs, "epochs": r.epochs, "resource": str(r.resource),
                 "survivors": self.survivors_at(r.index)}
                for r in self.rungs
            ],
        }


@dataclass(frozen=True)
class HyperbandPlan:
    R: int
    eta: int
    s_max: int
    B: int
    brackets: Tuple[Bracket, ...]

    def epochs_planned(self) -> int:
        return sum(b.epochs_planned() for b in self.brackets)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "R": self.R,
            "eta": self.eta,
            "s_max": self.s_max,
            "B": self.B,
            "epochs_planned": self.epochs_planned(),
            "brackets": [b.to_dict() for b in self.brackets],
        }


def hyperband_schedule(R: int = 27, eta: int = 3) -> HyperbandPlan:
    if R < 1 or eta < 2:
        raise ConfigError(f"hyperband needs R >= 1 and eta >= 2, got R={R} eta={eta}", details={"key": "hpo"})
    s_max = 0
    while eta ** (s_max + 1) <= R:
        s_max += 1
    B = (s_max + 1) * R
    brackets = []
    for s in range(s_max, -1, -1):
        n = math.ceil(Fraction(B, R) * Fraction(eta ** s, s + 1))
        brackets.append(Bracket(s=s, n=n, r=Fraction(R, eta ** s), eta=eta))
    return HyperbandPlan(R=R, eta=eta, s_max=s_max, B=B, brackets=tuple(brackets))


# ---------------------------
# Trials
# ---------------------------

@dataclass(frozen=True)
class ObjectiveResult:
    score: float
    checkpoint: Optional[str] = None
    details: Dict[str, Any] = field(default_factory=dict)


Objective = Callable[[Dict[str, Any], int, Optional[str]], Union[float, ObjectiveResult]]


@dataclass
class Trial:
    trial_id: int
    bracket: int
    rung: int
    slot: int
    config: Dict[str, Any]
    epochs: int
    status: str = "pending"
    score: Optional[float] = None
    replacement_of: Optional[int] = None
    promoted_from: Optional[int] = None
    checkpoint: Optional[str] = None
    error: Optional[Dict[str, Any]] = None

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        if self.score is not None and math.isinf(self.score):
            data["score"] = None
        return data

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "Trial":
        trial = cls(**raw)
        if trial.status == "failed":
            trial.score = FAILED_SCORE
        return trial


@dataclass
class HyperbandResult:
    plan: HyperbandPlan
    trials: List[Trial]
    best: Optional[Trial]

    @property
    def best_config(self) -> Optional[Dict[str, Any]]:
        return dict(self.best.config) if self.best else None

    def epochs_executed(self, include_replacements: bool = False) -> int:
        return sum(
            t.epochs for t in self.trials
            if t.status in ("done", "failed") and (include_replacements or t.replacement_of is None)
        )


def _invoke(objective: Objective, trial: Trial, resume: Optional[str]) -> Tuple[Optional[ObjectiveResult], Optional[Dict[str, Any]]]:
    def call() -> ObjectiveResult:
        out = objective(dict(trial.config), trial.epochs, resume)
        result = out if isinstance(out, ObjectiveResult) else ObjectiveResult(score=float(out))
        if result.score is None or math.isnan(result.score):
            raise TrialFailed("objective returned no score")
        return result

    return contain(call)


class _Scheduler:
    def __init__(self, space: SearchSpace, objective: Objective, seed: int, jobs: int, replace_failed: bool) -> None:
        self.space = space
        self.objective = objective
        self.seed = seed
        self.pool = WorkerPool(jobs)
        self.replace_failed = replace_failed
        self.trials: List[Trial] = []

    def new_trial(self, **fields: Any) -> Trial:
        trial = Trial(trial_id=len(self.trials), **fields)
        self.trials.append(trial)
        return trial

    def _record(self, trial: Trial, result: Optional[ObjectiveResult], error: Optional[Dict[str, Any]]) -> None:
        if error is None and result is not None:
            trial.status, trial.score, trial.checkpoint = "done", float(result.score), result.checkpoint
            log_event(logger, "trial_done", level=logging.DEBUG, trial=trial.trial_id, bracket=trial.bracket,
                      rung=trial.rung, epochs=trial.epochs, score=trial.score)
        else:
            trial.status, trial.score, trial.error = "failed", FAILED_SCORE, error
            log_event(logger, "trial_failed", level=logging.WARNING, trial=trial.trial_id, bracket=trial.bracket,
                      rung=trial.rung, code=(error or {}).get("code"))

    def run_rung(self, jobs: List[Tuple[Trial, Optional[str]]]) -> List[Trial]:
        """
        Returns the final trial per slot (the replacement when one was needed).
        """
        for trial, _ in jobs:
            trial.status = "running"
        outcomes = self.pool.map(lambda job: _invoke(self.objective, job[0], job[1]), jobs)
        for (trial, _), (result, error) in zip(jobs, outcomes):
            self._record(trial, result, error)

        failed = [trial for trial, _ in jobs if trial.status == "failed"]
        replacements: Dict[int, Trial] = {}
        if self.replace_failed and failed:
            for old in failed:
                rng = stream(self.seed, "hpo-replace", old.bracket, old.rung, old.slot)
                replacements[old.trial_id] = self.new_trial(
                    bracket=old.bracket, rung=old.rung, slot=old.slot, config=sample_config(self.space, rng),
                    epochs=old.epochs, replacement_of=old.trial_id, status="running",
                )
                log_event(logger, "trial_replaced", level=logging.INFO, trial=old.trial_id,
                          replacement=replacements[old.trial_id].trial_id)
            fresh = list(replacements.values())
            # replacements start from scratch at the failed slot's resource
            outcomes = self.pool.map(lambda t: _invoke(self.objective, t, None), fresh)
            for trial, (result, error) in zip(fresh, outcomes):
                self._record(trial, result, error)
        return [replacements.get(trial.trial_id, trial) for trial, _ in jobs]

    def run_bracket(self, bracket: Bracket) -> None:
        rng = stream(self.seed, "hpo", bracket.s)
        configs = [sample_config(self.space, rng) for _ in range(bracket.n)]
        rungs = bracket.rungs
        current: List[Tuple[int, Dict[str, Any], Optional[Trial]]] = [(slot, cfg, None) for slot, cfg in enumerate(configs)]
        for rung in rungs:
            jobs = []
            for slot, cfg, previous in current:
                trial = self.new_trial(
                    bracket=bracket.s, rung=rung.index, slot=slot, config=cfg, epochs=rung.epochs,
                    promoted_from=previous.trial_id if previous else None,
                )
                jobs.append((trial, previous.checkpoint if previous else None))
            finals = self.run_rung(jobs)
            keep = bracket.survivors_at(rung.index)
            ranked = sorted((t for t in finals if t.status == "done"), key=lambda t: (-t.score, t.trial_id))
            log_event(logger, "rung_done", bracket=bracket.s, rung=rung.index, trials=len(finals), keep=keep,
                      best=ranked[0].score if ranked else None)
            if rung.index == len(rungs) - 1:
                break
            current = [(t.slot, t.config, t) for t in ranked[:keep]]
            if not current:
                break


def run_hyperband(
    space: SearchSpace,
    objective: Objective,
    R: int = 27,
    eta: int = 3,
    seed: int = 0,
    parallelism: int = 1,
    *,
    replace_failed: bool = True,
) -> HyperbandResult:
    space.validate()
    plan = hyperband_schedule(R, eta)
    scheduler = _Scheduler(space, objective, seed, parallelism, replace_failed)
    for bracket in plan.brackets:
        scheduler.run_bracket(bracket)
    done = [t for t in scheduler.trials if t.status == "done"]
    best = max(done, key=lambda t: (t.score, -t.trial_id)) if done else None
    return HyperbandResult(plan=plan, trials=scheduler.trials, best=best)
