"""Random hyperparameter search."""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from ..detectors.gru import GruDetector
from ..exceptions import ConfigurationError
from ..metrics import offline_benchmark, report_from_records
from ..simulation.engine import run_with_detector
from ..simulation.scenario import Scenario
from ..telemetry.features import ProcessTrace
from .gru import GruClassifier
from .hyperparameters import Hyperparameters, SearchSpace
from .training import Trainer

logger = logging.getLogger("model.search")

Objective = Callable[[GruClassifier], float]
OBJECTIVES = ("offline", "online")


def offline_objective(validation_traces: Sequence[ProcessTrace]) -> Objective:
    """Mean of FPR and FNR from offline verdicts on complete validation traces."""
    def objective(model: GruClassifier) -> float:
        report = offline_benchmark(model, {"validation": validation_traces})[0]
        return (report.fpr + report.fnr) / 2.0
    return objective


def online_objective(validation_scenarios: Sequence[Scenario]) -> Objective:
    """Mean of FPR and FNR over time when the model kills during replay."""
    def objective(model: GruClassifier) -> float:
        records = []
        for scenario in validation_scenarios:
            records.extend(run_with_detector(scenario, GruDetector(model)).records)
        report = report_from_records("validation", "search", records)
        return report.combined
    return objective


@dataclass
class Trial:
    index: int
    hyperparameters: Hyperparameters
    score: float
    history: List[float] = field(default_factory=list)


@dataclass
class SearchResult:
    best: Trial
    model: GruClassifier
    trials: List[Trial]

    @property
    def hyperparameters(self) -> Hyperparameters:
        return self.best.hyperparameters


def random_search(
    space: SearchSpace,
    n_trials: int,
    training_traces: Sequence[ProcessTrace],
    validation: Sequence,
    objective: Union[str, Objective] = "offline",
    base: Optional[Hyperparameters] = None,
    seed: int = 0,
    on_trial: Optional[Callable[[Trial], None]] = None,
) -> SearchResult:
    """Train ``n_trials`` uniformly drawn configurations and keep the lowest objective.

    ``validation`` holds traces for the offline objective and scenarios for the
    online one; a callable objective receives each trained model. Ties go to
    the earlier trial.
    """
    if n_trials < 1:
        raise ConfigurationError("n_trials must be at least 1")
    if objective == "offline":
        objective = offline_objective(validation)
    elif objective == "online":
        objective = online_objective(validation)
    elif not callable(objective):
        raise ConfigurationError(f"Unknown search objective: {objective!r}, expected one of {OBJECTIVES}")
    base = base or Hyperparameters()
    rng = np.random.default_rng(seed)

    trials: List[Trial] = []
    best: Optional[Trial] = None
    best_model: Optional[GruClassifier] = None
    for index in range(n_trials):
        hp = space.sample(rng, base)
        if not space.contains(hp):
            raise ConfigurationError(f"Sampled configuration falls outside the search space: {hp}")
        trainer = Trainer(hp)
        model = trainer.fit(training_traces)
        score = float(objective(model))
        trial = Trial(index, hp, score, list(trainer.history))
        trials.append(trial)
        logger.info(
            f"Trial {index + 1}/{n_trials}: {hp.depth}x{hp.hidden_neurons}, window {hp.window_size}, "
            f"{hp.epochs} epochs, dropout {hp.dropout_rate} -> {score:.4f}"
        )
        if on_trial is not None:
            on_trial(trial)
        if best is None or score < best.score:
            best, best_model = trial, model

    logger.info(f"Best trial {best.index + 1} with objective {best.score:.4f}")
    return SearchResult(best=best, model=best_model, trials=trials)
