"""Static governors and the models-only ablation controller.

powersave and performance pin the minimum and maximum corner of the grid.
models_only_control drops the learned policy entirely: every epoch it runs a
budgeted neighborhood search over the current model estimates, seeded at the
previous epoch's choice, executes the result, and refreshes the models with
the measurement. The first epoch runs the minimum configuration because no
counters exist yet to search from.
"""
from __future__ import annotations

from dataclasses import dataclass

from .metrics import DecisionRecord
from .models import LinearModel, rls_observe
from .oracle import online_oracle_search
from .space import ConfigSpace, Configuration
from .workload import as_stream, plant_execute


def powersave(space: ConfigSpace, epoch=None) -> Configuration:
    return space.min_config


def performance(space: ConfigSpace, epoch=None) -> Configuration:
    return space.max_config


def constant_log(stream, config: Configuration) -> list[DecisionRecord]:
    return [DecisionRecord(epoch.id, config) for _, epoch in stream]


@dataclass
class ModelsOnlyResult:
    log: list[DecisionRecord]
    power_model: LinearModel
    time_model: LinearModel
    evaluations: list[int]


def models_only_control(workload, power_model: LinearModel,
                        time_model: LinearModel, *, space: ConfigSpace,
                        budget: int | None = 40, beta: float = 1.0,
                        plant=None) -> ModelsOnlyResult:
    """Search-only control over a workload or (workload, epoch) stream."""
    stream = as_stream(workload, plant)
    log: list[DecisionRecord] = []
    evaluations: list[int] = []
    choice = space.min_config
    h = None
    for workload, epoch in stream:
        if h is not None:
            result = online_oracle_search(
                choice, h, power_model, time_model, budget=budget, beta=beta,
                space=space, epoch_id=epoch.id)
            choice = result.label.config
            evaluations.append(result.evaluations)
        else:
            evaluations.append(0)
        obs = plant_execute(workload.plant, epoch, choice, workload.seed)
        rls_observe(power_model, time_model, obs)
        log.append(DecisionRecord(epoch.id, choice))
        h = obs.counters
    return ModelsOnlyResult(log=log, power_model=power_model,
                            time_model=time_model, evaluations=evaluations)
