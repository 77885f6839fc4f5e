"""Supervision labels: exhaustive offline search and budgeted online search.

The offline oracle scans every configuration of the space against the plant
and returns the cost minimizer per epoch. The online oracle approximates it
without touching the plant: starting from the policy's choice it greedily
descends the one-step neighborhood graph of the model-estimated cost
J = P_hat * t_hat^beta, reusing the current epoch's counters for every
candidate, until the evaluation budget is spent or no neighbor improves.
All ties break to the lower configuration index.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .models import LinearModel, predict_power, predict_time
from .space import ConfigSpace, Configuration
from .workload import Workload

SOURCE_OFFLINE = "offline-exhaustive"
SOURCE_ONLINE = "online-search"

LABEL_HEADER = "epoch_id,source,n_big,n_little,f_big,f_little,cost"

_EPS_POWER = 1e-9


@dataclass(frozen=True)
class ConfigCost:
    config: Configuration
    cost: float


@dataclass(frozen=True)
class OracleLabel:
    epoch_id: int
    config: Configuration
    source: str


@dataclass(frozen=True)
class SearchResult:
    label: OracleLabel
    cost: float
    evaluations: int


def offline_oracle_detailed(workload: Workload, plant, beta: float = 1.0
                            ) -> list[tuple[OracleLabel, float]]:
    space: ConfigSpace = plant.space
    out = []
    for e in workload.epochs:
        if hasattr(plant, "power_time_all"):
            pw, t = plant.power_time_all(e, workload.seed)
            cost = pw * t ** beta
        else:
            cost = np.empty(space.size)
            for i, c in enumerate(space.enumerate()):
                obs = plant.execute(e, c, workload.seed)
                cost[i] = obs.power * obs.exec_time ** beta
        i = int(np.argmin(cost))  # first occurrence = lowest index on ties
        out.append((OracleLabel(e.id, space.from_index(i), SOURCE_OFFLINE),
                    float(cost[i])))
    return out


def offline_oracle(workload: Workload, plant, beta: float = 1.0) -> list[OracleLabel]:
    """Per-epoch exhaustive cost minimizer over the whole space."""
    return [label for label, _ in offline_oracle_detailed(workload, plant, beta)]


def online_oracle_search(policy_choice: Configuration, counters,
                         power_model: LinearModel, time_model: LinearModel,
                         budget: int | None = 40, beta: float = 1.0, *,
                         space: ConfigSpace, epoch_id: int = 0) -> SearchResult:
    """Budgeted greedy descent over model-estimated cost; see module docstring.

    budget counts configuration evaluations (each config costed once per
    search); the seed evaluation counts, and an in-flight neighborhood is
    always completed, so the total never exceeds budget + one neighborhood.
    budget=None removes the cap (descends to a local minimum).
    """
    if budget is not None and budget < 1:
        raise ValueError("budget must be >= 1")
    grid = space.as_array()
    nbr = space.neighbor_table()
    cost_cache: dict[int, float] = {}
    evals = 0

    def cost_of(indices: list[int]) -> None:
        nonlocal evals
        new = [i for i in indices if i not in cost_cache]
        if not new:
            return
        cfgs = grid[new]
        p_hat = np.maximum(predict_power(power_model, counters, cfgs), _EPS_POWER)
        t_hat = predict_time(time_model, counters, cfgs)
        for i, j in zip(new, p_hat * t_hat ** beta):
            cost_cache[i] = float(j)
        evals += len(new)

    start = space.to_index(policy_choice)
    cost_of([start])
    best, best_cost = start, cost_cache[start]
    current = start
    while budget is None or evals <= budget:
        neigh = list(nbr[current])
        cost_of(neigh)
        cand = min(neigh, key=lambda i: (cost_cache[i], i))
        if cost_cache[cand] < cost_cache[current]:
            current = cand
            if cost_cache[cand] < best_cost:
                best, best_cost = cand, cost_cache[cand]
        else:
            break
    label = OracleLabel(epoch_id, space.from_index(best), SOURCE_ONLINE)
    return SearchResult(label, best_cost, evals)


def online_oracle(policy_choice: Configuration, counters,
                  power_model: LinearModel, time_model: LinearModel,
                  budget: int | None = 40, beta: float = 1.0, *,
                  space: ConfigSpace, epoch_id: int = 0) -> OracleLabel:
    return online_oracle_search(policy_choice, counters, power_model,
                                time_model, budget, beta, space=space,
                                epoch_id=epoch_id).label


def save_labels(rows: list[tuple[OracleLabel, float]], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(LABEL_HEADER + "\n")
        wr = csv.writer(fh, lineterminator="\n")
        for label, cost in rows:
            c = label.config
            wr.writerow([label.epoch_id, label.source, c.n_big, c.n_little,
                         c.f_big, c.f_little, repr(float(cost))])


def load_labels(path) -> list[tuple[OracleLabel, float]]:
    out = []
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if ",".join(header) != LABEL_HEADER:
            raise ValueError("label file header does not match expected schema")
        for ln, row in enumerate(rd, start=2):
            if not row:
                continue
            try:
                label = OracleLabel(int(row[0]), Configuration(
                    int(row[2]), int(row[3]), int(row[4]), int(row[5])), row[1])
                out.append((label, float(row[6])))
            except (ValueError, IndexError) as err:
                raise ValueError(f"label parse error at line {ln}: {err}") from None
    return out
