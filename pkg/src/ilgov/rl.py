"""Reinforcement-learning baseline: Q-table and small DQN over the config grid.

Actions are configuration indices. The reward for running an epoch is the
negative energy-delay product normalized by the epoch's best achievable power
and time, R = -(P * t^beta) / (P_min * t_min^beta), so the ideal config scores
-1 and everything else scores below it. The tabular variant discretizes
counters into an 8x8 grid over (instructions per cycle, data-memory accesses
per instruction); the function-approximation variant feeds the same normalized
feature vector the policy uses through a small ReLU network with one gradient
step per epoch (no replay buffer, no target network).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metrics import DecisionRecord
from .mlp import MLP, Adam, q_loss_grad
from .models import Normalizer
from .policy import FEATURE_DIM, raw_features, squash
from .space import ConfigSpace, Configuration
from .workload import CounterVector, Workload, as_stream, plant_execute

IPC_RANGE = (0.0, 4.0)
DM_RANGE = (0.0, 1.0)
N_BINS = 8
EPS_START = 0.1
EPS_DECAY = 0.995
EPS_FLOOR = 0.01
RL_LOG_HEADER = "epoch_id,state_repr,action_index,reward,epsilon"


@dataclass(frozen=True)
class RewardContext:
    """Per-epoch normalizers: best achievable power and best achievable time."""
    p_min: float
    t_min: float

    def __post_init__(self):
        if self.p_min <= 0.0 or self.t_min <= 0.0:
            raise ValueError("reward context requires positive p_min and t_min")


def reward(power: float, time: float, ctx: RewardContext, beta: float = 1.0) -> float:
    if power <= 0.0 or time <= 0.0:
        raise ValueError("reward requires positive power and time")
    return -(power * time ** beta) / (ctx.p_min * ctx.t_min ** beta)


def epsilon_at(epoch: int, *, start: float = EPS_START,
               decay: float = EPS_DECAY, floor: float = EPS_FLOOR) -> float:
    return max(floor, start * decay ** epoch)


def _bin(value: float, lo: float, hi: float, n: int) -> int:
    i = int((value - lo) / (hi - lo) * n)
    return min(max(i, 0), n - 1)


def discretize(h: CounterVector) -> tuple[int, int]:
    """(ipc bin, memory-intensity bin) on the 8x8 state grid."""
    ipc = h.instructions_retired / max(h.cpu_cycles, 1.0)
    dmr = h.data_memory_accesses / max(h.instructions_retired, 1.0)
    return (_bin(ipc, *IPC_RANGE, N_BINS), _bin(dmr, *DM_RANGE, N_BINS))


def state_index(h: CounterVector) -> int:
    bi, bj = discretize(h)
    return bi * N_BINS + bj


@dataclass
class QLearner:
    """Q-learning agent over configuration indices.

    variant "table" keeps a dense (n_states, n_actions) array; variant
    "dqn" keeps an MLP mapping normalized counter features to one Q value
    per action, updated with a single Adam step per transition.
    """
    space: ConfigSpace
    variant: str = "dqn"
    alpha: float = 0.5
    gamma: float = 0.9
    beta: float = 1.0
    seed: int = 0
    normalizer: Normalizer | None = None
    table: np.ndarray = field(init=False, repr=False)
    net: MLP | None = field(init=False, default=None, repr=False)
    opt: Adam | None = field(init=False, default=None, repr=False)

    def __post_init__(self):
        if self.variant not in ("table", "dqn"):
            raise ValueError(f"unknown learner variant {self.variant!r}")
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError("alpha must be in (0, 1]")
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError("gamma must be in [0, 1)")
        n = self.space.size
        self.table = np.zeros((N_BINS * N_BINS, n))
        if self.variant == "dqn":
            self.net = MLP(FEATURE_DIM, (20, 20), n, seed=self.seed)
            self.opt = Adam(self.net.get_flat().size, lr=0.001)
        if self.normalizer is None:
            self.normalizer = Normalizer.identity(FEATURE_DIM)

    def features(self, h: CounterVector) -> np.ndarray:
        return squash(self.normalizer(raw_features(h)))

    def q_values(self, h: CounterVector) -> np.ndarray:
        if self.variant == "table":
            return self.table[state_index(h)]
        return self.net.forward(self.features(h)[None, :])[0]


def select_action(learner: QLearner, h: CounterVector, epsilon: float,
                  rng: np.random.Generator) -> int:
    """Epsilon-greedy action; greedy ties resolve to the lowest index."""
    if rng.random() < epsilon:
        return int(rng.integers(learner.space.size))
    return int(np.argmax(learner.q_values(h)))


def q_update(learner: QLearner, h: CounterVector, action: int, r: float,
             h_next: CounterVector) -> float:
    """One Q-learning backup; returns the TD target used."""
    target = r + learner.gamma * float(np.max(learner.q_values(h_next)))
    if learner.variant == "table":
        s = state_index(h)
        learner.table[s, action] = ((1.0 - learner.alpha) * learner.table[s, action]
                                    + learner.alpha * target)
    else:
        x = learner.features(h)[None, :]
        _, grad = q_loss_grad(learner.net, x, np.array([action]),
                              np.array([target]))
        learner.net.set_flat(learner.opt.step(learner.net.get_flat(), grad))
    return target


@dataclass
class RlRunResult:
    log: list[DecisionRecord]
    learner: QLearner
    rows: list[tuple]  # epoch_id, state_repr, action_index, reward, epsilon


def run_rl_control(workload, plant=None, learner: QLearner | None = None, *,
                   seed: int = 0) -> RlRunResult:
    """Run the RL controller over a workload or (workload, epoch) stream.

    The action for an epoch is chosen from the counters measured during the
    previous epoch; the very first action is chosen from a zero state (the
    agent has seen nothing yet). Per-epoch P_min / t_min for the reward come
    from plant queries at the minimum-power and maximum-performance
    configurations; these two context reads are the only ground-truth values
    the agent receives beyond its own executions.
    """
    if learner is None:
        raise ValueError("run_rl_control requires a learner")
    stream = as_stream(workload, plant)
    rng = np.random.default_rng(seed)
    space = learner.space
    zero_h = CounterVector(
        instructions_retired=1.0, cpu_cycles=1.0, branch_mispredictions=0.0,
        l2_misses=0.0, data_memory_accesses=0.0, noncache_mem_requests=0.0,
        little_cluster_util=0.0, big_core_utils=(0.0, 0.0, 0.0, 0.0),
        total_power=1e-9)
    h_prev = zero_h
    log: list[DecisionRecord] = []
    rows: list[tuple] = []
    for k, (workload, epoch) in enumerate(stream):
        eps = epsilon_at(k)
        action = select_action(learner, h_prev, eps, rng)
        config = space.from_index(action)
        obs = plant_execute(workload.plant, epoch, config, workload.seed)
        p_ref, _ = workload.plant.power_time(epoch, space.min_config, workload.seed)
        _, t_ref = workload.plant.power_time(epoch, space.max_config, workload.seed)
        r = reward(obs.power, obs.exec_time,
                   RewardContext(p_ref, t_ref), learner.beta)
        q_update(learner, h_prev, action, r, obs.counters)
        bi, bj = discretize(h_prev)
        rows.append((epoch.id, f"{bi}|{bj}", action, r, eps))
        log.append(DecisionRecord(epoch.id, config))
        h_prev = obs.counters
    return RlRunResult(log=log, learner=learner, rows=rows)


def write_rl_log(rows: list[tuple], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(RL_LOG_HEADER + "\n")
        for eid, srepr, a, r, eps in rows:
            fh.write(f"{eid},{srepr},{a},{repr(float(r))},{repr(float(eps))}\n")
