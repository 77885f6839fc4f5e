"""Imitation-learning policy: four per-knob classifiers over counter features.

Each knob (big cores, little cores, big frequency, little frequency) gets its
own small MLP classifying the knob's level index from one shared feature
vector: derived rates (instructions per cycle, misses per instruction and
friends) concatenated with the raw counters and measured power, z-score
normalized with statistics frozen at offline training time and clipped to
+-12 standard deviations: far enough out to keep unseen workload families
separable, close enough in to stop far-off-distribution inputs from blowing
up gradients during online retraining.

Offline training is exact imitation of oracle labels followed by one
aggregation round: the learned policy is rolled out causally on the training
workloads, the offline oracle labels every state it actually visits, and the
heads are retrained on the combined dataset. Online adaptation stores
disagreements with the online oracle in a fixed-capacity buffer and retrains
on the buffer alone exactly when it fills, swapping in the new bundle
atomically.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mlp import MLP, train_classifier
from .models import Normalizer
from .space import KNOBS, ConfigSpace, Configuration
from .workload import CounterVector

FEATURE_DIM = 17
Z_CLIP = 6.0
Z_SCALE = 1.5
# Measured power echoes the configuration the controller itself chose one
# epoch earlier, so an undamped power input lets a head key its decision on
# its own previous output and oscillate. Damp that dimension hard; the rate
# and utilization dims carry the workload signal.
POWER_DIM = 16
POWER_DAMP = 32.0

OFFLINE_EPOCHS = 500
OFFLINE_BATCH = 150
ONLINE_EPOCHS = 20
ONLINE_BATCH = 20
LEARNING_RATE = 0.001
LABEL_SMOOTHING = 0.05
BUFFER_CAPACITY = 100

HIDDEN = (20, 20)


def raw_features(h: CounterVector) -> np.ndarray:
    """Unnormalized 17-dim feature vector: rates, counters, utils, power."""
    instr = h.instructions_retired
    return np.array([
        instr / h.cpu_cycles,
        h.branch_mispredictions / instr,
        h.l2_misses / instr,
        h.data_memory_accesses / instr,
        h.noncache_mem_requests / instr,
        instr, h.cpu_cycles, h.branch_mispredictions, h.l2_misses,
        h.data_memory_accesses, h.noncache_mem_requests,
        h.little_cluster_util, *h.big_core_utils,
        h.total_power,
    ])


@dataclass
class PolicyBundle:
    heads: dict[str, MLP]
    normalizer: Normalizer
    space: ConfigSpace
    generation: int = 0

    def copy_heads(self) -> dict[str, MLP]:
        return {k: net.copy() for k, net in self.heads.items()}


@dataclass
class TrainingBuffer:
    capacity: int = BUFFER_CAPACITY
    features: list[np.ndarray] = field(default_factory=list)
    labels: list[np.ndarray] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.features)

    @property
    def full(self) -> bool:
        return len(self.features) >= self.capacity

    def append(self, feats: np.ndarray, label_idx: np.ndarray) -> None:
        if self.full:
            raise RuntimeError("buffer append past capacity; retrain must "
                               "fire exactly at full")
        self.features.append(np.asarray(feats, dtype=float))
        self.labels.append(np.asarray(label_idx, dtype=int))

    def clear(self) -> None:
        self.features.clear()
        self.labels.clear()


def new_bundle(space: ConfigSpace, seed: int,
               normalizer: Normalizer | None = None) -> PolicyBundle:
    heads = {
        knob: MLP(FEATURE_DIM, HIDDEN, space.level_count(knob), seed + i)
        for i, knob in enumerate(KNOBS)
    }
    return PolicyBundle(heads, normalizer or Normalizer.identity(FEATURE_DIM),
                        space)


def squash(z: np.ndarray) -> np.ndarray:
    """Clip z-scores, then shrink: bounded inputs at a scale small enough
    that trained head logits stay overturnable by the short online retrain.
    The power dimension is damped further (closed-loop stability, see
    POWER_DAMP above)."""
    out = np.clip(z, -Z_CLIP, Z_CLIP) / Z_SCALE
    out[..., POWER_DIM] /= POWER_DAMP
    return out


def featurize(bundle: PolicyBundle, h: CounterVector) -> np.ndarray:
    z = bundle.normalizer(raw_features(h))
    if not np.all(np.isfinite(z)):
        raise FloatingPointError("non-finite policy features")
    return squash(z)


def predict(bundle: PolicyBundle, h: CounterVector) -> Configuration:
    """Per-head argmax over level probabilities; ties to the lower level."""
    z = featurize(bundle, h)
    values = {}
    for knob in KNOBS:
        logits = bundle.heads[knob].forward(z)[0]
        values[knob] = bundle.space.levels[knob][int(np.argmax(logits))]
    return Configuration(**values)


def label_indices(space: ConfigSpace, c: Configuration) -> np.ndarray:
    return np.array([space.knob_level_index(c, k) for k in KNOBS], dtype=int)


def _train_heads(bundle: PolicyBundle, feats: np.ndarray, labels: np.ndarray,
                 *, epochs: int, batch: int, seed: int) -> None:
    z = squash(bundle.normalizer(feats))
    for i, knob in enumerate(KNOBS):
        train_classifier(bundle.heads[knob], z, labels[:, i], epochs=epochs,
                         batch_size=batch, lr=LEARNING_RATE, seed=seed + i,
                         smoothing=LABEL_SMOOTHING)


@dataclass
class AggregationContext:
    """Everything one aggregation round needs: causal rollout + fresh labels.

    plant is a fallback for workloads that carry none of their own.
    """

    workloads: list
    plant: object = None
    beta: float = 1.0


def train_offline(dataset: tuple[np.ndarray, np.ndarray], space: ConfigSpace,
                  *, seed: int, epochs: int = OFFLINE_EPOCHS,
                  batch: int = OFFLINE_BATCH,
                  aggregate: AggregationContext | None = None) -> PolicyBundle:
    """Exact imitation on (raw features, per-knob level labels), then one
    optional aggregation round on states the learned policy itself visits."""
    feats, labels = dataset
    feats = np.asarray(feats, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if feats.size == 0:
        raise ValueError("empty offline dataset")
    norm = Normalizer.fit(feats)
    bundle = new_bundle(space, seed, norm)
    _train_heads(bundle, feats, labels, epochs=epochs, batch=batch, seed=seed)
    if aggregate is not None:
        extra_f, extra_y = _aggregation_round(bundle, aggregate)
        if len(extra_f):
            feats = np.vstack([feats, extra_f])
            labels = np.vstack([labels, extra_y])
        bundle = new_bundle(space, seed + len(KNOBS), norm)
        _train_heads(bundle, feats, labels, epochs=epochs, batch=batch,
                     seed=seed + len(KNOBS))
    return bundle


def _aggregation_round(bundle: PolicyBundle, ctx: AggregationContext):
    """Causal rollout of the policy; every visited state gets a golden label."""
    from .oracle import offline_oracle

    feats, labels = [], []
    for w in ctx.workloads:
        plant = w.plant if w.plant is not None else ctx.plant
        golden = offline_oracle(w, plant, ctx.beta)
        current = bundle.space.min_config
        for e, lab in zip(w.epochs, golden):
            h = plant.execute(e, current, w.seed).counters
            feats.append(raw_features(h))
            labels.append(label_indices(bundle.space, lab.config))
            current = predict(bundle, h)
    return np.array(feats), np.array(labels)


def observe_and_maybe_buffer(bundle: PolicyBundle, buffer: TrainingBuffer,
                             h: CounterVector, oracle_config: Configuration
                             ) -> bool:
    """Append (features, oracle levels) iff the policy disagrees on any knob."""
    if predict(bundle, h) == oracle_config:
        return False
    buffer.append(raw_features(h), label_indices(bundle.space, oracle_config))
    return True


def retrain_online(bundle: PolicyBundle, buffer: TrainingBuffer, *,
                   seed: int = 0) -> PolicyBundle:
    """Train fresh copies of the heads on the full buffer, clear it, and
    return the replacement bundle; the input bundle is never mutated."""
    if not buffer.full:
        raise ValueError("online retraining requires a full buffer")
    new = PolicyBundle(bundle.copy_heads(), bundle.normalizer, bundle.space,
                       generation=bundle.generation + 1)
    feats = np.vstack(buffer.features)
    labels = np.vstack(buffer.labels)
    _train_heads(new, feats, labels, epochs=ONLINE_EPOCHS, batch=ONLINE_BATCH,
                 seed=seed + 17 * new.generation)
    buffer.clear()
    return new


POLICY_CHECKPOINT_VERSION = 1


def save_policy(bundle: PolicyBundle, path) -> None:
    payload = {
        "version": POLICY_CHECKPOINT_VERSION,
        "generation": bundle.generation,
        "mean": bundle.normalizer.mean,
        "std": bundle.normalizer.std,
    }
    for knob in KNOBS:
        net = bundle.heads[knob]
        payload[f"{knob}_dims"] = np.array(net.dims)
        payload[f"{knob}_flat"] = net.get_flat()
    np.savez(path, **payload)


def load_policy(path, space: ConfigSpace) -> PolicyBundle:
    z = np.load(path, allow_pickle=False)
    if int(z["version"]) != POLICY_CHECKPOINT_VERSION:
        raise ValueError(f"unsupported policy checkpoint version {z['version']}")
    heads = {}
    for knob in KNOBS:
        dims = tuple(int(d) for d in z[f"{knob}_dims"])
        net = MLP(dims[0], dims[1:-1], dims[-1], seed=0)
        net.set_flat(z[f"{knob}_flat"].copy())
        heads[knob] = net
    bundle = PolicyBundle(heads, Normalizer(z["mean"].copy(), z["std"].copy()),
                          space, generation=int(z["generation"]))
    return bundle
