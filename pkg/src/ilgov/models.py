"""Linear power and execution-time models with recursive least squares.

Both models are linear in counter-derived features and are evaluated for any
candidate configuration by reusing the counters observed on the currently
running one. Power uses the physically structured features

    [g_big, g_big*l2_rate, g_big*branch_rate,
     g_lit, g_lit*l2_rate, g_lit*branch_rate,
     V_big, V_big*n_big, V_lit, V_lit*n_little, 1]

where g = V^2 * (f/1000) * reconstructed-cluster-utilization, so the fitted
weights play the role of effective switching capacitance and leakage blocks.
Execution time is modeled per instruction (the instruction counter carries
the workload-size factor) with deliberately coarse global-linear
configuration sensitivity:

    [cpi, l2_rate, dmem_rate, u_little, n_big, n_little,
     1000/f_big, 1000/f_little, 1]

The voltage map and per-core load-share constants used by the feature
builders are platform calibration data; defaults match the synthetic plant.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .space import Configuration
from .workload import CounterVector, EpochObservation, PlantParams

POWER_FEATURE_DIM = 11
TIME_FEATURE_DIM = 9
EPS_TIME = 1e-6

DEFAULT_FORGETTING = 0.99
DEFAULT_P0 = 1e3
RIDGE = 1e-6


@dataclass
class Normalizer:
    """Frozen z-score statistics; constant columns pass through unchanged."""

    mean: np.ndarray
    std: np.ndarray

    @staticmethod
    def fit(x: np.ndarray) -> "Normalizer":
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        const = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
        mean = np.where(const, 0.0, mean)
        std = np.where(const, 1.0, std)
        return Normalizer(mean, std)

    @staticmethod
    def identity(dim: int) -> "Normalizer":
        return Normalizer(np.zeros(dim), np.ones(dim))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.std


@dataclass
class LinearModel:
    kind: str  # "power" or "time"
    theta: np.ndarray
    rls_covariance: np.ndarray
    forgetting: float = DEFAULT_FORGETTING
    normalizer: Normalizer | None = None
    ridge_fallback: bool = False
    platform: PlantParams = field(default_factory=PlantParams)

    def __post_init__(self):
        d = self.theta.shape[0]
        if self.rls_covariance.shape != (d, d):
            raise ValueError("covariance dimension must match theta")
        if not (0.9 < self.forgetting <= 1.0):
            raise ValueError("forgetting factor must lie in (0.9, 1.0]")
        if self.normalizer is None:
            self.normalizer = Normalizer.identity(d)

    @property
    def dim(self) -> int:
        return self.theta.shape[0]


def _config_columns(configs) -> tuple[np.ndarray, ...]:
    if isinstance(configs, Configuration):
        arr = np.array([configs.astuple()], dtype=float)
    else:
        arr = np.asarray(configs, dtype=float)
        if arr.ndim == 1:
            arr = arr[None, :]
    return arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]


def power_features(h: CounterVector, configs,
                   platform: PlantParams | None = None) -> np.ndarray:
    """(k, 11) power features for candidate configs from one CounterVector."""
    q = platform or PlantParams()
    nb, nl, fb, fl = _config_columns(configs)
    vb = q.v_base + q.v_slope * (fb - 600.0) + q.v_big_off
    vl = q.v_base + q.v_slope * (fl - 600.0)
    l2_rate = h.l2_misses / h.instructions_retired
    br_rate = h.branch_mispredictions / h.instructions_retired
    # parallel share inferred from little-cluster util; big core 0 is serial
    p_hat = min(1.0, h.little_cluster_util / q.rho_l)
    act_b = h.big_core_utils[0] + q.rho_b * p_hat * (nb - 1.0)
    act_l = nl * q.rho_l * p_hat
    gb = vb ** 2 * (fb / 1000.0) * act_b
    gl = vl ** 2 * (fl / 1000.0) * act_l
    one = np.ones_like(fb)
    return np.stack([gb, gb * l2_rate, gb * br_rate,
                     gl, gl * l2_rate, gl * br_rate,
                     vb, vb * nb, vl, vl * nl, one], axis=1)


def time_features(h: CounterVector, configs,
                  platform: PlantParams | None = None) -> np.ndarray:
    """(k, 9) per-instruction latency features for candidate configs."""
    nb, nl, fb, fl = _config_columns(configs)
    cpi = h.cpu_cycles / h.instructions_retired
    l2_rate = h.l2_misses / h.instructions_retired
    dm_rate = h.data_memory_accesses / h.instructions_retired
    one = np.ones_like(fb)
    return np.stack([cpi * one, l2_rate * one, dm_rate * one,
                     h.little_cluster_util * one, nb, nl,
                     1000.0 / fb, 1000.0 / fl, one], axis=1)


def features_for(m: LinearModel, h: CounterVector, configs) -> np.ndarray:
    if m.kind == "power":
        return power_features(h, configs, m.platform)
    if m.kind == "time":
        return time_features(h, configs, m.platform)
    raise ValueError(f"unknown model kind {m.kind!r}")


def predict_power(m: LinearModel, h: CounterVector, configs):
    """Predicted Watts at one Configuration (float) or an array of configs."""
    if m.kind != "power":
        raise ValueError("power prediction requires a power model")
    phi = m.normalizer(power_features(h, configs, m.platform))
    if not np.all(np.isfinite(phi)):
        raise FloatingPointError("non-finite power features")
    out = phi @ m.theta
    return float(out[0]) if isinstance(configs, Configuration) else out


def predict_time(m: LinearModel, h: CounterVector, configs):
    """Predicted seconds (per-instruction rate times instruction counter).

    Clamped below at EPS_TIME so downstream cost products stay positive.
    """
    if m.kind != "time":
        raise ValueError("time prediction requires a time model")
    phi = m.normalizer(time_features(h, configs, m.platform))
    if not np.all(np.isfinite(phi)):
        raise FloatingPointError("non-finite time features")
    out = np.maximum((phi @ m.theta) * h.instructions_retired, EPS_TIME)
    return float(out[0]) if isinstance(configs, Configuration) else out


def rls_update(m: LinearModel, features: np.ndarray, target: float) -> LinearModel:
    """Exponentially weighted RLS step on one (features, target) sample.

    gain k = P phi / (lambda + phi^T P phi); theta += k * innovation;
    P <- (P - k phi^T P) / lambda, re-symmetrized. On any non-finite
    intermediate the model is left unchanged and a numeric error is raised.
    """
    phi = m.normalizer(np.asarray(features, dtype=float).reshape(-1))
    if phi.shape[0] != m.dim:
        raise ValueError("feature dimension mismatch")
    if not (np.all(np.isfinite(phi)) and np.isfinite(target)):
        raise FloatingPointError("non-finite RLS input")
    p = m.rls_covariance
    pphi = p @ phi
    denom = m.forgetting + phi @ pphi
    gain = pphi / denom
    theta_new = m.theta + gain * (target - phi @ m.theta)
    p_new = (p - np.outer(gain, pphi)) / m.forgetting
    p_new = (p_new + p_new.T) / 2.0
    if not (np.all(np.isfinite(theta_new)) and np.all(np.isfinite(p_new))):
        raise FloatingPointError("non-finite RLS intermediate; update skipped")
    m.theta = theta_new
    m.rls_covariance = p_new
    return m


def rls_observe(power_model: LinearModel, time_model: LinearModel,
                obs: EpochObservation) -> None:
    """Update both models from one executed-epoch observation."""
    rls_update(power_model,
               power_features(obs.counters, obs.config, power_model.platform),
               obs.power)
    rls_update(time_model,
               time_features(obs.counters, obs.config, time_model.platform),
               obs.exec_time / obs.counters.instructions_retired)


def _solve_lstsq(xn: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, bool]:
    n, d = xn.shape
    if n >= d and np.linalg.matrix_rank(xn) == d:
        theta, *_ = np.linalg.lstsq(xn, y, rcond=None)
        return theta, False
    theta = np.linalg.solve(xn.T @ xn + RIDGE * np.eye(d), xn.T @ y)
    return theta, True


def fit_offline(observations: list[EpochObservation],
                platform: PlantParams | None = None,
                forgetting: float = DEFAULT_FORGETTING) -> tuple[LinearModel, LinearModel]:
    """Least-squares power and time models from a characterization set.

    Features are z-score normalized with statistics frozen here; the RLS
    covariance starts at DEFAULT_P0 * I. Rank-deficient designs fall back to
    ridge regression and are flagged on the returned models.
    """
    if not observations:
        raise ValueError("fit_offline requires at least one observation")
    q = platform or PlantParams()
    xp = np.vstack([power_features(o.counters, o.config, q) for o in observations])
    xt = np.vstack([time_features(o.counters, o.config, q) for o in observations])
    yp = np.array([o.power for o in observations])
    yt = np.array([o.exec_time / o.counters.instructions_retired
                   for o in observations])
    models = []
    for kind, x, y, dim in (("power", xp, yp, POWER_FEATURE_DIM),
                            ("time", xt, yt, TIME_FEATURE_DIM)):
        norm = Normalizer.fit(x)
        theta, ridge = _solve_lstsq(norm(x), y)
        models.append(LinearModel(
            kind=kind, theta=theta,
            rls_covariance=DEFAULT_P0 * np.eye(dim),
            forgetting=forgetting, normalizer=norm,
            ridge_fallback=ridge, platform=q,
        ))
    return models[0], models[1]


def zero_model(kind: str, platform: PlantParams | None = None,
               forgetting: float = DEFAULT_FORGETTING) -> LinearModel:
    """All-zero model with identity normalization, for runs with no offline fit."""
    dim = POWER_FEATURE_DIM if kind == "power" else TIME_FEATURE_DIM
    return LinearModel(kind=kind, theta=np.zeros(dim),
                       rls_covariance=DEFAULT_P0 * np.eye(dim),
                       forgetting=forgetting,
                       normalizer=Normalizer.identity(dim),
                       platform=platform or PlantParams())


CHECKPOINT_VERSION = 1


def save_model(m: LinearModel, path) -> None:
    np.savez(path, version=CHECKPOINT_VERSION, kind=m.kind, theta=m.theta,
             covariance=m.rls_covariance, forgetting=m.forgetting,
             mean=m.normalizer.mean, std=m.normalizer.std,
             ridge_fallback=m.ridge_fallback)


def load_model(path, platform: PlantParams | None = None) -> LinearModel:
    z = np.load(path, allow_pickle=False)
    if int(z["version"]) != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported model checkpoint version {z['version']}")
    return LinearModel(
        kind=str(z["kind"]), theta=z["theta"].copy(),
        rls_covariance=z["covariance"].copy(),
        forgetting=float(z["forgetting"]),
        normalizer=Normalizer(z["mean"].copy(), z["std"].copy()),
        ridge_fallback=bool(z["ridge_fallback"]),
        platform=platform or PlantParams(),
    )
