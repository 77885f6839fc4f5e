"""Synthetic workloads and the ground-truth plant.

A workload is an ordered list of decision epochs. Each epoch carries latent
parameters (instruction count, memory intensity, parallel fraction,
branchiness) drawn from a profile-specific archetype pool; the plant turns
(epoch, configuration) into counters, power, and execution time, standing in
for hardware measurement.

Plant structure. Execution time follows an Amdahl split: a serial fraction
runs on one big core, the parallel fraction is spread across all active
cores, and every core's per-instruction time is cycles-per-instruction over
frequency plus a memory-stall term scaled by memory intensity. Power is the
per-cluster sum of dynamic switching power (effective capacitance x V^2 f x
active-core utilization) and leakage (V x leakage current), where the
effective capacitance and the activity terms are driven by the measured
counter rates of the same execution: power dissipation tracks what the chip
actually did, misses and all, not the latent program description. The
frequency-to-voltage map is affine with a fixed offset for the big cluster.

Counters other than the utilizations and power are invariant across
configurations up to a small multiplicative noise bound; utilizations encode
load balance and therefore do vary with the executed configuration.
"""
from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, replace

import numpy as np

from .space import ConfigSpace, Configuration

_DEFAULT_SPACE = ConfigSpace()

TRACE_HEADER = (
    "epoch_id,n_big,n_little,f_big,f_little,instructions,cycles,branch_miss,"
    "l2_miss,dmem_access,noncache_req,little_util,big_util0,big_util1,"
    "big_util2,big_util3,power_w,time_s"
)


@dataclass(frozen=True)
class CounterVector:
    """Per-epoch hardware counter readings plus measured chip power."""

    instructions_retired: float
    cpu_cycles: float
    branch_mispredictions: float
    l2_misses: float
    data_memory_accesses: float
    noncache_mem_requests: float
    little_cluster_util: float
    big_core_utils: tuple[float, float, float, float]
    total_power: float

    def __post_init__(self):
        counts = (self.instructions_retired, self.cpu_cycles,
                  self.branch_mispredictions, self.l2_misses,
                  self.data_memory_accesses, self.noncache_mem_requests)
        if any(c < 0 for c in counts):
            raise ValueError("counter counts must be non-negative")
        utils = (self.little_cluster_util,) + tuple(self.big_core_utils)
        if any(not (0.0 <= u <= 1.0) for u in utils):
            raise ValueError("utilizations must lie in [0, 1]")
        if not self.total_power > 0:
            raise ValueError("total_power must be positive")


@dataclass(frozen=True)
class Epoch:
    """A repeatable application segment; latents drive the synthetic plant."""

    id: int
    instruction_count: float
    memory_intensity: float
    parallel_fraction: float
    branchiness: float


@dataclass(frozen=True)
class EpochObservation:
    epoch_id: int
    config: Configuration
    counters: CounterVector
    power: float
    exec_time: float

    def __post_init__(self):
        if not (self.power > 0 and self.exec_time > 0):
            raise ValueError("power and exec_time must be positive")


@dataclass
class Workload:
    name: str
    epochs: list[Epoch]
    noise_bound: float = 0.01
    seed: int = 0
    plant: object | None = None


@dataclass(frozen=True)
class PlantParams:
    """Ground-truth constants of the synthetic platform.

    Voltage map: V(f) = v_base + v_slope * (f - 600), big cluster +v_big_off.
    Big-core cycles per instruction: cpi0 + cpib * branchiness; little cores
    are cpi_ratio times slower. sig_b / sig_l are per-instruction memory
    stall times (seconds) at full memory intensity. rho_b / rho_l are
    per-core utilization caps of parallel work; u_serial is the utilization
    of the serial big core. cb* / cl* build effective switching capacitance
    from memory intensity and branchiness; ib* / il* are leakage currents.
    noise_bound caps cross-configuration counter variation (multiplicative,
    amplitude noise_bound / 2).
    """

    v_base: float = 0.9
    v_slope: float = 0.40 / 1400.0
    v_big_off: float = 0.10
    cpi0: float = 0.55
    cpib: float = 0.50
    cpi_ratio: float = 2.2
    sig_b: float = 0.45e-9
    sig_l: float = 0.60e-9
    rho_b: float = 0.7
    rho_l: float = 0.9
    u_serial: float = 0.98
    cb0: float = 0.30
    cbm: float = 0.18
    cbb: float = 0.10
    cl0: float = 0.12
    clm: float = 0.08
    clb: float = 0.03
    ib0: float = 0.38
    ib: float = 0.080
    il0: float = 0.10
    il: float = 0.025
    br_rate: float = 0.02
    l2_rate: float = 0.05
    dm0: float = 0.2
    dm1: float = 0.3
    nc_rate: float = 0.01
    noise_bound: float = 0.01


# Archetype pools per profile: (memory_intensity, parallel_fraction,
# branchiness). branchiness None means "derive from parallel fraction" so
# the serial-path cycles per instruction stay comparable across archetypes
# of a pool (see derived_branchiness).
_SERIAL_CPI_TARGET = 0.57

COMPUTE_POOL = tuple((m, p, None) for m in (0.02, 0.13, 0.17) for p in (0.08, 0.12))
MEMORY_POOL = tuple((m, p, None) for m in (0.62, 0.72, 0.80) for p in (0.12, 0.18))
PARALLEL_POOL = tuple(
    (m, p, b) for m in (0.03, 0.07) for p in (0.88, 0.95) for b in (0.10, 0.25)
)

PROFILES = {
    "compute-bound": COMPUTE_POOL,
    "memory-bound": MEMORY_POOL,
    "parallel": PARALLEL_POOL,
    "mixed": MEMORY_POOL + COMPUTE_POOL,
}

DEFAULT_PHASE_RANGE = (30, 60)
_PHASE_JITTER = 0.005
_W_RANGE = (1e7, 1e8)


def derived_branchiness(p: float, params: PlantParams) -> float:
    """Branchiness making (1 - p) * big-core CPI equal the pool target."""
    return round((_SERIAL_CPI_TARGET / (1.0 - p) - params.cpi0) / params.cpib, 3)


def generate_workload(profile: str, n_epochs: int, seed: int, *,
                      params: PlantParams | None = None,
                      phase_range: tuple[int, int] | None = None,
                      space: ConfigSpace | None = None,
                      name: str | None = None) -> Workload:
    """Deterministic workload of phased epochs drawn from a profile pool.

    Phases cycle through the pool in seeded shuffled order (every archetype
    appears once per cycle before any repeats), each phase holding one
    jittered archetype for a random number of epochs. Instruction counts are
    log-uniform per epoch.
    """
    if n_epochs < 1:
        raise ValueError("n_epochs must be >= 1")
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; "
                         f"expected one of {sorted(PROFILES)}")
    params = params or PlantParams()
    lo, hi = phase_range or DEFAULT_PHASE_RANGE
    pool = PROFILES[profile]
    rng = np.random.default_rng(seed)
    epochs: list[Epoch] = []
    order: list[int] = []
    while len(epochs) < n_epochs:
        if not order:
            order = list(rng.permutation(len(pool)))
        m0, p0, b0 = pool[order.pop(0)]
        plen = int(rng.integers(lo, hi + 1))
        m = float(np.clip(m0 + rng.uniform(-_PHASE_JITTER, _PHASE_JITTER), 0.0, 1.0))
        p = float(np.clip(p0 + rng.uniform(-_PHASE_JITTER, _PHASE_JITTER), 0.0, 0.99))
        if b0 is None:
            b = derived_branchiness(p, params)
        else:
            b = float(np.clip(b0 + rng.uniform(-_PHASE_JITTER, _PHASE_JITTER), 0.0, 1.0))
        for _ in range(min(plen, n_epochs - len(epochs))):
            w = float(np.exp(rng.uniform(np.log(_W_RANGE[0]), np.log(_W_RANGE[1]))))
            epochs.append(Epoch(len(epochs), w, m, p, b))
    plant = SyntheticPlant(params, space or _DEFAULT_SPACE)
    return Workload(name or f"{profile}-{seed}", epochs,
                    noise_bound=params.noise_bound, seed=seed, plant=plant)


class SyntheticPlant:
    """Ground-truth power / latency / counter model over a configuration space."""

    def __init__(self, params: PlantParams | None = None,
                 space: ConfigSpace | None = None):
        self.params = params or PlantParams()
        self.space = space or _DEFAULT_SPACE
        grid = self.space.as_array()
        self._nb, self._nl, self._fb, self._fl = grid.T
        self._grid_cache = functools.lru_cache(maxsize=16)(self._grid_uncached)
        self._time_cache = functools.lru_cache(maxsize=64)(self._time_grid)

    def voltages(self, f_big, f_little):
        q = self.params
        vb = q.v_base + q.v_slope * (np.asarray(f_big) - 600.0) + q.v_big_off
        vl = q.v_base + q.v_slope * (np.asarray(f_little) - 600.0)
        return vb, vl

    def power_time_all(self, e: Epoch, seed: int) -> tuple[np.ndarray, np.ndarray]:
        """Exact (power, exec_time) over every configuration, index order.

        Cached per (epoch, seed); the returned arrays are read-only. Power
        depends on the seed because it is computed from the noisy counter
        realizations of each (epoch, config) execution.
        """
        return self._grid_cache(e, seed)

    def _time_grid(self, e: Epoch) -> np.ndarray:
        q = self.params
        w, m, p, b = (e.instruction_count, e.memory_intensity,
                      e.parallel_fraction, e.branchiness)
        cpi_b = q.cpi0 + q.cpib * b
        cpi_l = cpi_b * q.cpi_ratio
        tau_b = cpi_b / (self._fb * 1e6) + m * q.sig_b
        tau_l = cpi_l / (self._fl * 1e6) + m * q.sig_l
        t = (1.0 - p) * w * tau_b + p * w / (self._nb / tau_b + self._nl / tau_l)
        t.flags.writeable = False
        return t

    def _noise(self, e: Epoch, index: int, seed: int) -> np.ndarray:
        a = self.params.noise_bound / 2.0
        rng = np.random.default_rng((seed, e.id, index))
        return 1.0 + a * rng.uniform(-1.0, 1.0, 12)

    def _power_from_rates(self, c_tuple, l2_rate, br_rate, u0, ul):
        """Power from realized counter rates at one or many configurations.

        Dynamic power follows the activity the counters report: effective
        capacitance grows with the realized miss rates, cluster activity is
        the serial-core utilization plus the little-utilization-implied
        parallel share. Leakage scales with voltage and active core count.
        """
        q = self.params
        nb, nl, fb, fl = c_tuple
        vb, vl = self.voltages(fb, fl)
        p_hat = np.minimum(1.0, ul / q.rho_l)
        act_b = u0 + q.rho_b * p_hat * (nb - 1.0)
        act_l = nl * q.rho_l * p_hat
        cb = q.cb0 + q.cbm * (l2_rate / q.l2_rate) + q.cbb * (br_rate / q.br_rate)
        cl = q.cl0 + q.clm * (l2_rate / q.l2_rate) + q.clb * (br_rate / q.br_rate)
        return (cb * vb ** 2 * (fb / 1000.0) * act_b
                + vb * (q.ib0 + q.ib * nb)
                + cl * vl ** 2 * (fl / 1000.0) * act_l
                + vl * (q.il0 + q.il * nl))

    def _grid_uncached(self, e: Epoch, seed: int) -> tuple[np.ndarray, np.ndarray]:
        q = self.params
        m, p, b = e.memory_intensity, e.parallel_fraction, e.branchiness
        t = self._time_cache(e)
        f = np.vstack([self._noise(e, i, seed) for i in range(self.space.size)])
        l2r = (m * q.l2_rate * f[:, 3]) / f[:, 0]
        brr = (b * q.br_rate * f[:, 2]) / f[:, 0]
        u0 = np.minimum(1.0, q.u_serial * f[:, 7])
        ul = np.minimum(1.0, q.rho_l * p * f[:, 6])
        pw = self._power_from_rates((self._nb, self._nl, self._fb, self._fl),
                                    l2r, brr, u0, ul)
        pw.flags.writeable = False
        return pw, t

    def power_time(self, e: Epoch, c: Configuration, seed: int) -> tuple[float, float]:
        obs = self.execute(e, c, seed)
        return obs.power, obs.exec_time

    def counters(self, e: Epoch, c: Configuration, seed: int) -> CounterVector:
        """Counters measured while e runs on c; noise seeded per (epoch, config).

        total_power is derived from the realized counter rates, so the
        returned vector is self-consistent: the power field is exactly what
        the plant dissipates for these counter values on this configuration.
        """
        q = self.params
        i = self.space.to_index(c)
        f = self._noise(e, i, seed)
        w, m, p, b = (e.instruction_count, e.memory_intensity,
                      e.parallel_fraction, e.branchiness)
        instructions = w * f[0]
        l2_misses = w * m * q.l2_rate * f[3]
        branch_miss = w * b * q.br_rate * f[2]
        u0 = min(1.0, q.u_serial * f[7])
        ul = min(1.0, q.rho_l * p * f[6])
        ub_rest = [
            min(1.0, q.rho_b * p * f[8 + k]) if (k + 1) < c.n_big else 0.0
            for k in range(3)
        ]
        pw = float(self._power_from_rates(
            tuple(map(float, c.astuple())),
            l2_misses / instructions, branch_miss / instructions, u0, ul))
        return CounterVector(
            instructions_retired=instructions,
            cpu_cycles=w * (q.cpi0 + q.cpib * b) * f[1],
            branch_mispredictions=branch_miss,
            l2_misses=l2_misses,
            data_memory_accesses=w * (q.dm0 + q.dm1 * m) * f[4],
            noncache_mem_requests=w * m * q.nc_rate * f[5],
            little_cluster_util=ul,
            big_core_utils=(u0, *ub_rest),
            total_power=pw,
        )

    def execute(self, e: Epoch, c: Configuration, seed: int) -> EpochObservation:
        cv = self.counters(e, c, seed)
        t = float(self._time_cache(e)[self.space.to_index(c)])
        return EpochObservation(e.id, c, cv, cv.total_power, t)


def plant_execute(plant, e: Epoch, c: Configuration, seed: int) -> EpochObservation:
    return plant.execute(e, c, seed)


def as_stream(source, plant=None) -> list[tuple[Workload, Epoch]]:
    """Normalize a Workload or an iterable of (workload, epoch) into a stream.

    Controllers iterate (workload, epoch) pairs so multi-workload evaluation
    sequences and single workloads share one code path. A plant argument
    overrides a missing workload.plant.
    """
    if isinstance(source, Workload):
        w = source
        if w.plant is None:
            if plant is None:
                raise ValueError("workload has no plant")
            w = replace(w, plant=plant)
        return [(w, e) for e in w.epochs]
    return list(source)


class RecordedPlant:
    """Plant backed by recorded trace rows; answers only recorded pairs."""

    def __init__(self, space: ConfigSpace | None = None):
        self.space = space or _DEFAULT_SPACE
        self._rows: dict[tuple[int, Configuration], EpochObservation] = {}

    def add(self, obs: EpochObservation):
        key = (obs.epoch_id, obs.config)
        if key in self._rows:
            raise ValueError(f"duplicate trace row for epoch {obs.epoch_id}, "
                             f"config {obs.config.serialize()}")
        self._rows[key] = obs

    def execute(self, e: Epoch, c: Configuration, seed: int = 0) -> EpochObservation:
        try:
            return self._rows[(e.id, c)]
        except KeyError:
            raise LookupError(f"no recorded observation for epoch {e.id} at "
                              f"config {c.serialize()}") from None

    def power_time(self, e: Epoch, c: Configuration, seed: int = 0) -> tuple[float, float]:
        obs = self.execute(e, c)
        return obs.power, obs.exec_time

    def recorded_configs(self, epoch_id: int) -> list[Configuration]:
        return [c for (eid, c) in self._rows if eid == epoch_id]


def save_trace(workload: Workload, configs: list[Configuration], path) -> None:
    """One CSV row per (epoch, config), epoch-major, config-index order."""
    plant = workload.plant
    if plant is None:
        raise ValueError("workload has no plant to execute")
    space = plant.space
    ordered = sorted(configs, key=space.to_index)
    with open(path, "w", newline="") as fh:
        fh.write(TRACE_HEADER + "\n")
        wr = csv.writer(fh, lineterminator="\n")
        for e in workload.epochs:
            for c in ordered:
                o = plant.execute(e, c, workload.seed)
                h = o.counters
                vals = (h.instructions_retired, h.cpu_cycles,
                        h.branch_mispredictions, h.l2_misses,
                        h.data_memory_accesses, h.noncache_mem_requests,
                        h.little_cluster_util, *h.big_core_utils,
                        o.power, o.exec_time)
                wr.writerow([e.id, c.n_big, c.n_little, c.f_big, c.f_little,
                             *[repr(float(v)) for v in vals]])


def load_trace(path, space: ConfigSpace | None = None) -> Workload:
    """Workload whose plant replays recorded rows; latents are unknown (nan)."""
    space = space or _DEFAULT_SPACE
    plant = RecordedPlant(space)
    epoch_ids: dict[int, float] = {}
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        try:
            header = next(rd)
        except StopIteration:
            raise ValueError("empty trace file (missing header)") from None
        if ",".join(header) != TRACE_HEADER:
            raise ValueError("trace header does not match expected schema")
        for ln, row in enumerate(rd, start=2):
            if not row:
                continue
            try:
                eid = int(row[0])
                cfg = Configuration(int(row[1]), int(row[2]), int(row[3]), int(row[4]))
                vals = [float(x) for x in row[5:18]]
                counters = CounterVector(
                    instructions_retired=vals[0], cpu_cycles=vals[1],
                    branch_mispredictions=vals[2], l2_misses=vals[3],
                    data_memory_accesses=vals[4], noncache_mem_requests=vals[5],
                    little_cluster_util=vals[6],
                    big_core_utils=(vals[7], vals[8], vals[9], vals[10]),
                    total_power=vals[11],
                )
                obs = EpochObservation(eid, cfg, counters, vals[11], vals[12])
            except (ValueError, IndexError) as err:
                raise ValueError(f"trace parse error at line {ln}: {err}") from None
            plant.add(obs)
            epoch_ids.setdefault(eid, counters.instructions_retired)
    epochs = [
        Epoch(eid, epoch_ids[eid], float("nan"), float("nan"), float("nan"))
        for eid in sorted(epoch_ids)
    ]
    return Workload(name=str(path), epochs=epochs, noise_bound=0.0, seed=0,
                    plant=plant)
