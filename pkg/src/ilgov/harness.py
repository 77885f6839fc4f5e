"""Experiment driver: seeded workload suites, controller runs, artifact I/O.

An experiment is described by a versioned YAML spec: a training suite used
for characterization and offline learning, an evaluation suite arranged into
an ordered stream of unseen workloads, a controller list, seeds, the reward
exponent beta, the online search budget, and the retraining buffer capacity.
The four pipeline stages map to CLI subcommands:

  characterize   full-grid sweep traces per training workload
  train-offline  offline oracle labels, model fit, policy training
  simulate       every controller over the evaluation stream, logs + reports
  report         one consolidated JSON across the run directory

Everything is deterministic given the spec: workloads derive from per-suite
seeds, training and retraining seeds derive from the experiment seed, and
all emitted CSV/JSON is byte-stable across reruns.

Controller semantics over the stream. A controller's decision for epoch k is
made from the counters measured during epoch k; because those counters only
exist once the epoch has run, the decision executes during epoch k+1 (the
first epoch runs the minimum configuration). Decision logs carry the
per-epoch decisions and are scored against the golden reference; executed
logs carry what actually ran and feed energy accounting. For controllers
with no separate prediction step (powersave, performance, models-only, rl)
the two logs coincide.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .governors import constant_log, models_only_control
from .metrics import (DecisionRecord, energy_report, run_accuracy,
                      write_accuracy_series, write_decision_log)
from .models import (LinearModel, Normalizer, fit_offline, load_model,
                     rls_observe, save_model, zero_model)
from .oracle import (SOURCE_OFFLINE, OracleLabel, offline_oracle_detailed,
                     online_oracle_search, save_labels)
from .policy import (AggregationContext, PolicyBundle, TrainingBuffer,
                     label_indices, load_policy, new_bundle,
                     observe_and_maybe_buffer, predict, raw_features,
                     retrain_online, save_policy, train_offline)
from .rl import QLearner, run_rl_control, write_rl_log
from .space import ConfigSpace
from .workload import (PlantParams, Workload, generate_workload, load_trace,
                       plant_execute, save_trace)

SCHEMA_VERSION = 1
CONTROLLERS = ("online-il", "rl", "static-offline", "powersave",
               "performance", "models-only")
_CONTROLLER_CHOICES = CONTROLLERS + ("rl-table",)
SEQUENCE_HEADER = "epoch_id,workload,local_epoch_id"


class SpecError(ValueError):
    """Malformed or inconsistent experiment specification."""


@dataclass(frozen=True)
class WorkloadSpec:
    name: str
    profile: str
    epochs: int
    seed: int
    phase_range: tuple[int, int] | None = None


@dataclass(frozen=True)
class SequenceSpec:
    order: tuple[str, ...]
    repeats: int = 1


@dataclass
class ExperimentSpec:
    seed: int = 7
    beta: float = 1.0
    budget: int | None = 40
    buffer_capacity: int = 100
    train_suite: list[WorkloadSpec] = field(default_factory=list)
    eval_suite: list[WorkloadSpec] = field(default_factory=list)
    sequence: SequenceSpec = field(default_factory=lambda: SequenceSpec(()))
    controllers: tuple[str, ...] = CONTROLLERS
    version: int = SCHEMA_VERSION


def default_spec(seed: int = 7) -> ExperimentSpec:
    """The stock experiment: compute-heavy training suite, unseen
    memory-heavy evaluation stream."""
    train = [WorkloadSpec(f"cpu-{s}", "compute-bound", 40, 100 + i)
             for i, s in enumerate("abcde")]
    ev = [
        WorkloadSpec("mem-a", "memory-bound", 200, 201, (12, 20)),
        WorkloadSpec("mem-b", "memory-bound", 200, 211, None),
        WorkloadSpec("mem-c", "memory-bound", 200, 226, None),
    ]
    return ExperimentSpec(seed=seed, train_suite=train, eval_suite=ev,
                          sequence=SequenceSpec(("mem-a", "mem-b", "mem-c")))


def _require(cond, msg: str):
    if not cond:
        raise SpecError(msg)


def spec_to_dict(spec: ExperimentSpec) -> dict:
    def ws(w: WorkloadSpec) -> dict:
        d = {"name": w.name, "profile": w.profile, "epochs": w.epochs,
             "seed": w.seed}
        if w.phase_range is not None:
            d["phase_range"] = list(w.phase_range)
        return d

    return {
        "version": spec.version,
        "seed": spec.seed,
        "beta": spec.beta,
        "budget": spec.budget,
        "buffer_capacity": spec.buffer_capacity,
        "controllers": list(spec.controllers),
        "train_suite": [ws(w) for w in spec.train_suite],
        "eval_suite": [ws(w) for w in spec.eval_suite],
        "sequence": {"order": list(spec.sequence.order),
                     "repeats": spec.sequence.repeats},
    }


def spec_from_dict(d: dict) -> ExperimentSpec:
    from .workload import PROFILES

    _require(isinstance(d, dict), "spec must be a mapping")
    _require(d.get("version") == SCHEMA_VERSION,
             f"unsupported spec version {d.get('version')!r}; "
             f"expected {SCHEMA_VERSION}")

    def ws(item: dict, where: str) -> WorkloadSpec:
        _require(isinstance(item, dict), f"{where}: entries must be mappings")
        for key in ("name", "profile", "epochs", "seed"):
            _require(key in item, f"{where}: missing key {key!r}")
        _require(item["profile"] in PROFILES,
                 f"{where}: unknown profile {item['profile']!r}")
        _require(isinstance(item["epochs"], int) and item["epochs"] >= 1,
                 f"{where}: epochs must be a positive integer")
        _require(isinstance(item["seed"], int), f"{where}: seed must be int")
        pr = item.get("phase_range")
        if pr is not None:
            _require(isinstance(pr, (list, tuple)) and len(pr) == 2
                     and all(isinstance(x, int) for x in pr)
                     and 1 <= pr[0] <= pr[1],
                     f"{where}: phase_range must be [lo, hi] with 1 <= lo <= hi")
            pr = (pr[0], pr[1])
        return WorkloadSpec(str(item["name"]), item["profile"],
                            item["epochs"], item["seed"], pr)

    train = [ws(x, f"train_suite[{i}]")
             for i, x in enumerate(d.get("train_suite", []))]
    ev = [ws(x, f"eval_suite[{i}]")
          for i, x in enumerate(d.get("eval_suite", []))]
    names = [w.name for w in train + ev]
    _require(len(names) == len(set(names)), "workload names must be unique")

    controllers = tuple(d.get("controllers", list(CONTROLLERS)))
    _require(len(controllers) >= 1, "at least one controller required")
    for c in controllers:
        _require(c in _CONTROLLER_CHOICES, f"unknown controller {c!r}")

    seq = d.get("sequence", {"order": [], "repeats": 1})
    _require(isinstance(seq, dict), "sequence must be a mapping")
    order = tuple(seq.get("order", []))
    repeats = seq.get("repeats", 1)
    _require(isinstance(repeats, int) and repeats >= 1,
             "sequence.repeats must be a positive integer")
    eval_names = {w.name for w in ev}
    for nm in order:
        _require(nm in eval_names,
                 f"sequence references unknown eval workload {nm!r}")

    seed = d.get("seed", 7)
    _require(isinstance(seed, int), "seed must be an integer")
    beta = d.get("beta", 1.0)
    _require(isinstance(beta, (int, float)) and beta >= 0.0,
             "beta must be a non-negative number")
    budget = d.get("budget", 40)
    _require(budget is None or (isinstance(budget, int) and budget >= 1),
             "budget must be null or a positive integer")
    cap = d.get("buffer_capacity", 100)
    _require(isinstance(cap, int) and cap >= 1,
             "buffer_capacity must be a positive integer")

    return ExperimentSpec(seed=seed, beta=float(beta), budget=budget,
                          buffer_capacity=cap, train_suite=train,
                          eval_suite=ev,
                          sequence=SequenceSpec(order, repeats),
                          controllers=controllers)


def load_spec(path) -> ExperimentSpec:
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as err:
            raise SpecError(f"cannot parse spec file: {err}") from None
    return spec_from_dict(raw)


def save_spec(spec: ExperimentSpec, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(spec_to_dict(spec), fh, sort_keys=True)


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------- workloads

def build_workload(ws: WorkloadSpec, params: PlantParams | None = None,
                   space: ConfigSpace | None = None) -> Workload:
    return generate_workload(ws.profile, ws.epochs, ws.seed, params=params,
                             phase_range=ws.phase_range, space=space,
                             name=ws.name)


def build_stream(spec: ExperimentSpec, params: PlantParams | None = None,
                 space: ConfigSpace | None = None
                 ) -> tuple[list[tuple[Workload, "Epoch"]], list[tuple]]:
    """Evaluation stream with globally renumbered epoch ids.

    Returns (stream, sequence rows); each sequence row is
    (global epoch id, workload name, local epoch id).
    """
    _require(len(spec.sequence.order) >= 1, "empty evaluation sequence")
    by_name = {w.name: build_workload(w, params, space)
               for w in spec.eval_suite}
    stream = []
    rows = []
    k = 0
    for _ in range(spec.sequence.repeats):
        for nm in spec.sequence.order:
            w = by_name[nm]
            for e in w.epochs:
                stream.append((w, replace(e, id=k)))
                rows.append((k, nm, e.id))
                k += 1
    return stream, rows


def golden_for_stream(stream, beta: float = 1.0) -> list[tuple[OracleLabel, float]]:
    """Exhaustive minimum-cost reference per stream epoch (scoring only)."""
    out = []
    for w, e in stream:
        pw, t = w.plant.power_time_all(e, w.seed)
        cost = pw * t ** beta
        i = int(np.argmin(cost))
        out.append((OracleLabel(e.id, w.plant.space.from_index(i),
                                SOURCE_OFFLINE), float(cost[i])))
    return out


# --------------------------------------------------------------- controllers

@dataclass
class OnlineIlResult:
    decided: list[DecisionRecord]
    executed: list[DecisionRecord]
    labels: list[tuple[OracleLabel, float]]
    events: list[tuple]  # epoch_id, search_evals, buffer_size, retrained, disagreed
    bundle: PolicyBundle
    power_model: LinearModel
    time_model: LinearModel
    retrain_count: int


def run_online_il(stream, bundle: PolicyBundle, power_model: LinearModel,
                  time_model: LinearModel, *, space: ConfigSpace,
                  budget: int | None = 40, beta: float = 1.0,
                  buffer_capacity: int = 100, seed: int = 0) -> OnlineIlResult:
    """Policy + models + online oracle + buffered retraining over a stream.

    Per epoch: run the decision made at the previous epoch's end, refresh the
    models from the measurement, search the oracle label seeded at the
    policy's prediction for the fresh counters, buffer any disagreement,
    retrain exactly when the buffer fills, and record the (possibly new)
    bundle's prediction as this epoch's decision.
    """
    buffer = TrainingBuffer(capacity=buffer_capacity)
    decided: list[DecisionRecord] = []
    executed: list[DecisionRecord] = []
    labels: list[tuple[OracleLabel, float]] = []
    events: list[tuple] = []
    next_config = space.min_config
    retrains = 0
    for w, e in stream:
        obs = plant_execute(w.plant, e, next_config, w.seed)
        executed.append(DecisionRecord(e.id, next_config))
        rls_observe(power_model, time_model, obs)
        h = obs.counters
        pred = predict(bundle, h)
        res = online_oracle_search(pred, h, power_model, time_model,
                                   budget=budget, beta=beta, space=space,
                                   epoch_id=e.id)
        disagreed = observe_and_maybe_buffer(bundle, buffer, h,
                                             res.label.config)
        retrained = False
        if buffer.full:
            bundle = retrain_online(bundle, buffer, seed=seed)
            retrained = True
            retrains += 1
        d = predict(bundle, h) if retrained else pred
        decided.append(DecisionRecord(e.id, d))
        labels.append((res.label, res.cost))
        events.append((e.id, res.evaluations, len(buffer), int(retrained),
                       int(disagreed)))
        next_config = d
    return OnlineIlResult(decided, executed, labels, events, bundle,
                          power_model, time_model, retrains)


def run_static_offline(stream, bundle: PolicyBundle, *, space: ConfigSpace
                       ) -> tuple[list[DecisionRecord], list[DecisionRecord]]:
    """Frozen policy: predictions logged per epoch, no adaptation."""
    decided: list[DecisionRecord] = []
    executed: list[DecisionRecord] = []
    next_config = space.min_config
    for w, e in stream:
        obs = plant_execute(w.plant, e, next_config, w.seed)
        executed.append(DecisionRecord(e.id, next_config))
        d = predict(bundle, obs.counters)
        decided.append(DecisionRecord(e.id, d))
        next_config = d
    return decided, executed


# -------------------------------------------------------------------- stages

def _out_paths(out) -> dict[str, Path]:
    root = Path(out)
    return {"root": root, "traces": root / "traces",
            "offline": root / "offline", "sim": root / "sim"}


def cmd_characterize(spec: ExperimentSpec, out, include_eval: bool = False) -> list[Path]:
    """Full 640-config sweep trace per training workload."""
    p = _out_paths(out)
    p["traces"].mkdir(parents=True, exist_ok=True)
    save_spec(spec, p["root"] / "spec.yaml")
    params = PlantParams()
    suites = list(spec.train_suite)
    if include_eval:
        suites += list(spec.eval_suite)
    manifest = {}
    written = []
    for ws in suites:
        w = build_workload(ws, params)
        path = p["traces"] / f"{ws.name}.csv"
        save_trace(w, list(w.plant.space.enumerate()), path)
        manifest[ws.name] = {"epochs": ws.epochs, "file": f"{ws.name}.csv",
                             "profile": ws.profile, "seed": ws.seed}
        written.append(path)
    write_json(manifest, p["traces"] / "manifest.json")
    return written


def _load_training_traces(spec: ExperimentSpec, p: dict[str, Path],
                          space: ConfigSpace) -> dict[str, Workload]:
    manifest_path = p["traces"] / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"missing trace manifest {manifest_path}; "
                                "run characterize first")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    missing = [ws.name for ws in spec.train_suite if ws.name not in manifest
               or not (p["traces"] / manifest[ws.name]["file"]).exists()]
    if missing:
        raise FileNotFoundError(
            f"missing traces for workloads {missing}; run characterize first")
    out = {}
    for ws in spec.train_suite:
        w = load_trace(p["traces"] / manifest[ws.name]["file"], space)
        out[ws.name] = replace(w, name=ws.name)
    return out


def cmd_train_offline(spec: ExperimentSpec, out,
                      no_offline: bool = False) -> dict:
    """Offline oracle labels, model fit, policy training; all from traces."""
    p = _out_paths(out)
    p["offline"].mkdir(parents=True, exist_ok=True)
    space = ConfigSpace()
    recorded = _load_training_traces(spec, p, space)

    observations = []
    for w in recorded.values():
        for e in w.epochs:
            for c in w.plant.recorded_configs(e.id):
                observations.append(w.plant.execute(e, c, w.seed))

    report: dict = {"no_offline": bool(no_offline),
                    "workloads": sorted(recorded)}
    if no_offline:
        power_model = zero_model("power")
        time_model = zero_model("time")
        feats = np.vstack([raw_features(o.counters) for o in observations])
        bundle = new_bundle(space, spec.seed, Normalizer.fit(feats))
        report["train_accuracy"] = None
    else:
        power_model, time_model = fit_offline(observations)
        feats, labels = [], []
        label_rows: dict[str, list] = {}
        for name, w in sorted(recorded.items()):
            rows = offline_oracle_detailed(w, w.plant, spec.beta)
            for e, (lab, _) in zip(w.epochs, rows):
                feats.append(raw_features(
                    w.plant.execute(e, lab.config, w.seed).counters))
                labels.append(label_indices(space, lab.config))
            label_rows[name] = rows
            save_labels(rows, p["offline"] / f"labels_{name}.csv")
        dataset = (np.vstack(feats), np.vstack(labels))
        agg = AggregationContext(workloads=list(recorded.values()),
                                 beta=spec.beta)
        bundle = train_offline(dataset, space, seed=spec.seed, aggregate=agg)
        acc = {}
        for name, w in sorted(recorded.items()):
            labs = [lab for lab, _ in label_rows[name]]
            log = []
            for e, lab in zip(w.epochs, labs):
                h = w.plant.execute(e, lab.config, w.seed).counters
                log.append(DecisionRecord(e.id, predict(bundle, h)))
            rep = run_accuracy(log, labs, space)
            acc[name] = rep.per_knob_mean
        report["train_accuracy"] = acc

    save_policy(bundle, p["offline"] / "policy.npz")
    save_model(power_model, p["offline"] / "power_model.npz")
    save_model(time_model, p["offline"] / "time_model.npz")
    report["power_model_ridge_fallback"] = bool(power_model.ridge_fallback)
    report["time_model_ridge_fallback"] = bool(time_model.ridge_fallback)
    write_json(report, p["offline"] / "report.json")
    return report


def _load_checkpoints(p: dict[str, Path], space: ConfigSpace):
    missing = [str(p["offline"] / f) for f in
               ("policy.npz", "power_model.npz", "time_model.npz")
               if not (p["offline"] / f).exists()]
    if missing:
        raise FileNotFoundError(
            f"missing checkpoints {missing}; run train-offline first")
    bundle = load_policy(p["offline"] / "policy.npz", space)
    power_model = load_model(p["offline"] / "power_model.npz")
    time_model = load_model(p["offline"] / "time_model.npz")
    return bundle, power_model, time_model


def cmd_simulate(spec: ExperimentSpec, out,
                 controllers: tuple[str, ...] | None = None) -> dict:
    """Run every requested controller over the evaluation stream."""
    p = _out_paths(out)
    sim = p["sim"]
    sim.mkdir(parents=True, exist_ok=True)
    save_spec(spec, p["root"] / "spec.yaml")
    space = ConfigSpace()
    wanted = tuple(controllers or spec.controllers)
    for c in wanted:
        if c not in _CONTROLLER_CHOICES:
            raise SpecError(f"unknown controller {c!r}")

    stream, seq_rows = build_stream(spec)
    with open(sim / "sequence.csv", "w", newline="") as fh:
        fh.write(SEQUENCE_HEADER + "\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerows(seq_rows)
    golden = golden_for_stream(stream, spec.beta)
    save_labels(golden, sim / "golden_labels.csv")
    golden_labels = [lab for lab, _ in golden]

    bundle, power_model, time_model = _load_checkpoints(p, space)

    summary: dict = {"controllers": {}, "epochs": len(stream)}
    executed_logs: dict[str, list[DecisionRecord]] = {}
    for name in wanted:
        cdir = sim / name
        cdir.mkdir(exist_ok=True)
        decided, executed, extra = _run_controller(
            name, spec, stream, space, bundle, power_model, time_model, cdir)
        write_decision_log(decided, cdir / "decisions.csv")
        write_decision_log(executed, cdir / "executed.csv")
        rep = run_accuracy(decided, golden_labels, space)
        write_accuracy_series(rep, cdir / "accuracy_series.csv")
        block = {
            "per_knob_mean": rep.per_knob_mean,
            "mean_accuracy": float(np.mean(list(rep.per_knob_mean.values()))),
            "convergence_epoch": rep.convergence_epoch,
            "per_knob_convergence": rep.per_knob_convergence,
            "window": rep.window, "threshold": rep.threshold,
        }
        block.update(extra)
        write_json(block, cdir / "accuracy.json")
        summary["controllers"][name] = block
        executed_logs[name] = executed

    energy = energy_report(executed_logs, stream, golden=golden_labels)
    slices: dict[str, list] = {}
    for w, e in stream:
        slices.setdefault(w.name, []).append((w, e))
    per_workload = {}
    for wname, sub in slices.items():
        ids = {e.id for _, e in sub}
        sub_logs = {name: [r for r in log if r.epoch_id in ids]
                    for name, log in executed_logs.items()}
        sub_golden = [g for g in golden_labels if g.epoch_id in ids]
        per_workload[wname] = energy_report(sub_logs, sub, golden=sub_golden)
    write_json({"total": energy, "per_workload": per_workload},
               sim / "energy.json")
    for name in wanted:
        summary["controllers"][name]["energy"] = energy[name]
    write_json(summary, sim / "summary.json")
    return summary


def _run_controller(name, spec, stream, space, bundle, power_model,
                    time_model, cdir: Path):
    """One controller over the stream; returns (decided, executed, extras)."""
    if name == "online-il":
        res = run_online_il(
            stream, _copy_bundle(bundle), _copy_model(power_model),
            _copy_model(time_model), space=space, budget=spec.budget,
            beta=spec.beta, buffer_capacity=spec.buffer_capacity,
            seed=spec.seed)
        with open(cdir / "events.csv", "w", newline="") as fh:
            fh.write("epoch_id,search_evals,buffer_size,retrained,disagreed\n")
            csv.writer(fh, lineterminator="\n").writerows(res.events)
        save_labels(res.labels, cdir / "oracle_labels.csv")
        extras = {
            "retrain_count": res.retrain_count,
            "disagreements": int(sum(ev[4] for ev in res.events)),
            "total_search_evals": int(sum(ev[1] for ev in res.events)),
        }
        return res.decided, res.executed, extras
    if name == "static-offline":
        decided, executed = run_static_offline(stream, _copy_bundle(bundle),
                                               space=space)
        return decided, executed, {}
    if name == "powersave":
        log = constant_log(stream, space.min_config)
        return log, log, {}
    if name == "performance":
        log = constant_log(stream, space.max_config)
        return log, log, {}
    if name == "models-only":
        res = models_only_control(stream, _copy_model(power_model),
                                  _copy_model(time_model), space=space,
                                  budget=spec.budget, beta=spec.beta)
        with open(cdir / "events.csv", "w", newline="") as fh:
            fh.write("epoch_id,search_evals\n")
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerows((r.epoch_id, n)
                         for r, n in zip(res.log, res.evaluations))
        extras = {"total_search_evals": int(sum(res.evaluations))}
        return res.log, res.log, extras
    if name in ("rl", "rl-table"):
        variant = "dqn" if name == "rl" else "table"
        learner = QLearner(space, variant=variant, beta=spec.beta,
                           seed=spec.seed, normalizer=bundle.normalizer)
        res = run_rl_control(stream, learner=learner, seed=spec.seed)
        write_rl_log(res.rows, cdir / "events.csv")
        return res.log, res.log, {}
    raise SpecError(f"unknown controller {name!r}")


def _copy_bundle(bundle: PolicyBundle) -> PolicyBundle:
    return PolicyBundle(bundle.copy_heads(), bundle.normalizer, bundle.space,
                        bundle.generation)


def _copy_model(m: LinearModel) -> LinearModel:
    return replace(m, theta=m.theta.copy(),
                   rls_covariance=m.rls_covariance.copy())


def cmd_report(out) -> dict:
    """Consolidate a finished run directory into one report.json."""
    p = _out_paths(out)
    required = [p["root"] / "spec.yaml", p["sim"] / "summary.json",
                p["sim"] / "energy.json"]
    missing = [str(f) for f in required if not f.exists()]
    if missing:
        raise FileNotFoundError(f"incomplete run; missing artifacts: {missing}")
    with open(p["root"] / "spec.yaml") as fh:
        spec_echo = yaml.safe_load(fh)
    with open(p["sim"] / "summary.json") as fh:
        summary = json.load(fh)
    with open(p["sim"] / "energy.json") as fh:
        energy = json.load(fh)
    report = {"spec": spec_echo, "summary": summary, "energy": energy}
    offline_report = p["offline"] / "report.json"
    if offline_report.exists():
        with open(offline_report) as fh:
            report["offline"] = json.load(fh)
    write_json(report, p["root"] / "report.json")
    return report
